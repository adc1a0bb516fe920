#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "mixfreq/mixfreq.hpp"

using namespace mixfreq;

namespace {

CaptionPair pair(const std::string& cand, const std::vector<std::string>& refs) {
    return CaptionPair{"x", cand, refs};
}

// The five shared caption fixtures. Expected values were frozen from an
// independent reference implementation of the stated formulas; the anchors
// P1 (identity), P3 (pure brevity penalty: p1..p3 = 1, smoothed p4 = 1,
// BP = e^(1-7/3)) and P4 (clipping: (1/4 * 1/4 * 1/3 * 1/2)^(1/4)) were also
// expanded by hand.
const std::vector<CaptionPair> kFixtures = {
    pair("a cat sits on the mat", {"a cat sits on the mat"}),
    pair("dogs bark loudly", {"the cat sleeps quietly now"}),
    pair("the cat sat", {"the cat sat on the red mat"}),
    pair("the the the the", {"the cat"}),
    pair("a man rides a horse",
         {"a man is riding a horse", "a person rides a horse outside"}),
};

} // namespace

TEST_CASE("iou arithmetic and symmetry") {
    REQUIRE(iou(Segment(2.0, 8.0), Segment(2.0, 8.0)) == 1.0);
    REQUIRE(iou(Segment(0.0, 1.0), Segment(2.0, 3.0)) == 0.0);
    REQUIRE(iou(Segment(2.0, 8.0), Segment(4.0, 10.0)) == 0.5);
    REQUIRE(iou(Segment(0.0, 1.0), Segment(1.0, 2.0)) == 0.0);  // touching, no overlap

    rng::Stream s(3);
    for (std::uint64_t i = 0; i < 500; ++i) {
        const Segment a(s.uniform(i * 4, 0.0, 50.0), s.uniform(i * 4 + 1, 51.0, 100.0));
        const Segment b(s.uniform(i * 4 + 2, 0.0, 50.0), s.uniform(i * 4 + 3, 51.0, 100.0));
        REQUIRE(iou(a, b) == iou(b, a));
        REQUIRE(iou(a, b) <= 1.0);
        REQUIRE(iou(a, b) >= 0.0);
        if (iou(a, b) == 1.0) REQUIRE(a == b);
    }
}

TEST_CASE("grounding report means and recalls") {
    SECTION("hand case: ious one half and one") {
        std::vector<GroundingPrediction> preds = {
            {"a", Segment(2.0, 8.0), Segment(4.0, 10.0)},   // IoU 0.5
            {"b", Segment(1.0, 3.0), Segment(1.0, 3.0)},    // IoU 1.0
        };
        const GroundingReport rep = grounding_report(preds);
        REQUIRE(rep.mean_iou == 0.75);
        REQUIRE(rep.recall_at.at(0.3) == 1.0);
        REQUIRE(rep.recall_at.at(0.5) == 1.0);
        REQUIRE(rep.recall_at.at(0.7) == 0.5);
    }
    SECTION("identical predictions max out everything") {
        std::vector<GroundingPrediction> preds;
        for (int i = 0; i < 5; ++i) {
            preds.push_back({"i", Segment(1.0, 2.0), Segment(1.0, 2.0)});
        }
        const GroundingReport rep = grounding_report(preds);
        REQUIRE(rep.mean_iou == 1.0);
        for (double th : recall_thresholds()) REQUIRE(rep.recall_at.at(th) == 1.0);
    }
    SECTION("matches an independent recomputation on 1000 random pairs") {
        std::vector<GroundingPrediction> preds;
        rng::Stream s(17);
        for (std::uint64_t i = 0; i < 1000; ++i) {
            const Segment p(s.uniform(i * 4, 0.0, 40.0), s.uniform(i * 4 + 1, 41.0, 100.0));
            const Segment r(s.uniform(i * 4 + 2, 0.0, 40.0), s.uniform(i * 4 + 3, 41.0, 100.0));
            preds.push_back({"i" + std::to_string(i), p, r});
        }
        const GroundingReport rep = grounding_report(preds);
        double total = 0.0;
        std::map<double, std::size_t> hits = {{0.3, 0}, {0.5, 0}, {0.7, 0}};
        for (const GroundingPrediction& p : preds) {
            const double inter = std::max(
                0.0, std::min(p.predicted.end_s, p.reference.end_s) -
                         std::max(p.predicted.start_s, p.reference.start_s));
            const double uni = (p.predicted.end_s - p.predicted.start_s) +
                               (p.reference.end_s - p.reference.start_s) - inter;
            const double v = uni > 0.0 ? inter / uni : 0.0;
            total += v;
            for (auto& [th, n] : hits) {
                if (v >= th) ++n;
            }
        }
        REQUIRE(std::fabs(rep.mean_iou - total / 1000.0) <= 1e-12);
        for (auto& [th, n] : hits) {
            REQUIRE(std::fabs(rep.recall_at.at(th) - static_cast<double>(n) / 1000.0) <= 1e-12);
        }
        REQUIRE(rep.recall_at.at(0.3) >= rep.recall_at.at(0.5));
        REQUIRE(rep.recall_at.at(0.5) >= rep.recall_at.at(0.7));
    }
    SECTION("empty input is an argument error") {
        REQUIRE_THROWS_AS(grounding_report({}), ArgumentError);
    }
}

TEST_CASE("tokenizer lowercases and strips punctuation to spaces") {
    REQUIRE(tokenize("A Cat, sits!") == std::vector<std::string>{"a", "cat", "sits"});
    REQUIRE(tokenize("don't stop") == std::vector<std::string>{"don", "t", "stop"});
    REQUIRE(tokenize("   ") == std::vector<std::string>{});
    REQUIRE(tokenize("from 100 to 200") ==
            std::vector<std::string>{"from", "100", "to", "200"});
}

TEST_CASE("bleu4 matches frozen oracle values") {
    REQUIRE(bleu4(kFixtures[0]) == Catch::Approx(1.0).margin(1e-9));
    REQUIRE(bleu4(kFixtures[1]) == Catch::Approx(0.0).margin(1e-9));
    REQUIRE(bleu4(kFixtures[2]) ==
            Catch::Approx(0.26359713811572671).margin(1e-9));  // = e^(1-7/3)
    REQUIRE(bleu4(kFixtures[2]) == Catch::Approx(std::exp(1.0 - 7.0 / 3.0)).margin(1e-12));
    REQUIRE(bleu4(kFixtures[3]) ==
            Catch::Approx(0.31947155212313627).margin(1e-9));  // = (1/96)^(1/4)
    REQUIRE(bleu4(kFixtures[4]) == Catch::Approx(0.43989172475842203).margin(1e-9));

    SECTION("empty candidate scores zero, empty references raise") {
        REQUIRE(bleu4(pair("", {"a cat"})) == 0.0);
        REQUIRE_THROWS_AS(bleu4(pair("a cat", {})), ArgumentError);
    }
    SECTION("candidate equal to one of several references scores one") {
        REQUIRE(bleu4(pair("a b c d e", {"x y z w v", "a b c d e"})) ==
                Catch::Approx(1.0).margin(1e-12));
    }
}

TEST_CASE("rouge_l matches frozen oracle values") {
    REQUIRE(rouge_l(kFixtures[0]) == Catch::Approx(1.0).margin(1e-9));
    REQUIRE(rouge_l(kFixtures[1]) == Catch::Approx(0.0).margin(1e-9));
    REQUIRE(rouge_l(kFixtures[2]) == Catch::Approx(0.55963302752293576).margin(1e-9));
    REQUIRE(rouge_l(kFixtures[3]) == Catch::Approx(0.35465116279069769).margin(1e-9));
    REQUIRE(rouge_l(kFixtures[4]) == Catch::Approx(0.71554252199413482).margin(1e-9));
}

TEST_CASE("meteor-exact matches the stated formula") {
    // Identical one-word strings: chunks = matches = 1, so the fragmentation
    // factor is 1 - 0.5 = 0.5 by the formula.
    REQUIRE(meteor_simplified(pair("word", {"word"})) == Catch::Approx(0.5).margin(1e-12));
    // Identical six-word strings: one chunk over six matches.
    REQUIRE(meteor_simplified(kFixtures[0]) ==
            Catch::Approx(1.0 - 0.5 / 216.0).margin(1e-12));
    REQUIRE(meteor_simplified(kFixtures[1]) == 0.0);
    REQUIRE(meteor_simplified(kFixtures[2]) ==
            Catch::Approx(0.44612794612794615).margin(1e-9));
    REQUIRE(meteor_simplified(kFixtures[3]) ==
            Catch::Approx(0.22727272727272727).margin(1e-9));  // = 5/22
    REQUIRE(meteor_simplified(kFixtures[4]) ==
            Catch::Approx(0.63559322033898302).margin(1e-9));  // = 75/118
    // Reordered words split into two chunks: 1 - 0.5*(2/3)^3 = 23/27.
    REQUIRE(meteor_simplified(pair("sits a cat", {"a cat sits"})) ==
            Catch::Approx(23.0 / 27.0).margin(1e-12));
}

TEST_CASE("cider matches frozen oracle values over the fixture corpus") {
    REQUIRE(cider(kFixtures) == Catch::Approx(3.7810958321377086).margin(1e-9));

    SECTION("two-item corpus hand expansion") {
        // Item A: cand/ref "red car"; item B: cand "blue sky", ref "red sky".
        // n=1: idf(red) = 0, idf(car) = idf(sky) = ln 2, "blue" never occurs
        // in references so df clamps to 1. Item A cosine = 1 at n=1,2;
        // item B cosine = 1/sqrt(2) at n=1, 0 at n=2; n=3,4 empty.
        // cider = 10 * ((1+1+0+0)/4 + (1/sqrt(2)+0+0+0)/4) / 2.
        const std::vector<CaptionPair> two = {pair("red car", {"red car"}),
                                              pair("blue sky", {"red sky"})};
        const double expected = 10.0 * (0.5 + 1.0 / (4.0 * std::sqrt(2.0))) / 2.0;
        REQUIRE(cider(two) == Catch::Approx(expected).margin(1e-12));
        REQUIRE(cider(two) == Catch::Approx(3.3838834764831844).margin(1e-12));
    }
    SECTION("corpus dependence: same pair scores differently in other company") {
        const CaptionPair shared = pair("a red bird flies", {"a red bird flies"});
        const std::vector<CaptionPair> corpus_a = {shared,
                                                   pair("a red bird sings", {"a red bird sings"})};
        const std::vector<CaptionPair> corpus_b = {shared,
                                                   pair("the dog sleeps", {"the dog sleeps"})};
        REQUIRE(cider(corpus_a) != cider(corpus_b));
    }
    SECTION("empty corpus raises") {
        REQUIRE_THROWS_AS(cider({}), ArgumentError);
    }
}

TEST_CASE("per-pair caption metrics ignore corpus company") {
    const CaptionPair a = kFixtures[2];
    REQUIRE(bleu4(a) == bleu4(a));
    const double b1 = bleu4(a);
    const double r1 = rouge_l(a);
    const double m1 = meteor_simplified(a);
    // Recompute after unrelated pairs exist elsewhere; pure functions of the pair.
    (void)bleu4(kFixtures[4]);
    REQUIRE(bleu4(a) == b1);
    REQUIRE(rouge_l(a) == r1);
    REQUIRE(meteor_simplified(a) == m1);
}

TEST_CASE("mock judge and judge_report aggregation") {
    MockJudge judge;
    SECTION("identical answers are correct with a top score") {
        const JudgeVerdict v = judge.judge("q", "the cat sits", "the cat sits");
        REQUIRE(v.correct);
        REQUIRE(v.score == Catch::Approx(5.0));
    }
    SECTION("disjoint answers are incorrect with zero score") {
        const JudgeVerdict v = judge.judge("q", "the cat sits", "dogs bark");
        REQUIRE(!v.correct);
        REQUIRE(v.score == Catch::Approx(0.0));
    }
    SECTION("report aggregates fractions and means") {
        std::vector<JudgeItem> items = {
            {"a", "q", "the cat sits", "the cat sits"},   // F1 = 1: correct, 5.0
            {"b", "q", "the cat sits", "dogs bark"},      // F1 = 0: wrong, 0.0
        };
        const JudgeReport rep = judge_report(items, judge);
        REQUIRE(rep.accuracy == Catch::Approx(0.5));
        REQUIRE(rep.mean_score == Catch::Approx(2.5));
        REQUIRE(rep.judged == 2);
        REQUIRE(rep.errored == 0);
    }
    SECTION("failing items are tallied, not dropped silently") {
        class FlakyJudge final : public JudgeBackend {
          public:
            JudgeVerdict judge(const std::string&, const std::string& reference,
                               const std::string&) override {
                if (reference == "boom") throw BackendError("scripted judge failure");
                return JudgeVerdict{true, 4.0};
            }
        };
        FlakyJudge flaky;
        std::vector<JudgeItem> items = {
            {"a", "q", "fine", "x"}, {"b", "q", "boom", "x"}, {"c", "q", "fine", "x"}};
        const JudgeReport rep = judge_report(items, flaky);
        REQUIRE(rep.judged == 2);
        REQUIRE(rep.errored == 1);
        REQUIRE(rep.accuracy == Catch::Approx(1.0));
        REQUIRE(rep.mean_score == Catch::Approx(4.0));
    }
    SECTION("empty input raises") {
        REQUIRE_THROWS_AS(judge_report({}, judge), ArgumentError);
    }
}

TEST_CASE("report renders the fixed column order") {
    MetricReport rep;
    GroundingReport g;
    g.mean_iou = 0.5125;
    g.recall_at = {{0.3, 1.0}, {0.5, 0.75}, {0.7, 0.25}};
    rep.grounding = g;
    rep.bleu4 = 0.25;
    rep.meteor = 0.5;
    rep.rouge_l = 0.75;
    rep.cider = 1.25;

    const std::string table = render_report(rep);
    const std::size_t miou = table.find("mIoU");
    const std::size_t r03 = table.find("R@0.3");
    const std::size_t r05 = table.find("R@0.5");
    const std::size_t r07 = table.find("R@0.7");
    const std::size_t b4 = table.find("B@4");
    const std::size_t met = table.find("meteor-exact");
    const std::size_t rl = table.find("ROUGE-L");
    const std::size_t cd = table.find("CIDEr");
    const std::size_t acc = table.find("Acc");
    const std::size_t sc = table.find("Score");
    REQUIRE(miou != std::string::npos);
    REQUIRE(miou < r03);
    REQUIRE(r03 < r05);
    REQUIRE(r05 < r07);
    REQUIRE(r07 < b4);
    REQUIRE(b4 < met);
    REQUIRE(met < rl);
    REQUIRE(rl < cd);
    REQUIRE(cd < acc);
    REQUIRE(acc < sc);
    // Judge columns are absent (no judge configured): dashes, not zeros.
    REQUIRE(table.find("0.5125") != std::string::npos);
    REQUIRE(table.find('-') != std::string::npos);
}
