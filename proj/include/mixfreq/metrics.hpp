#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstddef>
#include <iomanip>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "mixfreq/errors.hpp"
#include "mixfreq/sampling.hpp"

namespace mixfreq {

// ---------------------------------------------------------------------------
// Temporal grounding metrics
// ---------------------------------------------------------------------------

struct GroundingPrediction {
    std::string item_id;
    Segment predicted;
    Segment reference;
};

// Overlap-over-union of two time spans, 0 when disjoint.
inline double iou(const Segment& a, const Segment& b) {
    const double inter =
        std::max(0.0, std::min(a.end_s, b.end_s) - std::max(a.start_s, b.start_s));
    const double uni = a.length_s() + b.length_s() - inter;
    return uni > 0.0 ? inter / uni : 0.0;
}

struct GroundingReport {
    double mean_iou = 0.0;
    std::map<double, double> recall_at;  // threshold -> fraction with IoU >= threshold
};

inline const std::vector<double>& recall_thresholds() {
    static const std::vector<double> t = {0.3, 0.5, 0.7};
    return t;
}

inline GroundingReport grounding_report(const std::vector<GroundingPrediction>& preds) {
    if (preds.empty()) throw ArgumentError("grounding_report: no predictions");
    GroundingReport rep;
    for (double th : recall_thresholds()) rep.recall_at[th] = 0.0;
    for (const GroundingPrediction& p : preds) {
        const double v = iou(p.predicted, p.reference);
        rep.mean_iou += v;
        for (double th : recall_thresholds()) {
            if (v >= th) rep.recall_at[th] += 1.0;
        }
    }
    const double n = static_cast<double>(preds.size());
    rep.mean_iou /= n;
    for (double th : recall_thresholds()) rep.recall_at[th] /= n;
    return rep;
}

// ---------------------------------------------------------------------------
// Caption metrics
// ---------------------------------------------------------------------------

struct CaptionPair {
    std::string item_id;
    std::string candidate;
    std::vector<std::string> references;  // at least one
};

// Lowercase, punctuation to spaces, split on whitespace. Fixed here as the
// tokenization all caption metrics share.
inline std::vector<std::string> tokenize(std::string_view text) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : text) {
        const unsigned char u = static_cast<unsigned char>(c);
        if (std::isalnum(u)) {
            cur.push_back(static_cast<char>(std::tolower(u)));
        } else if (!cur.empty()) {
            out.push_back(std::move(cur));
            cur.clear();
        }
    }
    if (!cur.empty()) out.push_back(std::move(cur));
    return out;
}

namespace detail {

// n-gram counts keyed by the space-joined gram.
inline std::map<std::string, std::size_t> ngram_counts(const std::vector<std::string>& tokens,
                                                       std::size_t n) {
    std::map<std::string, std::size_t> counts;
    if (tokens.size() < n) return counts;
    for (std::size_t i = 0; i + n <= tokens.size(); ++i) {
        std::string key = tokens[i];
        for (std::size_t k = 1; k < n; ++k) {
            key += ' ';
            key += tokens[i + k];
        }
        ++counts[key];
    }
    return counts;
}

inline void require_references(const CaptionPair& pair, const char* who) {
    if (pair.references.empty()) {
        throw ArgumentError(std::string(who) + ": caption pair " + pair.item_id +
                            " has no references");
    }
}

} // namespace detail

// Geometric mean of clipped n-gram precisions (n = 1..4) with the e^{1-r/c}
// brevity penalty; r is the reference length closest to the candidate's
// (shorter wins ties). Zero counts are add-1-smoothed for n >= 2 only, so a
// candidate with no unigram overlap scores 0.
inline double bleu4(const CaptionPair& pair) {
    detail::require_references(pair, "bleu4");
    const std::vector<std::string> cand = tokenize(pair.candidate);
    if (cand.empty()) return 0.0;

    std::vector<std::vector<std::string>> refs;
    refs.reserve(pair.references.size());
    for (const std::string& r : pair.references) refs.push_back(tokenize(r));

    const double c = static_cast<double>(cand.size());
    double r = static_cast<double>(refs.front().size());
    for (const auto& ref : refs) {
        const double len = static_cast<double>(ref.size());
        const double best = std::fabs(r - c);
        const double cur = std::fabs(len - c);
        if (cur < best || (cur == best && len < r)) r = len;
    }

    double log_sum = 0.0;
    for (std::size_t n = 1; n <= 4; ++n) {
        const auto cand_counts = detail::ngram_counts(cand, n);
        std::vector<std::map<std::string, std::size_t>> ref_counts;
        ref_counts.reserve(refs.size());
        for (const auto& ref : refs) ref_counts.push_back(detail::ngram_counts(ref, n));
        std::size_t total = 0;
        std::size_t matched = 0;
        for (const auto& [gram, count] : cand_counts) {
            total += count;
            std::size_t best_ref = 0;
            for (const auto& rc : ref_counts) {
                const auto it = rc.find(gram);
                if (it != rc.end()) best_ref = std::max(best_ref, it->second);
            }
            matched += std::min(count, best_ref);
        }
        double p;
        if (total == 0) {
            // Candidate shorter than n: treat as a fully smoothed level.
            p = n >= 2 ? 1.0 : 0.0;
        } else if (matched == 0) {
            if (n == 1) return 0.0;
            p = 1.0 / (static_cast<double>(total) + 1.0);
        } else {
            p = static_cast<double>(matched) / static_cast<double>(total);
        }
        if (p == 0.0) return 0.0;
        log_sum += std::log(p) / 4.0;
    }
    const double bp = c >= r ? 1.0 : std::exp(1.0 - r / c);
    return bp * std::exp(log_sum);
}

namespace detail {

inline std::size_t lcs_length(const std::vector<std::string>& a,
                              const std::vector<std::string>& b) {
    if (a.empty() || b.empty()) return 0;
    std::vector<std::size_t> prev(b.size() + 1, 0);
    std::vector<std::size_t> cur(b.size() + 1, 0);
    for (std::size_t i = 1; i <= a.size(); ++i) {
        for (std::size_t j = 1; j <= b.size(); ++j) {
            cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
        }
        std::swap(prev, cur);
    }
    return prev[b.size()];
}

} // namespace detail

// LCS F-measure with beta = 1.2, maximized over references.
inline double rouge_l(const CaptionPair& pair) {
    detail::require_references(pair, "rouge_l");
    const std::vector<std::string> cand = tokenize(pair.candidate);
    if (cand.empty()) return 0.0;
    constexpr double beta = 1.2;
    double best = 0.0;
    for (const std::string& ref_text : pair.references) {
        const std::vector<std::string> ref = tokenize(ref_text);
        if (ref.empty()) continue;
        const double lcs = static_cast<double>(detail::lcs_length(cand, ref));
        if (lcs == 0.0) continue;
        const double p = lcs / static_cast<double>(cand.size());
        const double r = lcs / static_cast<double>(ref.size());
        const double f = (1.0 + beta * beta) * p * r / (r + beta * beta * p);
        best = std::max(best, f);
    }
    return best;
}

// Exact-match unigram METEOR: recall-weighted harmonic mean
// F = 10PR / (R + 9P) times the fragmentation penalty
// 1 - 0.5 (chunks / matches)^3. Matching is greedy earliest-occurrence;
// chunks are maximal runs matched to consecutive reference positions.
// Maximized over references. Identical one-word strings score 0.5: one
// chunk over one match leaves the full penalty.
inline double meteor_simplified(const CaptionPair& pair) {
    detail::require_references(pair, "meteor_simplified");
    const std::vector<std::string> cand = tokenize(pair.candidate);
    if (cand.empty()) return 0.0;
    double best = 0.0;
    for (const std::string& ref_text : pair.references) {
        const std::vector<std::string> ref = tokenize(ref_text);
        if (ref.empty()) continue;

        // alignment[i] = reference position matched by candidate token i.
        std::vector<bool> ref_used(ref.size(), false);
        std::vector<std::ptrdiff_t> alignment(cand.size(), -1);
        std::size_t matches = 0;
        for (std::size_t i = 0; i < cand.size(); ++i) {
            for (std::size_t j = 0; j < ref.size(); ++j) {
                if (!ref_used[j] && cand[i] == ref[j]) {
                    ref_used[j] = true;
                    alignment[i] = static_cast<std::ptrdiff_t>(j);
                    ++matches;
                    break;
                }
            }
        }
        if (matches == 0) continue;

        std::size_t chunks = 0;
        std::ptrdiff_t prev_ref = -2;
        for (std::size_t i = 0; i < cand.size(); ++i) {
            if (alignment[i] < 0) {
                prev_ref = -2;
                continue;
            }
            if (alignment[i] != prev_ref + 1) ++chunks;
            prev_ref = alignment[i];
        }

        const double m = static_cast<double>(matches);
        const double p = m / static_cast<double>(cand.size());
        const double r = m / static_cast<double>(ref.size());
        const double f = 10.0 * p * r / (r + 9.0 * p);
        const double frag = static_cast<double>(chunks) / m;
        best = std::max(best, f * (1.0 - 0.5 * frag * frag * frag));
    }
    return best;
}

// Corpus-level TF-IDF n-gram cosine (n = 1..4), averaged over n and over
// references per item, averaged over items, scaled by 10. Document
// frequencies come from the reference side only.
inline double cider(const std::vector<CaptionPair>& pairs) {
    if (pairs.empty()) throw ArgumentError("cider: empty corpus");
    const double corpus_size = static_cast<double>(pairs.size());

    // df[n][gram] = number of items whose reference set mentions the gram.
    std::vector<std::map<std::string, double>> df(5);
    for (const CaptionPair& pair : pairs) {
        detail::require_references(pair, "cider");
        for (std::size_t n = 1; n <= 4; ++n) {
            std::map<std::string, bool> seen;
            for (const std::string& ref_text : pair.references) {
                for (const auto& [gram, count] : detail::ngram_counts(tokenize(ref_text), n)) {
                    seen[gram] = true;
                }
            }
            for (const auto& [gram, present] : seen) df[n][gram] += 1.0;
        }
    }
    const auto idf = [&](std::size_t n, const std::string& gram) {
        const auto it = df[n].find(gram);
        const double d = it == df[n].end() ? 0.0 : it->second;
        return std::log(corpus_size) - std::log(std::max(d, 1.0));
    };

    const auto cosine = [&](std::size_t n, const std::map<std::string, std::size_t>& a,
                            const std::map<std::string, std::size_t>& b) {
        double dot = 0.0;
        double na = 0.0;
        double nb = 0.0;
        for (const auto& [gram, count] : a) {
            const double w = static_cast<double>(count) * idf(n, gram);
            na += w * w;
            const auto it = b.find(gram);
            if (it != b.end()) dot += w * static_cast<double>(it->second) * idf(n, gram);
        }
        for (const auto& [gram, count] : b) {
            const double w = static_cast<double>(count) * idf(n, gram);
            nb += w * w;
        }
        return na > 0.0 && nb > 0.0 ? dot / (std::sqrt(na) * std::sqrt(nb)) : 0.0;
    };

    double total = 0.0;
    for (const CaptionPair& pair : pairs) {
        const std::vector<std::string> cand = tokenize(pair.candidate);
        double item = 0.0;
        for (std::size_t n = 1; n <= 4; ++n) {
            const auto cand_counts = detail::ngram_counts(cand, n);
            double over_refs = 0.0;
            for (const std::string& ref_text : pair.references) {
                over_refs += cosine(n, cand_counts, detail::ngram_counts(tokenize(ref_text), n));
            }
            item += over_refs / static_cast<double>(pair.references.size());
        }
        total += item / 4.0;
    }
    return 10.0 * total / corpus_size;
}

// ---------------------------------------------------------------------------
// Judge-based answer quality
// ---------------------------------------------------------------------------

struct JudgeVerdict {
    bool correct = false;
    double score = 0.0;  // 0..5
};

class JudgeBackend {
  public:
    virtual ~JudgeBackend() = default;
    virtual JudgeVerdict judge(const std::string& question, const std::string& reference,
                               const std::string& candidate) = 0;
};

// Deterministic judge: unigram F1 between candidate and reference;
// correct iff F1 >= 0.5, score = 5 * F1.
class MockJudge final : public JudgeBackend {
  public:
    JudgeVerdict judge(const std::string& question, const std::string& reference,
                       const std::string& candidate) override {
        (void)question;
        const std::vector<std::string> ref = tokenize(reference);
        const std::vector<std::string> cand = tokenize(candidate);
        if (ref.empty() || cand.empty()) return JudgeVerdict{false, 0.0};
        const auto rc = detail::ngram_counts(ref, 1);
        const auto cc = detail::ngram_counts(cand, 1);
        std::size_t overlap = 0;
        for (const auto& [gram, count] : cc) {
            const auto it = rc.find(gram);
            if (it != rc.end()) overlap += std::min(count, it->second);
        }
        if (overlap == 0) return JudgeVerdict{false, 0.0};
        const double p = static_cast<double>(overlap) / static_cast<double>(cand.size());
        const double r = static_cast<double>(overlap) / static_cast<double>(ref.size());
        const double f1 = 2.0 * p * r / (p + r);
        return JudgeVerdict{f1 >= 0.5, 5.0 * f1};
    }
};

struct JudgeItem {
    std::string item_id;
    std::string question;
    std::string reference;
    std::string candidate;
};

struct JudgeReport {
    double accuracy = 0.0;    // fraction of judged items marked correct
    double mean_score = 0.0;  // mean of judged 0..5 scores
    std::size_t judged = 0;
    std::size_t errored = 0;  // items the backend failed on, excluded above
};

inline JudgeReport judge_report(const std::vector<JudgeItem>& items, JudgeBackend& backend) {
    if (items.empty()) throw ArgumentError("judge_report: no items");
    JudgeReport rep;
    double correct = 0.0;
    double score = 0.0;
    for (const JudgeItem& item : items) {
        try {
            const JudgeVerdict v = backend.judge(item.question, item.reference, item.candidate);
            if (v.correct) correct += 1.0;
            score += v.score;
            ++rep.judged;
        } catch (const std::exception&) {
            ++rep.errored;
        }
    }
    if (rep.judged == 0) throw BackendError("judge_report: backend failed on every item");
    rep.accuracy = correct / static_cast<double>(rep.judged);
    rep.mean_score = score / static_cast<double>(rep.judged);
    return rep;
}

// ---------------------------------------------------------------------------
// Combined report
// ---------------------------------------------------------------------------

struct MetricReport {
    std::optional<GroundingReport> grounding;
    std::optional<double> bleu4;
    std::optional<double> meteor;  // "meteor-exact": unigram exact-match variant
    std::optional<double> rouge_l;
    std::optional<double> cider;
    std::optional<double> accuracy;
    std::optional<double> score;
};

// Fixed-width table, one header and one value row, columns in the order
// mIoU, R@0.3, R@0.5, R@0.7, B@4, METEOR, ROUGE-L, CIDEr, Acc, Score.
// Metrics that were not computed render as "-".
inline std::string render_report(const MetricReport& rep) {
    std::vector<std::pair<std::string, std::optional<double>>> cols;
    if (rep.grounding.has_value()) {
        cols.emplace_back("mIoU", rep.grounding->mean_iou);
        for (double th : recall_thresholds()) {
            std::ostringstream name;
            name << "R@" << std::setprecision(1) << std::fixed << th;
            cols.emplace_back(name.str(), rep.grounding->recall_at.at(th));
        }
    } else {
        cols.emplace_back("mIoU", std::nullopt);
        for (double th : recall_thresholds()) {
            std::ostringstream name;
            name << "R@" << std::setprecision(1) << std::fixed << th;
            cols.emplace_back(name.str(), std::nullopt);
        }
    }
    cols.emplace_back("B@4", rep.bleu4);
    cols.emplace_back("meteor-exact", rep.meteor);
    cols.emplace_back("ROUGE-L", rep.rouge_l);
    cols.emplace_back("CIDEr", rep.cider);
    cols.emplace_back("Acc", rep.accuracy);
    cols.emplace_back("Score", rep.score);

    constexpr int width = 13;
    std::ostringstream header;
    std::ostringstream row;
    for (const auto& [name, value] : cols) {
        header << std::setw(width) << name;
        if (value.has_value()) {
            std::ostringstream v;
            v << std::fixed << std::setprecision(4) << *value;
            row << std::setw(width) << v.str();
        } else {
            row << std::setw(width) << "-";
        }
    }
    return header.str() + "\n" + row.str() + "\n";
}

} // namespace mixfreq
