// Command-line driver: ground | answer | eval | corpus | selftest.
// Exit codes: 0 success, 1 test/metric failure, 2 usage or IO problem,
// 3 backend failure.

#include <atomic>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "mixfreq/mixfreq.hpp"
#include "mixfreq/remote.hpp"

namespace {

using namespace mixfreq;

constexpr int kExitOk = 0;
constexpr int kExitTestFailure = 1;
constexpr int kExitUsage = 2;
constexpr int kExitBackend = 3;

struct CommonOptions {
    std::string dataset;
    std::string features;  // directory of per-frame feature files; empty = mock encoder
    std::string backend = "mock";
    std::string endpoint;
    std::string fixtures;  // mock reply rules
    bool oracle = false;   // mock replies echo each item's ground truth
    std::size_t nh = 20;
    std::size_t nbins = 1000;
    std::size_t tokens_per_frame = 64;
    std::size_t low_interval = 0;  // 0 = one frame per second
    std::size_t dim = 32;
    std::size_t patches = 0;  // 0 = tokens_per_frame (1:1 pooling blocks)
    bool inject_gt = false;
    std::uint64_t seed = 0;
    std::size_t jobs = 1;
    std::string out;
};

void add_common_flags(CLI::App* cmd, CommonOptions& opt, bool needs_dataset) {
    if (needs_dataset) {
        cmd->add_option("--dataset", opt.dataset, "line-delimited QA items")->required();
    }
    cmd->add_option("--features", opt.features,
                    "directory of <video_id>/<frame>.mat feature files (default: synthetic)");
    cmd->add_option("--backend", opt.backend, "language backend: mock or remote")
        ->check(CLI::IsMember({"mock", "remote"}));
    cmd->add_option("--endpoint", opt.endpoint, "remote backend base URL");
    cmd->add_option("--fixtures", opt.fixtures, "mock reply rules (JSON)");
    cmd->add_flag("--oracle", opt.oracle, "mock replies carry each item's ground-truth segment");
    cmd->add_option("--nh", opt.nh, "dense frames per grounded span")->capture_default_str();
    cmd->add_option("--nbins", opt.nbins, "temporal protocol bins")->capture_default_str();
    cmd->add_option("--tokens-per-frame", opt.tokens_per_frame, "visual tokens per frame")
        ->capture_default_str();
    cmd->add_option("--low-interval", opt.low_interval,
                    "low-frequency stride in frames (default: one frame per second)");
    cmd->add_option("--dim", opt.dim, "feature width")->capture_default_str();
    cmd->add_option("--patches", opt.patches,
                    "raw patch tokens per frame (default: tokens-per-frame)");
    cmd->add_flag("--inject-gt", opt.inject_gt, "skip grounding, use each item's gt segments");
    cmd->add_option("--seed", opt.seed, "seed for all synthetic randomness")
        ->capture_default_str();
    cmd->add_option("--jobs", opt.jobs, "parallel items")->capture_default_str();
    cmd->add_option("--out", opt.out, "output path")->required();
}

InferenceConfig config_from(const CommonOptions& opt) {
    InferenceConfig cfg;
    if (opt.low_interval > 0) cfg.low_interval_frames = opt.low_interval;
    cfg.high_target_count = opt.nh;
    cfg.proto = GroundingProtocol(opt.nbins);
    cfg.tokens_per_frame = opt.tokens_per_frame;
    return cfg;
}

std::unique_ptr<VisualBackend> make_visual(const CommonOptions& opt) {
    const std::size_t patches = opt.patches > 0 ? opt.patches : opt.tokens_per_frame;
    if (opt.features.empty()) {
        return std::make_unique<MockEncoder>(rng::Stream(opt.seed).with("encoder").draw_u64(0),
                                             patches, opt.dim);
    }
    return std::make_unique<FileVisualBackend>(opt.features, patches, opt.dim);
}

std::unique_ptr<LanguageBackend> make_language(const CommonOptions& opt,
                                               const std::vector<QaItem>& items) {
    if (opt.backend == "remote") {
        if (opt.endpoint.empty()) throw ArgumentError("--backend remote needs --endpoint");
        return std::make_unique<RemoteBackend>(opt.endpoint);
    }
    auto mock = std::make_unique<MockBackend>();
    if (!opt.fixtures.empty()) {
        std::ifstream in(opt.fixtures);
        if (!in) throw IoError("cannot open fixtures " + opt.fixtures);
        nlohmann::json doc;
        try {
            in >> doc;
        } catch (const nlohmann::json::exception& e) {
            throw IoError("fixtures " + opt.fixtures + ": " + e.what());
        }
        std::string default_reply;
        if (doc.contains("default_reply")) default_reply = doc["default_reply"].get<std::string>();
        std::vector<MockBackend::Rule> rules;
        if (doc.contains("patterns")) {
            for (const nlohmann::json& p : doc["patterns"]) {
                rules.push_back(MockBackend::Rule{p.at("pattern").get<std::string>(),
                                                  p.at("reply").get<std::string>()});
            }
        }
        mock = std::make_unique<MockBackend>(default_reply, std::move(rules));
    }
    if (opt.oracle) {
        const GroundingProtocol proto(opt.nbins);
        for (const QaItem& item : items) {
            if (item.gt_segments.empty()) continue;
            const double duration = item.timeline().duration_s();
            std::string reply;
            for (std::size_t i = 0; i < item.gt_segments.size(); ++i) {
                if (i > 0) reply += ", ";
                reply += format_segment(item.gt_segments[i], duration, proto);
            }
            mock->add_rule(item.question, reply);
        }
    }
    return mock;
}

Pipeline make_pipeline(const CommonOptions& opt, const VisualBackend& visual,
                       LanguageBackend& language) {
    const TemporalTokenTable table = TemporalTokenTable::random(
        opt.nbins, opt.dim, rng::Stream(opt.seed).with("table").draw_u64(0));
    const MixerParams mixer =
        MixerParams::random(opt.dim, rng::Stream(opt.seed).with("mixer").draw_u64(0));
    return Pipeline(visual, language, table, mixer, config_from(opt));
}

// Runs fn(i) for i in [0, n) on up to `width` threads; any exception is
// rethrown after all workers finish.
void parallel_for(std::size_t n, std::size_t width, const std::function<void(std::size_t)>& fn) {
    if (n == 0) return;
    width = std::min(width == 0 ? std::size_t{1} : width, n);
    if (width <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> workers;
    std::exception_ptr error;
    std::mutex error_mutex;
    for (std::size_t w = 0; w < width; ++w) {
        workers.emplace_back([&] {
            for (std::size_t i = next.fetch_add(1); i < n; i = next.fetch_add(1)) {
                try {
                    fn(i);
                } catch (...) {
                    std::lock_guard<std::mutex> lock(error_mutex);
                    if (!error) error = std::current_exception();
                }
            }
        });
    }
    for (std::thread& t : workers) t.join();
    if (error) std::rethrow_exception(error);
}

int cmd_ground(const CommonOptions& opt) {
    const std::vector<QaItem> items = records::load_dataset(opt.dataset);
    const std::unique_ptr<VisualBackend> visual = make_visual(opt);
    const std::unique_ptr<LanguageBackend> language = make_language(opt, items);
    const Pipeline pipeline = make_pipeline(opt, *visual, *language);

    struct Row {
        bool ok = false;
        bool backend_failed = false;
        std::string error;
        records::PredictionRecord pred;
    };
    std::vector<Row> rows(items.size());
    const std::size_t width = std::min(opt.jobs, language->max_concurrency());
    parallel_for(items.size(), width, [&](std::size_t i) {
        Row& row = rows[i];
        row.pred.item_id = items[i].item_id;
        try {
            const GroundResult res =
                pipeline.ground(items[i].timeline(), items[i].video_id, items[i].question);
            row.pred.predicted = res.segments.front();
            row.ok = true;
        } catch (const BackendError& e) {
            row.backend_failed = true;
            row.error = e.what();
        } catch (const std::exception& e) {
            row.error = e.what();
        }
    });

    std::vector<records::PredictionRecord> preds;
    bool backend_failed = false;
    for (const Row& row : rows) {
        if (row.ok) {
            preds.push_back(row.pred);
        } else {
            std::cerr << "item " << row.pred.item_id << ": " << row.error << "\n";
            backend_failed = backend_failed || row.backend_failed;
        }
    }
    records::save_predictions(opt.out, preds);
    std::cout << "wrote " << preds.size() << " predictions to " << opt.out << "\n";
    return backend_failed ? kExitBackend : kExitOk;
}

int cmd_answer(const CommonOptions& opt, const std::string& pred_out) {
    const std::vector<QaItem> items = records::load_dataset(opt.dataset);
    const std::unique_ptr<VisualBackend> visual = make_visual(opt);
    const std::unique_ptr<LanguageBackend> language = make_language(opt, items);
    const Pipeline pipeline = make_pipeline(opt, *visual, *language);

    const std::vector<BatchResult> results = pipeline.run_batch(items, opt.jobs, opt.inject_gt);
    records::save_traces(opt.out, results);

    if (!pred_out.empty()) {
        std::vector<records::PredictionRecord> preds;
        for (const BatchResult& r : results) {
            if (r.trace.errored) continue;
            records::PredictionRecord p;
            p.item_id = r.item_id;
            p.predicted = r.trace.parsed_segments.front();
            p.answer_text = r.trace.answer;
            preds.push_back(std::move(p));
        }
        records::save_predictions(pred_out, preds);
    }

    bool backend_failed = false;
    std::size_t errored = 0;
    for (const BatchResult& r : results) {
        if (!r.trace.errored) continue;
        ++errored;
        backend_failed = backend_failed || r.trace.backend_error;
        std::cerr << "item " << r.item_id << ": " << r.trace.error_message << "\n";
    }
    std::cout << "wrote " << results.size() << " traces to " << opt.out;
    if (errored > 0) std::cout << " (" << errored << " errored)";
    std::cout << "\n";
    return backend_failed ? kExitBackend : kExitOk;
}

int cmd_eval(const std::string& pred_path, const std::string& ref_path,
             const std::string& judge_kind, const std::string& out_path) {
    const std::vector<records::PredictionRecord> preds = records::load_predictions(pred_path);
    const std::vector<records::ReferenceRecord> refs = records::load_references(ref_path);
    std::map<std::string, const records::ReferenceRecord*> by_id;
    for (const records::ReferenceRecord& r : refs) by_id[r.item_id] = &r;

    std::vector<GroundingPrediction> grounding;
    std::vector<CaptionPair> captions;
    std::vector<JudgeItem> judge_items;
    bool any_reference_text = false;
    for (const records::PredictionRecord& p : preds) {
        const auto it = by_id.find(p.item_id);
        if (it == by_id.end()) throw IoError("no reference for item " + p.item_id);
        const records::ReferenceRecord& ref = *it->second;
        grounding.push_back(GroundingPrediction{p.item_id, p.predicted, ref.reference});
        if (!ref.answer_text.empty()) {
            any_reference_text = true;
            captions.push_back(CaptionPair{p.item_id, p.answer_text, {ref.answer_text}});
            judge_items.push_back(JudgeItem{p.item_id, ref.question, ref.answer_text,
                                            p.answer_text});
        }
    }
    if (grounding.empty()) throw ArgumentError("no predictions to evaluate");

    MetricReport report;
    report.grounding = grounding_report(grounding);
    if (any_reference_text) {
        double b = 0.0;
        double m = 0.0;
        double r = 0.0;
        for (const CaptionPair& pair : captions) {
            b += bleu4(pair);
            m += meteor_simplified(pair);
            r += rouge_l(pair);
        }
        const double n = static_cast<double>(captions.size());
        report.bleu4 = b / n;
        report.meteor = m / n;
        report.rouge_l = r / n;
        report.cider = cider(captions);
        if (judge_kind == "mock") {
            MockJudge judge;
            const JudgeReport jr = judge_report(judge_items, judge);
            report.accuracy = jr.accuracy;
            report.score = jr.mean_score;
        }
    }

    std::cout << render_report(report);
    if (!out_path.empty()) {
        nlohmann::json j;
        j["mIoU"] = report.grounding->mean_iou;
        for (const auto& [th, v] : report.grounding->recall_at) {
            std::ostringstream key;
            key << "R@" << std::setprecision(1) << std::fixed << th;
            j[key.str()] = v;
        }
        if (report.bleu4) j["bleu4"] = *report.bleu4;
        if (report.meteor) j["meteor_exact"] = *report.meteor;
        if (report.rouge_l) j["rouge_l"] = *report.rouge_l;
        if (report.cider) j["cider"] = *report.cider;
        if (report.accuracy) j["accuracy"] = *report.accuracy;
        if (report.score) j["score"] = *report.score;
        std::ofstream out(out_path);
        if (!out) throw IoError("cannot write " + out_path);
        out << j.dump() << "\n";
    }
    return kExitOk;
}

struct CorpusStreamArgs {
    std::string features;
    std::string video_id = "video";
    double fps = 1.0;
    double threshold = 0.5;
    std::string boundaries;  // precomputed cuts (stitch only)
    std::string out;
};

int cmd_corpus_split(const CorpusStreamArgs& args) {
    const FeatureStream stream =
        records::load_feature_stream(args.features, args.video_id, args.fps);
    const ClipBoundarySet cuts = detect_boundaries(stream, args.threshold);
    nlohmann::json j;
    j["video_id"] = args.video_id;
    j["boundaries_s"] = cuts.boundaries_s;
    records::write_jsonl(args.out, {j});
    std::cout << "detected " << cuts.boundaries_s.size() << " boundaries\n";
    return kExitOk;
}

int cmd_corpus_stitch(const CorpusStreamArgs& args) {
    const FeatureStream stream =
        records::load_feature_stream(args.features, args.video_id, args.fps);
    ClipBoundarySet cuts;
    if (!args.boundaries.empty()) {
        const std::vector<nlohmann::json> lines = records::read_jsonl(args.boundaries);
        if (lines.empty()) throw IoError("boundaries file is empty");
        cuts.boundaries_s = lines.front().at("boundaries_s").get<std::vector<double>>();
    } else {
        cuts = detect_boundaries(stream, args.threshold);
    }
    const ClipBoundarySet stitched = stitch(cuts, stream);
    nlohmann::json j;
    j["video_id"] = args.video_id;
    j["boundaries_s"] = stitched.boundaries_s;
    j["clips"] = nlohmann::json::array();
    for (const Segment& s : stitched.clips(stream.duration_s())) {
        j["clips"].push_back(records::segment_to_json(s));
    }
    records::write_jsonl(args.out, {j});
    std::cout << "stitched to " << stitched.boundaries_s.size() + 1 << " clips\n";
    return kExitOk;
}

struct CorpusGenArgs {
    std::string annotations;
    std::size_t nbins = 1000;
    std::uint64_t seed = 0;
    double fps = 0.0;  // >0 stamps records with playback geometry
    std::string out;
};

int cmd_corpus_gen(const CorpusGenArgs& args) {
    const std::vector<Annotation> annotations = records::load_annotations(args.annotations);
    const GroundingProtocol proto(args.nbins);
    std::vector<QaRecord> all;
    for (const Annotation& ann : annotations) {
        std::vector<QaRecord> recs = gen_tasks(ann, proto, args.seed);
        for (QaRecord& r : recs) {
            if (args.fps > 0.0) {
                r.fps = args.fps;
                r.frame_count = static_cast<std::size_t>(std::llround(r.duration_s * args.fps));
            }
            all.push_back(std::move(r));
        }
    }
    records::save_qa_records(args.out, all);
    std::cout << "generated " << all.size() << " records from " << annotations.size()
              << " annotations\n";
    return kExitOk;
}

int cmd_corpus_stats(const std::string& records_path, const std::string& out_path) {
    const std::vector<QaRecord> recs = records::load_qa_records(records_path);
    const CorpusStats stats = corpus_stats(recs);
    std::cout << "total records: " << stats.total << "\n";
    for (const auto& [task, count] : stats.per_task) {
        std::cout << "  " << task << ": " << count << "\n";
    }
    std::cout << "clip-count histogram (clips -> videos):\n";
    for (const auto& [clips, videos] : stats.clip_count_histogram) {
        std::cout << "  " << clips << " -> " << videos << "\n";
    }
    if (!out_path.empty()) {
        nlohmann::json j;
        j["total"] = stats.total;
        j["per_task"] = stats.per_task;
        nlohmann::json hist = nlohmann::json::object();
        for (const auto& [clips, videos] : stats.clip_count_histogram) {
            hist[std::to_string(clips)] = videos;
        }
        j["clip_count_histogram"] = hist;
        records::write_jsonl(out_path, {j});
    }
    return kExitOk;
}

// ---------------------------------------------------------------------------
// selftest
// ---------------------------------------------------------------------------

struct SelfTest {
    int failures = 0;

    void check(const std::string& name, bool ok, const std::string& detail = "") {
        std::cout << (ok ? "PASS" : "FAIL") << "  " << name;
        if (!detail.empty()) std::cout << "  (" << detail << ")";
        std::cout << "\n";
        if (!ok) ++failures;
    }
};

// Scalar re-expansion of the mixing attention, plain loops and naive sums.
Matrix scalar_mixer(const Matrix& low, const Matrix& high, const MixerParams& p) {
    const std::size_t d = p.dim;
    const auto apply_ffn = [&](const Matrix& m, const FfnParams& f) {
        Matrix out(m.rows(), d);
        for (std::size_t i = 0; i < m.rows(); ++i) {
            for (std::size_t j = 0; j < d; ++j) {
                double acc = f.bias[j];
                for (std::size_t k = 0; k < d; ++k) acc += m.at(i, k) * f.weight.at(k, j);
                out.at(i, j) = activation_value(f.activation, acc);
            }
        }
        return out;
    };
    const Matrix lt = apply_ffn(low, p.ffn_low);
    const Matrix ht = apply_ffn(high, p.ffn_high);
    const double temp = std::sqrt(static_cast<double>(d));
    Matrix out(high.rows(), d);
    for (std::size_t i = 0; i < high.rows(); ++i) {
        std::vector<double> logits(low.rows());
        double mx = -1e300;
        for (std::size_t j = 0; j < low.rows(); ++j) {
            double s = 0.0;
            for (std::size_t k = 0; k < d; ++k) s += ht.at(i, k) * lt.at(j, k);
            logits[j] = s / temp;
            mx = std::max(mx, logits[j]);
        }
        double denom = 0.0;
        for (double& l : logits) {
            l = std::exp(l - mx);
            denom += l;
        }
        for (std::size_t j = 0; j < low.rows(); ++j) {
            for (std::size_t k = 0; k < d; ++k) out.at(i, k) += logits[j] / denom * lt.at(j, k);
        }
    }
    return out;
}

int cmd_selftest(std::uint64_t seed) {
    SelfTest t;

    {  // Protocol round-trip.
        const GroundingProtocol proto(1000);
        rng::Stream s = rng::Stream(seed).with("selftest_proto");
        double worst = 0.0;
        bool ok = true;
        for (std::uint64_t i = 0; i < 2000 && ok; ++i) {
            const double duration = s.uniform(i * 4, 10.0, 500.0);
            const double unit = duration / 1000.0;
            double a = s.uniform(i * 4 + 1, 0.0, duration - 3.0 * unit);
            double b = a + 2.0 * unit + s.uniform(i * 4 + 2, 0.0, duration - a - 2.0 * unit);
            const Segment seg(a, std::min(b, duration));
            const std::string text = format_segment(seg, duration, proto);
            const std::vector<Segment> parsed = parse_segments(text, duration, proto);
            const double err = std::max(std::fabs(parsed.front().start_s - seg.start_s),
                                        std::fabs(parsed.front().end_s - seg.end_s));
            worst = std::max(worst, err);
            ok = err <= unit * (1.0 + 1e-9);
        }
        t.check("protocol round-trip within one bin", ok,
                "worst error " + std::to_string(worst) + " s");
    }

    {  // Sampling stride law vs brute force.
        rng::Stream s = rng::Stream(seed).with("selftest_sampling");
        bool ok = true;
        for (std::uint64_t i = 0; i < 2000 && ok; ++i) {
            const std::size_t frames = 1 + s.below(i * 2, 500);
            const std::size_t target = 1 + s.below(i * 2 + 1, 40);
            const std::size_t got = high_interval(
                Segment(0.0, static_cast<double>(frames)), VideoTimeline(frames, 1.0),
                SamplingConfig(1, target));
            std::size_t brute = 1;
            while (brute * target < frames) ++brute;
            ok = got == brute;
        }
        t.check("dense stride matches brute-force enumeration", ok);
    }

    {  // Mixer forward vs scalar expansion.
        double worst = 0.0;
        for (std::uint64_t c = 0; c < 20; ++c) {
            rng::Stream s = rng::Stream(seed).with("selftest_mixer").with(c);
            const std::size_t n_low = 1 + s.below(0, 6);
            const std::size_t n_high = 1 + s.below(1, 4);
            const std::size_t d = 1 + s.below(2, 8);
            const MixerParams params = MixerParams::random(d, s.draw_u64(3));
            TokenMatrix low;
            low.tokens = Matrix::random(n_low, d, s.draw_u64(4));
            low.per_token_timestamp_s.assign(n_low, 0.0);
            TokenMatrix high;
            high.tokens = Matrix::random(n_high, d, s.draw_u64(5));
            high.per_token_timestamp_s.assign(n_high, 0.0);
            const TokenMatrix got = mixer_forward(low, high, params);
            const Matrix want = scalar_mixer(low.tokens, high.tokens, params);
            for (std::size_t k = 0; k < want.size(); ++k) {
                worst = std::max(worst, std::fabs(got.tokens.data()[k] - want.data()[k]));
            }
        }
        t.check("mixer forward matches scalar oracle", worst <= 1e-10,
                "max abs diff " + std::to_string(worst));
    }

    {  // Analytic JVP vs central finite differences.
        double worst = 0.0;
        for (std::uint64_t c = 0; c < 20; ++c) {
            rng::Stream s = rng::Stream(seed).with("selftest_jvp").with(c);
            const std::size_t n_low = 5;
            const std::size_t n_high = 3;
            const std::size_t d = 8;
            const MixerParams params = MixerParams::random(d, s.draw_u64(0));
            TokenMatrix low;
            low.tokens = Matrix::random(n_low, d, s.draw_u64(1));
            low.per_token_timestamp_s.assign(n_low, 0.0);
            TokenMatrix high;
            high.tokens = Matrix::random(n_high, d, s.draw_u64(2));
            high.per_token_timestamp_s.assign(n_high, 0.0);
            const Matrix tan_low = Matrix::random(n_low, d, s.draw_u64(3));
            const Matrix tan_high = Matrix::random(n_high, d, s.draw_u64(4));

            const Matrix analytic = mixer_jvp(low, high, params, tan_low, tan_high);

            // Stack both primals into one matrix so the generic
            // finite-difference helper drives the joint derivative.
            Matrix stacked(n_low + n_high, d);
            Matrix stacked_tan(n_low + n_high, d);
            for (std::size_t i = 0; i < n_low; ++i) {
                for (std::size_t k = 0; k < d; ++k) {
                    stacked.at(i, k) = low.tokens.at(i, k);
                    stacked_tan.at(i, k) = tan_low.at(i, k);
                }
            }
            for (std::size_t i = 0; i < n_high; ++i) {
                for (std::size_t k = 0; k < d; ++k) {
                    stacked.at(n_low + i, k) = high.tokens.at(i, k);
                    stacked_tan.at(n_low + i, k) = tan_high.at(i, k);
                }
            }
            const auto f = [&](const Matrix& x) {
                TokenMatrix l = low;
                TokenMatrix h = high;
                for (std::size_t i = 0; i < n_low; ++i) {
                    for (std::size_t k = 0; k < d; ++k) l.tokens.at(i, k) = x.at(i, k);
                }
                for (std::size_t i = 0; i < n_high; ++i) {
                    for (std::size_t k = 0; k < d; ++k) h.tokens.at(i, k) = x.at(n_low + i, k);
                }
                return mixer_forward(l, h, params).tokens;
            };
            const Matrix fd = finite_diff_jvp(f, stacked, stacked_tan, 1e-6);
            double num = 0.0;
            double den = 0.0;
            for (std::size_t k = 0; k < fd.size(); ++k) {
                num += (analytic.data()[k] - fd.data()[k]) * (analytic.data()[k] - fd.data()[k]);
                den += fd.data()[k] * fd.data()[k];
            }
            worst = std::max(worst, std::sqrt(num / std::max(den, 1e-30)));
        }
        t.check("mixer gradient matches finite differences", worst <= 1e-4,
                "max rel err " + std::to_string(worst));
    }

    {  // Stitch idempotence.
        bool ok = true;
        for (std::uint64_t c = 0; c < 5 && ok; ++c) {
            rng::Stream s = rng::Stream(seed).with("selftest_stitch").with(c);
            const std::size_t frames = 40 + s.below(0, 80);
            Matrix feats(frames, 4);
            std::size_t shot = 0;
            for (std::size_t i = 0; i < frames; ++i) {
                if (i > 0 && s.unit(100 + i) < 0.08) ++shot;
                for (std::size_t k = 0; k < 4; ++k) {
                    feats.at(i, k) = (shot + 1) * (k == shot % 4 ? 1.0 : 0.05);
                }
            }
            const FeatureStream stream("v", feats, 2.0);
            const ClipBoundarySet cuts = detect_boundaries(stream, 0.3);
            const ClipBoundarySet once = stitch(cuts, stream);
            const ClipBoundarySet twice = stitch(once, stream);
            ok = once.boundaries_s == twice.boundaries_s;
        }
        t.check("stitch is idempotent", ok);
    }

    {  // Oracle end-to-end grounding.
        const std::size_t n_items = 10;
        std::vector<QaItem> items;
        MockBackend backend;
        const GroundingProtocol proto(1000);
        for (std::size_t i = 0; i < n_items; ++i) {
            QaItem item;
            item.item_id = "st-" + std::to_string(i);
            item.video_id = "vid-" + std::to_string(i);
            item.frame_count = 40;
            item.fps = 2.0;
            item.question = "what happens in clip " + std::to_string(i) + "?";
            const double duration = item.timeline().duration_s();
            const double unit = duration / 1000.0;
            const std::size_t b0 = 50 + 20 * i;
            const std::size_t b1 = b0 + 300;
            item.gt_segments.push_back(
                Segment(static_cast<double>(b0) * unit, static_cast<double>(b1) * unit));
            backend.add_rule(item.question,
                             format_segment(item.gt_segments.front(), duration, proto));
            items.push_back(std::move(item));
        }
        const MockEncoder encoder(7, 8, 4);
        InferenceConfig cfg;
        cfg.tokens_per_frame = 8;
        const Pipeline pipeline(encoder, backend, TemporalTokenTable::random(1000, 4, 11),
                                MixerParams::random(4, 13), cfg);
        const std::vector<BatchResult> results = pipeline.run_batch(items);
        std::vector<GroundingPrediction> preds;
        for (std::size_t i = 0; i < items.size(); ++i) {
            preds.push_back(GroundingPrediction{items[i].item_id,
                                                results[i].trace.parsed_segments.front(),
                                                items[i].gt_segments.front()});
        }
        const GroundingReport rep = grounding_report(preds);
        t.check("oracle backend reaches perfect grounding", rep.mean_iou == 1.0,
                "mIoU " + std::to_string(rep.mean_iou));
    }

    std::cout << (t.failures == 0 ? "all checks passed" : "checks failed") << "\n";
    return t.failures == 0 ? kExitOk : kExitTestFailure;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"mixed-frequency video QA toolkit"};
    app.require_subcommand(1);

    CommonOptions ground_opt;
    CLI::App* ground = app.add_subcommand("ground", "round-1 temporal grounding only");
    add_common_flags(ground, ground_opt, true);

    CommonOptions answer_opt;
    std::string answer_pred_out;
    CLI::App* answer = app.add_subcommand("answer", "full two-round inference");
    add_common_flags(answer, answer_opt, true);
    answer->add_option("--pred-out", answer_pred_out,
                       "also write per-item predictions to this path");

    std::string eval_pred;
    std::string eval_ref;
    std::string eval_judge = "none";
    std::string eval_out;
    CLI::App* eval = app.add_subcommand("eval", "score predictions against references");
    eval->add_option("--pred", eval_pred, "predictions file")->required();
    eval->add_option("--ref", eval_ref, "references file")->required();
    eval->add_option("--judge", eval_judge, "answer judge: none or mock")
        ->check(CLI::IsMember({"none", "mock"}));
    eval->add_option("--out", eval_out, "also write the report as a structured record");

    CLI::App* corpus = app.add_subcommand("corpus", "corpus construction tools");
    corpus->require_subcommand(1);

    CorpusStreamArgs split_args;
    CLI::App* split = corpus->add_subcommand("split", "detect shot boundaries");
    split->add_option("--features", split_args.features, "feature stream file")->required();
    split->add_option("--video-id", split_args.video_id, "video id")->capture_default_str();
    split->add_option("--fps", split_args.fps, "frames per second")->capture_default_str();
    split->add_option("--threshold", split_args.threshold, "cut threshold in (0,2]")
        ->capture_default_str();
    split->add_option("--out", split_args.out, "output path")->required();

    CorpusStreamArgs stitch_args;
    CLI::App* stitch_cmd = corpus->add_subcommand("stitch", "merge short/similar clips");
    stitch_cmd->add_option("--features", stitch_args.features, "feature stream file")->required();
    stitch_cmd->add_option("--video-id", stitch_args.video_id, "video id")->capture_default_str();
    stitch_cmd->add_option("--fps", stitch_args.fps, "frames per second")->capture_default_str();
    stitch_cmd->add_option("--threshold", stitch_args.threshold,
                           "cut threshold when no --boundaries given")
        ->capture_default_str();
    stitch_cmd->add_option("--boundaries", stitch_args.boundaries, "precomputed boundaries file");
    stitch_cmd->add_option("--out", stitch_args.out, "output path")->required();

    CorpusGenArgs gen_args;
    CLI::App* gen = corpus->add_subcommand("gen", "generate QA records from annotations");
    gen->add_option("--annotations", gen_args.annotations, "annotation records")->required();
    gen->add_option("--nbins", gen_args.nbins, "temporal protocol bins")->capture_default_str();
    gen->add_option("--seed", gen_args.seed, "template selection seed")->capture_default_str();
    gen->add_option("--fps", gen_args.fps, "stamp records with this frame rate");
    gen->add_option("--out", gen_args.out, "output path")->required();

    std::string stats_records;
    std::string stats_out;
    CLI::App* stats = corpus->add_subcommand("stats", "summarize QA records");
    stats->add_option("--records", stats_records, "QA records file")->required();
    stats->add_option("--out", stats_out, "also write the summary as a structured record");

    std::uint64_t selftest_seed = 0;
    CLI::App* selftest = app.add_subcommand("selftest", "run built-in oracle checks");
    selftest->add_option("--seed", selftest_seed, "seed")->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitUsage;
    }

    try {
        if (ground->parsed()) return cmd_ground(ground_opt);
        if (answer->parsed()) return cmd_answer(answer_opt, answer_pred_out);
        if (eval->parsed()) return cmd_eval(eval_pred, eval_ref, eval_judge, eval_out);
        if (corpus->parsed()) {
            if (split->parsed()) return cmd_corpus_split(split_args);
            if (stitch_cmd->parsed()) return cmd_corpus_stitch(stitch_args);
            if (gen->parsed()) return cmd_corpus_gen(gen_args);
            if (stats->parsed()) return cmd_corpus_stats(stats_records, stats_out);
        }
        if (selftest->parsed()) return cmd_selftest(selftest_seed);
    } catch (const BackendError& e) {
        std::cerr << "backend error: " << e.what() << "\n";
        return kExitBackend;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    }
    return kExitUsage;
}
