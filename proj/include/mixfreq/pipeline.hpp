#pragma once

#include <atomic>
#include <cmath>
#include <cstddef>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "mixfreq/encoding.hpp"
#include "mixfreq/errors.hpp"
#include "mixfreq/grounding.hpp"
#include "mixfreq/mixer.hpp"
#include "mixfreq/sampling.hpp"

namespace mixfreq {

// One visual input block as handed to a language backend.
struct LabeledBlock {
    std::string label;
    TokenMatrix tokens;
};

// Text generator over (visual blocks, prompt). Implementations must be
// deterministic given identical inputs; generate may be called from
// several threads at once only up to max_concurrency().
class LanguageBackend {
  public:
    virtual ~LanguageBackend() = default;

    virtual std::string generate(const std::vector<LabeledBlock>& blocks,
                                 const std::string& prompt) = 0;

    virtual std::size_t max_concurrency() const { return 1; }
};

// Scripted backend: first substring pattern (in declaration order) found in
// the prompt selects the reply; otherwise the default reply. Counts calls
// and keeps the prompt log, so tests can observe round skipping.
class MockBackend final : public LanguageBackend {
  public:
    struct Rule {
        std::string pattern;
        std::string reply;
    };

    explicit MockBackend(std::string default_reply = "", std::vector<Rule> rules = {})
        : default_reply_(std::move(default_reply)), rules_(std::move(rules)) {}

    void add_rule(std::string pattern, std::string reply) {
        rules_.push_back(Rule{std::move(pattern), std::move(reply)});
    }

    std::string generate(const std::vector<LabeledBlock>& blocks,
                         const std::string& prompt) override {
        (void)blocks;
        {
            std::lock_guard<std::mutex> lock(mutex_);
            ++calls_;
            prompt_log_.push_back(prompt);
        }
        for (const Rule& r : rules_) {
            if (prompt.find(r.pattern) != std::string::npos) return r.reply;
        }
        return default_reply_;
    }

    std::size_t max_concurrency() const override { return 64; }

    std::size_t call_count() const {
        std::lock_guard<std::mutex> lock(mutex_);
        return calls_;
    }

    std::vector<std::string> prompt_log() const {
        std::lock_guard<std::mutex> lock(mutex_);
        return prompt_log_;
    }

  private:
    std::string default_reply_;
    std::vector<Rule> rules_;
    mutable std::mutex mutex_;
    std::size_t calls_ = 0;
    std::vector<std::string> prompt_log_;
};

// Everything one inference said and saw, in order.
struct DialogueTrace {
    std::string q1_prompt;
    std::string q1_reply;
    std::vector<Segment> parsed_segments;
    bool grounding_skipped = false;  // segments were injected, round 1 never ran
    bool fallback_used = false;      // reply had no parsable segment; whole video used
    std::string q2_prompt;
    std::string answer;
    // (label, rows) per visual block sent in round 2.
    std::vector<std::pair<std::string, std::size_t>> token_counts;
    bool errored = false;
    bool backend_error = false;  // errored specifically on backend transport
    std::string error_message;
};

// Inference-time knobs. Defaults: one low-frequency frame per second,
// 20 high-frequency frames per grounded span, 1000 protocol bins,
// 64 tokens per frame.
struct InferenceConfig {
    // Low-frequency stride in frames; unset means one frame per second
    // (stride = round(fps), at least 1).
    std::optional<std::size_t> low_interval_frames;
    std::size_t high_target_count = 20;
    GroundingProtocol proto;
    std::size_t tokens_per_frame = 64;
    // When set, grounding is skipped and these segments are used directly.
    std::optional<std::vector<Segment>> injected_segments;

    SamplingConfig sampling_for(const VideoTimeline& timeline) const {
        std::size_t interval;
        if (low_interval_frames.has_value()) {
            interval = *low_interval_frames;
        } else {
            const long long per_second = std::llround(timeline.fps);
            interval = per_second < 1 ? 1 : static_cast<std::size_t>(per_second);
        }
        return SamplingConfig(interval, high_target_count);
    }
};

// One question over one video, with optional evaluation ground truth.
struct QaItem {
    std::string item_id;
    std::string video_id;
    std::size_t frame_count = 0;
    double fps = 1.0;
    std::string question;
    std::vector<Segment> gt_segments;
    std::string reference_answer;

    VideoTimeline timeline() const { return VideoTimeline(frame_count, fps); }
};

struct GroundResult {
    std::vector<Segment> segments;
    DialogueTrace trace;
};

struct AnswerResult {
    std::string answer;
    DialogueTrace trace;
};

struct BatchResult {
    std::string item_id;
    DialogueTrace trace;
};

// Two-round inference driver: ground the question in time, re-sample the
// grounded spans densely, mix the two frequencies, answer.
class Pipeline {
  public:
    Pipeline(const VisualBackend& visual, LanguageBackend& language, TemporalTokenTable table,
             MixerParams mixer, InferenceConfig cfg)
        : visual_(visual),
          language_(language),
          table_(std::move(table)),
          mixer_(std::move(mixer)),
          cfg_(std::move(cfg)) {
        if (table_.dim != visual_.feature_dim()) {
            throw ShapeError("temporal table dim != visual feature dim");
        }
        if (mixer_.dim != visual_.feature_dim()) {
            throw ShapeError("mixer dim != visual feature dim");
        }
    }

    const InferenceConfig& config() const { return cfg_; }

    // Round 1 only. With injected segments the backend is never called.
    GroundResult ground(const VideoTimeline& timeline, const std::string& video_id,
                        const std::string& question) const {
        DialogueTrace trace;
        if (inject(timeline, trace)) return GroundResult{trace.parsed_segments, std::move(trace)};
        const TokenMatrix h_low = encode_low(timeline, video_id);
        ground_with(h_low, timeline, question, trace);
        return GroundResult{trace.parsed_segments, std::move(trace)};
    }

    // Both rounds; the trace records the full dialogue.
    AnswerResult answer(const VideoTimeline& timeline, const std::string& video_id,
                        const std::string& question) const {
        DialogueTrace trace;
        const TokenMatrix h_low = encode_low(timeline, video_id);
        if (!inject(timeline, trace)) ground_with(h_low, timeline, question, trace);

        const SamplingPlan high_plan =
            sample_high(timeline, trace.parsed_segments, cfg_.sampling_for(timeline));
        const TokenMatrix h_high = encode_plan(high_plan, timeline, video_id, visual_, table_,
                                               cfg_.tokens_per_frame);
        const TokenMatrix mixed = mixer_forward(h_low, h_high, mixer_);

        trace.q2_prompt =
            build_q2(question, trace.parsed_segments, timeline.duration_s(), cfg_.proto);
        std::vector<LabeledBlock> blocks;
        blocks.push_back(LabeledBlock{"low", h_low});
        blocks.push_back(LabeledBlock{"mixed", mixed});
        trace.token_counts = {{"low", h_low.row_count()}, {"mixed", mixed.row_count()}};
        trace.answer = language_.generate(blocks, trace.q2_prompt);
        return AnswerResult{trace.answer, std::move(trace)};
    }

    AnswerResult answer(const QaItem& item) const {
        if (cfg_.injected_segments.has_value() || !inject_from_item_) {
            return answer(item.timeline(), item.video_id, item.question);
        }
        Pipeline local(*this);
        local.inject_from_item_ = false;
        if (item.gt_segments.empty()) {
            throw ArgumentError("item " + item.item_id + " has no segments to inject");
        }
        local.cfg_.injected_segments = item.gt_segments;
        return local.answer(item.timeline(), item.video_id, item.question);
    }

    // Per-item traces in dataset order. Items are independent: one failure
    // marks its own trace and the rest proceed. `jobs` is capped by the
    // backend's concurrency declaration.
    std::vector<BatchResult> run_batch(const std::vector<QaItem>& items, std::size_t jobs = 1,
                                       bool inject_item_gt = false) const {
        std::vector<BatchResult> results(items.size());
        const std::size_t width =
            std::min({jobs == 0 ? std::size_t{1} : jobs, language_.max_concurrency(),
                      items.size() == 0 ? std::size_t{1} : items.size()});

        const auto run_one = [&](std::size_t i) {
            results[i].item_id = items[i].item_id;
            try {
                Pipeline local(*this);
                local.inject_from_item_ = inject_item_gt;
                results[i].trace = local.answer(items[i]).trace;
            } catch (const BackendError& e) {
                results[i].trace.errored = true;
                results[i].trace.backend_error = true;
                results[i].trace.error_message = e.what();
            } catch (const std::exception& e) {
                results[i].trace.errored = true;
                results[i].trace.error_message = e.what();
            }
        };

        if (width <= 1) {
            for (std::size_t i = 0; i < items.size(); ++i) run_one(i);
            return results;
        }
        std::atomic<std::size_t> next{0};
        std::vector<std::thread> workers;
        workers.reserve(width);
        for (std::size_t w = 0; w < width; ++w) {
            workers.emplace_back([&] {
                for (std::size_t i = next.fetch_add(1); i < items.size(); i = next.fetch_add(1)) {
                    run_one(i);
                }
            });
        }
        for (std::thread& t : workers) t.join();
        return results;
    }

  private:
    TokenMatrix encode_low(const VideoTimeline& timeline, const std::string& video_id) const {
        const SamplingPlan plan = sample_low(timeline, cfg_.sampling_for(timeline));
        return encode_plan(plan, timeline, video_id, visual_, table_, cfg_.tokens_per_frame);
    }

    // True when injection replaced round 1; fills the trace accordingly.
    bool inject(const VideoTimeline& timeline, DialogueTrace& trace) const {
        if (!cfg_.injected_segments.has_value()) return false;
        if (cfg_.injected_segments->empty()) {
            throw ArgumentError("injected segment list is empty");
        }
        for (const Segment& s : *cfg_.injected_segments) require_within(s, timeline);
        trace.parsed_segments = *cfg_.injected_segments;
        trace.grounding_skipped = true;
        return true;
    }

    void ground_with(const TokenMatrix& h_low, const VideoTimeline& timeline,
                     const std::string& question, DialogueTrace& trace) const {
        trace.q1_prompt = build_q1(question);
        std::vector<LabeledBlock> blocks;
        blocks.push_back(LabeledBlock{"low", h_low});
        trace.q1_reply = language_.generate(blocks, trace.q1_prompt);
        try {
            trace.parsed_segments =
                parse_segments(trace.q1_reply, timeline.duration_s(), cfg_.proto);
        } catch (const GroundingParseError&) {
            trace.fallback_used = true;
            trace.parsed_segments = {Segment(0.0, timeline.duration_s())};
        }
    }

    const VisualBackend& visual_;
    LanguageBackend& language_;
    TemporalTokenTable table_;
    MixerParams mixer_;
    InferenceConfig cfg_;
    bool inject_from_item_ = false;
};

} // namespace mixfreq
