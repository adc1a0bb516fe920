#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "mixfreq/errors.hpp"
#include "mixfreq/grounding.hpp"
#include "mixfreq/matrix.hpp"
#include "mixfreq/rng.hpp"
#include "mixfreq/sampling.hpp"

namespace mixfreq {

// Per-frame feature vectors of one video, rows = frames.
struct FeatureStream {
    std::string video_id;
    Matrix features;  // frames x c
    double fps = 1.0;

    FeatureStream() = default;

    FeatureStream(std::string id, Matrix f, double frames_per_second)
        : video_id(std::move(id)), features(std::move(f)), fps(frames_per_second) {
        if (features.rows() < 2) throw FeatureError("feature stream needs at least 2 frames");
        if (!(fps > 0.0)) throw ArgumentError("feature stream fps must be positive");
        features.ensure_finite();
    }

    std::size_t frame_count() const { return features.rows(); }
    double duration_s() const { return static_cast<double>(frame_count()) / fps; }
};

// Cut positions in seconds; clips are the spans between consecutive cuts
// (and the video edges).
struct ClipBoundarySet {
    std::vector<double> boundaries_s;

    std::vector<Segment> clips(double duration_s) const {
        std::vector<Segment> out;
        double start = 0.0;
        for (double b : boundaries_s) {
            out.push_back(Segment(start, b));
            start = b;
        }
        out.push_back(Segment(start, duration_s));
        return out;
    }
};

namespace detail {

// 1 - cosine similarity, in [0, 2] for nonzero vectors.
inline double cosine_distance(const Matrix& m, std::size_t row_a, std::size_t row_b) {
    double dot = 0.0;
    double na = 0.0;
    double nb = 0.0;
    for (std::size_t k = 0; k < m.cols(); ++k) {
        const double a = m.at(row_a, k);
        const double b = m.at(row_b, k);
        dot += a * b;
        na += a * a;
        nb += b * b;
    }
    if (na == 0.0 || nb == 0.0) {
        throw FeatureError("zero-norm feature vector at frame " +
                           std::to_string(na == 0.0 ? row_a : row_b));
    }
    return 1.0 - dot / (std::sqrt(na) * std::sqrt(nb));
}

} // namespace detail

// Cut wherever adjacent frames' cosine distance exceeds the threshold; a cut
// between frames i-1 and i lands at i/fps.
inline ClipBoundarySet detect_boundaries(const FeatureStream& stream, double cut_threshold) {
    if (!(cut_threshold > 0.0) || cut_threshold > 2.0) {
        throw ArgumentError("cut threshold must lie in (0, 2]");
    }
    ClipBoundarySet out;
    for (std::size_t i = 1; i < stream.frame_count(); ++i) {
        if (detail::cosine_distance(stream.features, i - 1, i) > cut_threshold) {
            out.boundaries_s.push_back(static_cast<double>(i) / stream.fps);
        }
    }
    return out;
}

// One left-to-right pass merging each clip into its predecessor when either
// side of the cut is shorter than 5 s or the cut's adjacent frames are
// near-duplicates (cosine distance <= 0.1). The surviving cuts separate
// clips that are both long enough and visually distinct, so a second pass
// changes nothing.
inline ClipBoundarySet stitch(const ClipBoundarySet& boundaries, const FeatureStream& stream) {
    constexpr double kMinDuration = 5.0;
    constexpr double kJoinDistance = 0.1;
    const double duration = stream.duration_s();

    ClipBoundarySet out;
    double prev_start = 0.0;
    for (std::size_t i = 0; i < boundaries.boundaries_s.size(); ++i) {
        const double cut = boundaries.boundaries_s[i];
        const double next_cut = i + 1 < boundaries.boundaries_s.size()
                                    ? boundaries.boundaries_s[i + 1]
                                    : duration;
        const double prev_len = cut - prev_start;
        const double cur_len = next_cut - cut;

        // The cut falls between frames cut_frame-1 and cut_frame.
        const std::size_t cut_frame = static_cast<std::size_t>(std::llround(cut * stream.fps));
        bool merge = prev_len < kMinDuration || cur_len < kMinDuration;
        if (!merge && cut_frame >= 1 && cut_frame < stream.frame_count()) {
            merge = detail::cosine_distance(stream.features, cut_frame - 1, cut_frame) <=
                    kJoinDistance;
        }
        if (!merge) {
            out.boundaries_s.push_back(cut);
            prev_start = cut;
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// QA-task generation
// ---------------------------------------------------------------------------

struct AnnotatedClip {
    Segment segment;
    std::string caption;                // may be empty; a captioner fills it in
    std::vector<std::string> actions;   // at least one label
};

struct Annotation {
    std::string video_id;
    double duration_s = 0.0;  // 0 means "extends to the last clip's end"
    std::vector<AnnotatedClip> clips;

    double duration() const {
        if (duration_s > 0.0) return duration_s;
        if (clips.empty()) throw ArgumentError("annotation has no clips and no duration");
        return clips.back().segment.end_s;
    }
};

enum class TaskKind {
    captioning,
    first_last_grounding,
    sequence_reasoning,
    count_of_times,
    multi_turn,
};

inline std::string to_string(TaskKind k) {
    switch (k) {
        case TaskKind::captioning: return "captioning";
        case TaskKind::first_last_grounding: return "first_last_grounding";
        case TaskKind::sequence_reasoning: return "sequence_reasoning";
        case TaskKind::count_of_times: return "count_of_times";
        case TaskKind::multi_turn: return "multi_turn";
    }
    return "?";
}

inline TaskKind task_kind_from(const std::string& s) {
    if (s == "captioning") return TaskKind::captioning;
    if (s == "first_last_grounding") return TaskKind::first_last_grounding;
    if (s == "sequence_reasoning") return TaskKind::sequence_reasoning;
    if (s == "count_of_times") return TaskKind::count_of_times;
    if (s == "multi_turn") return TaskKind::multi_turn;
    throw ArgumentError("unknown task kind: " + s);
}

struct QaTurn {
    std::string question;
    std::string answer;
};

struct QaRecord {
    std::string video_id;
    TaskKind task = TaskKind::captioning;
    std::vector<QaTurn> turns;
    std::vector<Segment> gt_segments;
    // Optional playback geometry so a record is directly runnable.
    double duration_s = 0.0;
    double fps = 0.0;
    std::size_t frame_count = 0;
};

// Caption source for clips whose annotation carries no caption text.
class CaptionerBackend {
  public:
    virtual ~CaptionerBackend() = default;
    virtual std::string caption(const Segment& seg, const std::vector<std::string>& actions) = 0;
};

class MockCaptioner final : public CaptionerBackend {
  public:
    std::string caption(const Segment& seg, const std::vector<std::string>& actions) override {
        std::ostringstream out;
        out << "clip of " << (actions.empty() ? std::string("activity") : actions.front())
            << " from " << seg.start_s << "s to " << seg.end_s << "s";
        return out.str();
    }
};

namespace detail {

inline const std::vector<std::string>& caption_templates() {
    static const std::vector<std::string> t = {
        "What action is performed in the segment <seg>?",
        "Describe the single action taking place <seg>.",
        "Which action occurs <seg>?",
    };
    return t;
}

inline const std::vector<std::string>& first_templates() {
    static const std::vector<std::string> t = {
        "When does <action> happen for the first time?",
        "Locate the first occurrence of <action>.",
        "At what time does <action> first appear?",
    };
    return t;
}

inline const std::vector<std::string>& last_templates() {
    static const std::vector<std::string> t = {
        "When does <action> happen for the last time?",
        "Locate the final occurrence of <action>.",
        "At what time does <action> last appear?",
    };
    return t;
}

inline const std::vector<std::string>& after_templates() {
    static const std::vector<std::string> t = {
        "What happens right after <action>?",
        "Which action follows <action>?",
        "After <action>, what occurs next?",
    };
    return t;
}

inline const std::vector<std::string>& before_templates() {
    static const std::vector<std::string> t = {
        "What happens right before <action>?",
        "Which action precedes <action>?",
        "Before <action>, what occurs?",
    };
    return t;
}

inline const std::vector<std::string>& count_templates() {
    static const std::vector<std::string> t = {
        "How many times does <action> occur in the video?",
        "Count the occurrences of <action>.",
        "How often is <action> performed in this video?",
    };
    return t;
}

inline std::string fill(std::string text, std::string_view key, std::string_view value) {
    const std::size_t pos = text.find(key);
    if (pos != std::string::npos) text.replace(pos, key.size(), value);
    return text;
}

inline std::string pick(const std::vector<std::string>& bank, const rng::Stream& stream,
                        std::uint64_t counter) {
    return bank[stream.below(counter, bank.size())];
}

} // namespace detail

// Deterministic instruction-following records for one annotated video:
// per clip a captioning question; per distinct action a first- and a
// last-occurrence grounding question; per adjacent clip pair a before- and
// an after- question; per distinct action a count question; plus one
// record chaining a caption, a grounding, and a follow-up turn.
inline std::vector<QaRecord> gen_tasks(const Annotation& ann, const GroundingProtocol& proto,
                                       std::uint64_t seed,
                                       CaptionerBackend* captioner = nullptr) {
    if (ann.clips.empty()) throw ArgumentError("gen_tasks: annotation has no clips");
    for (const AnnotatedClip& clip : ann.clips) {
        if (clip.actions.empty()) {
            throw ArgumentError("gen_tasks: every clip needs at least one action label");
        }
    }
    MockCaptioner fallback;
    CaptionerBackend& cap = captioner != nullptr ? *captioner : fallback;
    const double duration = ann.duration();
    const rng::Stream stream = rng::Stream(seed).with("gen_tasks").with(ann.video_id);

    const auto caption_of = [&](const AnnotatedClip& clip) {
        return clip.caption.empty() ? cap.caption(clip.segment, clip.actions) : clip.caption;
    };

    // Distinct actions in first-occurrence order, with their clip indices.
    std::vector<std::string> actions;
    std::map<std::string, std::vector<std::size_t>> occurrences;
    for (std::size_t i = 0; i < ann.clips.size(); ++i) {
        for (const std::string& a : ann.clips[i].actions) {
            if (occurrences.find(a) == occurrences.end()) actions.push_back(a);
            occurrences[a].push_back(i);
        }
    }

    std::vector<QaRecord> out;
    const auto base_record = [&](TaskKind task) {
        QaRecord r;
        r.video_id = ann.video_id;
        r.task = task;
        r.duration_s = duration;
        return r;
    };

    std::uint64_t counter = 0;
    for (const AnnotatedClip& clip : ann.clips) {
        QaRecord r = base_record(TaskKind::captioning);
        const std::string seg_text = format_segment(clip.segment, duration, proto);
        r.turns.push_back(QaTurn{
            detail::fill(detail::pick(detail::caption_templates(), stream, counter++), "<seg>",
                         seg_text),
            caption_of(clip)});
        r.gt_segments.push_back(clip.segment);
        out.push_back(std::move(r));
    }

    for (const std::string& action : actions) {
        const std::vector<std::size_t>& where = occurrences[action];
        {
            QaRecord r = base_record(TaskKind::first_last_grounding);
            const Segment& seg = ann.clips[where.front()].segment;
            r.turns.push_back(QaTurn{
                detail::fill(detail::pick(detail::first_templates(), stream, counter++),
                             "<action>", action),
                format_segment(seg, duration, proto)});
            r.gt_segments.push_back(seg);
            out.push_back(std::move(r));
        }
        {
            QaRecord r = base_record(TaskKind::first_last_grounding);
            const Segment& seg = ann.clips[where.back()].segment;
            r.turns.push_back(QaTurn{
                detail::fill(detail::pick(detail::last_templates(), stream, counter++),
                             "<action>", action),
                format_segment(seg, duration, proto)});
            r.gt_segments.push_back(seg);
            out.push_back(std::move(r));
        }
    }

    for (std::size_t i = 0; i + 1 < ann.clips.size(); ++i) {
        const std::string& cur_action = ann.clips[i].actions.front();
        const std::string& next_action = ann.clips[i + 1].actions.front();
        {
            QaRecord r = base_record(TaskKind::sequence_reasoning);
            r.turns.push_back(QaTurn{
                detail::fill(detail::pick(detail::after_templates(), stream, counter++),
                             "<action>", cur_action),
                caption_of(ann.clips[i + 1])});
            r.gt_segments.push_back(ann.clips[i + 1].segment);
            out.push_back(std::move(r));
        }
        {
            QaRecord r = base_record(TaskKind::sequence_reasoning);
            r.turns.push_back(QaTurn{
                detail::fill(detail::pick(detail::before_templates(), stream, counter++),
                             "<action>", next_action),
                caption_of(ann.clips[i])});
            r.gt_segments.push_back(ann.clips[i].segment);
            out.push_back(std::move(r));
        }
    }

    for (const std::string& action : actions) {
        QaRecord r = base_record(TaskKind::count_of_times);
        const std::vector<std::size_t>& where = occurrences[action];
        r.turns.push_back(QaTurn{
            detail::fill(detail::pick(detail::count_templates(), stream, counter++), "<action>",
                         action),
            std::to_string(where.size())});
        for (std::size_t idx : where) r.gt_segments.push_back(ann.clips[idx].segment);
        out.push_back(std::move(r));
    }

    {
        QaRecord r = base_record(TaskKind::multi_turn);
        const std::size_t pick_clip = stream.below(counter++, ann.clips.size());
        const AnnotatedClip& clip = ann.clips[pick_clip];
        const std::string& action = clip.actions.front();
        const std::string seg_text = format_segment(clip.segment, duration, proto);
        r.turns.push_back(QaTurn{
            detail::fill(detail::pick(detail::caption_templates(), stream, counter++), "<seg>",
                         seg_text),
            caption_of(clip)});
        const std::size_t first_idx = occurrences[action].front();
        r.turns.push_back(QaTurn{
            detail::fill(detail::pick(detail::first_templates(), stream, counter++), "<action>",
                         action),
            format_segment(ann.clips[first_idx].segment, duration, proto)});
        if (pick_clip + 1 < ann.clips.size()) {
            r.turns.push_back(QaTurn{
                detail::fill(detail::pick(detail::after_templates(), stream, counter++),
                             "<action>", action),
                caption_of(ann.clips[pick_clip + 1])});
            r.gt_segments = {clip.segment, ann.clips[first_idx].segment,
                             ann.clips[pick_clip + 1].segment};
        } else {
            // Single-clip video: close with a count turn instead of an
            // adjacency question.
            r.turns.push_back(QaTurn{
                detail::fill(detail::pick(detail::count_templates(), stream, counter++),
                             "<action>", action),
                std::to_string(occurrences[action].size())});
            r.gt_segments = {clip.segment, ann.clips[first_idx].segment};
        }
        out.push_back(std::move(r));
    }

    return out;
}

struct CorpusStats {
    std::map<std::string, std::size_t> per_task;
    // captioning records per video = that video's clip count.
    std::map<std::size_t, std::size_t> clip_count_histogram;
    std::size_t total = 0;
};

inline CorpusStats corpus_stats(const std::vector<QaRecord>& records) {
    CorpusStats stats;
    std::map<std::string, std::size_t> clips_per_video;
    for (const QaRecord& r : records) {
        ++stats.per_task[to_string(r.task)];
        ++stats.total;
        if (r.task == TaskKind::captioning) ++clips_per_video[r.video_id];
    }
    for (const auto& [video, clips] : clips_per_video) ++stats.clip_count_histogram[clips];
    return stats;
}

} // namespace mixfreq
