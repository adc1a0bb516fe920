#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "mixfreq/errors.hpp"

namespace mixfreq {

// Frame-time coordinate system of one video. Seconds are the single
// coordinate system; frame i sits at timestamp i / fps.
struct VideoTimeline {
    std::size_t frame_count = 0;
    double fps = 0.0;

    VideoTimeline() = default;

    VideoTimeline(std::size_t frames, double frames_per_second)
        : frame_count(frames), fps(frames_per_second) {
        if (frame_count < 1) throw ArgumentError("timeline needs at least one frame");
        if (!(fps > 0.0)) throw ArgumentError("timeline fps must be positive");
    }

    double duration_s() const { return static_cast<double>(frame_count) / fps; }

    double timestamp_of(std::size_t frame_index) const {
        return static_cast<double>(frame_index) / fps;
    }
};

// Half-open time interval [start_s, end_s) in seconds.
struct Segment {
    double start_s = 0.0;
    double end_s = 0.0;

    Segment() = default;

    Segment(double start, double end) : start_s(start), end_s(end) {
        if (start_s < 0.0) throw ArgumentError("segment start must be >= 0");
        if (!(start_s < end_s)) throw ArgumentError("segment start must precede end");
    }

    double length_s() const { return end_s - start_s; }

    bool contains_time(double t_s) const { return t_s >= start_s && t_s < end_s; }

    bool operator==(const Segment& other) const {
        return start_s == other.start_s && end_s == other.end_s;
    }
};

inline void require_within(const Segment& seg, const VideoTimeline& timeline) {
    if (seg.end_s > timeline.duration_s() + 1e-12) {
        throw ArgumentError("segment [" + std::to_string(seg.start_s) + ", " +
                            std::to_string(seg.end_s) + ") exceeds video duration " +
                            std::to_string(timeline.duration_s()));
    }
}

enum class Frequency { low, high, mixed };

inline const char* to_string(Frequency f) {
    switch (f) {
        case Frequency::low: return "low";
        case Frequency::high: return "high";
        case Frequency::mixed: return "mixed";
    }
    return "?";
}

// Ordered frame selection with matching timestamps.
struct SamplingPlan {
    std::vector<std::size_t> frame_indices;  // strictly increasing
    std::vector<double> timestamps_s;        // frame_indices[i] / fps
    Frequency frequency = Frequency::low;

    std::size_t frame_count() const { return frame_indices.size(); }
};

struct SamplingConfig {
    std::size_t low_interval_frames = 1;   // stride between low-frequency frames
    std::size_t high_target_count = 20;    // budget of frames per grounded segment

    SamplingConfig() = default;

    SamplingConfig(std::size_t low_interval, std::size_t high_target)
        : low_interval_frames(low_interval), high_target_count(high_target) {
        if (low_interval_frames < 1) throw ArgumentError("low interval must be >= 1");
        if (high_target_count < 1) throw ArgumentError("high target count must be >= 1");
    }
};

// Sparse whole-video sampling: every low_interval_frames-th frame.
inline SamplingPlan sample_low(const VideoTimeline& timeline, const SamplingConfig& cfg) {
    SamplingPlan plan;
    plan.frequency = Frequency::low;
    for (std::size_t i = 0; i < timeline.frame_count; i += cfg.low_interval_frames) {
        plan.frame_indices.push_back(i);
        plan.timestamps_s.push_back(timeline.timestamp_of(i));
    }
    return plan;
}

namespace detail {

// Inclusive frame-index range [first, last] whose timestamps lie in
// [start_s, end_s); empty() when the segment straddles no frame.
struct FrameRange {
    std::size_t first = 0;
    std::size_t last = 0;
    bool empty_range = true;

    bool empty() const { return empty_range; }
    std::size_t count() const { return empty_range ? 0 : last - first + 1; }
};

inline FrameRange frames_in_segment(const Segment& seg, const VideoTimeline& timeline) {
    // Nudge-free fix-up loops keep the membership test i/fps in [start, end)
    // exact even when start*fps rounds awkwardly.
    double approx = seg.start_s * timeline.fps;
    std::size_t first = approx <= 0.0 ? 0 : static_cast<std::size_t>(std::ceil(approx));
    while (first > 0 && timeline.timestamp_of(first - 1) >= seg.start_s) --first;
    while (first < timeline.frame_count && timeline.timestamp_of(first) < seg.start_s) ++first;

    FrameRange r;
    if (first >= timeline.frame_count) return r;
    if (timeline.timestamp_of(first) >= seg.end_s) return r;

    double approx_end = seg.end_s * timeline.fps;
    std::size_t last = static_cast<std::size_t>(std::max(0.0, std::floor(approx_end)));
    last = std::min(last, timeline.frame_count - 1);
    while (last + 1 < timeline.frame_count && timeline.timestamp_of(last + 1) < seg.end_s) ++last;
    while (last > first && timeline.timestamp_of(last) >= seg.end_s) --last;

    r.first = first;
    r.last = last;
    r.empty_range = false;
    return r;
}

} // namespace detail

// Number of frames whose timestamp lies in [start_s, end_s).
inline std::size_t frames_in(const Segment& seg, const VideoTimeline& timeline) {
    require_within(seg, timeline);
    return detail::frames_in_segment(seg, timeline).count();
}

// Dense-sampling stride for one grounded segment: ceil(|tau|_frames / N_H)
// clamped to at least 1. The ceiling keeps the per-segment frame count
// within the high_target_count budget.
inline std::size_t high_interval(const Segment& seg, const VideoTimeline& timeline,
                                 const SamplingConfig& cfg) {
    const std::size_t n = frames_in(seg, timeline);
    if (n == 0) {
        throw DegenerateSegmentError("segment [" + std::to_string(seg.start_s) + ", " +
                                     std::to_string(seg.end_s) + ") contains no frames");
    }
    const std::size_t interval = (n + cfg.high_target_count - 1) / cfg.high_target_count;
    return std::max<std::size_t>(interval, 1);
}

// Dense sampling over the grounded segments: per segment, frames at stride
// high_interval starting from the first frame inside it; segments are
// merged into one plan by sorted union. Segments that contain no frames are
// skipped; if none contains a frame the plan would be empty and that is an
// error.
inline SamplingPlan sample_high(const VideoTimeline& timeline,
                                const std::vector<Segment>& segments,
                                const SamplingConfig& cfg) {
    std::vector<std::size_t> indices;
    for (const Segment& seg : segments) {
        require_within(seg, timeline);
        const auto range = detail::frames_in_segment(seg, timeline);
        if (range.empty()) continue;
        const std::size_t n = range.count();
        const std::size_t stride =
            std::max<std::size_t>((n + cfg.high_target_count - 1) / cfg.high_target_count, 1);
        for (std::size_t i = range.first; i <= range.last; i += stride) indices.push_back(i);
    }
    if (indices.empty()) {
        throw DegenerateSegmentError("no segment contains a frame; nothing to sample");
    }
    std::sort(indices.begin(), indices.end());
    indices.erase(std::unique(indices.begin(), indices.end()), indices.end());

    SamplingPlan plan;
    plan.frequency = Frequency::high;
    plan.frame_indices = std::move(indices);
    plan.timestamps_s.reserve(plan.frame_indices.size());
    for (std::size_t i : plan.frame_indices) plan.timestamps_s.push_back(timeline.timestamp_of(i));
    return plan;
}

} // namespace mixfreq
