#pragma once

#include <cmath>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "mixfreq/errors.hpp"
#include "mixfreq/matrix.hpp"
#include "mixfreq/rng.hpp"
#include "mixfreq/sampling.hpp"

namespace mixfreq {

// Raw patch tokens (p x c) of a single frame, before adaptation.
struct FrameFeature {
    std::string video_id;
    std::size_t frame_index = 0;
    Matrix tokens;
};

// A block of visual (or mixed) tokens with one timestamp per row.
struct TokenMatrix {
    Matrix tokens;                           // n x d
    std::vector<double> per_token_timestamp_s;  // length n, non-decreasing
    Frequency frequency = Frequency::low;

    std::size_t row_count() const { return tokens.rows(); }
    std::size_t dim() const { return tokens.cols(); }
};

// Learned-embedding stand-in: one row per discretized relative position.
struct TemporalTokenTable {
    std::size_t bins = 0;
    std::size_t dim = 0;
    Matrix table;  // bins x dim

    TemporalTokenTable() = default;

    TemporalTokenTable(std::size_t n_bins, Matrix values)
        : bins(n_bins), dim(values.cols()), table(std::move(values)) {
        if (bins < 1) throw ArgumentError("temporal table needs at least one bin");
        if (table.rows() != bins) throw ShapeError("temporal table rows != bins");
        table.ensure_finite();
    }

    static TemporalTokenTable zeros(std::size_t n_bins, std::size_t dim) {
        return TemporalTokenTable(n_bins, Matrix::zeros(n_bins, dim));
    }

    static TemporalTokenTable random(std::size_t n_bins, std::size_t dim, std::uint64_t seed) {
        return TemporalTokenTable(n_bins, Matrix::random(n_bins, dim, seed));
    }

    const double* row(std::size_t bin) const { return table.data().data() + bin * dim; }
};

// Frame-feature source. Implementations must be deterministic: the same
// (video_id, frame_index) always yields an identical feature, and encode
// must be safe to call concurrently.
class VisualBackend {
  public:
    virtual ~VisualBackend() = default;

    virtual FrameFeature encode(const std::string& video_id, std::size_t frame_index) const = 0;

    // Raw patch-token count p and channel width c of every feature.
    virtual std::size_t patch_count() const = 0;
    virtual std::size_t feature_dim() const = 0;
};

// Deterministic pseudo-random features from a counter-based generator keyed
// by (seed, video_id, frame_index); entries uniform in [-1, 1].
class MockEncoder final : public VisualBackend {
  public:
    MockEncoder(std::uint64_t seed, std::size_t patches, std::size_t channels)
        : seed_(seed), patches_(patches), channels_(channels) {
        if (patches_ < 1 || channels_ < 1) throw ArgumentError("mock encoder dims must be >= 1");
    }

    FrameFeature encode(const std::string& video_id, std::size_t frame_index) const override {
        rng::Stream s = rng::Stream(seed_).with("frame").with(video_id).with(frame_index);
        Matrix m(patches_, channels_);
        for (std::size_t k = 0; k < m.size(); ++k) m.data()[k] = s.symmetric(k);
        return FrameFeature{video_id, frame_index, std::move(m)};
    }

    std::size_t patch_count() const override { return patches_; }
    std::size_t feature_dim() const override { return channels_; }

  private:
    std::uint64_t seed_;
    std::size_t patches_;
    std::size_t channels_;
};

// Reads per-frame features produced offline from
// "<root>/<video_id>/<frame_index>.mat" in the matrix text format.
class FileVisualBackend final : public VisualBackend {
  public:
    FileVisualBackend(std::filesystem::path root, std::size_t patches, std::size_t channels)
        : root_(std::move(root)), patches_(patches), channels_(channels) {}

    FrameFeature encode(const std::string& video_id, std::size_t frame_index) const override {
        const auto path = root_ / video_id / (std::to_string(frame_index) + ".mat");
        std::ifstream in(path);
        if (!in) throw IoError("feature file not found: " + path.string());
        Matrix m = read_matrix(in);
        if (m.rows() != patches_ || m.cols() != channels_) {
            throw ShapeError("feature file " + path.string() + " has shape " +
                             std::to_string(m.rows()) + "x" + std::to_string(m.cols()) +
                             ", expected " + std::to_string(patches_) + "x" +
                             std::to_string(channels_));
        }
        return FrameFeature{video_id, frame_index, std::move(m)};
    }

    std::size_t patch_count() const override { return patches_; }
    std::size_t feature_dim() const override { return channels_; }

  private:
    std::filesystem::path root_;
    std::size_t patches_;
    std::size_t channels_;
};

// Contiguous-block average pooling: p raw tokens condensed to out_tokens
// rows, each the mean of p / out_tokens consecutive inputs.
inline Matrix adapt(const FrameFeature& feature, std::size_t out_tokens) {
    const std::size_t p = feature.tokens.rows();
    const std::size_t c = feature.tokens.cols();
    if (out_tokens < 1) throw ArgumentError("adapt: out_tokens must be >= 1");
    if (p % out_tokens != 0) {
        throw ShapeError("adapt: patch count " + std::to_string(p) +
                         " not divisible by out_tokens " + std::to_string(out_tokens));
    }
    const std::size_t block = p / out_tokens;
    Matrix out(out_tokens, c);
    for (std::size_t j = 0; j < out_tokens; ++j) {
        for (std::size_t b = 0; b < block; ++b) {
            const std::size_t src = j * block + b;
            for (std::size_t k = 0; k < c; ++k) out.at(j, k) += feature.tokens.at(src, k);
        }
        for (std::size_t k = 0; k < c; ++k) out.at(j, k) /= static_cast<double>(block);
    }
    return out;
}

// Discretized relative position: floor(n_bins * t / duration), clamped to
// n_bins - 1 so t == duration stays inside the table. The epsilon nudge
// keeps bin-aligned timestamps (t computed as k * duration / n_bins) in
// bin k when rounding leaves the quotient a few ulps under the integer.
inline std::size_t temporal_bin(double t_s, double duration_s, std::size_t n_bins) {
    if (n_bins < 1) throw ArgumentError("temporal_bin: n_bins must be >= 1");
    if (duration_s == 0.0) throw DegenerateTimelineError("temporal_bin: zero duration");
    if (t_s < 0.0 || t_s > duration_s) {
        throw ArgumentError("temporal_bin: timestamp " + std::to_string(t_s) +
                            " outside [0, " + std::to_string(duration_s) + "]");
    }
    const double raw = std::floor(static_cast<double>(n_bins) * t_s / duration_s + 1e-9);
    std::size_t bin = static_cast<std::size_t>(raw);
    if (bin >= n_bins) bin = n_bins - 1;
    return bin;
}

// Encode every planned frame, adapt it to out_tokens rows, and add the
// temporal token of its timestamp to each row. Blocks are concatenated in
// plan order, timestamps repeating once per row of a frame.
inline TokenMatrix encode_plan(const SamplingPlan& plan, const VideoTimeline& timeline,
                               const std::string& video_id, const VisualBackend& backend,
                               const TemporalTokenTable& table, std::size_t out_tokens) {
    const std::size_t c = backend.feature_dim();
    if (table.dim != c) {
        throw ShapeError("temporal table dim " + std::to_string(table.dim) +
                         " != feature dim " + std::to_string(c));
    }
    TokenMatrix out;
    out.frequency = plan.frequency;
    out.tokens = Matrix(plan.frame_count() * out_tokens, c);
    out.per_token_timestamp_s.reserve(plan.frame_count() * out_tokens);

    const double duration = timeline.duration_s();
    for (std::size_t f = 0; f < plan.frame_count(); ++f) {
        const FrameFeature feature = backend.encode(video_id, plan.frame_indices[f]);
        const Matrix adapted = adapt(feature, out_tokens);
        const double t = plan.timestamps_s[f];
        const std::size_t bin = temporal_bin(t, duration, table.bins);
        const double* eps = table.row(bin);
        for (std::size_t r = 0; r < out_tokens; ++r) {
            for (std::size_t k = 0; k < c; ++k) {
                out.tokens.at(f * out_tokens + r, k) = adapted.at(r, k) + eps[k];
            }
            out.per_token_timestamp_s.push_back(t);
        }
    }
    return out;
}

} // namespace mixfreq
