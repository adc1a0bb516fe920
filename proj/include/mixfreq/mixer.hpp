#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "mixfreq/encoding.hpp"
#include "mixfreq/errors.hpp"
#include "mixfreq/matrix.hpp"
#include "mixfreq/rng.hpp"

namespace mixfreq {

// Parameters of the cross-frequency attention mixer: one token transform
// per path, both d -> d.
struct MixerParams {
    FfnParams ffn_low;
    FfnParams ffn_high;
    std::size_t dim = 0;

    MixerParams() = default;

    MixerParams(FfnParams low, FfnParams high)
        : ffn_low(std::move(low)), ffn_high(std::move(high)), dim(ffn_low.dim()) {
        if (ffn_high.dim() != dim) throw ShapeError("mixer FFNs disagree on width");
        if (dim < 1) throw ShapeError("mixer width must be >= 1");
    }

    static MixerParams identity(std::size_t d) {
        return MixerParams(FfnParams::identity(d), FfnParams::identity(d));
    }

    static MixerParams random(std::size_t d, std::uint64_t seed,
                              Activation act = Activation::gelu) {
        const std::uint64_t low_seed = rng::Stream(seed).with("mixer_low").draw_u64(0);
        const std::uint64_t high_seed = rng::Stream(seed).with("mixer_high").draw_u64(0);
        return MixerParams(FfnParams::random(d, low_seed, act),
                           FfnParams::random(d, high_seed, act));
    }
};

namespace detail {

inline void check_mixer_inputs(const TokenMatrix& h_low, const TokenMatrix& h_high,
                               const MixerParams& params) {
    if (h_low.row_count() < 1) throw ShapeError("mixer: empty low-frequency block");
    if (h_high.row_count() < 1) throw ShapeError("mixer: empty high-frequency block");
    if (h_low.dim() != params.dim || h_high.dim() != params.dim) {
        throw ShapeError("mixer: token width mismatch (low " + std::to_string(h_low.dim()) +
                         ", high " + std::to_string(h_high.dim()) + ", params " +
                         std::to_string(params.dim) + ")");
    }
    if (h_high.per_token_timestamp_s.size() != h_high.row_count()) {
        throw ShapeError("mixer: high block timestamp count != rows");
    }
}

// Pre-activation z = m*W + bias and value act(z), both needed by the JVP.
struct FfnTrace {
    Matrix pre;    // z
    Matrix value;  // act(z)
};

inline FfnTrace ffn_trace(const Matrix& m, const FfnParams& p) {
    FfnTrace t;
    t.pre = matmul(m, p.weight);
    for (std::size_t i = 0; i < t.pre.rows(); ++i)
        for (std::size_t j = 0; j < t.pre.cols(); ++j) t.pre.at(i, j) += p.bias[j];
    t.value = t.pre;
    for (double& v : t.value.data()) v = activation_value(p.activation, v);
    return t;
}

// Tangent of ffn_trace.value at primal m along dm: act'(z) .* (dm * W).
inline Matrix ffn_tangent(const FfnTrace& t, const FfnParams& p, const Matrix& dm) {
    Matrix out = matmul(dm, p.weight);
    for (std::size_t k = 0; k < out.size(); ++k)
        out.data()[k] *= activation_derivative(p.activation, t.pre.data()[k]);
    return out;
}

// a (n x m) * b (m x d) with each output element accumulated in value-sorted
// order, so permuting the m addend pairs cannot change the result bits.
inline Matrix contract_sorted(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.rows()) throw ShapeError("contract_sorted: inner dims differ");
    Matrix out(a.rows(), b.cols());
    std::vector<double> buf(a.cols());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        for (std::size_t k = 0; k < b.cols(); ++k) {
            for (std::size_t j = 0; j < a.cols(); ++j) buf[j] = a.at(i, j) * b.at(j, k);
            out.at(i, k) = sorted_sum(buf);
        }
    }
    return out;
}

} // namespace detail

// Attention of transformed high-frequency tokens over transformed
// low-frequency tokens: row_softmax(H' L'^T, sqrt(d)). Shape n_H x n_L.
inline Matrix mixer_attention_weights(const TokenMatrix& h_low, const TokenMatrix& h_high,
                                      const MixerParams& params) {
    detail::check_mixer_inputs(h_low, h_high, params);
    const Matrix low_t = ffn_apply(h_low.tokens, params.ffn_low);
    const Matrix high_t = ffn_apply(h_high.tokens, params.ffn_high);
    const Matrix scores = matmul(high_t, transpose(low_t));
    return row_softmax(scores, std::sqrt(static_cast<double>(params.dim)));
}

// Enriched high-frequency tokens: attention-weighted mixture of transformed
// low-frequency rows. Output rows keep the high-frequency timestamps.
inline TokenMatrix mixer_forward(const TokenMatrix& h_low, const TokenMatrix& h_high,
                                 const MixerParams& params) {
    detail::check_mixer_inputs(h_low, h_high, params);
    const Matrix low_t = ffn_apply(h_low.tokens, params.ffn_low);
    const Matrix high_t = ffn_apply(h_high.tokens, params.ffn_high);
    const Matrix scores = matmul(high_t, transpose(low_t));
    const Matrix weights = row_softmax(scores, std::sqrt(static_cast<double>(params.dim)));

    TokenMatrix out;
    out.tokens = detail::contract_sorted(weights, low_t);
    out.per_token_timestamp_s = h_high.per_token_timestamp_s;
    out.frequency = Frequency::mixed;
    return out;
}

// Directional derivative of mixer_forward at (h_low, h_high) along
// (tangent_low, tangent_high). Product rule through the FFNs, the score
// product, the softmax (row Jacobian diag(a) - a a^T), and the final
// mixture. Closed form so finite differences stay an independent check.
inline Matrix mixer_jvp(const TokenMatrix& h_low, const TokenMatrix& h_high,
                        const MixerParams& params, const Matrix& tangent_low,
                        const Matrix& tangent_high) {
    detail::check_mixer_inputs(h_low, h_high, params);
    if (!tangent_low.same_shape(h_low.tokens)) throw ShapeError("mixer_jvp: low tangent shape");
    if (!tangent_high.same_shape(h_high.tokens)) {
        throw ShapeError("mixer_jvp: high tangent shape");
    }

    const detail::FfnTrace low = detail::ffn_trace(h_low.tokens, params.ffn_low);
    const detail::FfnTrace high = detail::ffn_trace(h_high.tokens, params.ffn_high);
    const Matrix d_low = detail::ffn_tangent(low, params.ffn_low, tangent_low);
    const Matrix d_high = detail::ffn_tangent(high, params.ffn_high, tangent_high);

    const double temperature = std::sqrt(static_cast<double>(params.dim));
    const Matrix scores = matmul(high.value, transpose(low.value));
    const Matrix weights = row_softmax(scores, temperature);

    // dS = (dH' L'^T + H' dL'^T) / sqrt(d)
    Matrix d_scores = add(matmul(d_high, transpose(low.value)),
                          matmul(high.value, transpose(d_low)));
    d_scores = scale(d_scores, 1.0 / temperature);

    // Row i of dA: a_ij (dS_ij - sum_k a_ik dS_ik)
    Matrix d_weights(weights.rows(), weights.cols());
    for (std::size_t i = 0; i < weights.rows(); ++i) {
        double dot = 0.0;
        for (std::size_t k = 0; k < weights.cols(); ++k) dot += weights.at(i, k) * d_scores.at(i, k);
        for (std::size_t j = 0; j < weights.cols(); ++j) {
            d_weights.at(i, j) = weights.at(i, j) * (d_scores.at(i, j) - dot);
        }
    }

    return add(matmul(d_weights, low.value), matmul(weights, d_low));
}

} // namespace mixfreq
