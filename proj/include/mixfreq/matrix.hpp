#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <istream>
#include <limits>
#include <numbers>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "mixfreq/errors.hpp"
#include "mixfreq/rng.hpp"

namespace mixfreq {

// Dense row-major matrix of 64-bit reals. Values are immutable by
// convention once an operation has returned them; operations never alias
// their inputs.
class Matrix {
  public:
    Matrix() = default;

    Matrix(std::size_t rows, std::size_t cols)
        : rows_(rows), cols_(cols), data_(rows * cols, 0.0) {}

    // Validates the length and finiteness invariants.
    Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
        : rows_(rows), cols_(cols), data_(std::move(data)) {
        if (data_.size() != rows_ * cols_) {
            throw ShapeError("matrix data length " + std::to_string(data_.size()) +
                             " != rows*cols " + std::to_string(rows_ * cols_));
        }
        ensure_finite();
    }

    Matrix(std::initializer_list<std::initializer_list<double>> rows) {
        rows_ = rows.size();
        cols_ = rows_ == 0 ? 0 : rows.begin()->size();
        data_.reserve(rows_ * cols_);
        for (const auto& r : rows) {
            if (r.size() != cols_) throw ShapeError("ragged initializer for matrix");
            data_.insert(data_.end(), r.begin(), r.end());
        }
        ensure_finite();
    }

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    double& at(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    double at(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

    const std::vector<double>& data() const { return data_; }
    std::vector<double>& data() { return data_; }

    bool same_shape(const Matrix& other) const {
        return rows_ == other.rows_ && cols_ == other.cols_;
    }

    bool operator==(const Matrix& other) const {
        return rows_ == other.rows_ && cols_ == other.cols_ && data_ == other.data_;
    }

    void ensure_finite() const {
        for (double v : data_) {
            if (!std::isfinite(v)) throw NumericError("matrix contains a non-finite entry");
        }
    }

    static Matrix identity(std::size_t n) {
        Matrix m(n, n);
        for (std::size_t i = 0; i < n; ++i) m.at(i, i) = 1.0;
        return m;
    }

    static Matrix zeros(std::size_t rows, std::size_t cols) { return Matrix(rows, cols); }

    static Matrix constant(std::size_t rows, std::size_t cols, double value) {
        Matrix m(rows, cols);
        std::fill(m.data_.begin(), m.data_.end(), value);
        return m;
    }

    // Deterministic entries in [lo, hi) keyed by (seed, entry index).
    static Matrix random(std::size_t rows, std::size_t cols, std::uint64_t seed,
                         double lo = -1.0, double hi = 1.0) {
        Matrix m(rows, cols);
        rng::Stream s = rng::Stream(seed).with("matrix");
        for (std::size_t k = 0; k < m.size(); ++k) m.data_[k] = s.uniform(k, lo, hi);
        return m;
    }

  private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

// Sums a scratch buffer in value-sorted order. The result depends only on
// the multiset of addends, so reductions over an unordered key set cannot
// change bit-for-bit when the keys are permuted.
inline double sorted_sum(std::vector<double>& addends) {
    std::sort(addends.begin(), addends.end(), [](double a, double b) {
        if (a < b) return true;
        if (b < a) return false;
        return std::signbit(a) && !std::signbit(b);
    });
    double acc = 0.0;
    for (double v : addends) acc += v;
    return acc;
}

inline Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.rows()) {
        throw ShapeError("matmul: inner dimensions " + std::to_string(a.cols()) + " and " +
                         std::to_string(b.rows()) + " differ");
    }
    Matrix out(a.rows(), b.cols());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        for (std::size_t k = 0; k < a.cols(); ++k) {
            const double aik = a.at(i, k);
            for (std::size_t j = 0; j < b.cols(); ++j) {
                out.at(i, j) += aik * b.at(k, j);
            }
        }
    }
    return out;
}

inline Matrix transpose(const Matrix& m) {
    Matrix out(m.cols(), m.rows());
    for (std::size_t i = 0; i < m.rows(); ++i)
        for (std::size_t j = 0; j < m.cols(); ++j) out.at(j, i) = m.at(i, j);
    return out;
}

inline Matrix add(const Matrix& a, const Matrix& b) {
    if (!a.same_shape(b)) throw ShapeError("add: shape mismatch");
    Matrix out = a;
    for (std::size_t k = 0; k < out.size(); ++k) out.data()[k] += b.data()[k];
    return out;
}

inline Matrix subtract(const Matrix& a, const Matrix& b) {
    if (!a.same_shape(b)) throw ShapeError("subtract: shape mismatch");
    Matrix out = a;
    for (std::size_t k = 0; k < out.size(); ++k) out.data()[k] -= b.data()[k];
    return out;
}

inline Matrix scale(const Matrix& m, double factor) {
    Matrix out = m;
    for (double& v : out.data()) v *= factor;
    return out;
}

inline Matrix hadamard(const Matrix& a, const Matrix& b) {
    if (!a.same_shape(b)) throw ShapeError("hadamard: shape mismatch");
    Matrix out = a;
    for (std::size_t k = 0; k < out.size(); ++k) out.data()[k] *= b.data()[k];
    return out;
}

// Row-wise softmax of m with entries divided by `scale`, stabilized by
// subtracting the row maximum before exponentiation. The normalizing sum
// runs in value-sorted order (see sorted_sum) so column permutations of a
// row change nothing but the column order of the result.
inline Matrix row_softmax(const Matrix& m, double scale) {
    if (m.empty()) throw ShapeError("row_softmax: empty matrix");
    if (!(scale > 0.0)) throw ArgumentError("row_softmax: scale must be positive");
    Matrix out(m.rows(), m.cols());
    std::vector<double> buf(m.cols());
    for (std::size_t i = 0; i < m.rows(); ++i) {
        double mx = -std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < m.cols(); ++j) mx = std::max(mx, m.at(i, j) / scale);
        for (std::size_t j = 0; j < m.cols(); ++j) {
            buf[j] = std::exp(m.at(i, j) / scale - mx);
            out.at(i, j) = buf[j];
        }
        const double denom = sorted_sum(buf);
        for (std::size_t j = 0; j < m.cols(); ++j) out.at(i, j) /= denom;
    }
    return out;
}

enum class Activation { identity, gelu };

inline double activation_value(Activation act, double x) {
    switch (act) {
        case Activation::identity: return x;
        case Activation::gelu: return 0.5 * x * (1.0 + std::erf(x / std::sqrt(2.0)));
    }
    return x;
}

inline double activation_derivative(Activation act, double x) {
    switch (act) {
        case Activation::identity: return 1.0;
        case Activation::gelu: {
            const double cdf = 0.5 * (1.0 + std::erf(x / std::sqrt(2.0)));
            const double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
            return cdf + x * pdf;
        }
    }
    return 1.0;
}

// Single affine layer d -> d with an optional GELU, the smallest structure
// behind the token transform applied to each frequency path.
struct FfnParams {
    Matrix weight;             // d x d
    std::vector<double> bias;  // length d
    Activation activation = Activation::identity;

    FfnParams() = default;

    FfnParams(Matrix w, std::vector<double> b, Activation act)
        : weight(std::move(w)), bias(std::move(b)), activation(act) {
        if (weight.rows() != weight.cols()) throw ShapeError("ffn weight must be square");
        if (bias.size() != weight.cols()) throw ShapeError("ffn bias length != weight cols");
    }

    std::size_t dim() const { return weight.rows(); }

    static FfnParams identity(std::size_t d) {
        return FfnParams(Matrix::identity(d), std::vector<double>(d, 0.0),
                         Activation::identity);
    }

    static FfnParams random(std::size_t d, std::uint64_t seed,
                            Activation act = Activation::gelu) {
        const double lim = 1.0 / std::sqrt(static_cast<double>(d));
        Matrix w = Matrix::random(d, d, seed, -lim, lim);
        rng::Stream s = rng::Stream(seed).with("ffn_bias");
        std::vector<double> b(d);
        for (std::size_t k = 0; k < d; ++k) b[k] = s.uniform(k, -0.1, 0.1);
        return FfnParams(std::move(w), std::move(b), act);
    }
};

// activation(m * weight + bias broadcast per row)
inline Matrix ffn_apply(const Matrix& m, const FfnParams& p) {
    if (m.cols() != p.weight.rows()) {
        throw ShapeError("ffn_apply: input width " + std::to_string(m.cols()) +
                         " != weight rows " + std::to_string(p.weight.rows()));
    }
    Matrix out = matmul(m, p.weight);
    for (std::size_t i = 0; i < out.rows(); ++i)
        for (std::size_t j = 0; j < out.cols(); ++j)
            out.at(i, j) = activation_value(p.activation, out.at(i, j) + p.bias[j]);
    return out;
}

// Central-difference directional derivative (f(x+hv) - f(x-hv)) / (2h).
// Kept free of any analytic-derivative code so it stays an independent
// check for the closed-form Jacobian-vector products elsewhere.
inline Matrix finite_diff_jvp(const std::function<Matrix(const Matrix&)>& f, const Matrix& x,
                              const Matrix& v, double h) {
    if (!x.same_shape(v)) throw ShapeError("finite_diff_jvp: tangent shape mismatch");
    if (!(h > 0.0)) throw ArgumentError("finite_diff_jvp: step must be positive");
    Matrix plus = x;
    Matrix minus = x;
    for (std::size_t k = 0; k < x.size(); ++k) {
        plus.data()[k] += h * v.data()[k];
        minus.data()[k] -= h * v.data()[k];
    }
    const Matrix fp = f(plus);
    const Matrix fm = f(minus);
    if (!fp.same_shape(fm)) throw ShapeError("finite_diff_jvp: f output shape varies");
    Matrix out = subtract(fp, fm);
    for (double& e : out.data()) {
        e /= 2.0 * h;
        if (!std::isfinite(e)) throw NumericError("finite_diff_jvp: non-finite intermediate");
    }
    return out;
}

// Text format: first line "rows cols", then row-major whitespace-separated
// decimals. Written with enough digits to round-trip doubles exactly.
inline void write_matrix(std::ostream& os, const Matrix& m) {
    os << m.rows() << ' ' << m.cols() << '\n';
    os << std::setprecision(17);
    for (std::size_t i = 0; i < m.rows(); ++i) {
        for (std::size_t j = 0; j < m.cols(); ++j) {
            if (j) os << ' ';
            os << m.at(i, j);
        }
        os << '\n';
    }
}

inline std::string matrix_to_text(const Matrix& m) {
    std::ostringstream os;
    write_matrix(os, m);
    return os.str();
}

inline Matrix read_matrix(std::istream& is) {
    std::size_t rows = 0, cols = 0;
    if (!(is >> rows >> cols)) throw IoError("matrix text: missing or bad header");
    std::vector<double> data(rows * cols);
    for (std::size_t k = 0; k < data.size(); ++k) {
        if (!(is >> data[k])) {
            throw IoError("matrix text: expected " + std::to_string(rows * cols) +
                          " values, got " + std::to_string(k));
        }
    }
    return Matrix(rows, cols, std::move(data));
}

inline Matrix matrix_from_text(const std::string& text) {
    std::istringstream is(text);
    return read_matrix(is);
}

inline void write_matrix(const std::filesystem::path& path, const Matrix& m) {
    std::ofstream os(path);
    if (!os) throw IoError("cannot write matrix to " + path.string());
    write_matrix(os, m);
    if (!os) throw IoError("matrix write failed: " + path.string());
}

inline Matrix read_matrix(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot open matrix file " + path.string());
    return read_matrix(is);
}

} // namespace mixfreq
