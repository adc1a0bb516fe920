#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <vector>

#include "mixfreq/mixfreq.hpp"

using namespace mixfreq;

TEST_CASE("matrix construction validates shape and finiteness") {
    Matrix m(2, 3);
    REQUIRE(m.rows() == 2);
    REQUIRE(m.cols() == 3);
    REQUIRE(m.size() == 6);
    for (std::size_t k = 0; k < m.size(); ++k) REQUIRE(m.data()[k] == 0.0);

    REQUIRE_THROWS_AS(Matrix(2, 2, {1.0, 2.0, 3.0}), ShapeError);
    REQUIRE_THROWS_AS(Matrix(1, 2, {1.0, std::nan("")}), NumericError);
    REQUIRE_THROWS_AS(Matrix(1, 1, {std::numeric_limits<double>::infinity()}), NumericError);
}

TEST_CASE("matmul identity and scalar cases") {
    const Matrix a = Matrix::random(3, 3, 7);
    const Matrix out = matmul(Matrix::identity(3), a);
    for (std::size_t k = 0; k < a.size(); ++k) REQUIRE(out.data()[k] == a.data()[k]);

    const Matrix s = matmul(Matrix(1, 1, {2.0}), Matrix(1, 1, {3.0}));
    REQUIRE(s.at(0, 0) == 6.0);

    REQUIRE_THROWS_AS(matmul(Matrix(2, 3), Matrix(2, 3)), ShapeError);
}

TEST_CASE("matmul matches brute-force triple loop on random shapes") {
    const Matrix a = Matrix::random(3, 4, 11);
    const Matrix b = Matrix::random(4, 2, 13);
    const Matrix got = matmul(a, b);
    for (std::size_t i = 0; i < 3; ++i) {
        for (std::size_t j = 0; j < 2; ++j) {
            double acc = 0.0;
            for (std::size_t k = 0; k < 4; ++k) acc += a.at(i, k) * b.at(k, j);
            REQUIRE(got.at(i, j) == Catch::Approx(acc).margin(0.0));
        }
    }
}

TEST_CASE("matmul associativity within relative 1e-9") {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const Matrix a = Matrix::random(3, 5, seed * 3 + 1);
        const Matrix b = Matrix::random(5, 4, seed * 3 + 2);
        const Matrix c = Matrix::random(4, 2, seed * 3 + 3);
        const Matrix left = matmul(matmul(a, b), c);
        const Matrix right = matmul(a, matmul(b, c));
        for (std::size_t k = 0; k < left.size(); ++k) {
            const double scale = std::max(1.0, std::fabs(right.data()[k]));
            REQUIRE(std::fabs(left.data()[k] - right.data()[k]) / scale < 1e-9);
        }
    }
}

TEST_CASE("sorted_sum is exactly permutation invariant") {
    std::vector<double> values = {1e16, 1.0, -1e16, 1.0, 3.5, -2.25, 1e-9, -1e-9, 42.0};
    std::vector<double> buf = values;
    const double base = sorted_sum(buf);
    std::sort(values.begin(), values.end());
    do {
        std::vector<double> copy = values;
        REQUIRE(sorted_sum(copy) == base);
    } while (std::next_permutation(values.begin(), values.end()));
}

TEST_CASE("row_softmax analytic rows") {
    SECTION("constant row is uniform") {
        const Matrix m(1, 3, {5.5, 5.5, 5.5});
        const Matrix out = row_softmax(m, 1.0);
        for (std::size_t j = 0; j < 3; ++j) REQUIRE(out.at(0, j) == Catch::Approx(1.0 / 3.0));
    }
    SECTION("[0, ln 2] at scale 1 gives thirds") {
        const Matrix m(1, 2, {0.0, std::log(2.0)});
        const Matrix out = row_softmax(m, 1.0);
        REQUIRE(out.at(0, 0) == Catch::Approx(1.0 / 3.0).epsilon(1e-12));
        REQUIRE(out.at(0, 1) == Catch::Approx(2.0 / 3.0).epsilon(1e-12));
    }
    SECTION("extreme logits stay finite") {
        const Matrix m(1, 2, {1000.0, 0.0});
        const Matrix out = row_softmax(m, 1.0);
        REQUIRE(out.at(0, 0) == Catch::Approx(1.0));
        REQUIRE(out.at(0, 1) == Catch::Approx(0.0).margin(1e-300));
        out.ensure_finite();
    }
    SECTION("errors") {
        REQUIRE_THROWS_AS(row_softmax(Matrix(0, 0), 1.0), ShapeError);
        REQUIRE_THROWS_AS(row_softmax(Matrix(1, 1, {1.0}), 0.0), ArgumentError);
        REQUIRE_THROWS_AS(row_softmax(Matrix(1, 1, {1.0}), -2.0), ArgumentError);
    }
}

TEST_CASE("row_softmax rows sum to one and shift invariance holds") {
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
        const Matrix m = Matrix::random(4, 6, seed, -30.0, 30.0);
        const Matrix out = row_softmax(m, std::sqrt(6.0));
        Matrix shifted = m;
        for (std::size_t i = 0; i < m.rows(); ++i) {
            for (std::size_t j = 0; j < m.cols(); ++j) shifted.at(i, j) += 17.25;
        }
        const Matrix out2 = row_softmax(shifted, std::sqrt(6.0));
        for (std::size_t i = 0; i < m.rows(); ++i) {
            double total = 0.0;
            for (std::size_t j = 0; j < m.cols(); ++j) {
                total += out.at(i, j);
                REQUIRE(out.at(i, j) >= 0.0);
                REQUIRE(std::fabs(out.at(i, j) - out2.at(i, j)) <= 1e-12);
            }
            REQUIRE(std::fabs(total - 1.0) <= 1e-12);
        }
    }
}

TEST_CASE("gelu activation values and derivative") {
    REQUIRE(activation_value(Activation::gelu, 0.0) == 0.0);
    // gelu(1) = 1 * Phi(1), the standard normal CDF at 1.
    const double phi1 = 0.5 * std::erfc(-1.0 / std::sqrt(2.0));
    REQUIRE(activation_value(Activation::gelu, 1.0) == Catch::Approx(phi1).epsilon(1e-15));
    REQUIRE(activation_value(Activation::identity, -3.25) == -3.25);
    REQUIRE(activation_derivative(Activation::identity, 9.0) == 1.0);

    for (double x : {-2.0, -0.5, 0.0, 0.3, 1.7}) {
        const double h = 1e-6;
        const double fd = (activation_value(Activation::gelu, x + h) -
                           activation_value(Activation::gelu, x - h)) /
                          (2.0 * h);
        REQUIRE(activation_derivative(Activation::gelu, x) == Catch::Approx(fd).margin(1e-8));
    }
}

TEST_CASE("ffn_apply identity and zero-weight cases") {
    const Matrix x = Matrix::random(3, 4, 23);
    const Matrix same = ffn_apply(x, FfnParams::identity(4));
    REQUIRE(same == x);

    FfnParams p = FfnParams::identity(2);
    p.weight = Matrix(2, 2);
    p.bias = {1.5, -2.0};
    const Matrix out = ffn_apply(Matrix::random(3, 2, 29), p);
    for (std::size_t i = 0; i < 3; ++i) {
        REQUIRE(out.at(i, 0) == 1.5);
        REQUIRE(out.at(i, 1) == -2.0);
    }

    REQUIRE_THROWS_AS(ffn_apply(Matrix(2, 3), FfnParams::identity(4)), ShapeError);
}

TEST_CASE("ffn_apply matches scalar hand expansion through gelu") {
    const Matrix x = Matrix::random(2, 2, 31);
    const FfnParams p = FfnParams::random(2, 37, Activation::gelu);
    const Matrix got = ffn_apply(x, p);
    for (std::size_t i = 0; i < 2; ++i) {
        for (std::size_t j = 0; j < 2; ++j) {
            const double pre =
                x.at(i, 0) * p.weight.at(0, j) + x.at(i, 1) * p.weight.at(1, j) + p.bias[j];
            REQUIRE(got.at(i, j) ==
                    Catch::Approx(activation_value(Activation::gelu, pre)).margin(1e-15));
        }
    }
}

TEST_CASE("finite_diff_jvp analytic cases") {
    SECTION("identity map returns the tangent") {
        const Matrix x = Matrix::random(2, 3, 41);
        const Matrix v = Matrix::random(2, 3, 43);
        const Matrix out = finite_diff_jvp([](const Matrix& m) { return m; }, x, v, 1e-5);
        for (std::size_t k = 0; k < v.size(); ++k) {
            REQUIRE(out.data()[k] == Catch::Approx(v.data()[k]).margin(1e-10));
        }
    }
    SECTION("elementwise square has derivative 2x*v") {
        const Matrix x(1, 1, {3.0});
        const Matrix v(1, 1, {1.0});
        const auto square = [](const Matrix& m) {
            Matrix out = m;
            for (std::size_t k = 0; k < out.size(); ++k) out.data()[k] *= out.data()[k];
            return out;
        };
        const Matrix out = finite_diff_jvp(square, x, v, 1e-5);
        REQUIRE(out.at(0, 0) == Catch::Approx(6.0).margin(1e-9));
    }
    SECTION("h must be positive") {
        REQUIRE_THROWS_AS(
            finite_diff_jvp([](const Matrix& m) { return m; }, Matrix(1, 1), Matrix(1, 1), 0.0),
            ArgumentError);
    }
}

TEST_CASE("matrix text serialization round-trips bit-exactly") {
    const Matrix m = Matrix::random(5, 3, 47, -1e6, 1e6);
    const std::filesystem::path path =
        std::filesystem::temp_directory_path() / "mixfreq_matrix_roundtrip.mat";
    write_matrix(path, m);
    const Matrix back = read_matrix(path);
    REQUIRE(back.rows() == m.rows());
    REQUIRE(back.cols() == m.cols());
    for (std::size_t k = 0; k < m.size(); ++k) REQUIRE(back.data()[k] == m.data()[k]);
    std::filesystem::remove(path);

    const Matrix again = matrix_from_text(matrix_to_text(m));
    for (std::size_t k = 0; k < m.size(); ++k) REQUIRE(again.data()[k] == m.data()[k]);
}

TEST_CASE("deterministic rng streams are stable and decorrelated") {
    rng::Stream a = rng::Stream(5).with("path").with(std::uint64_t{3});
    rng::Stream b = rng::Stream(5).with("path").with(std::uint64_t{3});
    rng::Stream c = rng::Stream(5).with("path").with(std::uint64_t{4});
    REQUIRE(a.draw_u64(0) == b.draw_u64(0));
    REQUIRE(a.draw_u64(0) != c.draw_u64(0));
    REQUIRE(a.draw_u64(0) != a.draw_u64(1));

    for (std::uint64_t i = 0; i < 1000; ++i) {
        const double u = a.unit(i);
        REQUIRE(u >= 0.0);
        REQUIRE(u < 1.0);
        const double s = a.symmetric(i);
        REQUIRE(s >= -1.0);
        REQUIRE(s < 1.0);
        REQUIRE(a.below(i, 17) < 17);
    }
}
