#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "qdistill/encode.hpp"
#include "qdistill/rng.hpp"
#include "support/oracles.hpp"

using namespace qdistill;
using namespace qdistill::encode;

namespace {
constexpr double kPi = 3.14159265358979323846;
}

TEST_CASE("amplitude encoding normalizes and validates") {
    const auto s = encode_amplitude(std::vector<double>{3.0, 4.0}, 1);
    CHECK(s.amplitudes[0].real() == doctest::Approx(0.6).epsilon(1e-12));
    CHECK(s.amplitudes[1].real() == doctest::Approx(0.8).epsilon(1e-12));
    CHECK(s.amplitudes[0].imag() == 0.0);

    const auto basis = encode_amplitude(std::vector<double>{1.0, 0.0, 0.0, 0.0}, 2);
    CHECK(std::abs(basis.amplitudes[0] - qsim::Complex(1, 0)) < 1e-12);

    CHECK_THROWS_AS(encode_amplitude(std::vector<double>{0.0, 0.0}, 1),
                    DegenerateInputError);
    CHECK_THROWS_AS(encode_amplitude(std::vector<double>{1.0, 2.0, 3.0}, 2), ShapeError);
}

TEST_CASE("amplitude encoding is scale invariant") {
    Rng rng(42);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<double> x(8);
        for (auto& v : x) v = rng.normal();
        const double c = std::exp(rng.uniform(-3.0, 3.0));
        std::vector<double> cx = x;
        for (auto& v : cx) v *= c;
        const auto a = encode_amplitude(x, 3);
        const auto b = encode_amplitude(cx, 3);
        for (std::size_t i = 0; i < a.dim(); ++i)
            CHECK(std::abs(a.amplitudes[i] - b.amplitudes[i]) < 1e-12);
        CHECK(a.norm() == doctest::Approx(1.0).epsilon(1e-12));
    }
}

TEST_CASE("amplitude backward matches finite differences") {
    Rng rng(4242);
    std::vector<double> x(8);
    for (auto& v : x) v = rng.normal() + 0.3;
    std::vector<double> g(8);
    for (auto& v : g) v = rng.uniform(-1.0, 1.0);

    const auto analytic = encode_amplitude_backward(x, g);
    const auto fd = oracles::finite_difference_gradient(
        [&g](std::span<const double> features) {
            const auto s = encode_amplitude(features, 3);
            double acc = 0.0;
            for (std::size_t i = 0; i < s.dim(); ++i)
                acc += g[i] * s.amplitudes[i].real();
            return acc;
        },
        x, 1e-6);
    for (std::size_t j = 0; j < x.size(); ++j)
        CHECK(analytic[j] == doctest::Approx(fd[j]).epsilon(1e-6));
}

TEST_CASE("angle encoding prepares product states") {
    const auto one = encode_angle(std::vector<double>{kPi}, 1, RotationAxis::Y);
    CHECK(std::abs(one.amplitudes[0]) < 1e-12);
    CHECK(std::abs(one.amplitudes[1] - qsim::Complex(1, 0)) < 1e-12);

    const auto zeros = encode_angle(std::vector<double>(4, 0.0), 4, RotationAxis::Y);
    CHECK(std::abs(zeros.amplitudes[0] - qsim::Complex(1, 0)) < 1e-12);

    const auto half = encode_angle(std::vector<double>{kPi / 2.0}, 1, RotationAxis::Y);
    const auto m = qsim::measure_analytic(half);
    CHECK(m.basis_probs[0] == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(m.basis_probs[1] == doctest::Approx(0.5).epsilon(1e-12));

    CHECK_THROWS_AS(encode_angle(std::vector<double>{1.0, 2.0}, 1, RotationAxis::Y),
                    ShapeError);
}

TEST_CASE("angle encoding probabilities factorize") {
    Rng rng(777);
    const int q = 4;
    for (int trial = 0; trial < 10; ++trial) {
        std::vector<double> angles(q);
        for (auto& a : angles) a = rng.uniform(-kPi, kPi);
        const auto state = encode_angle(angles, q, RotationAxis::Y);
        const auto m = qsim::measure_analytic(state);

        // single-qubit marginals
        std::vector<double> p1(q, 0.0);
        for (std::size_t i = 0; i < m.basis_probs.size(); ++i)
            for (int k = 0; k < q; ++k)
                if (qsim::qubit_bit(i, k, q)) p1[static_cast<std::size_t>(k)] += m.basis_probs[i];

        for (std::size_t i = 0; i < m.basis_probs.size(); ++i) {
            double prod = 1.0;
            for (int k = 0; k < q; ++k) {
                const double pk = p1[static_cast<std::size_t>(k)];
                prod *= qsim::qubit_bit(i, k, q) ? pk : 1.0 - pk;
            }
            CHECK(m.basis_probs[i] == doctest::Approx(prod).epsilon(1e-10));
        }
    }
}

TEST_CASE("basis encoding") {
    const auto s = encode_basis(5, 3);
    CHECK(std::abs(s.amplitudes[5] - qsim::Complex(1, 0)) < 1e-12);
    const auto z = encode_basis(0, 4);
    CHECK(std::abs(z.amplitudes[0] - qsim::Complex(1, 0)) < 1e-12);
    CHECK_THROWS_AS(encode_basis(std::size_t{1} << 3, 3), ShapeError);
}

TEST_CASE("basis encoding from thresholded features") {
    const std::vector<double> f{1.2, -0.3, 0.0, 2.0};
    CHECK(basis_index_from_features(f, 4) == 9); // |1001>
    const auto s = encode_basis_from_features(f, 4);
    CHECK(std::abs(s.amplitudes[9] - qsim::Complex(1, 0)) < 1e-12);

    CHECK(basis_index_from_features(std::vector<double>{-1.0, -2.0, -0.1}, 3) == 0);
    CHECK(basis_index_from_features(std::vector<double>{1.0, 2.0, 0.1}, 3) == 7);
}

TEST_CASE("basis round trip through argmax") {
    Rng rng(31);
    for (int trial = 0; trial < 20; ++trial) {
        const int q = 1 + static_cast<int>(rng.below(6));
        const auto index = rng.below(std::uint64_t{1} << q);
        const auto m = qsim::measure_analytic(encode_basis(index, q));
        std::size_t best = 0;
        for (std::size_t i = 1; i < m.basis_probs.size(); ++i)
            if (m.basis_probs[i] > m.basis_probs[best]) best = i;
        CHECK(best == index);
    }
}

TEST_CASE("encoder dimensions and names") {
    CHECK(encoder_input_dim(EncodingKind::Amplitude, 4) == 16);
    CHECK(encoder_input_dim(EncodingKind::Angle, 4) == 4);
    CHECK(encoder_input_dim(EncodingKind::Basis, 4) == 4);
    CHECK(encoding_from_string("amplitude") == EncodingKind::Amplitude);
    CHECK(encoding_from_string("angle") == EncodingKind::Angle);
    CHECK(encoding_from_string("qubit") == EncodingKind::Basis);
    CHECK_THROWS_AS(encoding_from_string("dense"), ConfigError);
}
