#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "qdistill/distill.hpp"
#include "qdistill/rng.hpp"
#include "support/oracles.hpp"

using namespace qdistill;
using namespace qdistill::distill;

TEST_CASE("softmax_t basics") {
    const auto uniform = softmax_t(std::vector<double>{0.0, 0.0}, 1.0);
    CHECK(uniform[0] == doctest::Approx(0.5).epsilon(1e-12));

    // softmax([2,0]/2) = softmax([1,0]) = (1/(1+e^-1), ...)
    const auto soft = softmax_t(std::vector<double>{2.0, 0.0}, 2.0);
    const double expected = 1.0 / (1.0 + std::exp(-1.0));
    CHECK(soft[0] == doctest::Approx(expected).epsilon(1e-12));
    CHECK(soft[1] == doctest::Approx(1.0 - expected).epsilon(1e-12));
    CHECK(soft[0] == doctest::Approx(0.7311).epsilon(1e-4));

    const auto smooth = softmax_t(std::vector<double>{1.0, -0.5, 0.3}, 1e6);
    for (double p : smooth) CHECK(std::fabs(p - 1.0 / 3.0) < 1e-6);

    CHECK_THROWS_AS(softmax_t(std::vector<double>{1.0}, 0.0), ConfigError);
    CHECK_THROWS_AS(softmax_t(std::vector<double>{1.0}, -2.0), ConfigError);
}

TEST_CASE("softmax_t is shift invariant and overflow safe") {
    Rng rng(5);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<double> z(10), shifted(10);
        const double c = rng.uniform(-50.0, 50.0);
        for (std::size_t i = 0; i < z.size(); ++i) {
            z[i] = rng.uniform(-10.0, 10.0);
            shifted[i] = z[i] + c;
        }
        const auto a = softmax_t(z, 2.0);
        const auto b = softmax_t(shifted, 2.0);
        double sum = 0.0;
        for (std::size_t i = 0; i < a.size(); ++i) {
            CHECK(std::fabs(a[i] - b[i]) < 1e-12);
            sum += a[i];
        }
        CHECK(std::fabs(sum - 1.0) < 1e-12);
    }
    const auto big = softmax_t(std::vector<double>{1e8, -1e8}, 1.0);
    CHECK(std::isfinite(big[0]));
    CHECK(big[0] == doctest::Approx(1.0));
}

TEST_CASE("cross entropy values") {
    CHECK(cross_entropy(std::vector<double>{0.0, 1.0}, 1) == doctest::Approx(0.0));
    const std::vector<double> uniform(10, 0.1);
    CHECK(cross_entropy(uniform, 3) == doctest::Approx(std::log(10.0)).epsilon(1e-12));
    CHECK(cross_entropy(std::vector<double>{0.5, 0.5}, 0) ==
          doctest::Approx(std::log(2.0)).epsilon(1e-12));
    CHECK_THROWS_AS(cross_entropy(uniform, 10), ShapeError);
    CHECK_THROWS_AS(cross_entropy(uniform, -1), ShapeError);
}

TEST_CASE("kl divergence values") {
    const std::vector<double> p{0.3, 0.2, 0.5};
    CHECK(kl_divergence(p, p) == doctest::Approx(0.0));
    CHECK(kl_divergence(std::vector<double>{1.0, 0.0}, std::vector<double>{0.5, 0.5}) ==
          doctest::Approx(std::log(2.0)).epsilon(1e-12));
    const double expected = 0.5 * std::log(0.5 / 0.9) + 0.5 * std::log(0.5 / 0.1);
    CHECK(kl_divergence(std::vector<double>{0.5, 0.5}, std::vector<double>{0.9, 0.1}) ==
          doctest::Approx(expected).epsilon(1e-12));
    CHECK(expected == doctest::Approx(0.5108).epsilon(1e-4));
}

TEST_CASE("kl divergence is non-negative on random distributions") {
    Rng rng(8);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<double> p(6), q(6);
        double sp = 0, sq = 0;
        for (std::size_t i = 0; i < p.size(); ++i) {
            p[i] = rng.uniform();
            q[i] = rng.uniform() + 1e-6;
            sp += p[i];
            sq += q[i];
        }
        if (trial % 3 == 0) p[0] = 0.0; // zero-mass term contributes nothing
        sp = 0;
        for (double v : p) sp += v;
        for (auto& v : p) v /= sp;
        for (auto& v : q) v /= sq;
        CHECK(kl_divergence(p, q) >= -1e-15);
    }
}

TEST_CASE("distill loss boundaries") {
    Rng rng(12);
    for (int trial = 0; trial < 100; ++trial) {
        std::vector<double> teacher(10), student(10);
        for (std::size_t i = 0; i < 10; ++i) {
            teacher[i] = rng.uniform(-4.0, 4.0);
            student[i] = rng.uniform(-4.0, 4.0);
        }
        const int label = static_cast<int>(rng.below(10));

        DistillConfig a0{2.0, 0.0};
        const auto l0 = distill_loss(teacher, student, label, a0);
        CHECK(l0.total == l0.ce); // exact: 0*kd + 1*ce

        DistillConfig a1{2.0, 1.0};
        const auto l1 = distill_loss(teacher, student, label, a1);
        CHECK(l1.total == l1.kd);

        DistillConfig mid{2.0, 0.4};
        const auto lm = distill_loss(teacher, teacher, label, mid);
        CHECK(std::fabs(lm.kd) < 1e-12);
        CHECK(lm.total == doctest::Approx((1.0 - 0.4) * lm.ce).epsilon(1e-12));

        // convex combination
        const auto l = distill_loss(teacher, student, label, mid);
        CHECK(l.total >= std::min(l.kd, l.ce) - 1e-12);
        CHECK(l.total <= std::max(l.kd, l.ce) + 1e-12);
        CHECK(l.kd >= 0.0);
    }
}

TEST_CASE("distill loss gradient matches finite differences") {
    Rng rng(99);
    for (int trial = 0; trial < 10; ++trial) {
        std::vector<double> teacher(8), student(8);
        for (std::size_t i = 0; i < 8; ++i) {
            teacher[i] = rng.uniform(-3.0, 3.0);
            student[i] = rng.uniform(-3.0, 3.0);
        }
        const int label = static_cast<int>(rng.below(8));
        const DistillConfig cfg{2.0, 0.4};

        const auto grad = distill_loss_grad(teacher, student, label, cfg);
        const auto fd = oracles::finite_difference_gradient(
            [&](std::span<const double> z) {
                return distill_loss(teacher, z, label, cfg).total;
            },
            student, 1e-6);
        for (std::size_t j = 0; j < grad.size(); ++j)
            CHECK(std::fabs(grad[j] - fd[j]) < 1e-6);
    }
}

TEST_CASE("config validation") {
    CHECK_THROWS_AS((DistillConfig{0.0, 0.4}.validate()), ConfigError);
    CHECK_THROWS_AS((DistillConfig{2.0, 1.5}.validate()), ConfigError);
    CHECK_THROWS_AS((DistillConfig{2.0, -0.1}.validate()), ConfigError);
    DistillConfig ok;
    CHECK(ok.temperature == 2.0);
    CHECK(ok.alpha == 0.4);
}
