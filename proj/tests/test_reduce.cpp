#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "qdistill/reduce.hpp"
#include "qdistill/rng.hpp"
#include "support/oracles.hpp"

using namespace qdistill;
using namespace qdistill::reduce;

TEST_CASE("fc reducer forward") {
    FcReducerShape shape{2, 2, 2};
    SUBCASE("zero weights give a zero vector") {
        const std::vector<double> params(shape.param_count(), 0.0);
        const auto out = fc_reduce(shape, params, std::vector<double>{1.0, -2.0});
        CHECK(out[0] == 0.0);
        CHECK(out[1] == 0.0);
    }
    SUBCASE("identity weights reproduce small inputs") {
        std::vector<double> params(shape.param_count(), 0.0);
        params[0] = 1.0; // W1 = I
        params[3] = 1.0;
        params[6] = 1.0; // W2 = I
        params[9] = 1.0;
        const std::vector<double> x{1e-4, -2e-4};
        const auto out = fc_reduce(shape, params, x);
        CHECK(std::fabs(out[0] - x[0]) < 1e-11); // tanh(x) ~ x for tiny x
        CHECK(std::fabs(out[1] - x[1]) < 1e-11);
    }
    CHECK_THROWS_AS(fc_reduce(shape, std::vector<double>(3, 0.0),
                              std::vector<double>{1.0, 2.0}),
                    ShapeError);
}

TEST_CASE("fc reducer backward matches finite differences") {
    FcReducerShape shape{5, 4, 3};
    Rng rng(55);
    auto params = init_fc_reducer(shape, 55);
    std::vector<double> x(5);
    for (auto& v : x) v = rng.normal();
    std::vector<double> cot(3);
    for (auto& v : cot) v = rng.uniform(-1.0, 1.0);

    std::vector<double> hidden;
    fc_reduce(shape, params, x, &hidden);
    std::vector<double> grads(shape.param_count(), 0.0);
    std::vector<double> x_grad;
    fc_reduce_backward(shape, params, x, hidden, cot, grads, &x_grad);

    const auto fd = oracles::finite_difference_gradient(
        [&](std::span<const double> p) {
            const auto out = fc_reduce(shape, p, x);
            double acc = 0.0;
            for (std::size_t i = 0; i < out.size(); ++i) acc += cot[i] * out[i];
            return acc;
        },
        params, 1e-6);
    for (std::size_t j = 0; j < params.size(); ++j)
        CHECK(std::fabs(grads[j] - fd[j]) < 1e-7);

    const auto fdx = oracles::finite_difference_gradient(
        [&](std::span<const double> xi) {
            const auto out = fc_reduce(shape, params, xi);
            double acc = 0.0;
            for (std::size_t i = 0; i < out.size(); ++i) acc += cot[i] * out[i];
            return acc;
        },
        x, 1e-6);
    for (std::size_t j = 0; j < x.size(); ++j)
        CHECK(std::fabs(x_grad[j] - fdx[j]) < 1e-7);
}

TEST_CASE("center crop indexing") {
    std::vector<double> image(28 * 28);
    for (int y = 0; y < 28; ++y)
        for (int x = 0; x < 28; ++x)
            image[static_cast<std::size_t>(y) * 28 + x] = y * 100.0 + x;

    const auto c4 = reduce_center_crop(image, 28, 28, 4);
    CHECK(c4.size() == 16);
    CHECK(c4[0] == 12 * 100 + 12); // rows/cols 12..16
    CHECK(c4[15] == 15 * 100 + 15);

    const auto c16 = reduce_center_crop(image, 28, 28, 16);
    CHECK(c16[0] == 6 * 100 + 6); // rows/cols 6..22
    CHECK(c16[255] == 21 * 100 + 21);

    std::vector<double> small(16);
    for (std::size_t i = 0; i < 16; ++i) small[i] = static_cast<double>(i);
    CHECK(reduce_center_crop(small, 4, 4, 4) == small);

    CHECK_THROWS_AS(reduce_center_crop(small, 4, 4, 5), ShapeError);
}

TEST_CASE("pooling reducers") {
    const std::vector<double> tiny{1.0, 2.0, 3.0, 4.0};
    CHECK(reduce_pool(tiny, 2, 2, PoolMode::Avg, 1)[0] == doctest::Approx(2.5));
    CHECK(reduce_pool(tiny, 2, 2, PoolMode::Max, 1)[0] == 4.0);

    const std::vector<double> constant(28 * 28, 3.5);
    for (const auto mode : {PoolMode::Max, PoolMode::Avg}) {
        const auto out = reduce_pool(constant, 28, 28, mode, 4);
        for (double v : out) CHECK(v == doctest::Approx(3.5));
    }

    CHECK_THROWS_AS(reduce_pool(constant, 28, 28, PoolMode::Avg, 16), ShapeError);

    SUBCASE("avg pooling commutes with scaling") {
        Rng rng(6);
        std::vector<double> img(28 * 28);
        for (auto& v : img) v = rng.normal();
        std::vector<double> scaled = img;
        for (auto& v : scaled) v *= 2.5;
        const auto a = reduce_pool(img, 28, 28, PoolMode::Avg, 4);
        const auto b = reduce_pool(scaled, 28, 28, PoolMode::Avg, 4);
        for (std::size_t i = 0; i < a.size(); ++i)
            CHECK(b[i] == doctest::Approx(2.5 * a[i]).epsilon(1e-12));
    }

    SUBCASE("padding to a multiple allows the 16x16 target") {
        std::vector<double> img(28 * 28, 1.0);
        int ph = 0, pw = 0;
        const auto padded = pad_to_multiple(img, 28, 28, 16, ph, pw);
        CHECK(ph == 32);
        CHECK(pw == 32);
        // 2px zero margins on each side
        CHECK(padded[0] == 0.0);
        CHECK(padded[static_cast<std::size_t>(2) * 32 + 2] == 1.0);
        const auto out = reduce_pool(padded, ph, pw, PoolMode::Avg, 16);
        CHECK(out.size() == 256);
        CHECK(out[0] == 0.0);              // corner window is all padding
        CHECK(out[17 * 1 + 17] == 1.0);    // interior window is all image
    }
}

TEST_CASE("channel average") {
    // 2 channels of 1x2
    const std::vector<double> img{1.0, 3.0, 5.0, 7.0};
    const auto avg = channel_average(img, 2, 1, 2);
    CHECK(avg[0] == doctest::Approx(3.0));
    CHECK(avg[1] == doctest::Approx(5.0));
}

TEST_CASE("pca on the collinear textbook points") {
    Tensor train({3, 2}, {1.0, 1.0, 2.0, 2.0, 3.0, 3.0});
    const auto basis = pca_fit(train, 1);
    const double inv_sqrt2 = 1.0 / std::sqrt(2.0);
    CHECK(basis.basis[0] == doctest::Approx(inv_sqrt2).epsilon(1e-12));
    CHECK(basis.basis[1] == doctest::Approx(inv_sqrt2).epsilon(1e-12));
    CHECK(basis.eigenvalues[0] == doctest::Approx(4.0 / 3.0).epsilon(1e-12));
    CHECK(basis.discarded_variance() == doctest::Approx(0.0).epsilon(1e-12));

    // the mean maps to the zero vector
    const auto at_mean = pca_transform(std::vector<double>{2.0, 2.0}, basis);
    CHECK(std::fabs(at_mean[0]) < 1e-12);
}

TEST_CASE("pca basis is orthonormal and matches the brute-force oracle") {
    Rng rng(314);
    for (int trial = 0; trial < 5; ++trial) {
        const int n = 40, d = 8, k = 3;
        Tensor train({n, d});
        for (auto& v : train.data) v = rng.normal() + 0.5 * rng.uniform();
        const auto basis = pca_fit(train, k);

        // orthonormality
        for (int c1 = 0; c1 < k; ++c1)
            for (int c2 = 0; c2 < k; ++c2) {
                double dot = 0.0;
                for (int r = 0; r < d; ++r)
                    dot += basis.basis[static_cast<std::size_t>(c1) * d + r] *
                           basis.basis[static_cast<std::size_t>(c2) * d + r];
                CHECK(std::fabs(dot - (c1 == c2 ? 1.0 : 0.0)) < 1e-8);
            }

        // covariance for the oracle
        std::vector<double> mean(d, 0.0), cov(static_cast<std::size_t>(d) * d, 0.0);
        for (int i = 0; i < n; ++i) {
            const auto row = train.slice(static_cast<std::size_t>(i));
            for (int j = 0; j < d; ++j) mean[static_cast<std::size_t>(j)] += row[static_cast<std::size_t>(j)];
        }
        for (auto& m : mean) m /= n;
        for (int i = 0; i < n; ++i) {
            const auto row = train.slice(static_cast<std::size_t>(i));
            for (int r = 0; r < d; ++r)
                for (int c = 0; c < d; ++c)
                    cov[static_cast<std::size_t>(r) * d + c] +=
                        (row[static_cast<std::size_t>(r)] - mean[static_cast<std::size_t>(r)]) *
                        (row[static_cast<std::size_t>(c)] - mean[static_cast<std::size_t>(c)]) / n;
        }
        std::vector<double> oracle_vals, oracle_vecs;
        oracles::power_iteration_eigen(cov, d, k, oracle_vals, oracle_vecs);

        // compare subspace projectors (gauge independent)
        double max_diff = 0.0;
        for (int r = 0; r < d; ++r)
            for (int c = 0; c < d; ++c) {
                double mine = 0.0, theirs = 0.0;
                for (int j = 0; j < k; ++j) {
                    mine += basis.basis[static_cast<std::size_t>(j) * d + r] *
                            basis.basis[static_cast<std::size_t>(j) * d + c];
                    theirs += oracle_vecs[static_cast<std::size_t>(j) * d + r] *
                              oracle_vecs[static_cast<std::size_t>(j) * d + c];
                }
                max_diff = std::max(max_diff, std::fabs(mine - theirs));
            }
        CHECK(max_diff < 1e-8);
        for (int j = 0; j < k; ++j)
            CHECK(std::fabs(basis.eigenvalues[static_cast<std::size_t>(j)] -
                            oracle_vals[static_cast<std::size_t>(j)]) < 1e-8);
    }
}

TEST_CASE("pca reconstruction error equals the discarded eigenvalue mass") {
    Rng rng(777);
    const int n = 60, d = 8, k = 3;
    Tensor train({n, d});
    for (auto& v : train.data) v = rng.normal();
    const auto basis = pca_fit(train, k);

    double mean_err = 0.0;
    for (int i = 0; i < n; ++i) {
        const auto row = train.slice(static_cast<std::size_t>(i));
        const auto reduced = pca_transform(row, basis);
        const auto rec = pca_reconstruct(reduced, basis);
        double err = 0.0;
        for (int j = 0; j < d; ++j) {
            const double delta = rec[static_cast<std::size_t>(j)] - row[static_cast<std::size_t>(j)];
            err += delta * delta;
        }
        mean_err += err;
    }
    mean_err /= n;
    CHECK(mean_err == doctest::Approx(basis.discarded_variance()).epsilon(1e-6));
}

TEST_CASE("pca transform linearity after mean centering") {
    Rng rng(11);
    const int d = 6;
    Tensor train({30, d});
    for (auto& v : train.data) v = rng.normal();
    const auto basis = pca_fit(train, 2);
    std::vector<double> x(d), y(d);
    for (auto& v : x) v = rng.normal();
    for (auto& v : y) v = rng.normal();
    const double a = 0.7, b = -1.3;
    std::vector<double> combo(d);
    for (int j = 0; j < d; ++j)
        combo[static_cast<std::size_t>(j)] = a * x[static_cast<std::size_t>(j)] + b * y[static_cast<std::size_t>(j)];
    const auto tc = pca_transform(combo, basis);
    const auto tx = pca_transform(x, basis);
    const auto ty = pca_transform(y, basis);
    // T(ax+by) = aT(x) + bT(y) + (a+b-1) * B^T mu correction
    std::vector<double> mu_term(2, 0.0);
    for (int c = 0; c < 2; ++c)
        for (int r = 0; r < d; ++r)
            mu_term[static_cast<std::size_t>(c)] +=
                basis.basis[static_cast<std::size_t>(c) * d + r] * basis.mean[static_cast<std::size_t>(r)];
    for (int c = 0; c < 2; ++c) {
        const double expected = a * tx[static_cast<std::size_t>(c)] + b * ty[static_cast<std::size_t>(c)] +
                                (a + b - 1.0) * mu_term[static_cast<std::size_t>(c)];
        CHECK(tc[static_cast<std::size_t>(c)] == doctest::Approx(expected).epsilon(1e-10));
    }
}

TEST_CASE("degenerate covariance pads with zeros and flags the rank") {
    // rank-1 data: all rows are multiples of one direction
    Tensor train({10, 4});
    Rng rng(9);
    for (int i = 0; i < 10; ++i) {
        const double t = rng.normal();
        auto row = train.slice(static_cast<std::size_t>(i));
        row[0] = t;
        row[1] = 2 * t;
        row[2] = -t;
        row[3] = 0.5 * t;
    }
    const auto basis = pca_fit(train, 3);
    CHECK(basis.effective_rank == 1);
    for (int r = 0; r < 4; ++r) {
        CHECK(basis.basis[static_cast<std::size_t>(1) * 4 + r] == 0.0);
        CHECK(basis.basis[static_cast<std::size_t>(2) * 4 + r] == 0.0);
    }

    SUBCASE("unfitted basis raises a state error") {
        PcaBasis empty;
        CHECK_THROWS_AS(pca_transform(std::vector<double>{1, 2, 3, 4}, empty), StateError);
    }
}

TEST_CASE("pca basis file round trip") {
    Rng rng(8);
    Tensor train({20, 6});
    for (auto& v : train.data) v = rng.normal();
    const auto basis = pca_fit(train, 2);
    const std::string path = "pca_test_basis.bin";
    save_pca_basis(path, basis);
    const auto loaded = load_pca_basis(path);
    CHECK(loaded.input_dim == basis.input_dim);
    CHECK(loaded.target_dim == basis.target_dim);
    CHECK(loaded.basis == basis.basis);
    CHECK(loaded.mean == basis.mean);
    CHECK(loaded.eigenvalues == basis.eigenvalues);
    std::filesystem::remove(path);
}

TEST_CASE("reducer names") {
    CHECK(reducer_from_string("fc") == ReducerKind::FullyConnected);
    CHECK(reducer_from_string("avgpool") == ReducerKind::AvgPool);
    CHECK_THROWS_AS(reducer_from_string("umap"), ConfigError);
    CHECK(reducer_to_string(ReducerKind::PCA) == "pca");
}
