#include <doctest.h>

#include <chrono>
#include <cmath>

#include "common.hpp"
#include "rf.hpp"

using namespace gpopf;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

VectorXd rand_vec(Rng &rng, int m) {
    VectorXd v(m);
    for (int i = 0; i < m; ++i) v[i] = rng.normal();
    return v;
}

TrainingSet random_set(Rng &rng, int T, int M, bool with_grads) {
    TrainingSet ts;
    ts.target = "test";
    ts.y.resize(T);
    if (with_grads) ts.grads = MatrixXd(T, M);
    for (int t = 0; t < T; ++t) {
        ts.thetas.push_back(rand_vec(rng, M));
        ts.y[t] = rng.normal();
        if (with_grads) ts.grads->row(t) = rand_vec(rng, M).transpose();
    }
    return ts;
}

} // namespace

TEST_CASE("basis drawing: determinism, degenerate beta, moments") {
    RfBasis a = draw_basis(4, 16, 0.7, 99);
    RfBasis b = draw_basis(4, 16, 0.7, 99);
    CHECK(a.V == b.V);
    CHECK(a.phi == b.phi);
    CHECK(draw_basis(4, 16, 0.7, 100).V != a.V);

    RfBasis zero = draw_basis(4, 8, 0.0, 1);
    CHECK(zero.V.isZero(0.0));
    VectorXd z1 = features_z(zero, VectorXd::Zero(4));
    VectorXd z2 = features_z(zero, VectorXd::Constant(4, 7.0));
    CHECK((z1 - z2).norm() == 0.0); // features independent of theta

    // sample variance of V entries approaches beta
    const double beta = 0.37;
    RfBasis big = draw_basis(100, 1000, beta, 5);
    const double n = static_cast<double>(big.V.size());
    const double mean = big.V.sum() / n;
    const double var = (big.V.array() - mean).square().sum() / (n - 1);
    const double se = beta * std::sqrt(2.0 / n); // std error of a normal variance estimate
    CHECK(std::abs(var - beta) < 3 * se);
}

TEST_CASE("feature vectors are bounded and unbiased for the kernel") {
    Rng rng(1);
    const int M = 6;
    Hyperparams h;
    h.alpha = 1.4;
    h.beta = 0.9;
    const VectorXd ti = rand_vec(rng, M), tj = rand_vec(rng, M);
    const double truth = kernel(ti, tj, h);

    const int reps = 200, D = 64;
    double sum = 0, sumsq = 0;
    for (int r = 0; r < reps; ++r) {
        RfBasis b = draw_basis(M, D, h.beta, 1000 + r);
        const VectorXd zi = features_z(b, ti), zj = features_z(b, tj);
        CHECK(zi.squaredNorm() <= 2.0 + 1e-12);
        const double est = h.alpha * zi.dot(zj);
        sum += est;
        sumsq += est * est;
    }
    const double mean = sum / reps;
    const double se = std::sqrt((sumsq / reps - mean * mean) / reps);
    CHECK(std::abs(mean - truth) < 3 * se + 1e-12);
}

TEST_CASE("kernel sup-error shrinks as D grows") {
    Rng rng(2);
    const int M = 3;
    Hyperparams h;
    h.alpha = 1.0;
    h.beta = 1.1;
    std::vector<VectorXd> grid;
    for (int i = 0; i < 12; ++i) grid.push_back(rand_vec(rng, M));

    auto sup_err = [&](int D) {
        double worst_avg = 0;
        for (size_t a = 0; a < grid.size(); ++a)
            for (size_t b = a; b < grid.size(); ++b) {
                double err = 0;
                for (int rep = 0; rep < 6; ++rep) {
                    RfBasis rb = draw_basis(M, D, h.beta, 31 * rep + 7);
                    err += std::abs(h.alpha * features_z(rb, grid[a]).dot(features_z(rb, grid[b])) -
                                    kernel(grid[a], grid[b], h));
                }
                worst_avg = std::max(worst_avg, err / 6);
            }
        return worst_avg;
    };
    const double e100 = sup_err(100);
    const double e1600 = sup_err(1600);
    const double e10k = sup_err(10000);
    CHECK(e1600 < e100);
    CHECK(e10k < e1600);
    CHECK(e10k < 0.5 * e100); // roughly 1/sqrt(D)
}

TEST_CASE("feature jacobian: finite differences, degenerate beta, unbiased gradient") {
    Rng rng(3);
    const int M = 5, D = 32;
    Hyperparams h;
    h.alpha = 1.0;
    h.beta = 0.8;
    RfBasis b = draw_basis(M, D, h.beta, 17);
    const VectorXd theta = rand_vec(rng, M);
    RfFeatureJac fj = features_jac(b, theta);
    const double hs = 1e-6;
    for (int i = 0; i < M; ++i) {
        VectorXd up = theta, dn = theta;
        up[i] += hs;
        dn[i] -= hs;
        const VectorXd fd = (features_z(b, up) - features_z(b, dn)) / (2 * hs);
        CHECK((fd - fj.jac.col(i)).lpNorm<Eigen::Infinity>() < 1e-7);
    }

    RfBasis zero = draw_basis(M, D, 0.0, 17);
    CHECK(features_jac(zero, theta).jac.isZero(0.0));

    // E[alpha jac(tj)' z(ti)] = kernel_grad(ti, tj)
    const VectorXd ti = rand_vec(rng, M), tj = rand_vec(rng, M);
    const VectorXd truth = kernel_grad(ti, tj, h);
    const int reps = 200;
    MatrixXd est(reps, M);
    for (int r = 0; r < reps; ++r) {
        RfBasis rb = draw_basis(M, 64, h.beta, 500 + r);
        est.row(r) = (h.alpha * features_jac(rb, tj).jac.transpose() * features_z(rb, ti)).transpose();
    }
    for (int i = 0; i < M; ++i) {
        const double mean = est.col(i).mean();
        const double var = (est.col(i).array() - mean).square().sum() / (reps - 1);
        CHECK(std::abs(mean - truth[i]) < 3 * std::sqrt(var / reps) + 1e-12);
    }
}

TEST_CASE("hessian estimator is unbiased") {
    Rng rng(4);
    const int M = 3;
    Hyperparams h;
    h.alpha = 1.2;
    h.beta = 0.6;
    const VectorXd ti = rand_vec(rng, M), tj = rand_vec(rng, M);
    const MatrixXd truth = kernel_hess(ti, tj, h);
    const int reps = 220;
    std::vector<MatrixXd> draws;
    for (int r = 0; r < reps; ++r) {
        RfBasis rb = draw_basis(M, 48, h.beta, 900 + r);
        draws.push_back(h.alpha * features_jac(rb, ti).jac.transpose() * features_jac(rb, tj).jac);
    }
    for (int a = 0; a < M; ++a)
        for (int b = 0; b < M; ++b) {
            double mean = 0, var = 0;
            for (const auto &d : draws) mean += d(a, b);
            mean /= reps;
            for (const auto &d : draws) var += (d(a, b) - mean) * (d(a, b) - mean);
            var /= (reps - 1);
            CHECK(std::abs(mean - truth(a, b)) < 3 * std::sqrt(var / reps) + 1e-12);
        }
}

TEST_CASE("hadamard gram identity equals the direct khatri-rao stack") {
    Rng rng(5);
    const int T = 7, M = 4, D = 12;
    Hyperparams h;
    h.alpha = 1.0;
    h.beta = 0.5;
    h.gamma = 1e-3;
    h.epsilon = 1e-4;
    TrainingSet ts = random_set(rng, T, M, true);
    RfBasis b = draw_basis(M, D, h.beta, 77);

    // direct stack: rows [Z; grad blocks per sample]
    MatrixXd Zbar(T * (M + 1), D);
    for (int t = 0; t < T; ++t) {
        Zbar.row(t) = features_z(b, ts.thetas[t]);
        Zbar.block(T + t * M, 0, M, D) = features_jac(b, ts.thetas[t]).jac.transpose();
    }
    VectorXd dinv(T * (M + 1));
    dinv.head(T).setConstant(1.0 / h.gamma);
    dinv.tail(T * M).setConstant(1.0 / h.epsilon);
    const MatrixXd direct = Zbar.transpose() * dinv.asDiagonal() * Zbar;

    // identity route
    MatrixXd Z(T, D), S(T, D);
    for (int t = 0; t < T; ++t) {
        Z.row(t) = features_z(b, ts.thetas[t]);
        S.row(t) = features_jac(b, ts.thetas[t]).s;
    }
    const MatrixXd viaHadamard =
        Z.transpose() * Z / h.gamma + (S.transpose() * S).cwiseProduct(b.V.transpose() * b.V) / h.epsilon;
    CHECK((direct - viaHadamard).lpNorm<Eigen::Infinity>() < 1e-10);
}

TEST_CASE("matrix-inversion-lemma path equals the T-space path") {
    Rng rng(6);
    const int T = 50, D = 20, M = 5;
    Hyperparams h;
    h.alpha = 0.9;
    h.beta = 0.4;
    h.gamma = 1e-2;
    TrainingSet ts = random_set(rng, T, M, false);
    RfBasis b = draw_basis(M, D, h.beta, 123);
    RfModel m = train_rf(ts, h, b, RfMode::rf_gp);

    // direct T-space route on standardized labels
    const double mean_y = ts.y.sum() / T;
    double var_y = (ts.y.array() - mean_y).square().sum() / (T - 1);
    const double scale = std::sqrt(var_y);
    const double a_s = h.alpha / (scale * scale), g_s = h.gamma / (scale * scale);
    MatrixXd Z(T, D);
    for (int t = 0; t < T; ++t) Z.row(t) = features_z(b, ts.thetas[t]);
    MatrixXd S11 = a_s * Z * Z.transpose();
    S11.diagonal().array() += g_s;
    Eigen::LLT<MatrixXd> llt(S11);
    REQUIRE(llt.info() == Eigen::Success);
    const VectorXd w = llt.solve(((ts.y.array() - mean_y) / scale).matrix());

    for (int trial = 0; trial < 10; ++trial) {
        const VectorXd q = rand_vec(rng, M);
        const VectorXd zq = features_z(b, q);
        const double mean_direct = mean_y + scale * (a_s * (Z * zq).dot(w));
        const double var_direct =
            scale * scale * (a_s * zq.squaredNorm() - (a_s * (Z * zq)).dot(llt.solve(a_s * Z * zq)));
        Prediction p = predict_rf(m, q);
        CHECK(p.mean == doctest::Approx(mean_direct).epsilon(1e-8));
        CHECK(p.raw_variance == doctest::Approx(var_direct).epsilon(1e-8).scale(1e-12));
    }
}

TEST_CASE("rf predictions approach the exact gp as D grows") {
    Rng rng(8);
    const int T = 20, M = 4;
    Hyperparams h;
    h.alpha = 1.0;
    h.beta = 0.5;
    h.gamma = 1e-4;
    h.epsilon = 1e-4;
    TrainingSet ts = random_set(rng, T, M, true);
    // smooth labels make the comparison stable
    VectorXd a = rand_vec(rng, M);
    for (int t = 0; t < T; ++t) {
        ts.y[t] = std::sin(a.dot(ts.thetas[t]));
        ts.grads->row(t) = (std::cos(a.dot(ts.thetas[t])) * a).transpose();
    }
    GpModel exact = train(ts, h, GpMode::sensitivity_informed);
    std::vector<VectorXd> probes;
    for (int i = 0; i < 25; ++i) probes.push_back(rand_vec(rng, M));

    auto gap = [&](int D) {
        double sum = 0;
        for (int rep = 0; rep < 4; ++rep) {
            RfModel m = train_rf(ts, h, draw_basis(M, D, h.beta, 3000 + rep), RfMode::rf_si_gp);
            for (const auto &q : probes) sum += std::abs(predict_rf(m, q).mean - predict(exact, q).mean);
        }
        return sum / (4 * probes.size());
    };
    const double g100 = gap(100), g400 = gap(400), g1600 = gap(1600);
    CHECK(g400 < g100);
    CHECK(g1600 < g400);
}

TEST_CASE("edge cases: empty set errors, zero labels predict zero") {
    TrainingSet empty;
    empty.y.resize(0);
    RfBasis b = draw_basis(3, 8, 1.0, 1);
    Hyperparams h;
    CHECK_THROWS_AS(train_rf(empty, h, b, RfMode::rf_gp), Error);

    Rng rng(9);
    TrainingSet ts = random_set(rng, 10, 3, false);
    ts.y.setZero();
    RfModel m = train_rf(ts, h, draw_basis(3, 16, h.beta, 2), RfMode::rf_gp);
    for (int trial = 0; trial < 5; ++trial) CHECK(predict_rf(m, rand_vec(rng, 3)).mean == doctest::Approx(0.0));
}

TEST_CASE("prediction cost does not scale with T") {
    Rng rng(10);
    const int M = 6, D = 256;
    Hyperparams h;
    h.alpha = 1.0;
    h.beta = 0.3;
    h.gamma = 1e-3;
    h.epsilon = 1e-3;
    TrainingSet small = random_set(rng, 50, M, true);
    TrainingSet large = random_set(rng, 500, M, true);
    RfBasis b = draw_basis(M, D, h.beta, 4);
    RfModel ms = train_rf(small, h, b, RfMode::rf_si_gp);
    RfModel ml = train_rf(large, h, b, RfMode::rf_si_gp);

    const VectorXd q = rand_vec(rng, M);
    auto time_predict = [&](const RfModel &m) {
        volatile double sink = 0;
        const auto t0 = std::chrono::steady_clock::now();
        for (int i = 0; i < 2000; ++i) sink += predict_rf(m, q).mean;
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    };
    time_predict(ms); // warm-up
    const double ts_small = time_predict(ms);
    const double ts_large = time_predict(ml);
    CHECK(ts_large < 2.5 * ts_small); // flat in T up to timer noise
}

TEST_CASE("determinism and file round-trip") {
    Rng rng(11);
    TrainingSet ts = random_set(rng, 12, 4, true);
    ts.target = "pg:7";
    Hyperparams h;
    h.alpha = 1.0;
    h.beta = 0.7;
    h.gamma = 1e-3;
    h.epsilon = 1e-4;
    RfBasis b = draw_basis(4, 32, h.beta, 55);
    RfModel m1 = train_rf(ts, h, b, RfMode::rf_si_gp);
    RfModel m2 = train_rf(ts, h, b, RfMode::rf_si_gp);
    CHECK(m1.t5 == m2.t5); // bitwise reproducible

    RfModel back = rf_model_from_json(rf_model_to_json(m1));
    CHECK(back.target == "pg:7");
    for (int trial = 0; trial < 5; ++trial) {
        const VectorXd q = rand_vec(rng, 4);
        CHECK(predict_rf(back, q).mean == doctest::Approx(predict_rf(m1, q).mean).epsilon(1e-12));
        CHECK(predict_rf(back, q).std_dev == doctest::Approx(predict_rf(m1, q).std_dev).epsilon(1e-9));
    }
}
