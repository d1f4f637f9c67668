#include "fegap/errors.hpp"
#include "fegap/optimizer.hpp"
#include "fegap/rp_msl.hpp"
#include "fegap/synthetic.hpp"
#include "helpers.hpp"

#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

using namespace fegap;
using fegap::test::design;
using fegap::test::small_truth;

TEST_SUITE("rp_msl") {

TEST_CASE("zero spreads reduce to the fixed likelihood") {
    const SyntheticDataset ds = simulate_dataset(small_truth(100, 3, 0.05, 0.05));
    RpParameters p = small_truth(100, 3, 0.0, 0.0).parameters(ds.design);
    const DrawStore store(100, HaltonConfig::with_dimensions(2, 50));
    const double msl = simulated_loglik(p, ds.design, &store);
    const double exact = loglik_fixed(ds.design.eq[0].X, ds.design.eq[1].X, ds.design.eq[0].y, ds.design.eq[1].y,
                                      p.coef[0], p.coef[1], p.cov);
    CHECK(std::abs(msl - exact) <= 1e-12 * std::abs(exact));
}

TEST_CASE("single observation with a Gaussian marginal") {
    // y1 = b x + e1 with x = 2, b ~ N(0, 1), e1 ~ N(0, 1): y1 ~ N(0, 5).
    Eigen::MatrixXd X1(1, 1), X2(1, 1);
    X1 << 2.0;
    X2 << 1.0;
    const DesignMatrices dm = design(X1, Eigen::VectorXd::Zero(1), X2, Eigen::VectorXd::Zero(1), {0}, {});
    RpParameters p = RpParameters::zeros(dm);
    p.spread[0](0) = 1.0;
    p.cov = ErrorCovariance::from_sd(1.0, 1.0, 0.0);
    const DrawStore store(1, HaltonConfig::with_dimensions(1, 400));
    const double ll = simulated_loglik(p, dm, &store);
    const double second = -0.5 * std::log(2.0 * std::numbers::pi);
    const double target = -0.5 * std::log(2.0 * std::numbers::pi * 5.0);
    CHECK(std::abs((ll - second) - target) < 1e-3);
}

TEST_CASE("draw store must match the design") {
    const SyntheticDataset ds = simulate_dataset(small_truth(20, 3, 0.05, 0.05));
    const RpParameters p = small_truth(20, 3, 0.05, 0.05).parameters(ds.design);
    const DrawStore wrong_dims(20, HaltonConfig::with_dimensions(1, 10));
    const DrawStore wrong_n(19, HaltonConfig::with_dimensions(2, 10));
    CHECK_THROWS_AS(simulated_loglik(p, ds.design, &wrong_dims), std::invalid_argument);
    CHECK_THROWS_AS(simulated_loglik(p, ds.design, &wrong_n), std::invalid_argument);
    CHECK_THROWS_AS(simulated_loglik(p, ds.design, nullptr), std::invalid_argument);
}

TEST_CASE("thread count does not change the result") {
    const SyntheticDataset ds = simulate_dataset(small_truth(301, 8, 0.05, 0.08));
    const RpParameters p = small_truth(301, 8, 0.05, 0.08).parameters(ds.design);
    const DrawStore store(301, HaltonConfig::with_dimensions(2, 64));
    const double one = simulated_loglik(p, ds.design, &store, 1);
    for (int t : {2, 3, 8}) CHECK(simulated_loglik(p, ds.design, &store, t) == one);
}

TEST_CASE("layout round trip and Jacobian") {
    const SyntheticDataset ds = simulate_dataset(small_truth(30, 1, 0.05, 0.07, -0.3));
    const RpLayout layout(ds.design);
    CHECK(layout.size() == 2 + 2 + 2 + 3);
    const RpParameters p = small_truth(30, 1, 0.05, 0.07, -0.3).parameters(ds.design);
    const Eigen::VectorXd theta = layout.pack(p);
    const RpParameters q = layout.unpack(theta);
    for (int e = 0; e < 2; ++e) {
        CHECK((q.coef[e] - p.coef[e]).cwiseAbs().maxCoeff() < 1e-15);
        CHECK((q.spread[e] - p.spread[e]).cwiseAbs().maxCoeff() < 1e-15);
    }
    CHECK(q.cov.rho == doctest::Approx(-0.3).epsilon(1e-14));
    CHECK(std::sqrt(q.cov.sigma22) == doctest::Approx(0.12).epsilon(1e-14));

    const auto names = layout.natural_names();
    CHECK(names.back() == "rho");
    CHECK(names[1] == "older:x_1:mean");
    CHECK(names[2] == "older:x_1:sd");

    const Eigen::MatrixXd J = layout.natural_jacobian(theta);
    for (Eigen::Index c = 0; c < theta.size(); ++c) {
        const double h = 1e-6;
        Eigen::VectorXd up = theta, dn = theta;
        up(c) += h;
        dn(c) -= h;
        const Eigen::VectorXd col = (layout.natural_values(up) - layout.natural_values(dn)) / (2 * h);
        CHECK((J.col(c) - col).cwiseAbs().maxCoeff() < 1e-7);
    }
}

TEST_CASE("gradient step-halving consistency") {
    const SyntheticDataset ds = simulate_dataset(small_truth(80, 12, 0.05, 0.05));
    const RpLayout layout(ds.design);
    const DrawStore store(80, HaltonConfig::with_dimensions(2, 100));
    const Objective f = [&](const Eigen::VectorXd& th) { return simulated_loglik(layout.unpack(th), ds.design, &store); };
    const Eigen::VectorXd centre = layout.pack(small_truth(80, 12, 0.05, 0.05).parameters(ds.design));
    std::mt19937_64 rng(99);
    std::normal_distribution<double> z(0.0, 0.05);
    for (int k = 0; k < 5; ++k) {
        Eigen::VectorXd th = centre;
        for (Eigen::Index j = 0; j < th.size(); ++j) th(j) += z(rng);
        const Eigen::VectorXd g = central_gradient(f, th, 1e-5);
        const Eigen::VectorXd g2 = central_gradient(f, th, 0.5e-5);
        CHECK((g - g2).norm() <= 1e-4 * g.norm());
    }
}

TEST_CASE("no random coefficients: full-information ML of the fixed system") {
    const TruthSpec truth = small_truth(400, 21, 0.0, 0.0, 0.5, false);
    const SyntheticDataset ds = simulate_dataset(truth);
    const RpSureFit fit = fit_rp_sure(ds.design, nullptr);
    const SureFit f = fgls_fit(ds.design);
    CHECK(fit.convergence.converged);
    for (int e = 0; e < 2; ++e) {
        for (std::size_t c = 0; c < fit.equations[e].coefficients.size(); ++c) {
            CHECK(std::abs(fit.equations[e].coefficients[c].mu - f.equations[e].coef(c)) < 1e-4);
        }
    }
    const RpParameters p = fit.parameters();
    const double at_opt = loglik_fixed(ds.design.eq[0].X, ds.design.eq[1].X, ds.design.eq[0].y, ds.design.eq[1].y,
                                       p.coef[0], p.coef[1], p.cov);
    CHECK(std::abs(fit.loglik - at_opt) < 1e-6);
    CHECK(fit.k == 7);
    CHECK(fit.se_available);
}

TEST_CASE("fit is deterministic and improves monotonically") {
    const SyntheticDataset ds = simulate_dataset(small_truth(150, 5, 0.1, 0.1));
    const DrawStore store(150, HaltonConfig::with_dimensions(2, 50));
    RpFitOptions a, b;
    b.threads = 4;
    const RpSureFit f1 = fit_rp_sure(ds.design, &store, a);
    const RpSureFit f2 = fit_rp_sure(ds.design, &store, b);
    CHECK(f1.trajectory == f2.trajectory);
    CHECK(f1.loglik == f2.loglik);
    CHECK(f1.theta == f2.theta);
    for (std::size_t i = 1; i < f1.trajectory.size(); ++i) CHECK(f1.trajectory[i] >= f1.trajectory[i - 1]);
    CHECK(f1.sigma1 > 0.0);
    CHECK(std::abs(f1.rho) < 1.0);
    CHECK(f1.k == 9);
    CHECK(f1.param_names.size() == 9);
}

TEST_CASE("fixed-parameter data: spreads collapse") {
    const SyntheticDataset ds = simulate_dataset(small_truth(600, 44, 0.0, 0.0));
    const DrawStore store(600, HaltonConfig::with_dimensions(2, 100));
    const RpSureFit fit = fit_rp_sure(ds.design, &store);
    DesignMatrices fixed_design = ds.design;
    fixed_design.eq[0].random_columns.clear();
    fixed_design.eq[1].random_columns.clear();
    const RpSureFit fixed = fit_rp_sure(fixed_design, nullptr);
    for (const auto& eq : fit.equations) {
        for (const auto& c : eq.coefficients) {
            if (c.random) CHECK(c.sigma <= 0.01);
        }
    }
    CHECK(std::abs(fit.loglik - fixed.loglik) <= 1.0);
}

TEST_CASE("retention verdicts") {
    CHECK(rp_retention_test(0.01, 0.005, 0.0435, 0.0435 / 5.16).verdict == Retention::RetainRandom);
    CHECK(rp_retention_test(0.01, 0.005, 0.05, 0.1).verdict == Retention::PreferFixed);
    CHECK(rp_retention_test(0.0, 1.0, 1.96, 1.0).verdict == Retention::RetainRandom);
    CHECK(rp_retention_test(0.0, 1.0, -1.96, 1.0).verdict == Retention::RetainRandom);
    CHECK(rp_retention_test(0.0, 1.0, 1.9599, 1.0).verdict == Retention::PreferFixed);
    CHECK(rp_retention_test(0.1, 0.01, 0.05, std::nan("")).verdict == Retention::Indeterminate);
    CHECK(rp_retention_test(0.1, 0.01, 0.05, 0.0).verdict == Retention::Indeterminate);
    const RetentionResult r = rp_retention_test(0.1, 0.02, 0.3, 0.1);
    CHECK(r.t_mean == doctest::Approx(5.0));
    CHECK(r.t_sigma == doctest::Approx(3.0));
    CHECK(r.mean_significant);
    CHECK(std::string(to_string(Retention::PreferFixed)) == "prefer-fixed");
}

}
