#include "fegap/errors.hpp"
#include "fegap/sure_core.hpp"
#include "helpers.hpp"

#include <doctest.h>

#include <cmath>
#include <random>

using namespace fegap;
using fegap::test::design;

namespace {

Eigen::MatrixXd random_design(std::mt19937_64& rng, Eigen::Index n, Eigen::Index k) {
    std::normal_distribution<double> z;
    Eigen::MatrixXd X(n, k);
    for (Eigen::Index i = 0; i < n; ++i) {
        X(i, 0) = 1.0;
        for (Eigen::Index j = 1; j < k; ++j) X(i, j) = z(rng);
    }
    return X;
}

Eigen::VectorXd random_vector(std::mt19937_64& rng, Eigen::Index n, double sd = 1.0) {
    std::normal_distribution<double> z(0.0, sd);
    Eigen::VectorXd v(n);
    for (Eigen::Index i = 0; i < n; ++i) v(i) = z(rng);
    return v;
}

// (X'X)^-1 X'y by Gauss-Jordan elimination on the normal equations in long double.
std::vector<long double> normal_equations(const Eigen::MatrixXd& X, const Eigen::VectorXd& y) {
    const std::size_t k = static_cast<std::size_t>(X.cols());
    std::vector<std::vector<long double>> a(k, std::vector<long double>(k + 1, 0.0L));
    for (std::size_t r = 0; r < k; ++r) {
        for (std::size_t c = 0; c < k; ++c) {
            for (Eigen::Index i = 0; i < X.rows(); ++i) a[r][c] += static_cast<long double>(X(i, r)) * X(i, c);
        }
        for (Eigen::Index i = 0; i < X.rows(); ++i) a[r][k] += static_cast<long double>(X(i, r)) * y(i);
    }
    for (std::size_t p = 0; p < k; ++p) {
        std::size_t best = p;
        for (std::size_t r = p + 1; r < k; ++r) {
            if (std::fabs(a[r][p]) > std::fabs(a[best][p])) best = r;
        }
        std::swap(a[p], a[best]);
        for (std::size_t r = 0; r < k; ++r) {
            if (r == p) continue;
            const long double f = a[r][p] / a[p][p];
            for (std::size_t c = p; c <= k; ++c) a[r][c] -= f * a[p][c];
        }
    }
    std::vector<long double> b(k);
    for (std::size_t r = 0; r < k; ++r) b[r] = a[r][k] / a[r][r];
    return b;
}

// Sum of -0.5 e' S^-1 e - 0.5 ln|S| - ln(2 pi) with S inverted by hand, in long double.
long double dense_loglik(const Eigen::VectorXd& e1, const Eigen::VectorXd& e2, const ErrorCovariance& c) {
    const long double s11 = c.sigma11, s22 = c.sigma22, s12 = c.sigma12;
    const long double det = s11 * s22 - s12 * s12;
    const long double i11 = s22 / det, i22 = s11 / det, i12 = -s12 / det;
    const long double pi = 3.141592653589793238462643383279502884L;
    long double total = 0.0L;
    for (Eigen::Index i = 0; i < e1.size(); ++i) {
        const long double a = e1(i), b = e2(i);
        const long double q = a * (i11 * a + i12 * b) + b * (i12 * a + i22 * b);
        total += -0.5L * q - 0.5L * std::log(det) - std::log(2.0L * pi);
    }
    return total;
}

}  // namespace

TEST_SUITE("sure_core") {

TEST_CASE("exact interpolation") {
    Eigen::MatrixXd X(2, 2);
    X << 1, 0, 1, 1;
    const OlsResult r = ols_fit(X, Eigen::Vector2d(1, 2));
    CHECK(r.beta(0) == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(r.beta(1) == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(r.residuals.cwiseAbs().maxCoeff() < 1e-14);
    CHECK(std::isnan(r.se(0)));
}

TEST_CASE("noiseless recovery") {
    std::mt19937_64 rng(3);
    const Eigen::MatrixXd X = random_design(rng, 50, 4);
    const Eigen::Vector4d b(0.3, -1.2, 2.5, 0.01);
    const OlsResult r = ols_fit(X, X * b);
    CHECK((r.beta - b).cwiseAbs().maxCoeff() < 1e-12);
    CHECK(r.residuals.cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("OLS agrees with a normal-equations oracle") {
    std::mt19937_64 rng(17);
    for (int rep = 0; rep < 5; ++rep) {
        const Eigen::MatrixXd X = random_design(rng, 200, 4);
        const Eigen::VectorXd y = X * Eigen::Vector4d(1, 2, -3, 0.5) + random_vector(rng, 200);
        const OlsResult r = ols_fit(X, y);
        const auto b = normal_equations(X, y);
        for (int j = 0; j < 4; ++j) CHECK(std::abs(r.beta(j) - static_cast<double>(b[j])) < 1e-8);
        const Eigen::MatrixXd V = r.rss / 196.0 * (X.transpose() * X).inverse();
        CHECK((r.covariance - V).cwiseAbs().maxCoeff() < 1e-12);
    }
}

TEST_CASE("rank deficiency and short samples") {
    Eigen::MatrixXd X(4, 3);
    X << 1, 1, 2, 1, 2, 4, 1, 3, 6, 1, 4, 8;
    CHECK_THROWS_AS(ols_fit(X, Eigen::Vector4d(1, 2, 3, 4), {"a", "b", "c"}), NumericError);
    try {
        ols_fit(X, Eigen::Vector4d(1, 2, 3, 4), {"a", "b", "c"});
    } catch (const NumericError& e) {
        CHECK(std::string(e.what()).find("'c'") != std::string::npos);
    }
    CHECK_THROWS_AS(ols_fit(X.topRows(2), Eigen::Vector2d(1, 2)), NumericError);
}

TEST_CASE("residual covariance examples") {
    const ErrorCovariance a = residual_covariance(Eigen::Vector2d(1, -1), Eigen::Vector2d(2, -2));
    CHECK(a.sigma11 == 1.0);
    CHECK(a.sigma22 == 4.0);
    CHECK(a.sigma12 == 2.0);
    CHECK(a.rho == 1.0);
    const Eigen::Vector4d r(0.3, -0.1, 0.5, 2.0);
    CHECK(residual_covariance(r, r).rho == doctest::Approx(1.0));
    const ErrorCovariance o = residual_covariance(Eigen::Vector4d(1, 1, -1, -1), Eigen::Vector4d(1, -1, 1, -1));
    CHECK(o.sigma12 == 0.0);
    CHECK(o.rho == 0.0);
    CHECK_THROWS_AS(residual_covariance(Eigen::Vector2d(0, 0), Eigen::Vector2d(1, 2)), NumericError);
    const ErrorCovariance d = residual_covariance(Eigen::Vector4d(1, 1, -1, -1), Eigen::Vector4d(1, 1, -1, -1),
                                                  CovarianceDenominator::NMinusK, 2, 2);
    CHECK(d.sigma11 == 2.0);
}

TEST_CASE("identical regressors give OLS coefficients") {
    std::mt19937_64 rng(23);
    const Eigen::MatrixXd X = random_design(rng, 200, 5);
    const Eigen::VectorXd e1 = random_vector(rng, 200), e2 = 0.7 * e1 + random_vector(rng, 200, 0.5);
    const Eigen::VectorXd y1 = X * Eigen::VectorXd::LinSpaced(5, -1, 1) + e1;
    const Eigen::VectorXd y2 = X * Eigen::VectorXd::LinSpaced(5, 2, 0) + e2;
    const SureFit f = fgls_fit(design(X, y1, X, y2));
    CHECK((f.equations[0].coef - ols_fit(X, y1).beta).cwiseAbs().maxCoeff() < 1e-8);
    CHECK((f.equations[1].coef - ols_fit(X, y2).beta).cwiseAbs().maxCoeff() < 1e-8);
    CHECK(f.k == 13);
    CHECK(f.param_names.back() == "rho");
}

TEST_CASE("zero residual cross-product gives OLS coefficients") {
    std::mt19937_64 rng(29);
    const Eigen::MatrixXd X1 = random_design(rng, 60, 3), X2 = random_design(rng, 60, 2);
    auto annihilate = [](const Eigen::MatrixXd& A, const Eigen::VectorXd& v) {
        Eigen::HouseholderQR<Eigen::MatrixXd> qr(A);
        const Eigen::MatrixXd Q = qr.householderQ() * Eigen::MatrixXd::Identity(A.rows(), A.cols());
        return Eigen::VectorXd(v - Q * (Q.transpose() * v));
    };
    const Eigen::VectorXd e1 = annihilate(X1, random_vector(rng, 60));
    Eigen::MatrixXd A(60, 3);
    A << X2, e1;
    const Eigen::VectorXd e2 = annihilate(A, random_vector(rng, 60));
    const Eigen::VectorXd y1 = X1 * Eigen::Vector3d(1, 2, 3) + e1, y2 = X2 * Eigen::Vector2d(-1, 0.5) + e2;
    const SureFit f = fgls_fit(design(X1, y1, X2, y2));
    CHECK(std::abs(f.cov.rho) < 1e-12);
    CHECK((f.equations[0].coef - ols_fit(X1, y1).beta).cwiseAbs().maxCoeff() < 1e-10);
    CHECK((f.equations[1].coef - ols_fit(X2, y2).beta).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("FGLS recovers correlation and is more efficient than OLS") {
    std::mt19937_64 rng(31);
    const Eigen::Index n = 5000;
    const Eigen::MatrixXd X1 = random_design(rng, n, 3), X2 = random_design(rng, n, 3);
    const Eigen::VectorXd z1 = random_vector(rng, n), z2 = random_vector(rng, n);
    const Eigen::VectorXd e1 = z1, e2 = 0.6 * z1 + 0.8 * z2;
    const Eigen::VectorXd y1 = X1 * Eigen::Vector3d(1, 0.5, -0.5) + e1, y2 = X2 * Eigen::Vector3d(2, 1, 0) + e2;
    const DesignMatrices dm = design(X1, y1, X2, y2);
    const SureFit f = fgls_fit(dm);
    const SureFit o = ols_system_fit(dm);
    CHECK(std::abs(f.cov.rho - 0.6) < 0.05);
    for (int e = 0; e < 2; ++e) {
        CHECK(f.equations[e].se.tail(2).mean() <= o.equations[e].se.tail(2).mean());
    }
    CHECK(f.loglik > o.loglik);
    CHECK(o.k == 8);
    CHECK(o.param_names.back() == "sigma_2");
}

TEST_CASE("scale equivariance") {
    std::mt19937_64 rng(37);
    const Eigen::MatrixXd X1 = random_design(rng, 300, 3), X2 = random_design(rng, 300, 2);
    const Eigen::VectorXd z = random_vector(rng, 300);
    const Eigen::VectorXd y1 = X1 * Eigen::Vector3d(1, 2, 3) + z;
    const Eigen::VectorXd y2 = X2 * Eigen::Vector2d(1, 1) + 0.4 * z + random_vector(rng, 300);
    const SureFit a = fgls_fit(design(X1, y1, X2, y2));
    const double lambda = 3.7;
    const SureFit b = fgls_fit(design(X1, lambda * y1, X2, y2));
    CHECK((b.equations[0].coef - lambda * a.equations[0].coef).cwiseAbs().maxCoeff() < 1e-10);
    CHECK(std::sqrt(b.cov.sigma11) == doctest::Approx(lambda * std::sqrt(a.cov.sigma11)).epsilon(1e-10));
    CHECK(b.cov.rho == doctest::Approx(a.cov.rho).epsilon(1e-10));
}

TEST_CASE("bivariate density hand values") {
    const ErrorCovariance I = ErrorCovariance::from_sd(1, 1, 0);
    CHECK(log_bvn_density(0, 0, I) == doctest::Approx(-1.8378770664093453).epsilon(1e-14));
    CHECK(log_bvn_density(1, 0, I) == doctest::Approx(-1.8378770664093453 - 0.5).epsilon(1e-14));
    Eigen::MatrixXd X = Eigen::MatrixXd::Ones(1, 1);
    const Eigen::VectorXd y = Eigen::VectorXd::Zero(1), b = Eigen::VectorXd::Zero(1);
    CHECK(loglik_fixed(X, X, y, y, b, b, I) == doctest::Approx(-1.837877).epsilon(1e-6));
    CHECK_THROWS_AS(loglik_fixed(X, X, y, y, b, b, ErrorCovariance::from_sd(1, 1, 1)), NumericError);
}

TEST_CASE("loglik agrees with a dense extended-precision oracle") {
    std::mt19937_64 rng(41);
    const Eigen::MatrixXd X1 = random_design(rng, 150, 3), X2 = random_design(rng, 150, 4);
    const Eigen::VectorXd y1 = random_vector(rng, 150), y2 = random_vector(rng, 150);
    const Eigen::VectorXd b1 = random_vector(rng, 3, 0.3), b2 = random_vector(rng, 4, 0.3);
    const ErrorCovariance c = ErrorCovariance::from_sd(0.8, 1.3, -0.35);
    const double ll = loglik_fixed(X1, X2, y1, y2, b1, b2, c);
    const long double oracle = dense_loglik(y1 - X1 * b1, y2 - X2 * b2, c);
    CHECK(std::abs(ll - static_cast<double>(oracle)) < 1e-10 * std::abs(ll));
}

TEST_CASE("loglik falls when a residual moves away from zero") {
    const ErrorCovariance I = ErrorCovariance::from_sd(1, 1, 0);
    Eigen::MatrixXd X = Eigen::MatrixXd::Ones(3, 1);
    const Eigen::VectorXd y = Eigen::VectorXd::Zero(3), b = Eigen::VectorXd::Zero(1);
    const double base = loglik_fixed(X, X, y, y, b, b, I);
    for (double d : {0.1, -0.5, 2.0}) {
        Eigen::VectorXd yy = y;
        yy(1) = d;
        CHECK(loglik_fixed(X, X, yy, y, b, b, I) < base);
        CHECK(loglik_fixed(X, X, y, yy, b, b, I) < base);
    }
}

TEST_CASE("sd and rho covariance against a Fisher-information oracle") {
    const ErrorCovariance c = ErrorCovariance::from_sd(0.7, 1.4, 0.45);
    const Eigen::Matrix3d V = sd_rho_covariance(c, 1);
    // Per-observation Fisher information of (s1, s2, r) for a zero-mean bivariate normal.
    const double s1 = 0.7, s2 = 1.4, r = 0.45, q = 1 - r * r;
    Eigen::Matrix3d F;
    F << (2 - r * r) / (s1 * s1 * q), -r * r / (s1 * s2 * q), -r / (s1 * q),
         -r * r / (s1 * s2 * q), (2 - r * r) / (s2 * s2 * q), -r / (s2 * q),
         -r / (s1 * q), -r / (s2 * q), (1 + r * r) / (q * q);
    CHECK((V - F.inverse()).cwiseAbs().maxCoeff() < 1e-12);
    CHECK(V(2, 2) == doctest::Approx(q * q).epsilon(1e-12));
}

}
