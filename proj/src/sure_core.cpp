#include "fegap/sure_core.hpp"

#include "fegap/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

namespace fegap {

namespace {

constexpr double kLog2Pi = 1.8378770664093454835606594728112;  // ln(2*pi)

double condition_of_upper(const Eigen::MatrixXd& R) {
    if (R.cols() == 0) return 1.0;
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(R);
    const auto& s = svd.singularValues();
    const double smallest = s(s.size() - 1);
    return smallest > 0.0 ? s(0) / smallest : std::numeric_limits<double>::infinity();
}

// (Z'Z)^-1 from a column-pivoted QR of Z.
Eigen::MatrixXd inverse_gram(const Eigen::ColPivHouseholderQR<Eigen::MatrixXd>& qr, Eigen::Index k) {
    const Eigen::MatrixXd R = qr.matrixR().topLeftCorner(k, k).triangularView<Eigen::Upper>();
    const Eigen::MatrixXd Rinv =
        R.triangularView<Eigen::Upper>().solve(Eigen::MatrixXd::Identity(k, k));
    const Eigen::MatrixXd inner = Rinv * Rinv.transpose();
    const auto& P = qr.colsPermutation();
    return P * inner * P.transpose();
}

std::string condition_note(const std::string& what, double cond) {
    std::ostringstream os;
    os << what << ": condition number " << cond << " exceeds 1e10";
    return os.str();
}

std::vector<std::string> default_names(Eigen::Index k) {
    std::vector<std::string> names;
    for (Eigen::Index j = 0; j < k; ++j) names.push_back("x" + std::to_string(j));
    return names;
}

}  // namespace

ErrorCovariance ErrorCovariance::from_moments(double s11, double s22, double s12) {
    ErrorCovariance c;
    c.sigma11 = s11;
    c.sigma22 = s22;
    c.sigma12 = s12;
    c.rho = (s11 > 0.0 && s22 > 0.0) ? std::clamp(s12 / std::sqrt(s11 * s22), -1.0, 1.0) : 0.0;
    return c;
}

ErrorCovariance ErrorCovariance::from_sd(double sd1, double sd2, double rho) {
    ErrorCovariance c;
    c.sigma11 = sd1 * sd1;
    c.sigma22 = sd2 * sd2;
    c.sigma12 = rho * sd1 * sd2;
    c.rho = rho;
    return c;
}

Eigen::Matrix2d ErrorCovariance::matrix() const {
    Eigen::Matrix2d m;
    m << sigma11, sigma12, sigma12, sigma22;
    return m;
}

bool ErrorCovariance::positive_definite() const {
    return sigma11 > 0.0 && sigma22 > 0.0 && sigma11 * sigma22 - sigma12 * sigma12 > 0.0;
}

double log_bvn_density(double e1, double e2, const ErrorCovariance& cov) {
    const double det = cov.sigma11 * cov.sigma22 - cov.sigma12 * cov.sigma12;
    const double q = (cov.sigma22 * e1 * e1 - 2.0 * cov.sigma12 * e1 * e2 + cov.sigma11 * e2 * e2) / det;
    return -kLog2Pi - 0.5 * std::log(det) - 0.5 * q;
}

OlsResult ols_fit(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const std::vector<std::string>& names) {
    const Eigen::Index n = X.rows(), k = X.cols();
    if (y.size() != n) throw std::invalid_argument("ols_fit: X and y row counts differ");
    if (n < k) {
        throw NumericError("ols_fit: " + std::to_string(n) + " observations for " + std::to_string(k) +
                           " coefficients");
    }
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(X);
    if (qr.rank() < k) check_full_rank(X, names.empty() ? default_names(k) : names, "ols_fit");

    OlsResult out;
    out.beta = qr.solve(y);
    out.residuals = y - X * out.beta;
    out.rss = out.residuals.squaredNorm();
    out.condition_number = condition_of_upper(qr.matrixR().topLeftCorner(k, k).triangularView<Eigen::Upper>());
    const Eigen::MatrixXd xtx_inv = inverse_gram(qr, k);
    if (n > k) {
        const double s2 = out.rss / static_cast<double>(n - k);
        out.covariance = s2 * xtx_inv;
        out.se = out.covariance.diagonal().cwiseSqrt();
    } else {
        out.covariance = Eigen::MatrixXd::Constant(k, k, std::numeric_limits<double>::quiet_NaN());
        out.se = Eigen::VectorXd::Constant(k, std::numeric_limits<double>::quiet_NaN());
    }
    return out;
}

ErrorCovariance residual_covariance(const Eigen::VectorXd& res1, const Eigen::VectorXd& res2,
                                    CovarianceDenominator denom, Eigen::Index k1, Eigen::Index k2) {
    if (res1.size() != res2.size()) throw std::invalid_argument("residual vectors differ in length");
    const auto n = static_cast<double>(res1.size());
    if (res1.size() < 2) throw NumericError("residual covariance needs at least two observations");
    double d11 = n, d22 = n, d12 = n;
    if (denom == CovarianceDenominator::NMinusK) {
        d11 = n - static_cast<double>(k1);
        d22 = n - static_cast<double>(k2);
        d12 = std::sqrt(d11 * d22);
        if (d11 <= 0.0 || d22 <= 0.0) throw NumericError("no residual degrees of freedom");
    }
    const double s11 = res1.squaredNorm() / d11;
    const double s22 = res2.squaredNorm() / d22;
    const double s12 = res1.dot(res2) / d12;
    if (s11 <= 0.0 || s22 <= 0.0) throw NumericError("degenerate series");
    return ErrorCovariance::from_moments(s11, s22, s12);
}

double loglik_fixed(const Eigen::MatrixXd& X1, const Eigen::MatrixXd& X2, const Eigen::VectorXd& y1,
                    const Eigen::VectorXd& y2, const Eigen::VectorXd& beta1, const Eigen::VectorXd& beta2,
                    const ErrorCovariance& cov) {
    if (!cov.positive_definite()) throw NumericError("error covariance is not positive definite");
    const Eigen::VectorXd e1 = y1 - X1 * beta1;
    const Eigen::VectorXd e2 = y2 - X2 * beta2;
    double ll = 0.0;
    for (Eigen::Index i = 0; i < e1.size(); ++i) ll += log_bvn_density(e1(i), e2(i), cov);
    return ll;
}

Eigen::Matrix3d sd_rho_covariance(const ErrorCovariance& c, Eigen::Index n) {
    // Cov(s_ij, s_kl) = (s_ik s_jl + s_il s_jk) / N for vech = (s11, s12, s22).
    const double s11 = c.sigma11, s22 = c.sigma22, s12 = c.sigma12;
    Eigen::Matrix3d V;
    V << 2 * s11 * s11, 2 * s11 * s12, 2 * s12 * s12,
         2 * s11 * s12, s11 * s22 + s12 * s12, 2 * s12 * s22,
         2 * s12 * s12, 2 * s12 * s22, 2 * s22 * s22;
    V /= static_cast<double>(n);
    const double sd1 = std::sqrt(s11), sd2 = std::sqrt(s22);
    Eigen::Matrix3d J;  // rows: sigma1, sigma2, rho; cols: s11, s12, s22
    J << 0.5 / sd1, 0.0, 0.0,
         0.0, 0.0, 0.5 / sd2,
         -0.5 * c.rho / s11, 1.0 / (sd1 * sd2), -0.5 * c.rho / s22;
    return J * V * J.transpose();
}

SureFit fgls_fit(const DesignMatrices& dm, const FglsOptions& options) {
    const Eigen::MatrixXd& X1 = dm.eq[0].X;
    const Eigen::MatrixXd& X2 = dm.eq[1].X;
    const Eigen::VectorXd& y1 = dm.eq[0].y;
    const Eigen::VectorXd& y2 = dm.eq[1].y;
    const Eigen::Index n = X1.rows(), k1 = X1.cols(), k2 = X2.cols();
    if (X2.rows() != n) throw std::invalid_argument("fgls_fit: equations differ in row count");

    SureFit fit;
    fit.estimator = Estimator::FGLS;
    fit.n = n;

    const OlsResult o1 = ols_fit(X1, y1, dm.eq[0].columns);
    const OlsResult o2 = ols_fit(X2, y2, dm.eq[1].columns);
    const ErrorCovariance s0 = residual_covariance(o1.residuals, o2.residuals, options.denominator, k1, k2);
    if (!s0.positive_definite() || std::abs(s0.rho) >= 1.0) {
        throw NumericError("degenerate residual covariance");
    }

    // Whiten each observation's pair by L^-1 where Sigma = L L'.
    const double l11 = std::sqrt(s0.sigma11);
    const double l21 = s0.sigma12 / l11;
    const double l22 = std::sqrt(s0.sigma22 - l21 * l21);
    const double w11 = 1.0 / l11, w21 = -l21 / (l11 * l22), w22 = 1.0 / l22;

    Eigen::MatrixXd Z = Eigen::MatrixXd::Zero(2 * n, k1 + k2);
    Eigen::VectorXd w(2 * n);
    Z.topLeftCorner(n, k1) = w11 * X1;
    Z.bottomLeftCorner(n, k1) = w21 * X1;
    Z.bottomRightCorner(n, k2) = w22 * X2;
    w.head(n) = w11 * y1;
    w.tail(n) = w21 * y1 + w22 * y2;

    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(Z);
    if (qr.rank() < k1 + k2) throw NumericError("fgls_fit: stacked system is rank deficient");
    const Eigen::VectorXd beta = qr.solve(w);
    const Eigen::MatrixXd coef_cov = inverse_gram(qr, k1 + k2);
    const double cond = condition_of_upper(
        qr.matrixR().topLeftCorner(k1 + k2, k1 + k2).triangularView<Eigen::Upper>());
    if (cond > options.condition_warning) fit.diagnostics.push_back(condition_note("fgls", cond));

    for (int e = 0; e < 2; ++e) {
        CoefficientTable& t = fit.equations[e];
        t.name = dm.eq[e].name;
        t.columns = dm.eq[e].columns;
        const Eigen::Index off = e == 0 ? 0 : k1;
        const Eigen::Index k = e == 0 ? k1 : k2;
        t.coef = beta.segment(off, k);
        t.se = coef_cov.diagonal().segment(off, k).cwiseSqrt();
    }

    const Eigen::VectorXd r1 = y1 - X1 * fit.equations[0].coef;
    const Eigen::VectorXd r2 = y2 - X2 * fit.equations[1].coef;
    fit.cov = residual_covariance(r1, r2, options.denominator, k1, k2);
    fit.residual_rho = fit.cov.rho;
    if (!fit.cov.positive_definite()) throw NumericError("degenerate residual covariance");
    fit.loglik = loglik_fixed(X1, X2, y1, y2, fit.equations[0].coef, fit.equations[1].coef, fit.cov);

    fit.k = k1 + k2 + 3;
    fit.param_covariance = Eigen::MatrixXd::Zero(fit.k, fit.k);
    fit.param_covariance.topLeftCorner(k1 + k2, k1 + k2) = coef_cov;
    const Eigen::Matrix3d sr = sd_rho_covariance(fit.cov, n);
    fit.param_covariance.bottomRightCorner(3, 3) = sr;
    fit.rho_se = std::sqrt(sr(2, 2));
    for (const auto& t : fit.equations) {
        for (const auto& c : t.columns) fit.param_names.push_back(t.name + ":" + c);
    }
    fit.param_names.insert(fit.param_names.end(), {"sigma_1", "sigma_2", "rho"});
    return fit;
}

SureFit ols_system_fit(const DesignMatrices& dm, const FglsOptions& options) {
    const Eigen::Index n = dm.rows();
    SureFit fit;
    fit.estimator = Estimator::OLS;
    fit.n = n;
    std::array<OlsResult, 2> ols;
    Eigen::Index ktot = 0;
    for (int e = 0; e < 2; ++e) {
        ols[e] = ols_fit(dm.eq[e].X, dm.eq[e].y, dm.eq[e].columns);
        if (ols[e].condition_number > options.condition_warning) {
            fit.diagnostics.push_back(condition_note(dm.eq[e].name, ols[e].condition_number));
        }
        CoefficientTable& t = fit.equations[e];
        t.name = dm.eq[e].name;
        t.columns = dm.eq[e].columns;
        t.coef = ols[e].beta;
        t.se = ols[e].se;
        ktot += dm.eq[e].X.cols();
    }
    const double nd = static_cast<double>(n);
    const double s11 = ols[0].rss / nd, s22 = ols[1].rss / nd;
    fit.cov = ErrorCovariance::from_moments(s11, s22, 0.0);
    fit.residual_rho = (s11 > 0.0 && s22 > 0.0) ? ols[0].residuals.dot(ols[1].residuals) / nd / std::sqrt(s11 * s22)
                                                 : 0.0;
    fit.loglik = 0.0;
    for (double s : {s11, s22}) fit.loglik += -0.5 * nd * (kLog2Pi + std::log(s) + 1.0);

    fit.k = ktot + 2;
    fit.param_covariance = Eigen::MatrixXd::Zero(fit.k, fit.k);
    Eigen::Index off = 0;
    for (int e = 0; e < 2; ++e) {
        const Eigen::Index k = dm.eq[e].X.cols();
        fit.param_covariance.block(off, off, k, k) = ols[e].covariance;
        off += k;
    }
    fit.param_covariance(off, off) = s11 / (2.0 * nd);
    fit.param_covariance(off + 1, off + 1) = s22 / (2.0 * nd);
    for (const auto& t : fit.equations) {
        for (const auto& c : t.columns) fit.param_names.push_back(t.name + ":" + c);
    }
    fit.param_names.insert(fit.param_names.end(), {"sigma_1", "sigma_2"});
    return fit;
}

}  // namespace fegap
