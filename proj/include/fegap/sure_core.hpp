#pragma once

#include "fegap/model_spec.hpp"

#include <Eigen/Dense>
#include <array>
#include <string>
#include <vector>

namespace fegap {

/// Bivariate error covariance [[s11, s12], [s12, s22]] with derived rho.
struct ErrorCovariance {
    double sigma11 = 1.0;
    double sigma22 = 1.0;
    double sigma12 = 0.0;
    double rho = 0.0;

    static ErrorCovariance from_moments(double s11, double s22, double s12);
    static ErrorCovariance from_sd(double sd1, double sd2, double rho);

    Eigen::Matrix2d matrix() const;
    bool positive_definite() const;
};

/// log of the bivariate normal density at (e1, e2) with zero mean.
double log_bvn_density(double e1, double e2, const ErrorCovariance& cov);

struct OlsResult {
    Eigen::VectorXd beta;
    Eigen::VectorXd residuals;
    Eigen::VectorXd se;          // NaN when N == k
    Eigen::MatrixXd covariance;  // s^2 (X'X)^-1
    double rss = 0.0;
    double condition_number = 0.0;
};

/// Least squares via column-pivoted Householder QR. Requires full column rank
/// and rows >= cols; with rows == cols the fit interpolates and SEs are NaN.
OlsResult ols_fit(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                  const std::vector<std::string>& names = {});

enum class CovarianceDenominator { N, NMinusK };

/// Cross-products of the residuals over N (or over sqrt((N-k1)(N-k2)) when
/// dof-corrected). Throws NumericError("degenerate series") on a zero variance.
ErrorCovariance residual_covariance(const Eigen::VectorXd& res1, const Eigen::VectorXd& res2,
                                    CovarianceDenominator denom = CovarianceDenominator::N,
                                    Eigen::Index k1 = 0, Eigen::Index k2 = 0);

struct CoefficientTable {
    std::string name;
    std::vector<std::string> columns;
    Eigen::VectorXd coef;
    Eigen::VectorXd se;
};

enum class Estimator { OLS, FGLS };

struct SureFit {
    Estimator estimator = Estimator::FGLS;
    std::array<CoefficientTable, 2> equations;
    ErrorCovariance cov;
    double rho_se = 0.0;
    double residual_rho = 0.0;  // correlation of the residuals (informational for OLS)
    double loglik = 0.0;
    Eigen::Index n = 0;
    Eigen::Index k = 0;
    std::vector<std::string> param_names;
    Eigen::MatrixXd param_covariance;  // k x k, coefficients then (sigma1, sigma2[, rho])
    std::vector<std::string> diagnostics;
};

struct FglsOptions {
    CovarianceDenominator denominator = CovarianceDenominator::N;
    double condition_warning = 1e10;
};

/// Two-step Zellner estimator: per-equation OLS, Sigma from the OLS
/// residuals, then GLS on the stacked system whitened by Sigma^-1/2. Sigma
/// and rho are re-estimated from the FGLS residuals and the Gaussian
/// log-likelihood is evaluated there.
SureFit fgls_fit(const DesignMatrices& dm, const FglsOptions& options = {});

/// Equation-by-equation OLS treated as two independent univariate models:
/// loglik is the sum of the two, Sigma is diagonal, k = k1 + k2 + 2.
SureFit ols_system_fit(const DesignMatrices& dm, const FglsOptions& options = {});

/// Sum over observations of log phi_2(y1 - X1 b1, y2 - X2 b2; Sigma).
double loglik_fixed(const Eigen::MatrixXd& X1, const Eigen::MatrixXd& X2, const Eigen::VectorXd& y1,
                    const Eigen::VectorXd& y2, const Eigen::VectorXd& beta1, const Eigen::VectorXd& beta2,
                    const ErrorCovariance& cov);

/// Asymptotic covariance of the ML estimates (sigma1, sigma2, rho) from N
/// bivariate-normal observations.
Eigen::Matrix3d sd_rho_covariance(const ErrorCovariance& cov, Eigen::Index n);

}  // namespace fegap
