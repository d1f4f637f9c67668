#pragma once

#include "fegap/model_spec.hpp"
#include "fegap/optimizer.hpp"
#include "fegap/quasirandom.hpp"
#include "fegap/sure_core.hpp"

#include <Eigen/Dense>
#include <array>
#include <optional>
#include <string>
#include <vector>

namespace fegap {

/// Natural-scale parameters of the random-parameter system. For each design
/// column, `coef` is the fixed coefficient or the random coefficient's mean;
/// `spread` is the random coefficient's standard deviation (ignored for fixed
/// columns). Random coefficients are independent normals.
struct RpParameters {
    std::array<Eigen::VectorXd, 2> coef;
    std::array<Eigen::VectorXd, 2> spread;
    ErrorCovariance cov;

    static RpParameters zeros(const DesignMatrices& dm);
};

/// Draw dimension used by each random column: equation 1 columns first, then
/// equation 2, in column order.
std::array<std::vector<int>, 2> draw_dimensions(const DesignMatrices& dm);

/// sum_i log[(1/R) sum_r phi_2(y_i - x_i' beta_i^r; Sigma)] with
/// beta_{b,i}^r = mu_b + sigma_b z[i][r][d(b)]. The per-observation average
/// is taken in log space; observations are reduced in index order regardless
/// of `threads`. `draws` may be null when the model has no random columns.
double simulated_loglik(const RpParameters& params, const DesignMatrices& dm, const DrawStore* draws,
                        int threads = 1);

/// Unconstrained optimizer coordinates <-> natural parameters. Each random
/// spread is exp(a); Sigma = L L' with L = [[exp(a11), 0], [l21, exp(a22)]].
class RpLayout {
public:
    explicit RpLayout(const DesignMatrices& dm);

    Eigen::Index size() const noexcept { return size_; }

    RpParameters unpack(const Eigen::VectorXd& theta) const;
    Eigen::VectorXd pack(const RpParameters& p) const;

    /// d(natural)/d(theta); natural order is natural_names().
    Eigen::MatrixXd natural_jacobian(const Eigen::VectorXd& theta) const;
    Eigen::VectorXd natural_values(const Eigen::VectorXd& theta) const;
    std::vector<std::string> natural_names() const;

    struct Slot {
        int eq = 0;
        int col = 0;
        bool random = false;
        Eigen::Index mean_index = 0;
        Eigen::Index spread_index = -1;
    };
    const std::vector<Slot>& slots() const noexcept { return slots_; }

private:
    std::vector<Slot> slots_;
    std::array<std::string, 2> eq_names_;
    std::array<std::vector<std::string>, 2> columns_;
    Eigen::Index a11_ = 0, l21_ = 0, a22_ = 0, size_ = 0;
};

struct RpFitOptions {
    BfgsOptions bfgs;
    double hessian_step = 1e-4;
    int threads = 1;
    double start_spread_fraction = 0.1;
    double start_spread_floor = 1e-3;
};

struct RpCoefficient {
    std::string column;
    bool random = false;
    double mu = 0.0;  // fixed value or random-coefficient mean
    double mu_se = 0.0;
    double sigma = 0.0;
    double sigma_se = 0.0;
};

struct RpEquation {
    std::string name;
    std::vector<RpCoefficient> coefficients;
};

struct Convergence {
    std::string status;
    bool converged = false;
    int iterations = 0;
    double gradient_norm = 0.0;
};

struct RpSureFit {
    std::array<RpEquation, 2> equations;
    double sigma1 = 0.0, sigma1_se = 0.0;
    double sigma2 = 0.0, sigma2_se = 0.0;
    double rho = 0.0, rho_se = 0.0;
    double loglik = 0.0;
    Eigen::Index n = 0;
    Eigen::Index k = 0;
    std::size_t draws = 0;
    std::size_t burn = 0;
    std::vector<unsigned> bases;
    Convergence convergence;
    bool se_available = false;
    std::vector<std::string> param_names;  // natural scale
    Eigen::MatrixXd param_covariance;      // natural scale, empty when SEs are unavailable
    std::vector<double> trajectory;
    Eigen::VectorXd theta;  // optimizer coordinates at the solution

    ErrorCovariance cov() const { return ErrorCovariance::from_sd(sigma1, sigma2, rho); }
    RpParameters parameters() const;
};

/// Maximum simulated likelihood from FGLS starting values. With no random
/// columns this is full-information ML of the fixed-parameter system.
RpSureFit fit_rp_sure(const DesignMatrices& dm, const DrawStore* draws, const RpFitOptions& options = {});

enum class Retention { RetainRandom, PreferFixed, Indeterminate };

const char* to_string(Retention r);

struct RetentionResult {
    Retention verdict = Retention::Indeterminate;
    double t_mean = 0.0;
    double t_sigma = 0.0;
    bool mean_significant = false;
};

/// Keeps a coefficient random when |sigma / se(sigma)| >= 1.96 (inclusive),
/// whether or not its mean is significant.
RetentionResult rp_retention_test(double mu, double mu_se, double sigma, double sigma_se);

/// `name` is "equation:column" or a column name unique across equations.
RetentionResult rp_retention_test(const RpSureFit& fit, const std::string& name);

}  // namespace fegap
