#pragma once

#include "fegap/rp_msl.hpp"

#include <Eigen/Dense>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

namespace fegap {

struct CriteriaInput {
    double loglik = 0.0;
    long k = 0;
    long n = 0;
    std::optional<Eigen::MatrixXd> fisher_inverse;  // parameter covariance, k x k
};

struct Criteria {
    double aic = 0.0;
    double caic = 0.0;
    double sbic = 0.0;
    std::optional<double> icomp;
    std::string icomp_note;  // why icomp is missing, if it is
};

/// AIC = -2lnL + 2k, CAIC = -2lnL + k(ln n + 1), SBIC = -2lnL + k ln n, and
/// ICOMP(IFIM) = -2lnL + s ln(tr(F)/s) - ln|F| with F the parameter
/// covariance and s = k once F factors as positive definite.
Criteria score_criteria(const CriteriaInput& input);

/// Two independently estimated models scored as one: logliks and k add,
/// covariances are placed block-diagonally.
CriteriaInput combine_independent(const CriteriaInput& a, const CriteriaInput& b);

struct RankedModel {
    std::string label;
    CriteriaInput input;
    Criteria criteria;
};

struct RankingTable {
    std::vector<RankedModel> models;  // ordered by SBIC, then fewer k, then label
    std::string best_aic, best_caic, best_sbic, best_icomp;
};

RankingTable rank_models(const std::vector<std::pair<std::string, CriteriaInput>>& fits);

void write_criteria_csv(std::ostream& out, const RankingTable& table);
void write_criteria_text(std::ostream& out, const RankingTable& table);

struct RpEffectSummary {
    std::string name;
    double mu = 0.0;
    double sigma = 0.0;
    double share_above_zero = 0.0;
    double share_below_zero = 0.0;
    double range_lower = 0.0;
    double range_upper = 0.0;
};

/// Share of the coefficient's normal distribution above zero, Phi(mu/sigma),
/// and the mu +/- 2 sigma range.
RpEffectSummary rp_effect(const std::string& name, double mu, double sigma);

std::vector<RpEffectSummary> rp_effects(const RpSureFit& fit);

void write_effects_csv(std::ostream& out, const std::vector<RpEffectSummary>& effects);

}  // namespace fegap
