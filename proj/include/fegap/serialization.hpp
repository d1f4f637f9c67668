#pragma once

#include "fegap/data_pipeline.hpp"
#include "fegap/model_selection.hpp"
#include "fegap/rp_msl.hpp"
#include "fegap/sure_core.hpp"

#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

namespace fegap {

using ojson = nlohmann::ordered_json;

ojson to_json(const SureFit& fit);
ojson to_json(const RpSureFit& fit);
ojson to_json(const TrimReport& report, std::optional<double> kept_gap_correlation = std::nullopt);

/// The parts of a fit file that model comparison and effect reports need.
struct FitSummary {
    std::string estimator;
    double loglik = 0.0;
    long n = 0;
    long k = 0;
    std::optional<Eigen::MatrixXd> param_covariance;
    struct Random {
        std::string equation;
        std::string name;
        double mu = 0.0;
        double sigma = 0.0;
    };
    std::vector<Random> random;

    CriteriaInput criteria_input() const;
};

/// Throws std::invalid_argument when required fields are missing.
FitSummary read_fit_summary(const nlohmann::json& j);

}  // namespace fegap
