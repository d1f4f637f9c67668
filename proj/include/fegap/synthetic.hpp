#pragma once

#include "fegap/data_pipeline.hpp"
#include "fegap/model_spec.hpp"
#include "fegap/rp_msl.hpp"

#include <Eigen/Dense>
#include <array>
#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

namespace fegap {

/// Counter-based generator: every value is a pure function of
/// (seed, observation, slot). Mixing uses the SplitMix64 finalizer
/// (increment 0x9E3779B97F4A7C15, multipliers 0xBF58476D1CE4E5B9 and
/// 0x94D049BB133111EB).
class CounterRng {
public:
    explicit CounterRng(std::uint64_t seed) : seed_(seed) {}

    std::uint64_t bits(std::uint64_t obs, std::uint64_t slot) const;
    /// Uniform on the open interval (0, 1), 53-bit resolution.
    double uniform(std::uint64_t obs, std::uint64_t slot) const;
    double normal(std::uint64_t obs, std::uint64_t slot) const;

private:
    std::uint64_t seed_;
};

struct CovariateRecipe {
    enum class Dist { Bernoulli, Uniform, Normal };
    std::string column;
    Dist dist = Dist::Uniform;
    double a = 0.0;  // p, lo, or mean
    double b = 1.0;  // unused, hi, or sd
};

/// Data-generating process: a model spec plus numeric truth aligned with the
/// design columns of each equation (intercept first when enabled).
struct TruthSpec {
    ModelSpec spec;
    std::vector<CovariateRecipe> covariates;
    std::array<std::vector<double>, 2> value;   // fixed coefficient or random mean
    std::array<std::vector<double>, 2> spread;  // random sd, 0 for fixed
    double sd1 = 0.1, sd2 = 0.1, rho = 0.0;
    std::size_t n = 100;
    std::uint64_t seed = 1;

    /// Throws SpecError on negative spreads, |rho| >= 1, or n < 1.
    void validate() const;

    RpParameters parameters(const DesignMatrices& dm) const;

    static TruthSpec from_json(const nlohmann::json& j);
};

struct SyntheticDataset {
    GarageTable table;
    std::vector<PairedGapObservation> obs;
    DesignMatrices design;
    std::array<Eigen::MatrixXd, 2> realized_coef;  // N x k_e coefficient draws
    Eigen::MatrixXd errors;                        // N x 2
};

SyntheticDataset simulate_dataset(const TruthSpec& truth);

/// Writes the dataset in the input CSV schema; EPA rating 32 and
/// my_mpg = 32 * y so the recomputed gap equals y exactly. Throws
/// std::domain_error when a response is not positive.
void write_synthetic_csv(std::ostream& out, const SyntheticDataset& data);

/// Realized per-observation coefficients, one column per equation:column.
void write_realized_draws_csv(std::ostream& out, const SyntheticDataset& data);

/// Closed-form marginal log-likelihood: y_i ~ N(mean_i, Sigma + D_i) with
/// D_i adding sigma_b^2 x_b^2 to the diagonal entry of b's equation.
double exact_marginal_loglik(const RpParameters& params, const DesignMatrices& dm);

/// Tensor-product Gauss-Hermite integration over at most 3 random dimensions.
double quadrature_loglik(const RpParameters& params, const DesignMatrices& dm, int nodes);

/// Nodes and weights for E[f(Z)], Z ~ N(0, 1) (probabilists' Hermite, Golub-Welsch).
std::pair<Eigen::VectorXd, Eigen::VectorXd> gauss_hermite(int nodes);

}  // namespace fegap
