#pragma once

#include "fegap/data_pipeline.hpp"
#include "fegap/model_spec.hpp"
#include "fegap/synthetic.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

namespace fegap::test {

inline RawGarageRecord record(const std::string& id, double my1, double epa1, double my2, double epa2,
                              std::string division = "Pacific", int year1 = 2005, int year2 = 2010) {
    RawGarageRecord r;
    r.garage_id = id;
    r.my_mpg = {my1, my2};
    r.epa_mpg = {epa1, epa2};
    r.model_year = {year1, year2};
    r.us_division = std::move(division);
    return r;
}

inline PairedGapObservation gaps(const std::string& id, double g1, double g2) {
    return compute_gaps({record(id, g1 * 30.0, 30.0, g2 * 30.0, 30.0)}).front();
}

inline DesignMatrices design(const Eigen::MatrixXd& X1, const Eigen::VectorXd& y1, const Eigen::MatrixXd& X2,
                             const Eigen::VectorXd& y2, std::vector<int> random1 = {}, std::vector<int> random2 = {}) {
    DesignMatrices dm;
    const Eigen::MatrixXd* X[2] = {&X1, &X2};
    const Eigen::VectorXd* y[2] = {&y1, &y2};
    std::vector<int>* rnd[2] = {&random1, &random2};
    for (int e = 0; e < 2; ++e) {
        dm.eq[e].name = e == 0 ? "older" : "newer";
        dm.eq[e].X = *X[e];
        dm.eq[e].y = *y[e];
        for (Eigen::Index c = 0; c < X[e]->cols(); ++c) dm.eq[e].columns.push_back("c" + std::to_string(c));
        dm.eq[e].random_columns = *rnd[e];
    }
    for (Eigen::Index i = 0; i < X1.rows(); ++i) dm.ids.push_back("g" + std::to_string(i));
    return dm;
}

// Intercept plus one continuous covariate per equation; x_v ~ uniform(0, 1).
inline TruthSpec small_truth(std::size_t n, std::uint64_t seed, double spread1, double spread2, double rho = 0.4,
                             bool random = true) {
    const char* kind = random ? "random" : "fixed";
    nlohmann::json j = {
        {"n", n},
        {"seed", seed},
        {"covariates",
         {{{"column", "x_1"}, {"dist", "uniform"}, {"lo", 0.0}, {"hi", 1.0}},
          {{"column", "x_2"}, {"dist", "uniform"}, {"lo", 0.0}, {"hi", 1.0}}}},
        {"equations",
         {{{"name", "older"},
           {"intercept", {{"kind", "fixed"}, {"value", 0.85}}},
           {"terms", {random ? nlohmann::json{{"column", "x_1"}, {"kind", kind}, {"mu", -0.04}, {"sigma", spread1}}
                             : nlohmann::json{{"column", "x_1"}, {"kind", kind}, {"value", -0.04}}}}},
          {{"name", "newer"},
           {"intercept", {{"kind", "fixed"}, {"value", 0.9}}},
           {"terms", {random ? nlohmann::json{{"column", "x_2"}, {"kind", kind}, {"mu", 0.03}, {"sigma", spread2}}
                             : nlohmann::json{{"column", "x_2"}, {"kind", kind}, {"value", 0.03}}}}}}},
        {"error", {{"sigma", {0.1, 0.12}}, {"rho", rho}}}};
    return TruthSpec::from_json(j);
}

inline std::filesystem::path scratch_dir(const std::string& name) {
    const auto dir = std::filesystem::temp_directory_path() / ("fegap_test_" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

inline std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline void spit(const std::filesystem::path& p, const std::string& text) {
    std::ofstream out(p, std::ios::binary);
    out << text;
}

}  // namespace fegap::test
