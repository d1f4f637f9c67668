#include "fegap/serialization.hpp"

#include <cmath>

namespace fegap {

namespace {

// NaN and infinities become null.
ojson num(double v) { return std::isfinite(v) ? ojson(v) : ojson(nullptr); }

ojson matrix_json(const Eigen::MatrixXd& m) {
    ojson rows = ojson::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        ojson row = ojson::array();
        for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(num(m(i, j)));
        rows.push_back(std::move(row));
    }
    return rows;
}

ojson sigma_json(const ErrorCovariance& c) {
    return ojson::array({ojson::array({num(c.sigma11), num(c.sigma12)}), ojson::array({num(c.sigma12), num(c.sigma22)})});
}

const char* estimator_name(Estimator e) { return e == Estimator::OLS ? "OLS" : "FGLS"; }

}  // namespace

ojson to_json(const SureFit& fit) {
    ojson j;
    j["estimator"] = estimator_name(fit.estimator);
    j["n"] = fit.n;
    j["k"] = fit.k;
    j["loglik"] = num(fit.loglik);
    j["equations"] = ojson::array();
    for (const auto& t : fit.equations) {
        ojson coef = ojson::object(), se = ojson::object();
        for (std::size_t c = 0; c < t.columns.size(); ++c) {
            coef[t.columns[c]] = num(t.coef(static_cast<Eigen::Index>(c)));
            se[t.columns[c]] = num(t.se(static_cast<Eigen::Index>(c)));
        }
        j["equations"].push_back({{"name", t.name}, {"coef", coef}, {"se", se}});
    }
    j["sigma"] = sigma_json(fit.cov);
    j["rho"] = num(fit.cov.rho);
    if (fit.estimator == Estimator::FGLS) {
        j["rho_se"] = num(fit.rho_se);
        j["rho_source"] = "FGLS residuals";
    }
    j["residual_correlation"] = num(fit.residual_rho);
    j["param_names"] = fit.param_names;
    j["param_covariance"] = matrix_json(fit.param_covariance);
    j["diagnostics"] = fit.diagnostics;
    return j;
}

ojson to_json(const RpSureFit& fit) {
    ojson j;
    j["estimator"] = "RP-SURE";
    j["n"] = fit.n;
    j["k"] = fit.k;
    j["loglik"] = num(fit.loglik);
    ojson fixed = ojson::array(), random = ojson::array();
    for (const auto& eq : fit.equations) {
        for (const auto& c : eq.coefficients) {
            if (!c.random) {
                fixed.push_back({{"equation", eq.name}, {"name", c.column}, {"value", num(c.mu)}, {"se", num(c.mu_se)}});
                continue;
            }
            const RetentionResult ret = rp_retention_test(c.mu, c.mu_se, c.sigma, c.sigma_se);
            random.push_back({{"equation", eq.name},
                              {"name", c.column},
                              {"mu", num(c.mu)},
                              {"mu_se", num(c.mu_se)},
                              {"sigma", num(c.sigma)},
                              {"sigma_se", num(c.sigma_se)},
                              {"t_mu", num(ret.t_mean)},
                              {"t_sigma", num(ret.t_sigma)},
                              {"retention", to_string(ret.verdict)}});
        }
    }
    j["fixed"] = fixed;
    j["random"] = random;
    j["sigma"] = sigma_json(fit.cov());
    j["error_sd"] = {{"sigma_1", num(fit.sigma1)}, {"sigma_1_se", num(fit.sigma1_se)},
                     {"sigma_2", num(fit.sigma2)}, {"sigma_2_se", num(fit.sigma2_se)}};
    j["rho"] = num(fit.rho);
    j["rho_se"] = num(fit.rho_se);
    j["draws"] = {{"R", fit.draws}, {"burn", fit.burn}, {"bases", fit.bases}};
    j["convergence"] = {{"status", fit.convergence.converged ? "converged" : "not converged"},
                        {"detail", fit.convergence.status},
                        {"iters", fit.convergence.iterations},
                        {"grad_norm", num(fit.convergence.gradient_norm)}};
    j["se_available"] = fit.se_available;
    j["param_names"] = fit.param_names;
    j["param_covariance"] = matrix_json(fit.param_covariance);
    return j;
}

ojson to_json(const TrimReport& r, std::optional<double> kept_gap_correlation) {
    ojson j;
    j["n_input"] = r.n_input;
    j["n_kept"] = r.n_kept;
    j["n_removed"] = r.n_removed;
    j["removed_ids"] = r.removed_ids;
    j["mu"] = {r.mu[0], r.mu[1]};
    j["sd"] = {r.sd[0], r.sd[1]};
    j["outside_per_vehicle"] = {r.outside[0], r.outside[1]};
    j["trim_sd"] = r.multiplier;
    if (kept_gap_correlation) j["gap_correlation_kept"] = num(*kept_gap_correlation);
    return j;
}

CriteriaInput FitSummary::criteria_input() const {
    CriteriaInput in;
    in.loglik = loglik;
    in.k = k;
    in.n = n;
    in.fisher_inverse = param_covariance;
    return in;
}

FitSummary read_fit_summary(const nlohmann::json& j) {
    FitSummary s;
    try {
        s.estimator = j.at("estimator").get<std::string>();
        if (j.at("loglik").is_null()) throw std::invalid_argument("fit has no finite log-likelihood");
        s.loglik = j.at("loglik").get<double>();
        s.n = j.at("n").get<long>();
        s.k = j.at("k").get<long>();
        if (j.contains("param_covariance") && j.at("param_covariance").size() == static_cast<std::size_t>(s.k)) {
            Eigen::MatrixXd m(s.k, s.k);
            bool finite = true;
            for (long r = 0; r < s.k; ++r) {
                for (long c = 0; c < s.k; ++c) {
                    const auto& v = j.at("param_covariance").at(r).at(c);
                    finite = finite && !v.is_null();
                    m(r, c) = v.is_null() ? 0.0 : v.get<double>();
                }
            }
            if (finite) s.param_covariance = std::move(m);
        }
        if (j.contains("random")) {
            for (const auto& r : j.at("random")) {
                if (r.at("mu").is_null() || r.at("sigma").is_null()) continue;
                s.random.push_back({r.at("equation").get<std::string>(), r.at("name").get<std::string>(),
                                    r.at("mu").get<double>(), r.at("sigma").get<double>()});
            }
        }
    } catch (const nlohmann::json::exception& ex) {
        throw std::invalid_argument(std::string("malformed fit file: ") + ex.what());
    }
    return s;
}

}  // namespace fegap
