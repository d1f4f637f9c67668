#include "fegap/synthetic.hpp"

#include "fegap/errors.hpp"
#include "fegap/quasirandom.hpp"
#include "text_util.hpp"

#include <cmath>
#include <cstdio>
#include <limits>

namespace fegap {

namespace {

constexpr double kLog2Pi = 1.8378770664093454835606594728112;
constexpr double kEpa = 32.0;

std::uint64_t splitmix(std::uint64_t z) {
    z += 0x9E3779B97F4A7C15ull;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

CovariateRecipe parse_recipe(const nlohmann::json& j) {
    CovariateRecipe r;
    r.column = j.at("column").get<std::string>();
    const std::string dist = j.at("dist").get<std::string>();
    if (dist == "bernoulli") {
        r.dist = CovariateRecipe::Dist::Bernoulli;
        r.a = j.at("p").get<double>();
        if (r.a < 0.0 || r.a > 1.0) throw SpecError("bernoulli p out of [0, 1] for '" + r.column + "'");
    } else if (dist == "uniform") {
        r.dist = CovariateRecipe::Dist::Uniform;
        r.a = j.at("lo").get<double>();
        r.b = j.at("hi").get<double>();
        if (!(r.a < r.b)) throw SpecError("uniform needs lo < hi for '" + r.column + "'");
    } else if (dist == "normal") {
        r.dist = CovariateRecipe::Dist::Normal;
        r.a = j.at("mean").get<double>();
        r.b = j.at("sd").get<double>();
        if (r.b < 0.0) throw SpecError("normal sd must be >= 0 for '" + r.column + "'");
    } else {
        throw SpecError("unknown covariate distribution '" + dist + "'");
    }
    return r;
}

// log phi_2 for a general 2x2 covariance.
double log_bvn(double e1, double e2, double v11, double v22, double v12) {
    const double det = v11 * v22 - v12 * v12;
    const double q = (v22 * e1 * e1 - 2.0 * v12 * e1 * e2 + v11 * e2 * e2) / det;
    return -kLog2Pi - 0.5 * std::log(det) - 0.5 * q;
}

}  // namespace

std::uint64_t CounterRng::bits(std::uint64_t obs, std::uint64_t slot) const {
    std::uint64_t key = splitmix(seed_ + 0x632BE59BD9B4E019ull);
    key = splitmix(key ^ obs);
    return splitmix(key ^ (slot * 0xD1B54A32D192ED03ull));
}

double CounterRng::uniform(std::uint64_t obs, std::uint64_t slot) const {
    return (static_cast<double>(bits(obs, slot) >> 11) + 0.5) * 0x1.0p-53;
}

double CounterRng::normal(std::uint64_t obs, std::uint64_t slot) const {
    return inverse_normal_cdf(uniform(obs, slot));
}

void TruthSpec::validate() const {
    spec.validate();
    if (n < 1) throw SpecError("truth needs n >= 1");
    if (!(sd1 >= 0.0 && sd2 >= 0.0)) throw SpecError("error standard deviations must be >= 0");
    if (!(std::abs(rho) < 1.0)) throw SpecError("|rho| must be < 1");
    for (int e = 0; e < 2; ++e) {
        const auto& es = spec.equations[e];
        const std::size_t k = es.terms.size() + (es.intercept ? 1 : 0);
        if (value[e].size() != k || spread[e].size() != k) {
            throw SpecError("truth values do not match the terms of equation '" + es.name + "'");
        }
        for (double s : spread[e]) {
            if (!(s >= 0.0)) throw SpecError("random coefficient sd must be >= 0");
        }
        for (const auto& t : es.terms) {
            if (t.level) throw SpecError("synthetic data supports numeric covariates only ('" + t.name() + "')");
            bool found = false;
            for (const auto& c : covariates) found = found || c.column == t.column;
            if (!found) throw SpecError("no covariate recipe for column '" + t.column + "'");
        }
    }
}

RpParameters TruthSpec::parameters(const DesignMatrices& dm) const {
    RpParameters p = RpParameters::zeros(dm);
    for (int e = 0; e < 2; ++e) {
        for (std::size_t c = 0; c < value[e].size(); ++c) {
            p.coef[e](static_cast<Eigen::Index>(c)) = value[e][c];
            p.spread[e](static_cast<Eigen::Index>(c)) = spread[e][c];
        }
    }
    p.cov = ErrorCovariance::from_sd(sd1, sd2, rho);
    return p;
}

TruthSpec TruthSpec::from_json(const nlohmann::json& j) {
    TruthSpec t;
    try {
        t.n = j.value("n", std::size_t{100});
        t.seed = j.value("seed", std::uint64_t{1});
        for (const auto& jc : j.value("covariates", nlohmann::json::array())) t.covariates.push_back(parse_recipe(jc));
        const auto& eqs = j.at("equations");
        if (!eqs.is_array() || eqs.size() != 2) throw SpecError("truth needs exactly two equations");
        for (int e = 0; e < 2; ++e) {
            const auto& je = eqs[e];
            EquationSpec& es = t.spec.equations[e];
            es.name = je.value("name", "vehicle_" + std::to_string(e + 1));
            auto add = [&](const nlohmann::json& jt) {
                const std::string kind = jt.value("kind", std::string("fixed"));
                if (kind == "fixed") {
                    t.value[e].push_back(jt.at("value").get<double>());
                    t.spread[e].push_back(0.0);
                    return CoefficientKind::Fixed;
                }
                if (kind == "random" || kind == "random-normal") {
                    t.value[e].push_back(jt.at("mu").get<double>());
                    t.spread[e].push_back(jt.at("sigma").get<double>());
                    return CoefficientKind::RandomNormal;
                }
                throw SpecError("unknown coefficient kind '" + kind + "'");
            };
            const auto& ji = je.contains("intercept") ? je.at("intercept") : nlohmann::json(false);
            es.intercept = ji.is_object();
            if (es.intercept) es.intercept_kind = add(ji);
            for (const auto& jt : je.value("terms", nlohmann::json::array())) {
                Term term;
                term.column = jt.at("column").get<std::string>();
                term.kind = add(jt);
                es.terms.push_back(std::move(term));
            }
        }
        const auto& err = j.at("error");
        t.sd1 = err.at("sigma").at(0).get<double>();
        t.sd2 = err.at("sigma").at(1).get<double>();
        t.rho = err.value("rho", 0.0);
    } catch (const nlohmann::json::exception& ex) {
        throw SpecError(std::string("malformed truth: ") + ex.what());
    }
    t.validate();
    return t;
}

SyntheticDataset simulate_dataset(const TruthSpec& truth) {
    truth.validate();
    const CounterRng rng(truth.seed);
    const auto n = static_cast<Eigen::Index>(truth.n);
    const std::size_t n_cov = truth.covariates.size();

    SyntheticDataset ds;
    Eigen::MatrixXd cov_values(n, static_cast<Eigen::Index>(n_cov));
    for (Eigen::Index i = 0; i < n; ++i) {
        for (std::size_t c = 0; c < n_cov; ++c) {
            const CovariateRecipe& r = truth.covariates[c];
            const double u = rng.uniform(static_cast<std::uint64_t>(i), c);
            double v = 0.0;
            switch (r.dist) {
                case CovariateRecipe::Dist::Bernoulli: v = u < r.a ? 1.0 : 0.0; break;
                case CovariateRecipe::Dist::Uniform: v = r.a + (r.b - r.a) * u; break;
                case CovariateRecipe::Dist::Normal: v = r.a + r.b * inverse_normal_cdf(u); break;
            }
            cov_values(i, static_cast<Eigen::Index>(c)) = v;
        }
    }
    auto column_of = [&](const std::string& name) {
        for (std::size_t c = 0; c < n_cov; ++c) {
            if (truth.covariates[c].column == name) return static_cast<Eigen::Index>(c);
        }
        throw SpecError("no covariate recipe for column '" + name + "'");
    };

    std::uint64_t slot = n_cov;
    for (int e = 0; e < 2; ++e) {
        const EquationSpec& es = truth.spec.equations[e];
        EquationDesign& ed = ds.design.eq[e];
        ed.name = es.name;
        const Eigen::Index k = static_cast<Eigen::Index>(truth.value[e].size());
        ed.X.resize(n, k);
        Eigen::Index col = 0;
        if (es.intercept) {
            ed.X.col(col).setOnes();
            ed.columns.push_back(kInterceptName);
            if (es.intercept_kind == CoefficientKind::RandomNormal) ed.random_columns.push_back(0);
            ++col;
        }
        for (const auto& t : es.terms) {
            ed.X.col(col) = cov_values.col(column_of(t.column));
            ed.columns.push_back(t.name());
            if (t.kind == CoefficientKind::RandomNormal) ed.random_columns.push_back(static_cast<int>(col));
            ++col;
        }
        ds.realized_coef[e].resize(n, k);
        for (Eigen::Index i = 0; i < n; ++i) {
            for (Eigen::Index c = 0; c < k; ++c) {
                const double sd = truth.spread[e][c];
                const double z = rng.normal(static_cast<std::uint64_t>(i), slot + static_cast<std::uint64_t>(c));
                ds.realized_coef[e](i, c) = truth.value[e][c] + sd * z;
            }
        }
        slot += static_cast<std::uint64_t>(k);
    }

    ds.errors.resize(n, 2);
    const double rho_c = std::sqrt(1.0 - truth.rho * truth.rho);
    for (Eigen::Index i = 0; i < n; ++i) {
        const double z1 = rng.normal(static_cast<std::uint64_t>(i), slot);
        const double z2 = rng.normal(static_cast<std::uint64_t>(i), slot + 1);
        ds.errors(i, 0) = truth.sd1 * z1;
        ds.errors(i, 1) = truth.sd2 * (truth.rho * z1 + rho_c * z2);
    }
    for (int e = 0; e < 2; ++e) {
        EquationDesign& ed = ds.design.eq[e];
        ed.y = (ed.X.array() * ds.realized_coef[e].array()).rowwise().sum().matrix() + ds.errors.col(e);
    }

    for (const auto& c : truth.covariates) ds.table.covariate_columns.push_back(c.column);
    char id[32];
    for (Eigen::Index i = 0; i < n; ++i) {
        std::snprintf(id, sizeof(id), "S%06ld", static_cast<long>(i + 1));
        RawGarageRecord rec;
        rec.garage_id = id;
        for (int v = 0; v < 2; ++v) {
            rec.epa_mpg[v] = kEpa;
            rec.my_mpg[v] = kEpa * ds.design.eq[v].y(i);
        }
        rec.model_year = {2005, 2010};
        rec.us_division = "Synthetic";
        for (std::size_t c = 0; c < n_cov; ++c) {
            rec.covariates.emplace(truth.covariates[c].column,
                                   detail::format_double(cov_values(i, static_cast<Eigen::Index>(c))));
        }
        ds.design.ids.push_back(rec.garage_id);
        PairedGapObservation o;
        o.garage_id = rec.garage_id;
        for (int v = 0; v < 2; ++v) {
            o.gap[v] = ds.design.eq[v].y(i);
            o.diff[v] = rec.epa_mpg[v] - rec.my_mpg[v];
        }
        o.source = rec;
        ds.obs.push_back(std::move(o));
        ds.table.records.push_back(std::move(rec));
    }
    return ds;
}

void write_synthetic_csv(std::ostream& out, const SyntheticDataset& data) {
    for (std::size_t i = 0; i < data.table.records.size(); ++i) {
        const auto& r = data.table.records[i];
        if (!(r.my_mpg[0] > 0.0 && r.my_mpg[1] > 0.0)) {
            throw std::domain_error("synthetic response at row " + std::to_string(i + 1) +
                                    " is not positive; cannot be written as an mpg ratio");
        }
    }
    write_raw(out, data.table);
}

void write_realized_draws_csv(std::ostream& out, const SyntheticDataset& data) {
    out << "garage_id";
    for (int e = 0; e < 2; ++e) {
        for (const auto& c : data.design.eq[e].columns) out << ',' << detail::csv_escape(data.design.eq[e].name + ":" + c);
    }
    out << ",error_1,error_2\n";
    for (std::size_t i = 0; i < data.design.ids.size(); ++i) {
        const auto row = static_cast<Eigen::Index>(i);
        out << data.design.ids[i];
        for (int e = 0; e < 2; ++e) {
            for (Eigen::Index c = 0; c < data.realized_coef[e].cols(); ++c) {
                out << ',' << detail::format_double(data.realized_coef[e](row, c));
            }
        }
        out << ',' << detail::format_double(data.errors(row, 0)) << ',' << detail::format_double(data.errors(row, 1))
            << '\n';
    }
}

double exact_marginal_loglik(const RpParameters& p, const DesignMatrices& dm) {
    const ErrorCovariance& s = p.cov;
    if (!s.positive_definite()) throw NumericError("error covariance is not positive definite");
    const Eigen::VectorXd e1 = dm.eq[0].y - dm.eq[0].X * p.coef[0];
    const Eigen::VectorXd e2 = dm.eq[1].y - dm.eq[1].X * p.coef[1];
    double ll = 0.0;
    for (Eigen::Index i = 0; i < dm.rows(); ++i) {
        double v11 = s.sigma11, v22 = s.sigma22;
        for (int c : dm.eq[0].random_columns) {
            const double a = dm.eq[0].X(i, c) * p.spread[0](c);
            v11 += a * a;
        }
        for (int c : dm.eq[1].random_columns) {
            const double a = dm.eq[1].X(i, c) * p.spread[1](c);
            v22 += a * a;
        }
        ll += log_bvn(e1(i), e2(i), v11, v22, s.sigma12);
    }
    return ll;
}

std::pair<Eigen::VectorXd, Eigen::VectorXd> gauss_hermite(int nodes) {
    if (nodes < 1) throw std::invalid_argument("Gauss-Hermite needs at least one node");
    Eigen::MatrixXd J = Eigen::MatrixXd::Zero(nodes, nodes);
    for (int i = 1; i < nodes; ++i) {
        J(i, i - 1) = J(i - 1, i) = std::sqrt(static_cast<double>(i));
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(J);
    Eigen::VectorXd x = eig.eigenvalues();
    Eigen::VectorXd w = eig.eigenvectors().row(0).transpose().array().square();
    w /= w.sum();
    return {x, w};
}

double quadrature_loglik(const RpParameters& p, const DesignMatrices& dm, int nodes) {
    const std::size_t D = dm.random_count();
    if (D > 3) throw std::invalid_argument("quadrature supports at most 3 random dimensions; use the exact or MSL route");
    const ErrorCovariance& s = p.cov;
    if (!s.positive_definite()) throw NumericError("error covariance is not positive definite");
    const auto [x, w] = gauss_hermite(nodes);
    const Eigen::VectorXd logw = w.array().log();

    const auto dims = draw_dimensions(dm);
    const Eigen::VectorXd base1 = dm.eq[0].y - dm.eq[0].X * p.coef[0];
    const Eigen::VectorXd base2 = dm.eq[1].y - dm.eq[1].X * p.coef[1];

    std::size_t grid = 1;
    for (std::size_t d = 0; d < D; ++d) grid *= static_cast<std::size_t>(nodes);
    std::vector<double> terms(grid);

    double ll = 0.0;
    for (Eigen::Index i = 0; i < dm.rows(); ++i) {
        double best = -std::numeric_limits<double>::infinity();
        for (std::size_t g = 0; g < grid; ++g) {
            std::array<int, 3> idx{};
            std::size_t rem = g;
            for (std::size_t d = 0; d < D; ++d) {
                idx[d] = static_cast<int>(rem % static_cast<std::size_t>(nodes));
                rem /= static_cast<std::size_t>(nodes);
            }
            double e1 = base1(i), e2 = base2(i), lw = 0.0;
            for (std::size_t d = 0; d < D; ++d) lw += logw(idx[d]);
            for (int c : dm.eq[0].random_columns) e1 -= dm.eq[0].X(i, c) * p.spread[0](c) * x(idx[dims[0][c]]);
            for (int c : dm.eq[1].random_columns) e2 -= dm.eq[1].X(i, c) * p.spread[1](c) * x(idx[dims[1][c]]);
            terms[g] = lw + log_bvn(e1, e2, s.sigma11, s.sigma22, s.sigma12);
            best = std::max(best, terms[g]);
        }
        double acc = 0.0;
        for (double t : terms) acc += std::exp(t - best);
        ll += best + std::log(acc);
    }
    return ll;
}

}  // namespace fegap
