#include "fegap/rp_msl.hpp"

#include "fegap/errors.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <limits>
#include <thread>

namespace fegap {

namespace {

constexpr double kLog2Pi = 1.8378770664093454835606594728112;

struct RandomTerm {
    int col;
    int dim;
    double spread;
};

}  // namespace

RpParameters RpParameters::zeros(const DesignMatrices& dm) {
    RpParameters p;
    for (int e = 0; e < 2; ++e) {
        p.coef[e] = Eigen::VectorXd::Zero(dm.eq[e].X.cols());
        p.spread[e] = Eigen::VectorXd::Zero(dm.eq[e].X.cols());
    }
    return p;
}

std::array<std::vector<int>, 2> draw_dimensions(const DesignMatrices& dm) {
    std::array<std::vector<int>, 2> dims;
    int d = 0;
    for (int e = 0; e < 2; ++e) {
        dims[e].assign(dm.eq[e].X.cols(), -1);
        for (int c : dm.eq[e].random_columns) dims[e][c] = d++;
    }
    return dims;
}

double simulated_loglik(const RpParameters& params, const DesignMatrices& dm, const DrawStore* draws, int threads) {
    const Eigen::Index n = dm.rows();
    const std::size_t n_random = dm.random_count();
    if (n_random > 0) {
        if (draws == nullptr) throw std::invalid_argument("simulated_loglik: random columns need a draw store");
        if (draws->dims() != n_random) {
            throw std::invalid_argument("simulated_loglik: draw store has " + std::to_string(draws->dims()) +
                                        " dimensions, model has " + std::to_string(n_random) + " random columns");
        }
        if (draws->n_obs() != static_cast<std::size_t>(n)) {
            throw std::invalid_argument("simulated_loglik: draw store built for a different sample size");
        }
    }
    const ErrorCovariance& cov = params.cov;
    if (!cov.positive_definite()) throw NumericError("error covariance is not positive definite");
    const double l11 = std::sqrt(cov.sigma11);
    const double l21 = cov.sigma12 / l11;
    const double l22 = std::sqrt(cov.sigma22 - l21 * l21);
    const double norm_const = -kLog2Pi - std::log(l11) - std::log(l22);

    const auto dims = draw_dimensions(dm);
    std::array<std::vector<RandomTerm>, 2> terms;
    for (int e = 0; e < 2; ++e) {
        for (int c : dm.eq[e].random_columns) terms[e].push_back({c, dims[e][c], params.spread[e](c)});
    }
    const Eigen::VectorXd base1 = dm.eq[0].y - dm.eq[0].X * params.coef[0];
    const Eigen::VectorXd base2 = dm.eq[1].y - dm.eq[1].X * params.coef[1];

    std::vector<double> contrib(static_cast<std::size_t>(n));
    auto work = [&](Eigen::Index lo, Eigen::Index hi) {
        const std::size_t R = n_random > 0 ? draws->draws() : 1;
        const double log_r = std::log(static_cast<double>(R));
        std::vector<double> lr(R);
        std::array<std::vector<double>, 2> xs;
        for (Eigen::Index i = lo; i < hi; ++i) {
            if (n_random == 0) {
                const double u1 = base1(i) / l11;
                const double u2 = (base2(i) - l21 * u1) / l22;
                contrib[i] = norm_const - 0.5 * (u1 * u1 + u2 * u2);
                continue;
            }
            for (int e = 0; e < 2; ++e) {
                xs[e].resize(terms[e].size());
                for (std::size_t t = 0; t < terms[e].size(); ++t) {
                    xs[e][t] = dm.eq[e].X(i, terms[e][t].col) * terms[e][t].spread;
                }
            }
            const std::span<const double> z = draws->observation(static_cast<std::size_t>(i));
            const std::size_t D = draws->dims();
            double best = -std::numeric_limits<double>::infinity();
            for (std::size_t r = 0; r < R; ++r) {
                const double* zr = z.data() + r * D;
                double e1 = base1(i), e2 = base2(i);
                for (std::size_t t = 0; t < terms[0].size(); ++t) e1 -= xs[0][t] * zr[terms[0][t].dim];
                for (std::size_t t = 0; t < terms[1].size(); ++t) e2 -= xs[1][t] * zr[terms[1][t].dim];
                const double u1 = e1 / l11;
                const double u2 = (e2 - l21 * u1) / l22;
                lr[r] = norm_const - 0.5 * (u1 * u1 + u2 * u2);
                best = std::max(best, lr[r]);
            }
            if (!std::isfinite(best)) {
                throw NumericError("simulated likelihood underflows for every draw of observation " +
                                   std::to_string(i + 1));
            }
            double acc = 0.0;
            for (std::size_t r = 0; r < R; ++r) acc += std::exp(lr[r] - best);
            contrib[i] = best + std::log(acc) - log_r;
        }
    };

    const int workers = std::clamp<int>(threads, 1, static_cast<int>(std::max<Eigen::Index>(n, 1)));
    if (workers == 1) {
        work(0, n);
    } else {
        std::vector<std::thread> pool;
        std::vector<std::exception_ptr> errors(workers);
        const Eigen::Index chunk = (n + workers - 1) / workers;
        for (int w = 0; w < workers; ++w) {
            const Eigen::Index lo = std::min<Eigen::Index>(n, w * chunk);
            const Eigen::Index hi = std::min<Eigen::Index>(n, lo + chunk);
            pool.emplace_back([&, w, lo, hi] {
                try {
                    work(lo, hi);
                } catch (...) {
                    errors[w] = std::current_exception();
                }
            });
        }
        for (auto& t : pool) t.join();
        for (auto& e : errors) {
            if (e) std::rethrow_exception(e);
        }
    }

    double ll = 0.0;
    for (double c : contrib) ll += c;
    return ll;
}

RpLayout::RpLayout(const DesignMatrices& dm) {
    Eigen::Index idx = 0;
    for (int e = 0; e < 2; ++e) {
        eq_names_[e] = dm.eq[e].name;
        columns_[e] = dm.eq[e].columns;
        const auto& rc = dm.eq[e].random_columns;
        for (int c = 0; c < static_cast<int>(dm.eq[e].X.cols()); ++c) {
            Slot s;
            s.eq = e;
            s.col = c;
            s.random = std::find(rc.begin(), rc.end(), c) != rc.end();
            s.mean_index = idx++;
            if (s.random) s.spread_index = idx++;
            slots_.push_back(s);
        }
    }
    a11_ = idx++;
    l21_ = idx++;
    a22_ = idx++;
    size_ = idx;
}

RpParameters RpLayout::unpack(const Eigen::VectorXd& theta) const {
    RpParameters p;
    for (int e = 0; e < 2; ++e) {
        p.coef[e] = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(columns_[e].size()));
        p.spread[e] = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(columns_[e].size()));
    }
    for (const auto& s : slots_) {
        p.coef[s.eq](s.col) = theta(s.mean_index);
        if (s.random) p.spread[s.eq](s.col) = std::exp(theta(s.spread_index));
    }
    const double l11 = std::exp(theta(a11_));
    const double l21 = theta(l21_);
    const double l22 = std::exp(theta(a22_));
    p.cov.sigma11 = l11 * l11;
    p.cov.sigma12 = l11 * l21;
    p.cov.sigma22 = l21 * l21 + l22 * l22;
    p.cov.rho = l21 / std::sqrt(p.cov.sigma22);
    return p;
}

Eigen::VectorXd RpLayout::pack(const RpParameters& p) const {
    Eigen::VectorXd theta(size_);
    for (const auto& s : slots_) {
        theta(s.mean_index) = p.coef[s.eq](s.col);
        if (s.random) theta(s.spread_index) = std::log(p.spread[s.eq](s.col));
    }
    if (!p.cov.positive_definite()) throw NumericError("starting covariance is not positive definite");
    const double l11 = std::sqrt(p.cov.sigma11);
    const double l21 = p.cov.sigma12 / l11;
    const double l22 = std::sqrt(p.cov.sigma22 - l21 * l21);
    theta(a11_) = std::log(l11);
    theta(l21_) = l21;
    theta(a22_) = std::log(l22);
    return theta;
}

std::vector<std::string> RpLayout::natural_names() const {
    std::vector<std::string> names;
    for (const auto& s : slots_) {
        const std::string base = eq_names_[s.eq] + ":" + columns_[s.eq][s.col];
        names.push_back(s.random ? base + ":mean" : base);
        if (s.random) names.push_back(base + ":sd");
    }
    names.insert(names.end(), {"sigma_1", "sigma_2", "rho"});
    return names;
}

Eigen::VectorXd RpLayout::natural_values(const Eigen::VectorXd& theta) const {
    Eigen::VectorXd v(size_);
    for (const auto& s : slots_) {
        v(s.mean_index) = theta(s.mean_index);
        if (s.random) v(s.spread_index) = std::exp(theta(s.spread_index));
    }
    const double l11 = std::exp(theta(a11_)), l21 = theta(l21_), l22 = std::exp(theta(a22_));
    const double sd2 = std::sqrt(l21 * l21 + l22 * l22);
    v(a11_) = l11;
    v(l21_) = sd2;
    v(a22_) = l21 / sd2;
    return v;
}

Eigen::MatrixXd RpLayout::natural_jacobian(const Eigen::VectorXd& theta) const {
    Eigen::MatrixXd J = Eigen::MatrixXd::Zero(size_, size_);
    for (const auto& s : slots_) {
        J(s.mean_index, s.mean_index) = 1.0;
        if (s.random) J(s.spread_index, s.spread_index) = std::exp(theta(s.spread_index));
    }
    const double l11 = std::exp(theta(a11_)), l21 = theta(l21_), l22 = std::exp(theta(a22_));
    const double sd2 = std::sqrt(l21 * l21 + l22 * l22);
    const double sd2_cubed = sd2 * sd2 * sd2;
    // Natural rows (sigma1, sigma2, rho) sit at the positions of (a11, l21, a22).
    J(a11_, a11_) = l11;
    J(l21_, l21_) = l21 / sd2;
    J(l21_, a22_) = l22 * l22 / sd2;
    J(a22_, l21_) = l22 * l22 / sd2_cubed;
    J(a22_, a22_) = -l21 * l22 * l22 / sd2_cubed;
    return J;
}

RpParameters RpSureFit::parameters() const {
    RpParameters p;
    for (int e = 0; e < 2; ++e) {
        const auto& cs = equations[e].coefficients;
        p.coef[e].resize(static_cast<Eigen::Index>(cs.size()));
        p.spread[e].resize(static_cast<Eigen::Index>(cs.size()));
        for (std::size_t c = 0; c < cs.size(); ++c) {
            p.coef[e](c) = cs[c].mu;
            p.spread[e](c) = cs[c].random ? cs[c].sigma : 0.0;
        }
    }
    p.cov = cov();
    return p;
}

RpSureFit fit_rp_sure(const DesignMatrices& dm, const DrawStore* draws, const RpFitOptions& options) {
    const RpLayout layout(dm);
    const SureFit start = fgls_fit(dm);

    RpParameters p0 = RpParameters::zeros(dm);
    for (int e = 0; e < 2; ++e) {
        p0.coef[e] = start.equations[e].coef;
        for (int c : dm.eq[e].random_columns) {
            p0.spread[e](c) = std::max(options.start_spread_fraction * std::abs(p0.coef[e](c)),
                                       options.start_spread_floor);
        }
    }
    p0.cov = start.cov;
    const Eigen::VectorXd theta0 = layout.pack(p0);

    const Objective objective = [&](const Eigen::VectorXd& theta) {
        try {
            return simulated_loglik(layout.unpack(theta), dm, draws, options.threads);
        } catch (const NumericError&) {
            return -std::numeric_limits<double>::infinity();
        }
    };
    const GradientNorm natural_norm = [&](const Eigen::VectorXd& theta, const Eigen::VectorXd& g) {
        const Eigen::MatrixXd J = layout.natural_jacobian(theta);
        return J.transpose().partialPivLu().solve(g).lpNorm<Eigen::Infinity>();
    };

    const BfgsResult opt = bfgs_maximize(objective, theta0, options.bfgs, natural_norm);

    RpSureFit fit;
    fit.n = dm.rows();
    fit.k = layout.size();
    fit.loglik = opt.value;
    fit.theta = opt.x;
    fit.trajectory = opt.trajectory;
    fit.convergence = {opt.status, opt.converged, opt.iterations, opt.gradient_norm};
    if (draws != nullptr && dm.random_count() > 0) {
        fit.draws = draws->draws();
        fit.burn = draws->config().burn;
        fit.bases = draws->config().bases;
    }
    fit.param_names = layout.natural_names();

    const Eigen::VectorXd nat = layout.natural_values(opt.x);
    Eigen::VectorXd nat_se = Eigen::VectorXd::Constant(fit.k, std::numeric_limits<double>::quiet_NaN());
    const Eigen::MatrixXd H = central_hessian(objective, opt.x, options.hessian_step);
    if (H.allFinite()) {
        const Eigen::MatrixXd neg_h = -0.5 * (H + H.transpose());
        Eigen::LLT<Eigen::MatrixXd> llt(neg_h);
        if (llt.info() == Eigen::Success) {
            const Eigen::MatrixXd cov_theta = llt.solve(Eigen::MatrixXd::Identity(fit.k, fit.k));
            const Eigen::MatrixXd J = layout.natural_jacobian(opt.x);
            fit.param_covariance = J * cov_theta * J.transpose();
            nat_se = fit.param_covariance.diagonal().cwiseMax(0.0).cwiseSqrt();
            fit.se_available = true;
        }
    }

    for (int e = 0; e < 2; ++e) {
        fit.equations[e].name = dm.eq[e].name;
    }
    for (const auto& s : layout.slots()) {
        RpCoefficient c;
        c.column = dm.eq[s.eq].columns[s.col];
        c.random = s.random;
        c.mu = nat(s.mean_index);
        c.mu_se = nat_se(s.mean_index);
        if (s.random) {
            c.sigma = nat(s.spread_index);
            c.sigma_se = nat_se(s.spread_index);
        }
        fit.equations[s.eq].coefficients.push_back(c);
    }
    const Eigen::Index tail = fit.k - 3;
    fit.sigma1 = nat(tail);
    fit.sigma2 = nat(tail + 1);
    fit.rho = nat(tail + 2);
    fit.sigma1_se = nat_se(tail);
    fit.sigma2_se = nat_se(tail + 1);
    fit.rho_se = nat_se(tail + 2);
    return fit;
}

const char* to_string(Retention r) {
    switch (r) {
        case Retention::RetainRandom: return "retain-random";
        case Retention::PreferFixed: return "prefer-fixed";
        case Retention::Indeterminate: return "indeterminate";
    }
    return "indeterminate";
}

RetentionResult rp_retention_test(double mu, double mu_se, double sigma, double sigma_se) {
    constexpr double kCritical = 1.96;
    RetentionResult r;
    if (!(std::isfinite(sigma_se) && sigma_se > 0.0)) return r;
    r.t_sigma = sigma / sigma_se;
    r.t_mean = (std::isfinite(mu_se) && mu_se > 0.0) ? mu / mu_se : std::numeric_limits<double>::quiet_NaN();
    r.mean_significant = std::abs(r.t_mean) >= kCritical;
    r.verdict = std::abs(r.t_sigma) >= kCritical ? Retention::RetainRandom : Retention::PreferFixed;
    return r;
}

RetentionResult rp_retention_test(const RpSureFit& fit, const std::string& name) {
    const RpCoefficient* found = nullptr;
    for (const auto& eq : fit.equations) {
        for (const auto& c : eq.coefficients) {
            if (!c.random) continue;
            if (eq.name + ":" + c.column == name || c.column == name) {
                if (found != nullptr && c.column == name) {
                    throw SpecError("coefficient name '" + name + "' is ambiguous; qualify it with the equation");
                }
                found = &c;
            }
        }
    }
    if (found == nullptr) throw SpecError("no random coefficient named '" + name + "'");
    if (!fit.se_available) return {};
    return rp_retention_test(found->mu, found->mu_se, found->sigma, found->sigma_se);
}

}  // namespace fegap
