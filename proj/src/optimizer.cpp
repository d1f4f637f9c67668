#include "fegap/optimizer.hpp"

#include <cmath>
#include <limits>

namespace fegap {

namespace {

double step_for(double x, double rel) { return rel * std::max(std::abs(x), 1.0); }

}  // namespace

Eigen::VectorXd central_gradient(const Objective& f, const Eigen::VectorXd& x, double rel_step) {
    Eigen::VectorXd g(x.size());
    Eigen::VectorXd xp = x;
    for (Eigen::Index j = 0; j < x.size(); ++j) {
        const double h = step_for(x(j), rel_step);
        xp(j) = x(j) + h;
        const double fp = f(xp);
        xp(j) = x(j) - h;
        const double fm = f(xp);
        xp(j) = x(j);
        g(j) = (fp - fm) / (2.0 * h);
    }
    return g;
}

Eigen::MatrixXd central_hessian(const Objective& f, const Eigen::VectorXd& x, double rel_step) {
    const Eigen::Index k = x.size();
    Eigen::VectorXd h(k);
    for (Eigen::Index j = 0; j < k; ++j) h(j) = step_for(x(j), rel_step);
    const double f0 = f(x);
    Eigen::MatrixXd H(k, k);
    Eigen::VectorXd xp = x;
    for (Eigen::Index i = 0; i < k; ++i) {
        xp(i) = x(i) + h(i);
        const double fp = f(xp);
        xp(i) = x(i) - h(i);
        const double fm = f(xp);
        xp(i) = x(i);
        H(i, i) = (fp - 2.0 * f0 + fm) / (h(i) * h(i));
        for (Eigen::Index j = 0; j < i; ++j) {
            auto eval = [&](double si, double sj) {
                xp(i) = x(i) + si * h(i);
                xp(j) = x(j) + sj * h(j);
                const double v = f(xp);
                xp(i) = x(i);
                xp(j) = x(j);
                return v;
            };
            const double v = (eval(1, 1) - eval(1, -1) - eval(-1, 1) + eval(-1, -1)) / (4.0 * h(i) * h(j));
            H(i, j) = v;
            H(j, i) = v;
        }
    }
    return H;
}

BfgsResult bfgs_maximize(const Objective& f, Eigen::VectorXd x0, const BfgsOptions& options,
                         const GradientNorm& gradient_norm) {
    // Internally minimize -f.
    auto neg = [&](const Eigen::VectorXd& x) {
        const double v = f(x);
        return std::isfinite(v) ? -v : std::numeric_limits<double>::infinity();
    };
    auto norm_of = [&](const Eigen::VectorXd& x, const Eigen::VectorXd& g_min) {
        return gradient_norm ? gradient_norm(x, -g_min) : g_min.lpNorm<Eigen::Infinity>();
    };

    const Eigen::Index k = x0.size();
    BfgsResult res;
    Eigen::VectorXd x = std::move(x0);
    double fx = neg(x);
    if (!std::isfinite(fx)) {
        res.x = x;
        res.value = -fx;
        res.status = "non-finite objective at starting point";
        return res;
    }
    res.trajectory.push_back(-fx);
    Eigen::VectorXd g = central_gradient(neg, x, options.gradient_step);
    Eigen::MatrixXd H = Eigen::MatrixXd::Identity(k, k);
    bool scaled = false;
    res.status = "maximum iterations reached";

    for (int iter = 0; iter < options.max_iterations; ++iter) {
        res.gradient_norm = norm_of(x, g);
        if (res.gradient_norm <= options.gradient_tolerance) {
            res.converged = true;
            res.status = "converged (gradient)";
            break;
        }
        Eigen::VectorXd p = -H * g;
        if (g.dot(p) >= 0.0) {
            H.setIdentity();
            scaled = false;
            p = -g;
        }
        // Before any curvature information, cap the first move at 0.1 per coordinate.
        double alpha = scaled ? 1.0 : std::min(1.0, 0.1 / std::max(p.lpNorm<Eigen::Infinity>(), 1e-300));

        const double slope = g.dot(p);
        Eigen::VectorXd x_new;
        double f_new = 0.0;
        bool accepted = false;
        for (int ls = 0; ls < 60; ++ls) {
            x_new = x + alpha * p;
            f_new = neg(x_new);
            if (f_new <= fx + 1e-4 * alpha * slope) {
                accepted = true;
                break;
            }
            alpha *= 0.5;
        }
        if (!accepted) {
            if (scaled) {
                // Retry from steepest ascent before giving up.
                H.setIdentity();
                scaled = false;
                --iter;
                continue;
            }
            res.status = "line search failed";
            break;
        }

        const Eigen::VectorXd g_new = central_gradient(neg, x_new, options.gradient_step);
        const Eigen::VectorXd s = x_new - x;
        const Eigen::VectorXd y = g_new - g;
        const double sy = s.dot(y);
        if (sy > 1e-12 * s.norm() * y.norm()) {
            if (!scaled) {
                H = Eigen::MatrixXd::Identity(k, k) * (sy / y.squaredNorm());
                scaled = true;
            }
            const double rho = 1.0 / sy;
            const Eigen::VectorXd Hy = H * y;
            H += ((sy + y.dot(Hy)) * rho * rho) * (s * s.transpose()) - rho * (Hy * s.transpose() + s * Hy.transpose());
        }

        const double change = std::abs(f_new - fx) / std::max(1.0, std::abs(fx));
        x = x_new;
        fx = f_new;
        g = g_new;
        res.iterations = iter + 1;
        res.trajectory.push_back(-fx);
        if (change <= options.relative_tolerance) {
            res.gradient_norm = norm_of(x, g);
            res.converged = true;
            res.status = "converged (relative change)";
            break;
        }
    }
    res.x = x;
    res.value = -fx;
    if (!res.converged) res.gradient_norm = norm_of(x, g);
    return res;
}

}  // namespace fegap
