#pragma once

#include <Eigen/Dense>
#include <functional>
#include <string>
#include <vector>

namespace fegap {

using Objective = std::function<double(const Eigen::VectorXd&)>;

/// Central-difference gradient with per-coordinate step rel_step * max(|x_j|, 1).
Eigen::VectorXd central_gradient(const Objective& f, const Eigen::VectorXd& x, double rel_step);

/// Central-difference Hessian with per-coordinate step rel_step * max(|x_j|, 1).
Eigen::MatrixXd central_hessian(const Objective& f, const Eigen::VectorXd& x, double rel_step);

struct BfgsOptions {
    int max_iterations = 500;
    double gradient_tolerance = 1e-5;
    double relative_tolerance = 1e-9;
    double gradient_step = 1e-6;
};

struct BfgsResult {
    Eigen::VectorXd x;
    double value = 0.0;
    int iterations = 0;
    double gradient_norm = 0.0;
    bool converged = false;
    std::string status;
    std::vector<double> trajectory;  // objective at each accepted point, starting point first
};

/// Maps (x, gradient in x) to the norm tested against gradient_tolerance.
using GradientNorm = std::function<double(const Eigen::VectorXd&, const Eigen::VectorXd&)>;

/// Quasi-Newton (BFGS, inverse-Hessian form) maximization with an Armijo
/// backtracking line search and numerical gradients. Stops when the gradient
/// norm or the relative change of the objective falls below tolerance.
BfgsResult bfgs_maximize(const Objective& f, Eigen::VectorXd x0, const BfgsOptions& options,
                         const GradientNorm& gradient_norm = {});

}  // namespace fegap
