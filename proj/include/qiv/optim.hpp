#pragma once

#include <functional>
#include <string>

#include <Eigen/Dense>

namespace qiv::optim {

// Objective to minimize. Returns +inf outside the feasible region. When
// `grad` is non-null it must be filled with the gradient.
using Objective = std::function<double(const Eigen::VectorXd& x, Eigen::VectorXd* grad)>;

struct Options {
    int max_iter = 500;
    double grad_tol = 1e-8;  // on the infinity norm of the gradient
    double max_step = 5.0;   // Euclidean cap on a single line-search start
};

struct Result {
    Eigen::VectorXd x;
    double value = 0.0;
    Eigen::VectorXd grad;
    int iterations = 0;
    bool converged = false;
    std::string method;
};

Result bfgs(const Objective& f, Eigen::VectorXd x0, const Options& opts);

// Derivative-free fallback. Converged means the simplex collapsed below
// `grad_tol` in function spread.
Result nelder_mead(const Objective& f, Eigen::VectorXd x0, const Options& opts, double initial_step = 0.1);

}  // namespace qiv::optim
