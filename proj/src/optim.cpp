#include "qiv/optim.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

namespace qiv::optim {

Result bfgs(const Objective& f, Eigen::VectorXd x0, const Options& opts) {
    const Eigen::Index k = x0.size();
    Result r;
    r.method = "bfgs";
    r.x = std::move(x0);
    r.grad.resize(k);
    r.value = f(r.x, &r.grad);
    if (!std::isfinite(r.value)) return r;

    Eigen::MatrixXd inv_h = Eigen::MatrixXd::Identity(k, k);
    bool scaled = false;
    Eigen::VectorXd g_new(k);

    for (int it = 0; it < opts.max_iter; ++it) {
        r.iterations = it;
        if (r.grad.cwiseAbs().maxCoeff() < opts.grad_tol) {
            r.converged = true;
            return r;
        }
        Eigen::VectorXd dir = -inv_h * r.grad;
        double slope = dir.dot(r.grad);
        if (!(slope < 0.0)) {
            // lost descent; restart from steepest descent
            inv_h.setIdentity();
            scaled = false;
            dir = -r.grad;
            slope = dir.dot(r.grad);
        }

        // backtracking Armijo line search from a capped step
        const double dir_norm = dir.norm();
        double t = dir_norm > opts.max_step ? opts.max_step / dir_norm : 1.0;
        Eigen::VectorXd x_new;
        double f_new = std::numeric_limits<double>::infinity();
        bool accepted = false;
        for (int ls = 0; ls < 60; ++ls) {
            x_new = r.x + t * dir;
            f_new = f(x_new, &g_new);
            if (std::isfinite(f_new) && f_new <= r.value + 1e-4 * t * slope) {
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if (!accepted) {
            if (scaled) {
                inv_h.setIdentity();
                scaled = false;
                continue;
            }
            break;
        }

        const Eigen::VectorXd s = x_new - r.x;
        const Eigen::VectorXd y = g_new - r.grad;
        const double sy = s.dot(y);
        r.x = x_new;
        r.value = f_new;
        r.grad = g_new;
        if (sy > 1e-12 * s.norm() * y.norm()) {
            if (!scaled) {
                inv_h = Eigen::MatrixXd::Identity(k, k) * (sy / y.dot(y));
                scaled = true;
            }
            const double rho = 1.0 / sy;
            const Eigen::VectorXd hy = inv_h * y;
            inv_h += (rho * rho * y.dot(hy) + rho) * (s * s.transpose()) - rho * (hy * s.transpose() + s * hy.transpose());
        }
    }
    r.converged = r.grad.cwiseAbs().maxCoeff() < opts.grad_tol;
    return r;
}

Result nelder_mead(const Objective& f, Eigen::VectorXd x0, const Options& opts, double initial_step) {
    const Eigen::Index k = x0.size();
    const auto n = static_cast<std::size_t>(k);
    Result r;
    r.method = "nelder-mead";

    std::vector<Eigen::VectorXd> simplex(n + 1, x0);
    std::vector<double> values(n + 1);
    for (std::size_t j = 0; j < n; ++j) simplex[j + 1][static_cast<Eigen::Index>(j)] += initial_step;
    for (std::size_t j = 0; j <= n; ++j) values[j] = f(simplex[j], nullptr);

    std::vector<std::size_t> order(n + 1);
    const int max_iter = opts.max_iter * static_cast<int>(n + 1) * 20;
    for (int it = 0; it < max_iter; ++it) {
        r.iterations = it;
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
        const std::size_t best = order.front();
        const std::size_t worst = order.back();
        const std::size_t second = order[n - 1];
        if (std::isfinite(values[worst]) && values[worst] - values[best] < opts.grad_tol * 1e-2) {
            r.converged = true;
            break;
        }

        Eigen::VectorXd centroid = Eigen::VectorXd::Zero(k);
        for (std::size_t j = 0; j <= n; ++j) {
            if (j != worst) centroid += simplex[j];
        }
        centroid /= static_cast<double>(n);

        const Eigen::VectorXd reflected = centroid + (centroid - simplex[worst]);
        const double f_ref = f(reflected, nullptr);
        if (f_ref < values[best]) {
            const Eigen::VectorXd expanded = centroid + 2.0 * (centroid - simplex[worst]);
            const double f_exp = f(expanded, nullptr);
            if (f_exp < f_ref) {
                simplex[worst] = expanded;
                values[worst] = f_exp;
            } else {
                simplex[worst] = reflected;
                values[worst] = f_ref;
            }
            continue;
        }
        if (f_ref < values[second]) {
            simplex[worst] = reflected;
            values[worst] = f_ref;
            continue;
        }
        const Eigen::VectorXd contracted = centroid + 0.5 * (simplex[worst] - centroid);
        const double f_con = f(contracted, nullptr);
        if (f_con < values[worst]) {
            simplex[worst] = contracted;
            values[worst] = f_con;
            continue;
        }
        for (std::size_t j = 0; j <= n; ++j) {
            if (j == best) continue;
            simplex[j] = simplex[best] + 0.5 * (simplex[j] - simplex[best]);
            values[j] = f(simplex[j], nullptr);
        }
    }
    const auto best_it = std::min_element(values.begin(), values.end());
    const auto best = static_cast<std::size_t>(best_it - values.begin());
    r.x = simplex[best];
    r.grad.resize(k);
    r.value = f(r.x, &r.grad);
    return r;
}

}  // namespace qiv::optim
