#include <doctest.h>

#include <cmath>
#include <limits>

#include "qiv/optim.hpp"

using namespace qiv;

namespace {

double rosenbrock(const Eigen::VectorXd& x, Eigen::VectorXd* g) {
    const double a = 1.0 - x[0];
    const double b = x[1] - x[0] * x[0];
    if (g) {
        g->resize(2);
        (*g)[0] = -2.0 * a - 400.0 * x[0] * b;
        (*g)[1] = 200.0 * b;
    }
    return a * a + 100.0 * b * b;
}

}  // namespace

TEST_CASE("bfgs finds the Rosenbrock minimum") {
    const optim::Result r = optim::bfgs(rosenbrock, Eigen::Vector2d(-1.2, 1.0), {});
    CHECK(r.converged);
    CHECK(r.x[0] == doctest::Approx(1.0).epsilon(1e-6));
    CHECK(r.x[1] == doctest::Approx(1.0).epsilon(1e-6));
    CHECK(r.method == "bfgs");
}

TEST_CASE("bfgs stays inside the finite region") {
    // minimum of (x - 2)^2 restricted to x < 1.5 is approached from below
    auto f = [](const Eigen::VectorXd& x, Eigen::VectorXd* g) {
        if (x[0] >= 1.5) return std::numeric_limits<double>::infinity();
        if (g) *g = Eigen::VectorXd::Constant(1, 2.0 * (x[0] - 2.0));
        return (x[0] - 2.0) * (x[0] - 2.0);
    };
    optim::Options opts;
    opts.max_iter = 50;
    const optim::Result r = optim::bfgs(f, Eigen::VectorXd::Zero(1), opts);
    CHECK_FALSE(r.converged);
    CHECK(r.x[0] < 1.5);
    CHECK(r.x[0] > 1.4);
    CHECK(std::isfinite(r.value));
}

TEST_CASE("bfgs caps the first step") {
    int calls = 0;
    double first_trial = 0.0;
    auto f = [&](const Eigen::VectorXd& x, Eigen::VectorXd* g) {
        if (++calls == 2) first_trial = x[0];
        if (g) *g = Eigen::VectorXd::Constant(1, 2e3 * x[0] - 2e3);
        return 1e3 * (x[0] - 1.0) * (x[0] - 1.0);
    };
    optim::Options opts;
    opts.max_step = 0.5;
    optim::bfgs(f, Eigen::VectorXd::Zero(1), opts);
    CHECK(first_trial == doctest::Approx(0.5));
}

TEST_CASE("nelder-mead finds the Rosenbrock minimum") {
    optim::Options opts;
    opts.grad_tol = 1e-12;
    const optim::Result r = optim::nelder_mead(rosenbrock, Eigen::Vector2d(-1.2, 1.0), opts, 0.5);
    CHECK(r.converged);
    CHECK(r.x[0] == doctest::Approx(1.0).epsilon(1e-4));
    CHECK(r.x[1] == doctest::Approx(1.0).epsilon(1e-4));
    CHECK(r.grad.size() == 2);
}
