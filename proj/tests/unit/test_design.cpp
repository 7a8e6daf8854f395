#include <doctest.h>

#include <cmath>

#include "qiv/design.hpp"
#include "qiv/error.hpp"
#include "qiv/simgen.hpp"

using namespace qiv;
using doctest::Approx;

namespace {

Dataset small_dataset() {
    Dataset d;
    d.y = Eigen::VectorXd(4);
    d.a = Eigen::VectorXd(4);
    d.z = Eigen::MatrixXd(4, 1);
    d.x = Eigen::MatrixXd(4, 2);
    d.y << 1, 0, 1, 0;
    d.a << 1, 1, 0, 0;
    d.z << 1, 0, 1, 0;
    d.x << 1, 0.5, 0, -0.2, 1, 1.5, 0, 0.1;
    d.z_names = {"z"};
    d.x_names = {"x1", "x2"};
    return d;
}

}  // namespace

TEST_CASE("links at zero give the identity point") {
    ParamLayout l;
    l.n_beta = 3;
    l.n_theta = 3;
    l.n_qiv = 1;
    l.n_eta = 2;
    ParamVector phi(l);
    Eigen::VectorXd x(2), z(1);
    x << 0.7, -1.3;
    z << 1.0;
    const auto g = eval_links(phi, x, z);
    CHECK(g.gamma == 0.0);
    CHECK(g.alpha == 1.0);
    CHECK(g.gop == 1.0);
}

TEST_CASE("links at the simulation coefficients") {
    ParamLayout l;
    l.n_beta = 3;
    l.n_theta = 3;
    l.n_qiv = 1;
    l.n_eta = 2;
    ParamVector phi(l);
    phi.values << 0.3, 0.1, 0.1, 0.4, 0.2, 0.1, -5.0, 3.5, 1.5, 0.5;
    Eigen::VectorXd x(2), z(1);
    x << 1.0, 0.0;
    z << 1.0;
    const auto g = eval_links(phi, x, z);
    CHECK(g.gamma == Approx(std::tanh(0.4)).epsilon(1e-15));
    CHECK(g.gamma == Approx(0.3799).epsilon(1e-4));
    CHECK(g.alpha == Approx(std::exp(0.6)).epsilon(1e-15));
    CHECK(g.gop == Approx(1.0).epsilon(1e-15));
}

TEST_CASE("eval_links rejects mismatched dimensions") {
    ParamLayout l;
    l.n_beta = 3;
    l.n_theta = 3;
    l.n_qiv = 1;
    l.n_eta = 2;
    ParamVector phi(l);
    Eigen::VectorXd x(3), z(1);
    x.setZero();
    z.setZero();
    CHECK_THROWS_AS(eval_links(phi, x, z), Error);
}

TEST_CASE("design widths, intercepts and column order") {
    const Dataset d = small_dataset();
    ModelSpec spec = ModelSpec::all_columns(d);
    const Design full = build_design(d, spec);
    CHECK(full.gamma.cols() == 3);
    CHECK(full.alpha.cols() == 3);
    CHECK(full.gop.cols() == 4);
    CHECK(full.gamma.col(0).isOnes());
    CHECK(full.gop.col(0).isOnes());
    CHECK(full.layout.size() == 2 * 3 + 1 + 1 + 2);

    ModelSpec none = spec;
    none.gamma_covariates.clear();
    none.alpha_covariates.clear();
    none.gop_covariates.clear();
    const Design empty = build_design(d, none);
    CHECK(empty.gamma.cols() == 1);
    CHECK(empty.alpha.cols() == 1);
    CHECK(empty.gop.cols() == 2);

    ModelSpec subset = spec;
    subset.gamma_covariates = {"x1"};
    const Design sub = build_design(d, subset);
    CHECK(sub.gamma.cols() == 2);
    CHECK(sub.gamma_names.back() == "x1");
    CHECK(sub.gamma.col(1) == d.x.col(0));
}

TEST_CASE("unknown columns are rejected") {
    const Dataset d = small_dataset();
    ModelSpec spec = ModelSpec::all_columns(d);
    spec.alpha_covariates = {"nope"};
    CHECK_THROWS_AS(build_design(d, spec), Error);
    spec = ModelSpec::all_columns(d);
    spec.qivs = {"w"};
    CHECK_THROWS_AS(build_design(d, spec), Error);
}

TEST_CASE("interactions are opt-in") {
    const Dataset d = small_dataset();
    ModelSpec spec = ModelSpec::all_columns(d);
    spec.gop_interactions = {{"z", "x2"}};
    const Design des = build_design(d, spec);
    CHECK(des.gop.cols() == 5);
    CHECK(des.gop.col(4) == d.x.col(1).cwiseProduct(d.z.col(0)));
}

TEST_CASE("design construction is deterministic and centering is recorded") {
    sim::ScenarioSpec s;
    s.n = 500;
    const Dataset d = sim::simulate_dataset(s);
    ModelSpec spec = ModelSpec::all_columns(d);
    const Design a = build_design(d, spec);
    const Design b = build_design(d, spec);
    CHECK(a.gop == b.gop);
    CHECK(a.gamma == b.gamma);
    CHECK_FALSE(a.centered);
    spec.center = true;
    const Design c = build_design(d, spec);
    CHECK(c.centered);
    CHECK(std::abs(c.gamma.col(2).mean()) < 1e-12);
}

TEST_CASE("dataset validation") {
    Dataset d = small_dataset();
    CHECK_NOTHROW(d.validate());
    CHECK(d.n_treated() == 2);
    d.a << 0, 0, 0, 0;
    CHECK_THROWS_AS(d.validate(), Error);
    d = small_dataset();
    d.y[0] = 0.5;
    CHECK_THROWS_AS(d.validate(), Error);
}

TEST_CASE("replicated and gamma-free views") {
    const Dataset d = small_dataset();
    const Design des = build_design(d, ModelSpec::all_columns(d));
    const Design two = des.replicated(2);
    CHECK(two.n() == 8);
    CHECK(two.gop.bottomRows(4) == des.gop);
    const Design null = des.without_gamma();
    CHECK(null.layout.n_beta == 0);
    CHECK(null.gamma.cols() == 0);
}
