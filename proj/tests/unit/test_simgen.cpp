#include <doctest.h>

#include <cmath>

#include "qiv/error.hpp"
#include "qiv/simgen.hpp"

using namespace qiv;

namespace {

double expit(double v) { return 1.0 / (1.0 + std::exp(-v)); }

// E{f(X1, X2)} for X1 ~ Bernoulli(1/2), X2 ~ N(0, 1) by the trapezoid rule.
template <typename F>
double covariate_mean(F&& f) {
    const double h = 1e-3;
    double s = 0.0;
    for (double x2 = -10.0; x2 <= 10.0; x2 += h) {
        const double w = std::exp(-0.5 * x2 * x2) / std::sqrt(2.0 * M_PI) * h;
        s += w * 0.5 * (f(0.0, x2) + f(1.0, x2));
    }
    return s;
}

}  // namespace

TEST_CASE("simulation is deterministic per (seed, replicate)") {
    sim::ScenarioSpec spec;
    spec.n = 300;
    spec.seed = 77;
    const Dataset a = sim::simulate_dataset(spec, 3);
    const Dataset b = sim::simulate_dataset(spec, 3);
    CHECK(a.y == b.y);
    CHECK(a.a == b.a);
    CHECK(a.z == b.z);
    CHECK(a.x == b.x);
    const Dataset c = sim::simulate_dataset(spec, 4);
    CHECK(a.x != c.x);
    spec.seed = 78;
    CHECK(sim::simulate_dataset(spec, 3).x != a.x);
}

TEST_CASE("simulated columns follow the data-generating process") {
    sim::ScenarioSpec spec;
    spec.n = 200000;
    spec.seed = 2024;
    const Dataset d = sim::simulate_dataset(spec);
    CHECK(d.x_names == std::vector<std::string>{"x1", "x2", "x2star"});
    CHECK(d.z_names == std::vector<std::string>{"z"});
    const double n = static_cast<double>(d.n());
    const double se_bin = 0.5 / std::sqrt(n);

    CHECK(std::abs(d.x.col(0).mean() - 0.5) < 4.0 * se_bin);
    const Eigen::VectorXd x2 = d.x.col(1);
    CHECK(std::abs(x2.mean()) < 4.0 / std::sqrt(n));
    CHECK(std::abs((x2.array() - x2.mean()).square().mean() - 1.0) < 0.02);
    const Eigen::VectorXd xs = d.x.col(2);
    CHECK(xs.minCoeff() >= -1.0);
    CHECK(xs.maxCoeff() <= 1.0);
    CHECK(std::abs(xs.array().square().mean() - 1.0 / 3.0) < 0.01);

    const double pz = covariate_mean([](double x1, double x2) { return expit(-0.5 + 0.2 * x1 - 0.1 * x2); });
    CHECK(pz == doctest::Approx(0.40178).epsilon(1e-4));
    CHECK(std::abs(d.z.col(0).mean() - pz) < 4.0 * se_bin);

    const double pa = covariate_mean([](double x1, double x2) {
        const double p = expit(-0.5 + 0.2 * x1 - 0.1 * x2);
        return (1.0 - p) * expit(-0.2 - 0.1 * x1 + 0.05 * x2) + p * expit(-0.1 - 0.1 * x1 + 0.05 * x2);
    });
    CHECK(std::abs(d.a.mean() - pa) < 4.0 * se_bin);
}

TEST_CASE("true nuisances reproduce the outcome mean") {
    sim::ScenarioSpec spec;
    spec.n = 100000;
    spec.seed = 8;
    const Dataset d = sim::simulate_dataset(spec);
    const auto units = sim::true_nuisances(d, spec.coef);
    double expected = 0.0;
    for (Eigen::Index i = 0; i < static_cast<Eigen::Index>(d.n()); ++i) {
        const auto& u = units[i];
        const int z = d.z(i, 0) == 1.0 ? 1 : 0;
        expected += d.a[i] == 1.0 ? u.gamma + u.alpha * u.e0[z] : u.e0[z];
    }
    expected /= static_cast<double>(d.n());
    CHECK(std::abs(d.y.mean() - expected) < 4.0 * 0.5 / std::sqrt(static_cast<double>(d.n())));
    for (const auto& u : units) {
        CHECK(u.e0[1] > u.e0[0]);
        CHECK(u.gamma + u.alpha * u.e0[1] <= 1.0);
    }
}

TEST_CASE("misspecification swaps x2 for x2star in one block") {
    const auto all = sim::apply_misspec(sim::Scenario::AllCorrect);
    const std::vector<std::string> correct{"x1", "x2"};
    const std::vector<std::string> wrong{"x1", "x2star"};
    CHECK(all.gamma == correct);
    CHECK(all.propensity == correct);
    CHECK(sim::apply_misspec(sim::Scenario::M1Correct).propensity == wrong);
    CHECK(sim::apply_misspec(sim::Scenario::M1Correct).gamma == correct);
    CHECK(sim::apply_misspec(sim::Scenario::M2Correct).gamma == wrong);
    CHECK(sim::apply_misspec(sim::Scenario::M2Correct).alpha == correct);
    CHECK(sim::apply_misspec(sim::Scenario::M3Correct).alpha == wrong);
    CHECK(sim::apply_misspec(sim::Scenario::M3Correct).gop == correct);
    CHECK(sim::analysis_spec(sim::Scenario::M3Correct).outcome.qivs == std::vector<std::string>{"z"});
}

TEST_CASE("scenario names round trip") {
    for (auto s : {sim::Scenario::AllCorrect, sim::Scenario::M1Correct, sim::Scenario::M2Correct,
                   sim::Scenario::M3Correct}) {
        CHECK(sim::parse_scenario(sim::to_string(s)) == s);
    }
    CHECK_THROWS_AS(sim::parse_scenario("m4-correct"), Error);
    sim::ScenarioSpec spec;
    spec.n = 10;
    CHECK_THROWS_AS(spec.validate(), Error);
}

TEST_CASE("att oracle is close to the published truth") {
    CHECK(std::abs(sim::true_att_oracle(1000000, 3) - sim::kTrueAtt) < 0.002);
}

TEST_CASE("summaries fold records by estimator") {
    std::vector<sim::ReplicateRecord> recs;
    auto add = [&](sim::Estimator e, bool ok, double est, double se, bool cov) {
        sim::ReplicateRecord r;
        r.estimator = e;
        r.ok = ok;
        r.estimate = est;
        r.se = se;
        r.covered = cov;
        recs.push_back(r);
    };
    add(sim::Estimator::Tr, true, 0.3, 0.01, true);
    add(sim::Estimator::Tr, true, 0.4, 0.03, false);
    add(sim::Estimator::Tr, false, 0.0, 0.0, false);
    add(sim::Estimator::Mle, true, 0.5, 0.02, true);
    const auto s = sim::summarize(recs, {sim::Estimator::Mle, sim::Estimator::Tr}, 0.334);
    REQUIRE(s.size() == 2);
    CHECK(s[0].estimator == sim::Estimator::Mle);
    CHECK(s[0].n_ok == 1);
    CHECK(s[1].n_ok == 2);
    CHECK(s[1].n_failed == 1);
    CHECK(s[1].mean == doctest::Approx(0.35));
    CHECK(s[1].bias == doctest::Approx(0.35 - 0.334));
    CHECK(s[1].mc_sd == doctest::Approx(std::sqrt(0.005)));
    CHECK(s[1].mean_se == doctest::Approx(0.02));
    CHECK(s[1].coverage == doctest::Approx(0.5));
    CHECK(s[1].mc_se() == doctest::Approx(std::sqrt(0.005) / std::sqrt(2.0)));
}

TEST_CASE("monte carlo results do not depend on the thread count or the replicate window") {
    sim::ScenarioSpec spec;
    spec.n = 2000;
    spec.seed = 12;
    spec.replicates = 4;
    const std::vector<sim::Estimator> ests{sim::Estimator::Mle, sim::Estimator::Tr};
    sim::McOptions one;
    one.threads = 1;
    sim::McOptions three;
    three.threads = 3;
    const auto a = sim::run_mc(spec, ests, one);
    const auto b = sim::run_mc(spec, ests, three);
    REQUIRE(a.records.size() == 8);
    REQUIRE(b.records.size() == 8);
    for (std::size_t i = 0; i < a.records.size(); ++i) {
        CHECK(a.records[i].replicate == b.records[i].replicate);
        CHECK(a.records[i].estimator == b.records[i].estimator);
        CHECK(a.records[i].ok == b.records[i].ok);
        CHECK(a.records[i].estimate == b.records[i].estimate);
        CHECK(a.records[i].se == b.records[i].se);
    }
    CHECK(a.records[0].replicate == 0);
    CHECK(a.records[0].estimator == sim::Estimator::Mle);
    CHECK(a.records[1].estimator == sim::Estimator::Tr);

    spec.replicates = 2;
    one.first_replicate = 2;
    const auto tail = sim::run_mc(spec, ests, one);
    REQUIRE(tail.records.size() == 4);
    for (std::size_t i = 0; i < 4; ++i) {
        CHECK(tail.records[i].replicate == a.records[i + 4].replicate);
        CHECK(tail.records[i].estimate == a.records[i + 4].estimate);
    }
    const auto tr_only = sim::run_mc(spec, {sim::Estimator::Tr}, one);
    CHECK(tr_only.records.size() == 2);
    CHECK_THROWS_AS(tr_only.summary(sim::Estimator::Mle), Error);
}
