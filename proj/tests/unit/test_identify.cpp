#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "qiv/error.hpp"
#include "qiv/gop.hpp"
#include "qiv/identify.hpp"
#include "qiv/simgen.hpp"

using namespace qiv;
using doctest::Approx;

namespace {

identify::StratumMeans forward(double gamma, double alpha, double p00_z0, double p00_z1, std::size_t count = 500) {
    identify::StratumMeans s;
    s.e[0][0] = p00_z0;
    s.e[0][1] = p00_z1;
    s.e[1][0] = gamma + alpha * p00_z0;
    s.e[1][1] = gamma + alpha * p00_z1;
    for (auto& row : s.n) row = {count, count};
    return s;
}

Dataset stratified_dataset(std::mt19937_64& rng, std::size_t n, double p_untreated_z0, double p_untreated_z1) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    Dataset d;
    d.y.resize(static_cast<Eigen::Index>(n));
    d.a.resize(static_cast<Eigen::Index>(n));
    d.z.resize(static_cast<Eigen::Index>(n), 1);
    d.x.resize(static_cast<Eigen::Index>(n), 0);
    d.z_names = {"z"};
    for (std::size_t i = 0; i < n; ++i) {
        const auto r = static_cast<Eigen::Index>(i);
        d.z(r, 0) = u(rng) < 0.5 ? 1.0 : 0.0;
        d.a[r] = u(rng) < 0.5 ? 1.0 : 0.0;
        const double p = d.z(r, 0) == 1.0 ? p_untreated_z1 : p_untreated_z0;
        d.y[r] = u(rng) < p ? 1.0 : 0.0;
    }
    return d;
}

}  // namespace

TEST_CASE("exact recovery from forward-constructed means") {
    const auto id = identify::np_identify(forward(0.1, 1.2, 0.3, 0.5));
    CHECK(id.alpha_x == Approx(1.2).epsilon(1e-14));
    CHECK(id.gamma_x == Approx(0.1).epsilon(1e-14));
    CHECK(id.warnings.empty());
}

TEST_CASE("exact recovery over random valid configurations") {
    std::mt19937_64 rng(21);
    std::uniform_real_distribution<double> g(-0.5, 0.5), a(0.3, 2.0), p(0.05, 0.95);
    int checked = 0;
    while (checked < 500) {
        const double gamma = g(rng), alpha = a(rng), p0 = p(rng), p1 = p(rng);
        if (std::abs(p1 - p0) < 0.05) continue;
        const auto s = forward(gamma, alpha, p0, p1);
        bool ok = true;
        for (auto& row : s.e)
            for (double v : row) ok = ok && v > 0.0 && v < 1.0;
        if (!ok) continue;
        identify::Identified id;
        try {
            id = identify::np_identify(s);
        } catch (const Error& e) {
            CHECK(e.kind() == ErrorKind::WeakQiv);
            continue;
        }
        CHECK(id.alpha_x == Approx(alpha).epsilon(1e-12));
        CHECK(id.gamma_x == Approx(gamma).epsilon(1e-12).scale(1.0));
        CHECK(std::abs(id.gamma_x) < 1.0);
        CHECK(std::abs(id.gamma_z0 - id.gamma_z1) < 1e-12);
        ++checked;
    }
}

TEST_CASE("zero numerator gives alpha 0 with a model-violation warning") {
    identify::StratumMeans s = forward(0.1, 1.2, 0.3, 0.5);
    s.e[1][1] = s.e[1][0];
    const auto id = identify::np_identify(s);
    CHECK(id.alpha_x == 0.0);
    CHECK_FALSE(id.warnings.empty());
}

TEST_CASE("no relevance raises the weak-QIV error") {
    identify::StratumMeans s;
    for (auto& row : s.e) row = {0.4, 0.4};
    for (auto& row : s.n) row = {100, 100};
    try {
        identify::np_identify(s);
        FAIL("expected weak QIV");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::WeakQiv);
    }
}

TEST_CASE("empty cell is a data error") {
    identify::StratumMeans s = forward(0.1, 1.2, 0.3, 0.5);
    s.n[0][0] = 0;
    try {
        identify::np_identify(s);
        FAIL("expected empty cell");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::Data);
    }
}

TEST_CASE("additive bias") {
    CHECK(identify::additive_bias(1.0, 0.37) == 0.0);
    CHECK(identify::additive_bias(1.2, 0.5) == Approx(0.1).epsilon(1e-15));
    CHECK(identify::additive_bias(0.8, 0.5) == Approx(-0.1).epsilon(1e-15));
}

TEST_CASE("relevance statistic p-values are uniform under the null") {
    std::mt19937_64 rng(22);
    std::vector<double> p;
    for (int rep = 0; rep < 1000; ++rep) {
        const Dataset d = stratified_dataset(rng, 400, 0.3, 0.3);
        p.push_back(identify::relevance_stat(d).p_value);
    }
    std::sort(p.begin(), p.end());
    double ks = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        const double lo = static_cast<double>(i) / p.size(), hi = static_cast<double>(i + 1) / p.size();
        ks = std::max({ks, std::abs(p[i] - lo), std::abs(p[i] - hi)});
    }
    CHECK(ks < 0.05);
}

TEST_CASE("relevance on the simulation design is strong") {
    sim::ScenarioSpec s;
    s.n = 50000;
    s.seed = 23;
    const auto r = identify::relevance_stat(sim::simulate_dataset(s));
    CHECK(r.difference != 0.0);
    CHECK(r.p_value < 0.01);
}

TEST_CASE("relevance statistic needs untreated units at both levels") {
    std::mt19937_64 rng(24);
    Dataset d = stratified_dataset(rng, 50, 0.3, 0.6);
    for (Eigen::Index i = 0; i < d.a.size(); ++i) {
        if (d.z(i, 0) == 0.0) d.a[i] = 1.0;
    }
    CHECK_THROWS_AS(identify::relevance_stat(d), Error);
}

TEST_CASE("stratified identification recovers a planted effect") {
    // two strata with known (gamma, alpha); risks built from the GOP model
    std::mt19937_64 rng(25);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const std::size_t n = 200000;
    Dataset d;
    d.y.resize(n);
    d.a.resize(n);
    d.z.resize(n, 1);
    d.x.resize(n, 1);
    d.z_names = {"z"};
    d.x_names = {"s"};
    const double gam[2] = {0.1, 0.2}, alp[2] = {1.2, 0.9}, p00[2][2] = {{0.3, 0.5}, {0.2, 0.45}};
    double treated_gamma = 0.0;
    std::size_t treated = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const int s = u(rng) < 0.4 ? 1 : 0;
        const int z = u(rng) < 0.5 ? 1 : 0;
        const int a = u(rng) < 0.4 ? 1 : 0;
        const double p = a ? gam[s] + alp[s] * p00[s][z] : p00[s][z];
        d.x(i, 0) = s;
        d.z(i, 0) = z;
        d.a[i] = a;
        d.y[i] = u(rng) < p ? 1.0 : 0.0;
        if (a) {
            treated_gamma += gam[s];
            ++treated;
        }
    }
    const auto r = identify::identify_strata(d, {"s"}, 0, 0.95);
    CHECK(r.strata.size() == 2);
    CHECK(r.treated_dropped == 0);
    const double truth = treated_gamma / treated;
    CHECK(std::abs(r.att.gamma_hat - truth) < 4.0 * r.att.se);
    CHECK(r.att.se > 0.0);
    CHECK(r.att.method == "nonparametric");
}

TEST_CASE("too many strata is a data error") {
    sim::ScenarioSpec s;
    s.n = 2000;
    const Dataset d = sim::simulate_dataset(s);
    CHECK_THROWS_AS(identify::identify_strata(d, {"x2"}, 0, 0.95), Error);
}
