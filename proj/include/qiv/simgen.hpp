#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "qiv/design.hpp"
#include "qiv/tr.hpp"

namespace qiv::sim {

enum class Scenario { AllCorrect, M1Correct, M2Correct, M3Correct };

Scenario parse_scenario(const std::string& name);  // "all-correct", "m1-correct", ...
std::string to_string(Scenario s);

inline constexpr double kTrueAtt = 0.334;

struct DgpCoefficients {
    std::array<double, 3> beta{0.3, 0.1, 0.1};
    std::array<double, 3> theta{0.4, 0.2, 0.1};
    double omega0 = -5.0;
    double omega1 = 3.5;
    std::array<double, 2> eta{1.5, 0.5};
    std::array<double, 3> z_model{-0.5, 0.2, -0.1};        // intercept, X1, X2
    std::array<double, 4> a_model{-0.2, 0.1, -0.1, 0.05};  // intercept, Z, X1, X2
};

struct ScenarioSpec {
    Scenario scenario = Scenario::AllCorrect;
    std::size_t n = 20000;
    std::uint64_t seed = 1;
    DgpCoefficients coef;
    std::size_t replicates = 200;

    void validate() const;
};

// Columns: x = (x1, x2, x2star), z = (z), a, y. Replicate r draws from its own
// stream derived from (seed, r).
Dataset simulate_dataset(const ScenarioSpec& spec, std::uint64_t replicate = 0);

// Covariates handed to each working model by the analyst.
struct AnalysisCovariates {
    std::vector<std::string> gamma;
    std::vector<std::string> alpha;
    std::vector<std::string> gop;
    std::vector<std::string> propensity;
};

AnalysisCovariates apply_misspec(Scenario s);
tr::TrSpec analysis_spec(Scenario s);

// Nuisance functions evaluated at the data-generating truth.
std::vector<tr::UnitNuisance> true_nuisances(const Dataset& d, const DgpCoefficients& coef);

// Average of gamma(X) over treated units in a fresh draw of `draws` units.
double true_att_oracle(std::size_t draws, std::uint64_t seed, const DgpCoefficients& coef = {});

enum class Estimator { Mle, Tr };
std::string to_string(Estimator e);

struct ReplicateRecord {
    std::uint64_t replicate = 0;
    Estimator estimator = Estimator::Tr;
    bool ok = false;
    double estimate = 0.0;
    double se = 0.0;
    double ci_low = 0.0;
    double ci_high = 0.0;
    bool covered = false;
    std::string error;
};

struct EstimatorSummary {
    Estimator estimator = Estimator::Tr;
    double mean = 0.0;
    double bias = 0.0;
    double mc_sd = 0.0;
    double mean_se = 0.0;
    double coverage = 0.0;
    std::size_t n_ok = 0;
    std::size_t n_failed = 0;

    // Monte Carlo standard error of the mean.
    double mc_se() const;
};

struct McSummary {
    ScenarioSpec spec;
    double truth = kTrueAtt;
    std::vector<EstimatorSummary> estimators;
    std::vector<ReplicateRecord> records;  // ordered by (replicate, estimator)

    const EstimatorSummary& summary(Estimator e) const;
};

struct McOptions {
    double truth = kTrueAtt;
    double level = 0.95;
    unsigned threads = 0;  // 0: QIV_THREADS or hardware concurrency
    std::uint64_t first_replicate = 0;
};

// Runs replicates [first_replicate, first_replicate + spec.replicates).
McSummary run_mc(const ScenarioSpec& spec, const std::vector<Estimator>& estimators, const McOptions& opts = {});

// Folds replicate records into per-estimator summaries.
std::vector<EstimatorSummary> summarize(const std::vector<ReplicateRecord>& records,
                                        const std::vector<Estimator>& estimators, double truth);

unsigned default_thread_count();

}  // namespace qiv::sim
