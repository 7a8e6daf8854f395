#pragma once

#include <array>
#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "qiv/design.hpp"
#include "qiv/estimate.hpp"

namespace qiv::identify {

// Cell means E(Y | A=a, Z=z, X=x) and counts on one covariate stratum,
// indexed [a][z].
struct StratumMeans {
    std::array<std::array<double, 2>, 2> e{};
    std::array<std::array<std::size_t, 2>, 2> n{};
};

struct IdentifyOptions {
    double relevance_floor = 1e-3;  // absolute floor on |e(0,1) - e(0,0)|
    double relevance_se_multiple = 2.0;
    double discrepancy_se_multiple = 4.0;
};

struct Identified {
    double alpha_x = 0.0;
    double gamma_x = 0.0;       // treated-count-weighted average of the two below
    double gamma_z0 = 0.0;
    double gamma_z1 = 0.0;
    double relevance = 0.0;     // e(0,1) - e(0,0)
    double relevance_se = 0.0;
    std::vector<std::string> warnings;
};

// alpha(x) = (e11 - e10) / (e01 - e00), gamma(x) = e1z - alpha(x) e0z.
// Throws ErrorKind::WeakQiv when the untreated contrast is not clearly
// nonzero and ErrorKind::Data when a cell is empty.
Identified np_identify(const StratumMeans& s, const IdentifyOptions& opts = {});

// Remark-style additive bias delta(z, x) = (alpha(x) - 1) E(Y | A=0, Z=z, X=x).
double additive_bias(double alpha_x, double e00);

struct RelevanceStat {
    double difference = 0.0;  // mean(y | a=0, z=1) - mean(y | a=0, z=0)
    double se = 0.0;
    double p_value = 1.0;
    std::size_t n_z0 = 0;
    std::size_t n_z1 = 0;
};

using RowSelector = std::function<bool(std::size_t row)>;

RelevanceStat relevance_stat(const Dataset& d, int qiv_index = 0, const RowSelector& select = {});

StratumMeans stratum_means(const Dataset& d, int qiv_index = 0, const RowSelector& select = {});

// Nonparametric identification over the discrete strata of the chosen
// covariates, combined into a marginal ATT weighted by treated counts.
struct StratumResult {
    std::vector<double> covariate_values;
    StratumMeans means;
    Identified identified;
    std::string error;  // non-empty when the stratum could not be identified
};

struct NonparametricReport {
    std::vector<StratumResult> strata;
    AttEstimate att;  // method "nonparametric"; se by the delta method over cells
    std::size_t treated_used = 0;
    std::size_t treated_dropped = 0;
};

NonparametricReport identify_strata(const Dataset& d, const std::vector<std::string>& covariates,
                                    int qiv_index = 0, double level = 0.95,
                                    const IdentifyOptions& opts = {});

}  // namespace qiv::identify
