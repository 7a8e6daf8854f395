#pragma once

#include <string>
#include <utility>
#include <vector>

namespace qiv {

// Marginal ATT with a Wald interval.
struct AttEstimate {
    double gamma_hat = 0.0;
    double se = 0.0;
    double ci_low = 0.0;
    double ci_high = 0.0;
    double level = 0.95;
    std::string method;  // "mle", "tr" or "nonparametric"
    std::vector<std::pair<std::string, std::string>> diagnostics;

    bool covers(double truth) const { return ci_low <= truth && truth <= ci_high; }
};

// Fills ci_low / ci_high from gamma_hat, se and level.
void set_wald_interval(AttEstimate& est, double level);

struct TestReport {
    std::string method;  // "likelihood-ratio" or "dr-score"
    double statistic = 0.0;
    double df = 0.0;
    double p_value = 1.0;
    std::vector<std::pair<std::string, std::string>> diagnostics;
};

}  // namespace qiv
