#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "qiv/csv_io.hpp"
#include "qiv/estimate.hpp"
#include "qiv/identify.hpp"
#include "qiv/mle.hpp"
#include "qiv/simgen.hpp"

namespace qiv::report {

inline constexpr int kSchemaVersion = 1;
inline constexpr const char* kSoftwareVersion = "0.1.0";
inline constexpr double kKappaWarn = 10.0;

using nlohmann::json;

// schema_version, software, command, generated_at and the config echo.
// generated_at is the only field that varies between identical runs.
json header(const std::string& command, const json& config);

json to_json(const AttEstimate& e);
json to_json(const TestReport& t);
json to_json(const io::Fingerprint& f);
// Coefficients by name, SEs when the covariance exists, kappa_hat with a
// warning at or below kKappaWarn.
json to_json(const mle::MleFit& fit, const Design& d);
json to_json(const identify::NonparametricReport& r, const std::vector<std::string>& covariates);
json to_json(const sim::McSummary& s);

// Flat table for external plotting.
struct PlotTable {
    std::vector<std::string> columns;
    std::vector<std::vector<std::string>> rows;

    void add_row(std::vector<std::string> row);
    std::string to_csv() const;
};

std::string cell(double v);

// One row per (replicate, estimator).
PlotTable mc_table(const sim::McSummary& s);
// p00, p01, p11 over a (gamma, alpha, log GOP) grid; invalid points are skipped.
PlotTable risk_grid(const std::vector<double>& gammas, const std::vector<double>& alphas,
                    const std::vector<double>& log_gops);

struct NamedEstimate {
    std::string label;
    AttEstimate est;
};
PlotTable forest_table(const std::vector<NamedEstimate>& rows);

void write_json(const std::string& path, const json& j);
void write_table(const std::string& path, const PlotTable& t);

}  // namespace qiv::report
