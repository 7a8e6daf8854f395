#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "qiv/error.hpp"
#include "qiv/report.hpp"

namespace qiv::cli {

struct RunConfig {
    std::string command;
    std::string input;
    std::string outcome = "y";
    std::string treatment = "a";
    std::vector<std::string> qivs;
    std::vector<std::string> covariates;
    std::string method = "both";  // mle | tr | both
    double level = 0.95;
    std::uint64_t seed = 1;
    std::string scenario = "all-correct";
    std::size_t reps = 200;
    std::size_t n = 20000;
    std::string out;   // report path; empty writes the report to stdout
    std::string data;  // simulate: dataset path
    bool center = false;
    unsigned threads = 0;

    void validate() const;
    report::json to_json() const;
};

struct CommandOutput {
    report::json report;
    report::PlotTable plot;
    std::optional<Dataset> dataset;  // simulate only
};

// Runs one subcommand without touching the filesystem except for reading the
// input CSV.
CommandOutput run(const RunConfig& config);

// Plot table goes next to the report: foo.json -> foo.plot.csv.
std::string plot_path(const std::string& report_path);

// Runs, writes every output file and maps errors to exit codes
// (0 ok, 2 config, 3 data, 4 numerical).
int run_command(const RunConfig& config, std::ostream& out, std::ostream& err);

int exit_code(ErrorKind kind);

}  // namespace qiv::cli
