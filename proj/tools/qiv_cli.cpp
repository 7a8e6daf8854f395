#include <iostream>

#include <CLI11.hpp>

#include "commands.hpp"

namespace {

void add_data_flags(CLI::App* sub, qiv::cli::RunConfig& c) {
    sub->add_option("--input", c.input, "CSV file with a header row")->required();
    sub->add_option("--outcome", c.outcome, "binary outcome column");
    sub->add_option("--treatment", c.treatment, "binary treatment column");
    sub->add_option("--qiv", c.qivs, "binary quasi-instrument column (repeatable)")->required();
    sub->add_option("--covariates", c.covariates, "covariate columns (default: all remaining)")->delimiter(',');
    sub->add_flag("--center", c.center, "center covariates before fitting");
}

void add_common_flags(CLI::App* sub, qiv::cli::RunConfig& c) {
    sub->add_option("--method", c.method, "mle, tr or both")->check(CLI::IsMember({"mle", "tr", "both"}));
    sub->add_option("--level", c.level, "confidence level");
    sub->add_option("--out", c.out, "report path (plot table written next to it)");
}

void add_sim_flags(CLI::App* sub, qiv::cli::RunConfig& c) {
    sub->add_option("--scenario", c.scenario, "all-correct, m1-correct, m2-correct or m3-correct");
    sub->add_option("--n", c.n, "units per dataset");
    sub->add_option("--seed", c.seed, "base seed");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"ATT estimation for binary outcomes with a quasi-instrumental variable"};
    app.require_subcommand(1);
    qiv::cli::RunConfig c;

    auto* fit_mle = app.add_subcommand("fit-mle", "bounded maximum likelihood fit and plug-in ATT");
    add_data_flags(fit_mle, c);
    add_common_flags(fit_mle, c);

    auto* fit_tr = app.add_subcommand("fit-tr", "triply robust ATT, one section per QIV");
    add_data_flags(fit_tr, c);
    add_common_flags(fit_tr, c);

    auto* test_null = app.add_subcommand("test-null", "test of no treatment effect on the treated");
    add_data_flags(test_null, c);
    add_common_flags(test_null, c);

    auto* identify = app.add_subcommand("identify", "stratified nonparametric identification");
    add_data_flags(identify, c);
    add_common_flags(identify, c);

    auto* simulate = app.add_subcommand("simulate", "draw one dataset from a simulation scenario");
    add_sim_flags(simulate, c);
    simulate->add_option("--data", c.data, "CSV path for the simulated data");
    simulate->add_option("--out", c.out, "report path");

    auto* mc = app.add_subcommand("mc", "Monte Carlo study of one scenario");
    add_sim_flags(mc, c);
    add_common_flags(mc, c);
    mc->add_option("--reps", c.reps, "replicates");
    mc->add_option("--threads", c.threads, "worker threads (default: QIV_THREADS or all cores)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }
    c.command = app.get_subcommands().front()->get_name();
    return qiv::cli::run_command(c, std::cout, std::cerr);
}
