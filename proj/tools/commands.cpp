#include "commands.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

#include "qiv/csv_io.hpp"
#include "qiv/error.hpp"
#include "qiv/identify.hpp"
#include "qiv/mle.hpp"
#include "qiv/simgen.hpp"
#include "qiv/tr.hpp"

namespace qiv::cli {

namespace {

using report::json;

const std::vector<std::string> kCommands{"fit-mle", "fit-tr", "test-null", "identify", "simulate", "mc"};

bool wants(const RunConfig& c, const char* method) { return c.method == "both" || c.method == method; }

Dataset load_input(const RunConfig& c) {
    io::ColumnRoles roles;
    roles.outcome = c.outcome;
    roles.treatment = c.treatment;
    roles.qivs = c.qivs;
    roles.covariates = c.covariates;
    return io::load_csv(c.input, roles);
}

json dataset_json(const RunConfig& c, const Dataset& d) {
    return {{"source", c.input},
            {"rows", d.n()},
            {"treated", d.n_treated()},
            {"outcome", d.outcome_name},
            {"treatment", d.treatment_name},
            {"qivs", d.z_names},
            {"covariates", d.x_names},
            {"fingerprint", report::to_json(io::fingerprint(d))}};
}

ModelSpec outcome_spec(const Dataset& d, const std::vector<std::string>& qivs, bool center) {
    ModelSpec spec;
    spec.gamma_covariates = d.x_names;
    spec.alpha_covariates = d.x_names;
    spec.gop_covariates = d.x_names;
    spec.qivs = qivs;
    spec.center = center;
    return spec;
}

tr::TrSpec tr_spec(const Dataset& d, const std::string& qiv, bool center) {
    tr::TrSpec spec;
    spec.propensity_covariates = d.x_names;
    spec.outcome = outcome_spec(d, {qiv}, center);
    return spec;
}

json relevance_json(const identify::RelevanceStat& r) {
    return {{"difference", r.difference}, {"se", r.se}, {"p_value", r.p_value}, {"n_z0", r.n_z0}, {"n_z1", r.n_z1}};
}

CommandOutput fit_mle_cmd(const RunConfig& c) {
    const Dataset d = load_input(c);
    const Design design = build_design(d, outcome_spec(d, d.z_names, c.center));
    const mle::MleFit fit = mle::fit_mle(design);
    AttEstimate att = mle::marginal_att_plugin(fit, design, c.level);

    CommandOutput out;
    out.report = report::header(c.command, c.to_json());
    out.report["dataset"] = dataset_json(c, d);
    out.report["fit"] = report::to_json(fit, design);
    out.report["att"] = report::to_json(att);
    out.plot = report::forest_table({{"mle", att}});
    return out;
}

CommandOutput fit_tr_cmd(const RunConfig& c) {
    const Dataset d = load_input(c);
    tr::TrConfig config;
    config.level = c.level;

    CommandOutput out;
    out.report = report::header(c.command, c.to_json());
    out.report["dataset"] = dataset_json(c, d);
    json sections = json::array();
    std::vector<report::NamedEstimate> forest;
    for (std::size_t k = 0; k < d.z_names.size(); ++k) {
        const std::string& qiv = d.z_names[k];
        json section{{"qiv", qiv}};
        section["relevance"] = relevance_json(identify::relevance_stat(d, static_cast<int>(k)));
        const tr::NuisanceFits nf = tr::fit_nuisances(d, tr_spec(d, qiv, c.center), config);
        section["outcome_fit"] = report::to_json(nf.outcome, nf.outcome_design);
        section["provenance"] = nf.provenance;
        if (wants(c, "tr")) {
            const AttEstimate est = tr::tr_estimate(d, nf, c.level);
            section["tr"] = report::to_json(est);
            forest.push_back({qiv, est});
        }
        if (wants(c, "mle")) {
            const AttEstimate est = mle::marginal_att_plugin(nf.outcome, nf.outcome_design, c.level);
            section["mle"] = report::to_json(est);
            forest.push_back({qiv, est});
        }
        sections.push_back(std::move(section));
    }
    out.report["sections"] = sections;
    out.plot = report::forest_table(forest);
    return out;
}

CommandOutput test_null_cmd(const RunConfig& c) {
    const Dataset d = load_input(c);
    tr::TrConfig config;
    config.level = c.level;

    CommandOutput out;
    out.report = report::header(c.command, c.to_json());
    out.report["dataset"] = dataset_json(c, d);
    out.plot.columns = {"qiv", "method", "statistic", "df", "p_value"};
    if (wants(c, "mle")) {
        const Design design = build_design(d, outcome_spec(d, d.z_names, c.center));
        const TestReport t = mle::lr_test_null(design);
        out.report["likelihood_ratio"] = report::to_json(t);
        out.plot.add_row({"all", t.method, report::cell(t.statistic), report::cell(t.df), report::cell(t.p_value)});
    }
    if (wants(c, "tr")) {
        json sections = json::array();
        for (const auto& qiv : d.z_names) {
            const TestReport t = tr::dr_score_test(d, tr_spec(d, qiv, c.center), config);
            sections.push_back({{"qiv", qiv}, {"test", report::to_json(t)}});
            out.plot.add_row({qiv, t.method, report::cell(t.statistic), report::cell(t.df), report::cell(t.p_value)});
        }
        out.report["dr_score"] = sections;
    }
    return out;
}

CommandOutput identify_cmd(const RunConfig& c) {
    const Dataset d = load_input(c);
    CommandOutput out;
    out.report = report::header(c.command, c.to_json());
    out.report["dataset"] = dataset_json(c, d);
    json sections = json::array();
    std::vector<report::NamedEstimate> forest;
    for (std::size_t k = 0; k < d.z_names.size(); ++k) {
        const auto r = identify::identify_strata(d, d.x_names, static_cast<int>(k), c.level);
        json section = report::to_json(r, d.x_names);
        section["qiv"] = d.z_names[k];
        section["relevance"] = relevance_json(identify::relevance_stat(d, static_cast<int>(k)));
        sections.push_back(std::move(section));
        forest.push_back({d.z_names[k], r.att});
    }
    out.report["sections"] = sections;
    out.plot = report::forest_table(forest);
    return out;
}

sim::ScenarioSpec scenario_spec(const RunConfig& c) {
    sim::ScenarioSpec spec;
    spec.scenario = sim::parse_scenario(c.scenario);
    spec.n = c.n;
    spec.seed = c.seed;
    spec.replicates = c.reps;
    spec.validate();
    return spec;
}

CommandOutput simulate_cmd(const RunConfig& c) {
    const sim::ScenarioSpec spec = scenario_spec(c);
    CommandOutput out;
    out.dataset = sim::simulate_dataset(spec, 0);
    const Dataset& d = *out.dataset;
    const sim::AnalysisCovariates cov = sim::apply_misspec(spec.scenario);
    out.report = report::header(c.command, c.to_json());
    out.report["dataset"] = {{"path", c.data},
                             {"rows", d.n()},
                             {"treated", d.n_treated()},
                             {"fingerprint", report::to_json(io::fingerprint(d))}};
    out.report["scenario"] = {{"name", sim::to_string(spec.scenario)},
                              {"true_att", sim::kTrueAtt},
                              {"analysis_covariates",
                               {{"gamma", cov.gamma}, {"alpha", cov.alpha}, {"gop", cov.gop}, {"propensity", cov.propensity}}}};
    std::vector<double> gammas, alphas, log_gops;
    for (int i = -4; i <= 4; ++i) gammas.push_back(0.2 * i);
    for (double a : {0.5, 1.0, 1.2, 1.5, 2.0}) alphas.push_back(a);
    for (int i = -20; i <= 20; ++i) log_gops.push_back(0.5 * i);
    out.plot = report::risk_grid(gammas, alphas, log_gops);
    return out;
}

CommandOutput mc_cmd(const RunConfig& c) {
    const sim::ScenarioSpec spec = scenario_spec(c);
    std::vector<sim::Estimator> estimators;
    if (wants(c, "mle")) estimators.push_back(sim::Estimator::Mle);
    if (wants(c, "tr")) estimators.push_back(sim::Estimator::Tr);
    sim::McOptions opts;
    opts.level = c.level;
    opts.threads = c.threads;
    const sim::McSummary summary = sim::run_mc(spec, estimators, opts);
    CommandOutput out;
    out.report = report::header(c.command, c.to_json());
    out.report["summary"] = report::to_json(summary);
    out.plot = report::mc_table(summary);
    return out;
}

}  // namespace

void RunConfig::validate() const {
    if (std::find(kCommands.begin(), kCommands.end(), command) == kCommands.end()) {
        throw Error(ErrorKind::Config, "unknown subcommand '" + command + "'");
    }
    if (!(level > 0.0 && level < 1.0)) throw Error(ErrorKind::Config, "--level must lie in (0, 1)");
    if (method != "mle" && method != "tr" && method != "both") {
        throw Error(ErrorKind::Config, "--method must be mle, tr or both");
    }
    const bool needs_input = command != "simulate" && command != "mc";
    if (needs_input) {
        if (input.empty()) throw Error(ErrorKind::Config, command + " needs --input");
        if (qivs.empty()) throw Error(ErrorKind::Config, command + " needs at least one --qiv");
        io::ColumnRoles roles{outcome, treatment, qivs, covariates};
        roles.validate();
    } else {
        sim::parse_scenario(scenario);
        if (n < 100) throw Error(ErrorKind::Config, "--n must be at least 100");
        if (command == "mc" && reps == 0) throw Error(ErrorKind::Config, "--reps must be positive");
    }
}

report::json RunConfig::to_json() const {
    json j{{"command", command}, {"level", level}, {"method", method}, {"center", center}};
    if (command == "simulate" || command == "mc") {
        j["scenario"] = scenario;
        j["n"] = n;
        j["seed"] = seed;
        if (command == "mc") j["reps"] = reps;
        if (command == "simulate") j["data"] = data;
    } else {
        j["input"] = input;
        j["outcome"] = outcome;
        j["treatment"] = treatment;
        j["qivs"] = qivs;
        j["covariates"] = covariates;
    }
    return j;
}

CommandOutput run(const RunConfig& config) {
    config.validate();
    if (config.command == "fit-mle") return fit_mle_cmd(config);
    if (config.command == "fit-tr") return fit_tr_cmd(config);
    if (config.command == "test-null") return test_null_cmd(config);
    if (config.command == "identify") return identify_cmd(config);
    if (config.command == "simulate") return simulate_cmd(config);
    return mc_cmd(config);
}

std::string plot_path(const std::string& report_path) {
    const std::string ext = ".json";
    std::string stem = report_path;
    if (stem.size() > ext.size() && stem.compare(stem.size() - ext.size(), ext.size(), ext) == 0) {
        stem.resize(stem.size() - ext.size());
    }
    return stem + ".plot.csv";
}

int exit_code(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::Config: return 2;
        case ErrorKind::Numerical: return 4;
        default: return 3;
    }
}

int run_command(const RunConfig& config, std::ostream& out, std::ostream& err) {
    try {
        RunConfig c = config;
        if (c.command == "simulate" && c.data.empty()) c.data = "simulated.csv";
        CommandOutput result = run(c);
        if (result.dataset) io::write_csv(c.data, *result.dataset);
        if (c.out.empty()) {
            out << result.report.dump(2) << '\n';
        } else {
            report::write_json(c.out, result.report);
            report::write_table(plot_path(c.out), result.plot);
        }
        return 0;
    } catch (const Error& e) {
        err << "error (" << to_string(e.kind()) << "): " << e.what() << '\n';
        return exit_code(e.kind());
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return 4;
    }
}

}  // namespace qiv::cli
