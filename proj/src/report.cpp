#include "qiv/report.hpp"

#include <charconv>
#include <chrono>
#include <cmath>
#include <ctime>
#include <fstream>

#include "qiv/error.hpp"
#include "qiv/gop.hpp"

namespace qiv::report {

namespace {

std::string utc_timestamp() {
    const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

json diagnostics_json(const std::vector<std::pair<std::string, std::string>>& diags) {
    json out = json::array();
    for (const auto& [k, v] : diags) out.push_back({{"key", k}, {"message", v}});
    return out;
}

json number_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

void write_text(const std::string& path, const std::string& text) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw Error(ErrorKind::Config, "cannot write '" + path + "'");
    f << text;
    if (!f) throw Error(ErrorKind::Config, "write failed for '" + path + "'");
}

}  // namespace

json header(const std::string& command, const json& config) {
    return {{"schema_version", kSchemaVersion},
            {"software", {{"name", "qiv"}, {"version", kSoftwareVersion}}},
            {"command", command},
            {"generated_at", utc_timestamp()},
            {"config", config}};
}

json to_json(const AttEstimate& e) {
    return {{"method", e.method},
            {"estimate", number_or_null(e.gamma_hat)},
            {"se", number_or_null(e.se)},
            {"ci_low", number_or_null(e.ci_low)},
            {"ci_high", number_or_null(e.ci_high)},
            {"level", e.level},
            {"diagnostics", diagnostics_json(e.diagnostics)}};
}

json to_json(const TestReport& t) {
    return {{"method", t.method},
            {"statistic", number_or_null(t.statistic)},
            {"df", t.df},
            {"p_value", number_or_null(t.p_value)},
            {"diagnostics", diagnostics_json(t.diagnostics)}};
}

json to_json(const io::Fingerprint& f) {
    return {{"rows", f.rows}, {"columns", f.columns}, {"hash", f.hex()}};
}

json to_json(const mle::MleFit& fit, const Design& d) {
    std::vector<std::string> names;
    for (const auto& n : d.gamma_names) names.push_back("beta:" + n);
    for (const auto& n : d.alpha_names) names.push_back("theta:" + n);
    for (const auto& n : d.gop_names) names.push_back("gop:" + n);
    json coef = json::array();
    for (Eigen::Index k = 0; k < fit.phi_hat.values.size(); ++k) {
        json c{{"name", k < static_cast<Eigen::Index>(names.size()) ? names[k] : std::to_string(k)},
               {"estimate", number_or_null(fit.phi_hat.values[k])}};
        if (fit.covariance_ok) c["se"] = number_or_null(std::sqrt(std::max(fit.covariance(k, k), 0.0)));
        coef.push_back(std::move(c));
    }
    json warnings = json::array();
    if (!(fit.kappa_hat > kKappaWarn)) {
        warnings.push_back("weak identification: kappa_hat = " + std::to_string(fit.kappa_hat) + " is not above 10");
    }
    if (!fit.converged) warnings.push_back("optimizer did not converge");
    if (!fit.covariance_ok) warnings.push_back("information matrix singular; standard errors omitted");
    for (const auto& msg : fit.diagnostics) warnings.push_back(msg);
    return {{"coefficients", coef},
            {"loglik", number_or_null(fit.loglik)},
            {"kappa_hat", number_or_null(fit.kappa_hat)},
            {"converged", fit.converged},
            {"covariance_ok", fit.covariance_ok},
            {"iterations", fit.iterations},
            {"optimizer", fit.optimizer},
            {"centered", d.centered},
            {"n", fit.n},
            {"warnings", warnings}};
}

json to_json(const identify::NonparametricReport& r, const std::vector<std::string>& covariates) {
    json strata = json::array();
    for (const auto& s : r.strata) {
        json key = json::object();
        for (std::size_t j = 0; j < covariates.size() && j < s.covariate_values.size(); ++j) {
            key[covariates[j]] = s.covariate_values[j];
        }
        json cells = json::array();
        for (int a = 0; a < 2; ++a) {
            for (int z = 0; z < 2; ++z) {
                cells.push_back({{"a", a}, {"z", z}, {"n", s.means.n[a][z]}, {"mean", s.means.e[a][z]}});
            }
        }
        json entry{{"stratum", key}, {"cells", cells}};
        if (s.error.empty()) {
            entry["alpha_x"] = s.identified.alpha_x;
            entry["gamma_x"] = s.identified.gamma_x;
            entry["gamma_z0"] = s.identified.gamma_z0;
            entry["gamma_z1"] = s.identified.gamma_z1;
            entry["relevance"] = s.identified.relevance;
            entry["relevance_se"] = s.identified.relevance_se;
            entry["additive_bias"] = identify::additive_bias(s.identified.alpha_x, s.means.e[0][0]);
            entry["warnings"] = s.identified.warnings;
        } else {
            entry["error"] = s.error;
        }
        strata.push_back(std::move(entry));
    }
    return {{"att", to_json(r.att)},
            {"treated_used", r.treated_used},
            {"treated_dropped", r.treated_dropped},
            {"strata", strata}};
}

json to_json(const sim::McSummary& s) {
    json est = json::array();
    for (const auto& e : s.estimators) {
        est.push_back({{"estimator", sim::to_string(e.estimator)},
                       {"mean", number_or_null(e.mean)},
                       {"bias", number_or_null(e.bias)},
                       {"mc_sd", number_or_null(e.mc_sd)},
                       {"mc_se", number_or_null(e.mc_se())},
                       {"mean_se", number_or_null(e.mean_se)},
                       {"coverage", number_or_null(e.coverage)},
                       {"n_ok", e.n_ok},
                       {"n_failed", e.n_failed}});
    }
    return {{"scenario", sim::to_string(s.spec.scenario)},
            {"n", s.spec.n},
            {"replicates", s.spec.replicates},
            {"seed", s.spec.seed},
            {"truth", s.truth},
            {"estimators", est}};
}

void PlotTable::add_row(std::vector<std::string> row) {
    if (row.size() != columns.size()) throw Error(ErrorKind::Config, "plot row width does not match header");
    rows.push_back(std::move(row));
}

std::string PlotTable::to_csv() const {
    std::string out;
    for (std::size_t j = 0; j < columns.size(); ++j) out += (j ? "," : "") + columns[j];
    out += '\n';
    for (const auto& r : rows) {
        for (std::size_t j = 0; j < r.size(); ++j) out += (j ? "," : "") + r[j];
        out += '\n';
    }
    return out;
}

std::string cell(double v) {
    if (!std::isfinite(v)) return "NA";
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

PlotTable mc_table(const sim::McSummary& s) {
    PlotTable t;
    t.columns = {"scenario", "replicate", "estimator", "ok", "estimate", "se", "ci_low", "ci_high", "covered"};
    const std::string scen = sim::to_string(s.spec.scenario);
    for (const auto& r : s.records) {
        t.add_row({scen, std::to_string(r.replicate), sim::to_string(r.estimator), r.ok ? "1" : "0",
                   r.ok ? cell(r.estimate) : "NA", r.ok ? cell(r.se) : "NA", r.ok ? cell(r.ci_low) : "NA",
                   r.ok ? cell(r.ci_high) : "NA", r.ok ? (r.covered ? "1" : "0") : "NA"});
    }
    return t;
}

PlotTable risk_grid(const std::vector<double>& gammas, const std::vector<double>& alphas,
                    const std::vector<double>& log_gops) {
    PlotTable t;
    t.columns = {"gamma", "alpha", "log_gop", "p00", "p01", "p11"};
    for (double g : gammas) {
        for (double a : alphas) {
            for (double lg : log_gops) {
                const gop::GopPoint pt{g, a, std::exp(lg)};
                if (!gop::is_valid(pt)) continue;
                const gop::RiskTriple r = gop::implied_risks(pt);
                t.add_row({cell(g), cell(a), cell(lg), cell(r.p00), cell(r.p01), cell(r.p11)});
            }
        }
    }
    return t;
}

PlotTable forest_table(const std::vector<NamedEstimate>& rows) {
    PlotTable t;
    t.columns = {"label", "method", "estimate", "se", "ci_low", "ci_high", "level"};
    for (const auto& r : rows) {
        t.add_row({r.label, r.est.method, cell(r.est.gamma_hat), cell(r.est.se), cell(r.est.ci_low),
                   cell(r.est.ci_high), cell(r.est.level)});
    }
    return t;
}

void write_json(const std::string& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

void write_table(const std::string& path, const PlotTable& t) { write_text(path, t.to_csv()); }

}  // namespace qiv::report
