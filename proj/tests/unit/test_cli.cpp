#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <sys/wait.h>

#include "commands.hpp"
#include "qiv/csv_io.hpp"
#include "qiv/mle.hpp"
#include "qiv/simgen.hpp"

using namespace qiv;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir() {
    const fs::path dir = fs::temp_directory_path() / "qiv_cli_tests";
    fs::create_directories(dir);
    return dir;
}

std::string slurp(const fs::path& p) {
    std::ifstream f(p);
    std::stringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

// Simulated data shared by the tests below.
const fs::path& simulated_csv() {
    static const fs::path path = [] {
        const fs::path p = scratch_dir() / "sim.csv";
        cli::RunConfig c;
        c.command = "simulate";
        c.n = 4000;
        c.seed = 3;
        c.data = p.string();
        c.out = (scratch_dir() / "sim.json").string();
        std::ostringstream out, err;
        REQUIRE(cli::run_command(c, out, err) == 0);
        return p;
    }();
    return path;
}

cli::RunConfig data_config(const std::string& command) {
    cli::RunConfig c;
    c.command = command;
    c.input = simulated_csv().string();
    c.qivs = {"z"};
    c.covariates = {"x1", "x2"};
    return c;
}

int run_quiet(const cli::RunConfig& c) {
    std::ostringstream out, err;
    return cli::run_command(c, out, err);
}

}  // namespace

TEST_CASE("simulate writes the dataset, a report and a risk grid") {
    const fs::path csv = simulated_csv();
    CHECK(fs::exists(csv));
    const auto report = report::json::parse(slurp(scratch_dir() / "sim.json"));
    CHECK(report["schema_version"] == report::kSchemaVersion);
    CHECK(report["command"] == "simulate");
    CHECK(report["dataset"]["rows"] == 4000);
    const std::string grid = slurp(scratch_dir() / "sim.plot.csv");
    CHECK(grid.rfind("gamma,alpha,log_gop,p00,p01,p11\n", 0) == 0);
}

TEST_CASE("fit-mle and fit-tr on the same file carry the same fingerprint") {
    const auto mle = cli::run(data_config("fit-mle")).report;
    auto tr_cfg = data_config("fit-tr");
    tr_cfg.method = "tr";
    const auto trr = cli::run(tr_cfg).report;
    CHECK(mle["dataset"]["fingerprint"] == trr["dataset"]["fingerprint"]);
    CHECK(mle["dataset"]["rows"] == 4000);
    CHECK(trr["sections"].size() == 1);
    CHECK(trr["sections"][0].contains("tr"));
    CHECK_FALSE(trr["sections"][0].contains("mle"));

    const auto sim = report::json::parse(slurp(scratch_dir() / "sim.json"));
    const Dataset d = io::load_csv(simulated_csv().string(), io::ColumnRoles{"y", "a", {"z"}, {"x1", "x2"}});
    CHECK(mle["dataset"]["fingerprint"]["hash"] == io::fingerprint(d).hex());
    CHECK(sim["dataset"]["fingerprint"]["rows"] == 4000);
}

TEST_CASE("likelihood report carries kappa_hat, coefficients and an ATT") {
    const auto rep = cli::run(data_config("fit-mle")).report;
    CHECK(rep["fit"].contains("kappa_hat"));
    CHECK(rep["fit"].contains("warnings"));
    CHECK(rep["att"]["method"] == "mle");
    CHECK(rep["att"]["ci_low"].get<double>() < rep["att"]["ci_high"].get<double>());
}

TEST_CASE("weak identification warning follows kappa_hat") {
    const Dataset d = io::load_csv(simulated_csv().string(), io::ColumnRoles{"y", "a", {"z"}, {"x1", "x2"}});
    const Design design = build_design(d, ModelSpec::all_columns(d));
    mle::MleFit fit = mle::fit_mle(design);
    auto has_warning = [&](double kappa) {
        fit.kappa_hat = kappa;
        const auto j = report::to_json(fit, design);
        for (const auto& w : j["warnings"]) {
            if (w.get<std::string>().find("kappa_hat") != std::string::npos) return true;
        }
        return false;
    };
    CHECK(has_warning(3.0));
    CHECK(has_warning(10.0));
    CHECK_FALSE(has_warning(10.5));
}

TEST_CASE("reports are identical across runs apart from the timestamp") {
    auto strip = [](report::json j) {
        j.erase("generated_at");
        return j.dump();
    };
    const auto c = data_config("fit-tr");
    CHECK(strip(cli::run(c).report) == strip(cli::run(c).report));

    cli::RunConfig mc;
    mc.command = "mc";
    mc.n = 1000;
    mc.reps = 3;
    mc.seed = 7;
    CHECK(strip(cli::run(mc).report) == strip(cli::run(mc).report));
}

TEST_CASE("mc plot table has one row per replicate and estimator") {
    cli::RunConfig mc;
    mc.command = "mc";
    mc.n = 1000;
    mc.reps = 3;
    mc.seed = 7;
    const auto out = cli::run(mc);
    CHECK(out.plot.rows.size() == 6);
    CHECK(out.plot.columns.front() == "scenario");
    CHECK(out.report["summary"]["estimators"].size() == 2);
    mc.method = "tr";
    CHECK(cli::run(mc).plot.rows.size() == 3);
}

TEST_CASE("a constant QIV makes fit-tr fail") {
    const fs::path p = scratch_dir() / "constant_qiv.csv";
    {
        std::ofstream f(p);
        f << "y,a,z,x1\n";
        for (int i = 0; i < 400; ++i) f << (i % 3 == 0) << ',' << (i % 2) << ",1," << (i % 7) * 0.1 << '\n';
    }
    cli::RunConfig c;
    c.command = "fit-tr";
    c.input = p.string();
    c.qivs = {"z"};
    CHECK(run_quiet(c) != 0);
}

TEST_CASE("invalid configurations exit with status 2") {
    auto c = data_config("fit-tr");
    c.level = 1.5;
    CHECK(run_quiet(c) == 2);
    c = data_config("fit-tr");
    c.command = "fit-everything";
    CHECK(run_quiet(c) == 2);
    c = data_config("fit-tr");
    c.covariates = {"z"};
    CHECK(run_quiet(c) == 2);
    c = data_config("identify");
    c.input = "/nonexistent.csv";
    CHECK(run_quiet(c) == 2);
    cli::RunConfig mc;
    mc.command = "mc";
    mc.scenario = "m9";
    CHECK(run_quiet(mc) == 2);
}

TEST_CASE("malformed data exits with status 3") {
    const fs::path p = scratch_dir() / "bad.csv";
    {
        std::ofstream f(p);
        f << "y,a,z\n1,0,1\n0,3,1\n";
    }
    cli::RunConfig c;
    c.command = "fit-mle";
    c.input = p.string();
    c.qivs = {"z"};
    std::ostringstream out, err;
    CHECK(cli::run_command(c, out, err) == 3);
    CHECK(err.str().find("row 2, column 'a'") != std::string::npos);
}

TEST_CASE("plot tables sit next to the report") {
    CHECK(cli::plot_path("out/report.json") == "out/report.plot.csv");
    CHECK(cli::plot_path("report") == "report.plot.csv");
}

TEST_CASE("command-line front end") {
    const char* exe = std::getenv("QIV_CLI");
    if (exe == nullptr) return;
    auto status = [](const std::string& cmd) {
        const int rc = std::system((cmd + " >/dev/null 2>&1").c_str());
        return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
    };
    const std::string bin = std::string("\"") + exe + "\"";
    const std::string input = " --input \"" + simulated_csv().string() + "\"";
    const std::string report = (scratch_dir() / "cli_identify.json").string();
    CHECK(status(bin + " identify" + input + " --qiv z --covariates x1 --out \"" + report + "\"") == 0);
    CHECK(fs::exists(report));
    CHECK(fs::exists(cli::plot_path(report)));
    CHECK(status(bin + " fit-mle" + input) == 2);
    CHECK(status(bin + " fit-mle" + input + " --qiv z --method magic") == 2);
    CHECK(status(bin + " fit-mle" + input + " --qiv z --level 2") == 2);
    CHECK(status(bin + " frobnicate") == 2);
    CHECK(status(bin + " --help") == 0);
}
