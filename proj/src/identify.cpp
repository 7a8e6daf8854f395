#include "qiv/identify.hpp"

#include <cmath>
#include <map>
#include <sstream>

#include "qiv/error.hpp"
#include "qiv/stats.hpp"

namespace qiv::identify {

namespace {

double cell_var(double e, std::size_t n) { return e * (1.0 - e) / static_cast<double>(n); }

// gamma(x) as a function of the four cell means with fixed counts.
double gamma_of(const StratumMeans& s) {
    const double alpha = (s.e[1][1] - s.e[1][0]) / (s.e[0][1] - s.e[0][0]);
    const double g0 = s.e[1][0] - alpha * s.e[0][0];
    const double g1 = s.e[1][1] - alpha * s.e[0][1];
    const double w0 = static_cast<double>(s.n[1][0]);
    const double w1 = static_cast<double>(s.n[1][1]);
    return (w0 * g0 + w1 * g1) / (w0 + w1);
}

// Delta-method variance of gamma(x) over independent binomial cells.
double gamma_variance(const StratumMeans& s) {
    double var = 0.0;
    for (int a = 0; a < 2; ++a) {
        for (int z = 0; z < 2; ++z) {
            const double h = 1e-6;
            StratumMeans up = s, down = s;
            up.e[a][z] += h;
            down.e[a][z] -= h;
            const double deriv = (gamma_of(up) - gamma_of(down)) / (2.0 * h);
            var += deriv * deriv * cell_var(s.e[a][z], s.n[a][z]);
        }
    }
    return var;
}

}  // namespace

Identified np_identify(const StratumMeans& s, const IdentifyOptions& opts) {
    for (int a = 0; a < 2; ++a) {
        for (int z = 0; z < 2; ++z) {
            if (s.n[a][z] == 0) {
                std::ostringstream os;
                os << "empty cell (a=" << a << ", z=" << z << ")";
                throw Error(ErrorKind::Data, os.str());
            }
            if (!(s.e[a][z] >= 0.0 && s.e[a][z] <= 1.0)) throw Error(ErrorKind::Domain, "cell mean outside [0, 1]");
        }
    }

    Identified out;
    out.relevance = s.e[0][1] - s.e[0][0];
    out.relevance_se = std::sqrt(cell_var(s.e[0][1], s.n[0][1]) + cell_var(s.e[0][0], s.n[0][0]));
    const double threshold = std::max(opts.relevance_floor, opts.relevance_se_multiple * out.relevance_se);
    if (!(std::abs(out.relevance) > threshold)) {
        std::ostringstream os;
        os << "QIV not predictive of the outcome among the untreated: |e(0,1) - e(0,0)| = " << std::abs(out.relevance)
           << " <= " << threshold;
        throw Error(ErrorKind::WeakQiv, os.str());
    }

    out.alpha_x = (s.e[1][1] - s.e[1][0]) / out.relevance;
    out.gamma_z0 = s.e[1][0] - out.alpha_x * s.e[0][0];
    out.gamma_z1 = s.e[1][1] - out.alpha_x * s.e[0][1];
    const double w0 = static_cast<double>(s.n[1][0]);
    const double w1 = static_cast<double>(s.n[1][1]);
    out.gamma_x = (w0 * out.gamma_z0 + w1 * out.gamma_z1) / (w0 + w1);

    if (!(out.alpha_x > 0.0)) {
        out.warnings.push_back("model violation: identified alpha(x) is not positive");
    }
    if (!(std::abs(out.gamma_x) < 1.0)) {
        out.warnings.push_back("model violation: identified gamma(x) outside (-1, 1)");
    }
    // With a binary QIV the two z-specific values agree algebraically; a gap
    // here can only come from rounding.
    if (std::abs(out.gamma_z0 - out.gamma_z1) > 1e-9) {
        out.warnings.push_back("gamma(x) differs between z=0 and z=1");
    }
    return out;
}

double additive_bias(double alpha_x, double e00) { return (alpha_x - 1.0) * e00; }

RelevanceStat relevance_stat(const Dataset& d, int qiv_index, const RowSelector& select) {
    if (qiv_index < 0 || qiv_index >= d.z.cols()) throw Error(ErrorKind::Config, "QIV index out of range");
    double sum[2] = {0.0, 0.0};
    std::size_t count[2] = {0, 0};
    for (std::size_t i = 0; i < d.n(); ++i) {
        const auto r = static_cast<Eigen::Index>(i);
        if (d.a[r] != 0.0) continue;
        if (select && !select(i)) continue;
        const int z = d.z(r, qiv_index) == 1.0 ? 1 : 0;
        sum[z] += d.y[r];
        ++count[z];
    }
    if (count[0] == 0 || count[1] == 0) {
        throw Error(ErrorKind::Data, "relevance statistic needs untreated units at both QIV levels");
    }
    RelevanceStat out;
    out.n_z0 = count[0];
    out.n_z1 = count[1];
    const double m0 = sum[0] / static_cast<double>(count[0]);
    const double m1 = sum[1] / static_cast<double>(count[1]);
    out.difference = m1 - m0;
    out.se = std::sqrt(cell_var(m1, count[1]) + cell_var(m0, count[0]));
    if (out.se > 0.0) {
        out.p_value = stats::normal_two_sided_p(out.difference / out.se);
    } else {
        out.p_value = out.difference == 0.0 ? 1.0 : 0.0;
    }
    return out;
}

StratumMeans stratum_means(const Dataset& d, int qiv_index, const RowSelector& select) {
    if (qiv_index < 0 || qiv_index >= d.z.cols()) throw Error(ErrorKind::Config, "QIV index out of range");
    StratumMeans s;
    std::array<std::array<double, 2>, 2> sum{};
    for (std::size_t i = 0; i < d.n(); ++i) {
        if (select && !select(i)) continue;
        const auto r = static_cast<Eigen::Index>(i);
        const int a = d.a[r] == 1.0 ? 1 : 0;
        const int z = d.z(r, qiv_index) == 1.0 ? 1 : 0;
        sum[a][z] += d.y[r];
        ++s.n[a][z];
    }
    for (int a = 0; a < 2; ++a) {
        for (int z = 0; z < 2; ++z) {
            s.e[a][z] = s.n[a][z] > 0 ? sum[a][z] / static_cast<double>(s.n[a][z]) : 0.0;
        }
    }
    return s;
}

NonparametricReport identify_strata(const Dataset& d, const std::vector<std::string>& covariates, int qiv_index,
                                    double level, const IdentifyOptions& opts) {
    std::vector<int> cols;
    for (const auto& name : covariates) {
        const int j = d.x_index(name);
        if (j < 0) throw Error(ErrorKind::Config, "unknown covariate column '" + name + "'");
        cols.push_back(j);
    }

    std::map<std::vector<double>, std::vector<std::size_t>> groups;
    for (std::size_t i = 0; i < d.n(); ++i) {
        std::vector<double> key;
        for (int j : cols) key.push_back(d.x(static_cast<Eigen::Index>(i), j));
        groups[key].push_back(i);
    }
    constexpr std::size_t kMaxStrata = 1000;
    if (groups.size() > kMaxStrata) {
        throw Error(ErrorKind::Data, "more than 1000 covariate strata; stratified identification needs discrete covariates");
    }

    NonparametricReport report;
    double weighted = 0.0;
    double var_within = 0.0;
    std::vector<std::pair<double, double>> used;  // (treated count, gamma)
    for (const auto& [key, rows] : groups) {
        std::vector<char> in_stratum(d.n(), 0);
        for (std::size_t i : rows) in_stratum[i] = 1;
        StratumResult sr;
        sr.covariate_values = key;
        sr.means = stratum_means(d, qiv_index, [&](std::size_t i) { return in_stratum[i] != 0; });
        const std::size_t treated = sr.means.n[1][0] + sr.means.n[1][1];
        try {
            sr.identified = np_identify(sr.means, opts);
            used.emplace_back(static_cast<double>(treated), sr.identified.gamma_x);
            var_within += static_cast<double>(treated) * static_cast<double>(treated) * gamma_variance(sr.means);
            weighted += static_cast<double>(treated) * sr.identified.gamma_x;
            report.treated_used += treated;
        } catch (const Error& e) {
            sr.error = e.what();
            report.treated_dropped += treated;
        }
        report.strata.push_back(std::move(sr));
    }

    AttEstimate& att = report.att;
    att.method = "nonparametric";
    if (report.treated_used == 0) {
        throw Error(ErrorKind::WeakQiv, "no covariate stratum could be identified");
    }
    const double n1 = static_cast<double>(report.treated_used);
    att.gamma_hat = weighted / n1;
    double var_between = 0.0;
    for (const auto& [w, g] : used) var_between += (w / n1) * (g - att.gamma_hat) * (g - att.gamma_hat);
    att.se = std::sqrt(var_within / (n1 * n1) + var_between / n1);
    if (report.treated_dropped > 0) {
        att.diagnostics.emplace_back("warning", std::to_string(report.treated_dropped) +
                                                    " treated units in unidentified strata were dropped");
    }
    att.diagnostics.emplace_back("gamma_reconciliation", "treated-count-weighted average of z=0 and z=1 values");
    set_wald_interval(att, level);
    return report;
}

}  // namespace qiv::identify
