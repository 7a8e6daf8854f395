#include "qiv/tr.hpp"

#include <cmath>
#include <sstream>

#include "qiv/error.hpp"
#include "qiv/stats.hpp"

namespace qiv::tr {

namespace {

constexpr double kDenominatorGuard = 1e-6;
constexpr int kRefitMaxIter = 100;

int require_single_qiv(const Dataset& d, const TrSpec& spec) {
    if (spec.outcome.qivs.size() != 1) {
        throw Error(ErrorKind::Config, "the triply robust estimator analyses exactly one binary QIV at a time");
    }
    const int q = d.z_index(spec.outcome.qivs.front());
    if (q < 0) throw Error(ErrorKind::Config, "unknown QIV column '" + spec.outcome.qivs.front() + "'");
    return q;
}

Eigen::MatrixXd propensity_a_design(const Eigen::MatrixXd& pz_design, const Eigen::VectorXd& z) {
    Eigen::MatrixXd m(pz_design.rows(), pz_design.cols() + 1);
    m.col(0) = pz_design.col(0);
    m.col(1) = z;
    m.rightCols(pz_design.cols() - 1) = pz_design.rightCols(pz_design.cols() - 1);
    return m;
}

Dataset with_qiv_fixed(const Dataset& d, int qiv_index, double value) {
    Dataset out = d;
    out.z.col(qiv_index).setConstant(value);
    return out;
}

UnitObs observation(const Dataset& d, int qiv_index, Eigen::Index i) {
    return UnitObs{d.y[i], d.a[i], d.z(i, qiv_index) == 1.0 ? 1 : 0};
}

// P(A = a | Z = z, X) for the observed a.
double prob_observed_a(const UnitObs& o, const UnitNuisance& u) {
    const double pa1 = u.pa1[o.z];
    return o.a == 1.0 ? pa1 : 1.0 - pa1;
}

void refresh_links(NuisanceFits& nf) {
    const Design& od = nf.outcome_design;
    for (Eigen::Index i = 0; i < static_cast<Eigen::Index>(nf.units.size()); ++i) {
        UnitNuisance& u = nf.units[i];
        u.alpha = std::exp(od.alpha.row(i).dot(nf.theta));
        u.gamma = nf.beta.size() > 0 ? std::tanh(od.gamma.row(i).dot(nf.beta)) : 0.0;
    }
}

Eigen::MatrixXd default_h(const Eigen::MatrixXd& h, const Eigen::MatrixXd& fallback) {
    return h.size() == 0 ? fallback : h;
}

// Damped Newton on a just-identified moment system sum_i m_i(c) = 0.
template <typename MomentFn>
RefitResult solve_moments(const Eigen::VectorXd& start, double n, MomentFn&& moments) {
    RefitResult r;
    r.coef = start;
    Eigen::VectorXd m;
    Eigen::MatrixXd jac;
    moments(r.coef, m, jac);
    r.moment_norm = m.cwiseAbs().maxCoeff();
    for (int it = 1; it <= kRefitMaxIter; ++it) {
        r.iterations = it;
        if (r.moment_norm < 1e-8 * n) {
            r.converged = true;
            return r;
        }
        Eigen::FullPivLU<Eigen::MatrixXd> lu(jac);
        if (!lu.isInvertible()) break;
        const Eigen::VectorXd step = -lu.solve(m);
        double t = 1.0;
        bool moved = false;
        for (int h = 0; h < 40; ++h, t *= 0.5) {
            const Eigen::VectorXd trial = r.coef + t * step;
            Eigen::VectorXd m_trial;
            Eigen::MatrixXd jac_trial;
            moments(trial, m_trial, jac_trial);
            const double norm = m_trial.allFinite() ? m_trial.cwiseAbs().maxCoeff() : INFINITY;
            if (norm < r.moment_norm) {
                r.coef = trial;
                m = m_trial;
                jac = jac_trial;
                r.moment_norm = norm;
                moved = true;
                break;
            }
        }
        if (!moved) break;
    }
    r.converged = r.moment_norm < 1e-8 * n;
    return r;
}

void require_identified_instrument(const Dataset& d, int q, const std::vector<UnitNuisance>& units) {
    double max_resid = 0.0;
    for (Eigen::Index i = 0; i < static_cast<Eigen::Index>(units.size()); ++i) {
        max_resid = std::max(max_resid, std::abs(d.z(i, q) - units[i].pz1));
    }
    if (max_resid < 1e-8) {
        throw Error(ErrorKind::WeakQiv, "Z - P(Z=1|X) vanishes for every unit; the refit moments are unidentified");
    }
}

}  // namespace

TrSpec TrSpec::all_columns(const Dataset& d, const std::string& qiv) {
    TrSpec s;
    s.propensity_covariates = d.x_names;
    s.outcome = ModelSpec::all_columns(d);
    s.outcome.qivs = {qiv};
    return s;
}

namespace {

NuisanceFits fit_nuisances_impl(const Dataset& d, const TrSpec& spec, const TrConfig& config, bool null_gamma) {
    d.validate();
    NuisanceFits nf;
    const int q = require_single_qiv(d, spec);
    nf.qiv_index = q;
    const Eigen::VectorXd z = d.z.col(q);

    nf.pz_design = intercept_design(d, spec.propensity_covariates);
    nf.pa_design = propensity_a_design(nf.pz_design, z);
    nf.pi_z = glm::fit_logistic(z, nf.pz_design);
    nf.pi_a = glm::fit_logistic(d.a, nf.pa_design);
    if (!nf.pi_z.converged) nf.provenance.push_back("P(Z|X) logistic fit did not converge");
    if (!nf.pi_a.converged) nf.provenance.push_back("P(A|Z,X) logistic fit did not converge");

    const std::size_t n = d.n();
    nf.units.resize(n);
    const Eigen::VectorXd pz1 = glm::predict_rows(nf.pi_z, nf.pz_design);
    const Eigen::VectorXd pa1_z0 = glm::predict_rows(nf.pi_a, propensity_a_design(nf.pz_design, Eigen::VectorXd::Zero(n)));
    const Eigen::VectorXd pa1_z1 = glm::predict_rows(nf.pi_a, propensity_a_design(nf.pz_design, Eigen::VectorXd::Ones(n)));
    std::size_t violations = 0;
    for (std::size_t i = 0; i < n; ++i) {
        UnitNuisance& u = nf.units[i];
        const auto r = static_cast<Eigen::Index>(i);
        u.pz1 = pz1[r];
        u.pa1 = {pa1_z0[r], pa1_z1[r]};
        for (int zz = 0; zz < 2; ++zz) {
            const double pz = zz == 1 ? u.pz1 : 1.0 - u.pz1;
            if (pz * u.pa1[zz] < config.positivity_floor || pz * (1.0 - u.pa1[zz]) < config.positivity_floor) {
                ++violations;
                break;
            }
        }
    }
    if (violations > 0) {
        std::ostringstream os;
        os << "positivity violated: " << violations << " units have a fitted P(A,Z|X) cell below "
           << config.positivity_floor;
        throw Error(ErrorKind::Positivity, os.str());
    }

    Design full = build_design(d, spec.outcome);
    nf.outcome_design = null_gamma ? full.without_gamma() : full;
    nf.outcome = mle::fit_mle(nf.outcome_design, config.mle);
    nf.provenance.push_back("outcome: GOP maximum likelihood (" + nf.outcome.optimizer + ")");
    if (!nf.outcome.converged) nf.provenance.push_back("outcome likelihood fit did not converge");
    nf.theta = nf.outcome.phi_hat.theta();
    nf.beta = nf.outcome.phi_hat.beta();

    for (int zz = 0; zz < 2; ++zz) {
        Design dz = build_design(with_qiv_fixed(d, q, zz), spec.outcome);
        if (null_gamma) dz = dz.without_gamma();
        for (std::size_t i = 0; i < n; ++i) nf.units[i].e0[zz] = mle::risk(nf.outcome.phi_hat, 0, dz, i);
    }
    refresh_links(nf);
    nf.p_treated = d.a.mean();

    if (config.dr_refit && !null_gamma) {
        for (int pass = 0; pass < config.refit_passes; ++pass) {
            const RefitResult ra = dr_refit_alpha(d, nf);
            if (ra.converged) {
                nf.theta = ra.coef;
                nf.alpha_refit = true;
            } else {
                nf.provenance.push_back("alpha(X) doubly robust refit did not converge; kept likelihood estimate");
            }
            refresh_links(nf);
            const RefitResult rg = dr_refit_gamma(d, nf);
            if (rg.converged) {
                nf.beta = rg.coef;
                nf.gamma_refit = true;
            } else {
                nf.provenance.push_back("gamma(X) doubly robust refit did not converge; kept likelihood estimate");
            }
            refresh_links(nf);
        }
        if (nf.alpha_refit) nf.provenance.push_back("alpha(X): doubly robust moment refit");
        if (nf.gamma_refit) nf.provenance.push_back("gamma(X): doubly robust moment refit");
    }
    return nf;
}

}  // namespace

NuisanceFits fit_nuisances(const Dataset& d, const TrSpec& spec, const TrConfig& config) {
    return fit_nuisances_impl(d, spec, config, false);
}

RefitResult dr_refit_alpha(const Dataset& d, const NuisanceFits& nf, const Eigen::MatrixXd& h_in) {
    const Eigen::MatrixXd& xa = nf.outcome_design.alpha;
    const Eigen::MatrixXd h = default_h(h_in, xa);
    const int q = nf.qiv_index;
    const auto n = static_cast<Eigen::Index>(d.n());
    if (h.rows() != n || h.cols() != xa.cols()) {
        throw Error(ErrorKind::Config, "h(X) must have one row per unit and dim(theta) columns");
    }
    require_identified_instrument(d, q, nf.units);

    auto moments = [&](const Eigen::VectorXd& theta, Eigen::VectorXd& m, Eigen::MatrixXd& jac) {
        m = Eigen::VectorXd::Zero(h.cols());
        jac = Eigen::MatrixXd::Zero(h.cols(), xa.cols());
        for (Eigen::Index i = 0; i < n; ++i) {
            const UnitObs o = observation(d, q, i);
            const UnitNuisance& u = nf.units[i];
            const double w = o.z - u.pz1;
            const double pa = prob_observed_a(o, u);
            const double alpha = std::exp(xa.row(i).dot(theta));
            const double bracket = (o.y * (1.0 - o.a) * alpha - o.y * o.a) / pa + u.gamma;
            m += (w * bracket) * h.row(i).transpose();
            const double d_bracket = o.y * (1.0 - o.a) * alpha / pa;
            if (d_bracket != 0.0) jac += (w * d_bracket) * h.row(i).transpose() * xa.row(i);
        }
    };
    return solve_moments(nf.theta, static_cast<double>(n), moments);
}

RefitResult dr_refit_gamma(const Dataset& d, const NuisanceFits& nf, const Eigen::MatrixXd& h_in) {
    const Eigen::MatrixXd& xg = nf.outcome_design.gamma;
    if (xg.cols() == 0) throw Error(ErrorKind::Config, "gamma(X) refit needs a gamma model");
    const Eigen::MatrixXd h = default_h(h_in, xg);
    const int q = nf.qiv_index;
    const auto n = static_cast<Eigen::Index>(d.n());
    if (h.rows() != n || h.cols() != xg.cols()) {
        throw Error(ErrorKind::Config, "h(X) must have one row per unit and dim(beta) columns");
    }
    require_identified_instrument(d, q, nf.units);

    auto moments = [&](const Eigen::VectorXd& beta, Eigen::VectorXd& m, Eigen::MatrixXd& jac) {
        m = Eigen::VectorXd::Zero(h.cols());
        jac = Eigen::MatrixXd::Zero(h.cols(), xg.cols());
        for (Eigen::Index i = 0; i < n; ++i) {
            const UnitObs o = observation(d, q, i);
            const UnitNuisance& u = nf.units[i];
            const double w = o.z - u.pz1;
            const double g = std::tanh(xg.row(i).dot(beta));
            const double denom = u.pa1[o.z] * u.e0[o.z];
            const double bracket = (o.y * o.a - g * o.a) / denom - u.alpha;
            m += (w * bracket) * h.row(i).transpose();
            if (o.a == 1.0) jac -= (w * (1.0 - g * g) / denom) * h.row(i).transpose() * xg.row(i);
        }
    };
    return solve_moments(nf.beta, static_cast<double>(n), moments);
}

double eif_numerator(const UnitObs& o, const UnitNuisance& u) {
    const double pa1 = u.pa1[o.z];
    const double pa = prob_observed_a(o, u);
    const double pz = o.z == 1 ? u.pz1 : 1.0 - u.pz1;
    const double paz = pa * pz;
    const double relevance = u.e0[1] - u.e0[0];
    if (pa < kDenominatorGuard) throw Error(ErrorKind::Positivity, "P(A|Z,X) below 1e-6");
    if (paz < kDenominatorGuard) throw Error(ErrorKind::Positivity, "P(A,Z|X) below 1e-6");
    if (std::abs(relevance) < kDenominatorGuard) {
        throw Error(ErrorKind::WeakQiv, "relevance denominator E(Y|A=0,Z=1,X) - E(Y|A=0,Z=0,X) below 1e-6");
    }

    const double a = o.a;
    const double y = o.y;
    const double fitted = u.gamma * a + (a == 1.0 ? u.alpha : 1.0) * u.e0[o.z];
    const double weighted_outcome = pa1 * (y * a - y * (1.0 - a) * u.alpha) / pa;
    const double treatment_term = u.gamma * (a - pa1);
    const double fitted_term = pa1 * (fitted * a - fitted * (1.0 - a) * u.alpha) / pa - u.gamma * pa1;
    const double x_conditional = (1.0 - u.pz1) * u.pa1[0] * u.e0[0] + u.pz1 * u.pa1[1] * u.e0[1];
    const double sign = ((static_cast<int>(a) + o.z) % 2 == 0) ? 1.0 : -1.0;
    const double alpha_pow = a == 1.0 ? 1.0 : u.alpha;
    const double residual_term = x_conditional * ((y - fitted) / relevance) * (sign / paz) * alpha_pow;
    return weighted_outcome + treatment_term - fitted_term - residual_term;
}

double eif_value(const UnitObs& o, const UnitNuisance& u, double p_treated, double gamma_bar) {
    if (!(p_treated > 0.0 && p_treated < 1.0)) throw Error(ErrorKind::Data, "P(A=1) must lie in (0, 1)");
    return (eif_numerator(o, u) - gamma_bar * o.a) / p_treated;
}

EifEvaluation evaluate_eif(const Dataset& d, int qiv_index, const std::vector<UnitNuisance>& units, double p_treated,
                           double gamma_bar) {
    const auto n = static_cast<Eigen::Index>(d.n());
    if (static_cast<Eigen::Index>(units.size()) != n) throw Error(ErrorKind::Config, "one nuisance record per unit required");
    EifEvaluation out;
    out.psi.resize(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        try {
            out.psi[i] = eif_value(observation(d, qiv_index, i), units[i], p_treated, gamma_bar);
        } catch (const Error& e) {
            throw Error(e.kind(), std::string(e.what()) + " at unit " + std::to_string(i + 1));
        }
    }
    out.mean = out.psi.mean();
    out.variance = (out.psi.array() - out.mean).square().sum() / static_cast<double>(std::max<Eigen::Index>(n - 1, 1));
    return out;
}

AttEstimate tr_estimate(const Dataset& d, int qiv_index, const std::vector<UnitNuisance>& units, double p_treated,
                        double level) {
    const auto n = static_cast<Eigen::Index>(d.n());
    if (static_cast<Eigen::Index>(units.size()) != n) throw Error(ErrorKind::Config, "one nuisance record per unit required");
    if (!(p_treated > 0.0 && p_treated < 1.0)) throw Error(ErrorKind::Data, "P(A=1) must lie in (0, 1)");
    Eigen::VectorXd numer(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        try {
            numer[i] = eif_numerator(observation(d, qiv_index, i), units[i]);
        } catch (const Error& e) {
            throw Error(e.kind(), std::string(e.what()) + " at unit " + std::to_string(i + 1));
        }
    }
    AttEstimate est;
    est.method = "tr";
    est.gamma_hat = numer.mean() / p_treated;
    const Eigen::VectorXd psi = (numer - est.gamma_hat * d.a) / p_treated;
    const double centre = psi.mean();
    const double var = (psi.array() - centre).square().sum() / static_cast<double>(std::max<Eigen::Index>(n - 1, 1));
    est.se = std::sqrt(var / static_cast<double>(n));
    set_wald_interval(est, level);
    return est;
}

AttEstimate tr_estimate(const Dataset& d, const NuisanceFits& nf, double level) {
    AttEstimate est = tr_estimate(d, nf.qiv_index, nf.units, nf.p_treated, level);
    if (nf.alpha_refit || nf.gamma_refit) {
        est.diagnostics.emplace_back("se_caveat", "SE ignores first-order nuisance estimation; exact only when all working models hold");
        est.diagnostics.emplace_back("refit_order", "sequential single pass: alpha(X) then gamma(X)");
    }
    for (const auto& p : nf.provenance) est.diagnostics.emplace_back("provenance", p);
    return est;
}

TestReport dr_score_test(const Dataset& d, const TrSpec& spec, const TrConfig& config, const Eigen::MatrixXd& h_in) {
    TrConfig null_cfg = config;
    null_cfg.dr_refit = false;
    const NuisanceFits nf = fit_nuisances_impl(d, spec, null_cfg, true);
    const int q = nf.qiv_index;
    const auto n = static_cast<Eigen::Index>(d.n());
    const double nd = static_cast<double>(n);
    const Eigen::MatrixXd& xa = nf.outcome_design.alpha;
    const Eigen::MatrixXd h = default_h(h_in, xa);
    if (h.rows() != n) throw Error(ErrorKind::Config, "h(X) must have one row per unit");
    if (!nf.outcome.covariance_ok) throw Error(ErrorKind::Numerical, "null likelihood fit has a singular information matrix");

    const Eigen::Index dh = h.cols();
    const Eigen::Index kz = nf.pz_design.cols();
    const Eigen::Index ka = nf.pa_design.cols();
    const ParamLayout& layout = nf.outcome.phi_hat.layout;
    const Eigen::Index kt = layout.n_theta;

    // moment contributions and their mean derivatives in each nuisance block
    Eigen::MatrixXd g(n, dh);
    Eigen::MatrixXd grad_z = Eigen::MatrixXd::Zero(dh, kz);
    Eigen::MatrixXd grad_a = Eigen::MatrixXd::Zero(dh, ka);
    Eigen::MatrixXd grad_t = Eigen::MatrixXd::Zero(dh, kt);
    for (Eigen::Index i = 0; i < n; ++i) {
        const UnitObs o = observation(d, q, i);
        const UnitNuisance& u = nf.units[i];
        const double w = o.z - u.pz1;
        const double pa1 = u.pa1[o.z];
        const double pa = prob_observed_a(o, u);
        const double numer = o.y * (1.0 - o.a) * u.alpha - o.y * o.a;
        const double bracket = numer / pa;
        g.row(i) = (w * bracket) * h.row(i);
        grad_z -= (u.pz1 * (1.0 - u.pz1) * bracket) * h.row(i).transpose() * nf.pz_design.row(i);
        const double d_inv_pa = o.a == 1.0 ? -(1.0 - pa1) / pa1 : pa1 / (1.0 - pa1);
        grad_a += (w * numer * d_inv_pa) * h.row(i).transpose() * nf.pa_design.row(i);
        grad_t += (w * o.y * (1.0 - o.a) * u.alpha / pa) * h.row(i).transpose() * xa.row(i);
    }
    grad_z /= nd;
    grad_a /= nd;
    grad_t /= nd;

    // per-unit influence of each nuisance estimate
    const Eigen::MatrixXd scores = mle::unit_scores(nf.outcome.phi_hat, nf.outcome_design);
    const Eigen::MatrixXd cov_theta_rows = nf.outcome.covariance.middleRows(layout.theta_offset(), kt);
    Eigen::MatrixXd corrected = g;
    for (Eigen::Index i = 0; i < n; ++i) {
        const UnitNuisance& u = nf.units[i];
        const int zi = d.z(i, q) == 1.0 ? 1 : 0;
        const Eigen::VectorXd if_z = nd * nf.pi_z.covariance * nf.pz_design.row(i).transpose() * (d.z(i, q) - u.pz1);
        const Eigen::VectorXd if_a = nd * nf.pi_a.covariance * nf.pa_design.row(i).transpose() * (d.a[i] - u.pa1[zi]);
        const Eigen::VectorXd if_t = nd * cov_theta_rows * scores.row(i).transpose();
        corrected.row(i) += (grad_z * if_z + grad_a * if_a + grad_t * if_t).transpose();
    }

    const Eigen::VectorXd gbar = g.colwise().mean();
    const Eigen::RowVectorXd cbar = corrected.colwise().mean();
    const Eigen::MatrixXd centered = corrected.rowwise() - cbar;
    const Eigen::MatrixXd cov = centered.transpose() * centered / nd;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov, Eigen::EigenvaluesOnly);
    const double scale = std::max(1.0, cov.trace());
    if (dh == 0 || !(eig.eigenvalues().minCoeff() > 1e-12 * scale)) {
        throw Error(ErrorKind::Numerical, "singular covariance of the score-test moments");
    }

    TestReport report;
    report.method = "dr-score";
    report.statistic = nd * gbar.dot(cov.ldlt().solve(gbar));
    report.df = static_cast<double>(dh);
    report.p_value = stats::chi_square_sf(report.statistic, report.df);
    report.diagnostics.emplace_back("alpha_source", "null GOP likelihood fit (gamma fixed at 0)");
    report.diagnostics.emplace_back("variance", "moment contributions corrected for P(Z|X), P(A|Z,X) and alpha(X) estimation");
    return report;
}

}  // namespace qiv::tr
