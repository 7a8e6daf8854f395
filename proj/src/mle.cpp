#include "qiv/mle.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "qiv/error.hpp"
#include "qiv/gop.hpp"
#include "qiv/optim.hpp"
#include "qiv/stats.hpp"

namespace qiv::mle {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

struct RowLinks {
    gop::GopPoint point;
    bool feasible = false;
};

RowLinks row_links(const ParamVector& phi, const Design& d, Eigen::Index i) {
    const ParamLayout& l = phi.layout;
    RowLinks out;
    const double eta_gamma = l.n_beta > 0 ? d.gamma.row(i).dot(phi.beta()) : 0.0;
    const double eta_alpha = d.alpha.row(i).dot(phi.theta());
    const double eta_gop = d.gop.row(i).dot(phi.gop_coef());
    out.point.gamma = std::tanh(eta_gamma);
    out.point.alpha = std::exp(eta_alpha);
    out.point.gop = std::exp(eta_gop);
    out.feasible = gop::is_valid(out.point);
    return out;
}

double clamp_prob(double p) { return std::clamp(p, kLikClamp, 1.0 - kLikClamp); }

double bernoulli_loglik(double y, double p) {
    const double pc = clamp_prob(p);
    return y * std::log(pc) + (1.0 - y) * std::log1p(-pc);
}

// d loglik / d p, zero where the clamp is active.
double bernoulli_score(double y, double p) {
    if (p <= kLikClamp || p >= 1.0 - kLikClamp) return 0.0;
    return y / p - (1.0 - y) / (1.0 - p);
}

void check_dims(const ParamVector& phi, const Design& d) {
    const ParamLayout& l = phi.layout;
    if (l.n_beta != d.layout.n_beta || l.n_theta != d.layout.n_theta || l.n_gop() != d.layout.n_gop()) {
        throw Error(ErrorKind::Config, "parameter layout does not match the design");
    }
    if (!phi.finite()) throw Error(ErrorKind::Domain, "parameter vector has non-finite entries");
}

// Score of one row; writes the k-vector into `out`.
template <typename Out>
void row_score(const ParamVector& phi, const Design& d, Eigen::Index i, Out&& out) {
    const ParamLayout& l = phi.layout;
    const RowLinks links = row_links(phi, d, i);
    if (!links.feasible) {
        throw Error(ErrorKind::Domain, "parameters leave the GOP region (gamma <= -alpha) at row " + std::to_string(i + 1));
    }
    const gop::P00Gradient pg = gop::p00_gradient(links.point);
    const double a = d.a[i];
    const double g = links.point.gamma;
    const double alpha_a = a == 1.0 ? links.point.alpha : 1.0;
    const double p = g * a + alpha_a * pg.p00;
    const double s = bernoulli_score(d.y[i], p);

    const double dp_gamma = (a + alpha_a * pg.d_gamma) * (1.0 - g * g);
    const double dp_alpha = a * links.point.alpha * pg.p00 + alpha_a * pg.d_log_alpha;
    const double dp_gop = alpha_a * pg.d_log_gop;

    if (l.n_beta > 0) out.segment(l.beta_offset(), l.n_beta) = (s * dp_gamma) * d.gamma.row(i).transpose();
    out.segment(l.theta_offset(), l.n_theta) = (s * dp_alpha) * d.alpha.row(i).transpose();
    out.segment(l.gop_offset(), l.n_gop()) = (s * dp_gop) * d.gop.row(i).transpose();
}

double logit(double p) { return std::log(p / (1.0 - p)); }

}  // namespace

double risk(const ParamVector& phi, int a, const Design& d, std::size_t row) {
    check_dims(phi, d);
    const auto i = static_cast<Eigen::Index>(row);
    const RowLinks links = row_links(phi, d, i);
    if (!links.feasible) {
        throw Error(ErrorKind::Domain, "parameters leave the GOP region (gamma <= -alpha) at row " + std::to_string(row + 1));
    }
    const double p00 = gop::solve_p00(links.point);
    return a == 1 ? links.point.gamma + links.point.alpha * p00 : p00;
}

double loglik(const ParamVector& phi, const Design& d) {
    check_dims(phi, d);
    double total = 0.0;
    for (Eigen::Index i = 0; i < static_cast<Eigen::Index>(d.n()); ++i) {
        const RowLinks links = row_links(phi, d, i);
        if (!links.feasible) return kNegInf;
        double p00 = 0.0;
        try {
            p00 = gop::solve_p00(links.point);
        } catch (const Error&) {
            // far outside any plausible region the cubic loses all precision
            return kNegInf;
        }
        const double p = d.a[i] == 1.0 ? links.point.gamma + links.point.alpha * p00 : p00;
        total += bernoulli_loglik(d.y[i], p);
    }
    return total;
}

Eigen::VectorXd loglik_grad(const ParamVector& phi, const Design& d) {
    check_dims(phi, d);
    const int k = phi.layout.size();
    Eigen::VectorXd total = Eigen::VectorXd::Zero(k);
    Eigen::VectorXd row(k);
    for (Eigen::Index i = 0; i < static_cast<Eigen::Index>(d.n()); ++i) {
        row_score(phi, d, i, row);
        total += row;
    }
    return total;
}

Eigen::MatrixXd unit_scores(const ParamVector& phi, const Design& d) {
    check_dims(phi, d);
    Eigen::MatrixXd out(d.n(), phi.layout.size());
    Eigen::VectorXd row(phi.layout.size());
    for (Eigen::Index i = 0; i < static_cast<Eigen::Index>(d.n()); ++i) {
        row_score(phi, d, i, row);
        out.row(i) = row.transpose();
    }
    return out;
}

Eigen::MatrixXd observed_information(const ParamVector& phi, const Design& d) {
    const int k = phi.layout.size();
    Eigen::MatrixXd h(k, k);
    ParamVector plus = phi, minus = phi;
    for (int j = 0; j < k; ++j) {
        const double step = 1e-5 * std::max(1.0, std::abs(phi.values[j]));
        plus.values = phi.values;
        minus.values = phi.values;
        plus.values[j] += step;
        minus.values[j] -= step;
        const bool plus_ok = std::isfinite(loglik(plus, d));
        const bool minus_ok = std::isfinite(loglik(minus, d));
        if (plus_ok && minus_ok) {
            h.col(j) = (loglik_grad(plus, d) - loglik_grad(minus, d)) / (2.0 * step);
        } else if (plus_ok) {
            h.col(j) = (loglik_grad(plus, d) - loglik_grad(phi, d)) / step;
        } else if (minus_ok) {
            h.col(j) = (loglik_grad(phi, d) - loglik_grad(minus, d)) / step;
        } else {
            throw Error(ErrorKind::Numerical, "no feasible finite-difference step for the Hessian");
        }
    }
    const Eigen::MatrixXd sym = 0.5 * (h + h.transpose());
    return -sym;
}

MleFit fit_mle(const Design& d, const FitConfig& config) {
    const ParamLayout layout = d.layout;
    const double n = static_cast<double>(d.n());
    if (d.n() == 0) throw Error(ErrorKind::Data, "empty design");
    for (const Eigen::MatrixXd* m : {&d.gamma, &d.alpha, &d.gop}) {
        if (m->cols() == 0) continue;
        Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(*m);
        qr.setThreshold(1e-10);
        if (qr.rank() < m->cols()) throw Error(ErrorKind::RankDeficient, "link design is not of full column rank");
    }

    const optim::Objective objective = [&](const Eigen::VectorXd& x, Eigen::VectorXd* grad) {
        ParamVector phi(layout);
        phi.values = x;
        const double ll = loglik(phi, d);
        if (!std::isfinite(ll)) return std::numeric_limits<double>::infinity();
        if (grad) *grad = -loglik_grad(phi, d) / n;
        return -ll / n;
    };
    optim::Options opts;
    opts.max_iter = config.max_iter;
    opts.grad_tol = config.mean_grad_tol;

    MleFit fit;
    fit.n = d.n();
    const double ybar = std::clamp(d.y.mean(), 1e-3, 1.0 - 1e-3);
    Eigen::VectorXd start = Eigen::VectorXd::Zero(layout.size());
    start[layout.gop_offset()] = 3.0 * logit(ybar);
    if (config.start) {
        if (config.start->layout.size() != layout.size()) throw Error(ErrorKind::Config, "start vector has the wrong size");
        start = config.start->values;
    }
    const double start_value = objective(start, nullptr);
    if (!std::isfinite(start_value)) throw Error(ErrorKind::Domain, "starting parameters are outside the GOP region");

    optim::Result best = optim::bfgs(objective, start, opts);
    if (!best.converged) {
        fit.diagnostics.push_back("bfgs from start did not converge; restarted from phi = 0");
        optim::Result second = optim::bfgs(objective, Eigen::VectorXd::Zero(layout.size()), opts);
        second.iterations += best.iterations;
        if (second.converged || second.value < best.value) best = second;
    }
    if (!best.converged) {
        fit.diagnostics.push_back("quasi-Newton failed; used Nelder-Mead simplex search");
        optim::Result simplex = optim::nelder_mead(objective, best.x, opts);
        optim::Result polished = optim::bfgs(objective, simplex.x, opts);
        polished.method = "nelder-mead+bfgs";
        polished.iterations += simplex.iterations + best.iterations;
        if (polished.value <= best.value) best = polished;
    }

    fit.phi_hat = ParamVector(layout);
    fit.phi_hat.values = best.x;
    fit.iterations = best.iterations;
    fit.optimizer = best.method;
    fit.converged = best.converged;

    if (config.compute_covariance) {
        fit.information = observed_information(fit.phi_hat, d);
        // Newton polish when the quasi-Newton stopped short of the tolerance.
        for (int it = 0; it < 5 && !fit.converged; ++it) {
            Eigen::LLT<Eigen::MatrixXd> llt(fit.information);
            if (llt.info() != Eigen::Success) break;
            const Eigen::VectorXd score = loglik_grad(fit.phi_hat, d);
            const Eigen::VectorXd step = llt.solve(score);
            const double current = loglik(fit.phi_hat, d);
            double t = 1.0;
            bool moved = false;
            for (int h = 0; h < 30; ++h, t *= 0.5) {
                ParamVector trial = fit.phi_hat;
                trial.values += t * step;
                if (loglik(trial, d) >= current) {
                    fit.phi_hat = trial;
                    moved = true;
                    break;
                }
            }
            if (!moved) break;
            fit.converged = (loglik_grad(fit.phi_hat, d).cwiseAbs().maxCoeff() / n) < config.mean_grad_tol;
            fit.information = observed_information(fit.phi_hat, d);
            if (fit.converged) fit.diagnostics.push_back("converged after Newton polish");
        }

        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(fit.information, Eigen::EigenvaluesOnly);
        fit.kappa_hat = eig.eigenvalues().minCoeff() / layout.size();
        Eigen::LLT<Eigen::MatrixXd> llt(fit.information);
        if (llt.info() == Eigen::Success && eig.eigenvalues().minCoeff() > 0.0) {
            fit.covariance = llt.solve(Eigen::MatrixXd::Identity(layout.size(), layout.size()));
            fit.covariance = 0.5 * (fit.covariance + fit.covariance.transpose()).eval();
            fit.covariance_ok = true;
        } else {
            fit.diagnostics.push_back("observed information is singular; covariance omitted");
        }
    }
    fit.loglik = loglik(fit.phi_hat, d);
    if (!fit.converged) fit.diagnostics.push_back("maximum likelihood fit did not converge");
    return fit;
}

AttEstimate marginal_att_plugin(const MleFit& fit, const Design& d, double level) {
    const ParamLayout& l = fit.phi_hat.layout;
    AttEstimate est;
    est.method = "mle";
    std::vector<double> gammas;
    Eigen::VectorXd dgamma = Eigen::VectorXd::Zero(l.n_beta);
    for (Eigen::Index i = 0; i < static_cast<Eigen::Index>(d.n()); ++i) {
        if (d.a[i] != 1.0) continue;
        const double g = l.n_beta > 0 ? std::tanh(d.gamma.row(i).dot(fit.phi_hat.beta())) : 0.0;
        gammas.push_back(g);
        if (l.n_beta > 0) dgamma += (1.0 - g * g) * d.gamma.row(i).transpose();
    }
    if (gammas.empty()) throw Error(ErrorKind::Data, "no treated units; the plug-in ATT is undefined");
    const double n1 = static_cast<double>(gammas.size());
    est.gamma_hat = stats::mean(gammas);
    dgamma /= n1;

    double var = 0.0;
    if (l.n_beta > 0) {
        if (!fit.covariance_ok) {
            est.diagnostics.emplace_back("se", "unavailable: singular information");
            est.se = std::numeric_limits<double>::quiet_NaN();
            set_wald_interval(est, level);
            return est;
        }
        const Eigen::MatrixXd cov_beta = fit.covariance.block(l.beta_offset(), l.beta_offset(), l.n_beta, l.n_beta);
        var += dgamma.dot(cov_beta * dgamma);
    }
    const double sd_gamma = stats::stddev(gammas);
    var += sd_gamma * sd_gamma / n1;
    est.se = std::sqrt(var);
    if (!fit.converged) est.diagnostics.emplace_back("warning", "maximum likelihood fit did not converge");
    set_wald_interval(est, level);
    return est;
}

TestReport lr_test_null(const Design& d, const FitConfig& config) {
    TestReport report;
    report.method = "likelihood-ratio";
    if (d.layout.n_beta == 0) throw Error(ErrorKind::Config, "likelihood-ratio test needs a gamma model");

    const Design null_design = d.without_gamma();
    FitConfig null_cfg = config;
    null_cfg.compute_covariance = false;
    null_cfg.start = nullptr;
    const MleFit null_fit = fit_mle(null_design, null_cfg);

    // Embedding the null estimate as the full-model start keeps
    // loglik_full >= loglik_null.
    ParamVector start(d.layout);
    start.theta() = null_fit.phi_hat.theta();
    start.gop_coef() = null_fit.phi_hat.gop_coef();
    FitConfig full_cfg = config;
    full_cfg.compute_covariance = false;
    full_cfg.start = &start;
    const MleFit full_fit = fit_mle(d, full_cfg);

    if (!null_fit.converged || !full_fit.converged) {
        throw Error(ErrorKind::Numerical, std::string("likelihood-ratio test: ") +
                                              (null_fit.converged ? "full" : "null") + " fit did not converge");
    }
    const double raw = 2.0 * (full_fit.loglik - null_fit.loglik);
    report.statistic = std::max(0.0, raw);
    report.df = d.layout.n_beta;
    report.p_value = stats::chi_square_sf(report.statistic, report.df);
    std::ostringstream os;
    os.precision(17);
    os << full_fit.loglik;
    report.diagnostics.emplace_back("loglik_full", os.str());
    os.str("");
    os << null_fit.loglik;
    report.diagnostics.emplace_back("loglik_null", os.str());
    return report;
}

}  // namespace qiv::mle
