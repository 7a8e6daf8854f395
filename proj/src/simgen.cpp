#include "qiv/simgen.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <optional>
#include <random>
#include <thread>

#include "qiv/error.hpp"
#include "qiv/glm.hpp"
#include "qiv/gop.hpp"
#include "qiv/mle.hpp"
#include "qiv/stats.hpp"

namespace qiv::sim {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

std::mt19937_64 replicate_stream(std::uint64_t seed, std::uint64_t replicate) {
    const std::uint64_t a = splitmix64(seed);
    const std::uint64_t b = splitmix64(a ^ splitmix64(replicate + 0x632be59bd9b4e019ULL));
    std::seed_seq seq{static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(a >> 32),
                      static_cast<std::uint32_t>(b), static_cast<std::uint32_t>(b >> 32)};
    return std::mt19937_64(seq);
}

struct Truth {
    double gamma, alpha, gop;
};

Truth truth_at(const DgpCoefficients& c, double x1, double x2, double z) {
    Truth t;
    t.gamma = std::tanh(c.beta[0] + c.beta[1] * x1 + c.beta[2] * x2);
    t.alpha = std::exp(c.theta[0] + c.theta[1] * x1 + c.theta[2] * x2);
    t.gop = std::exp(c.omega0 + c.omega1 * z + c.eta[0] * x1 + c.eta[1] * x2);
    return t;
}

double prob_z(const DgpCoefficients& c, double x1, double x2) {
    return glm::expit(c.z_model[0] + c.z_model[1] * x1 + c.z_model[2] * x2);
}

double prob_a(const DgpCoefficients& c, double z, double x1, double x2) {
    return glm::expit(c.a_model[0] + c.a_model[1] * z + c.a_model[2] * x1 + c.a_model[3] * x2);
}

}  // namespace

Scenario parse_scenario(const std::string& name) {
    if (name == "all-correct") return Scenario::AllCorrect;
    if (name == "m1-correct") return Scenario::M1Correct;
    if (name == "m2-correct") return Scenario::M2Correct;
    if (name == "m3-correct") return Scenario::M3Correct;
    throw Error(ErrorKind::Config, "unknown scenario '" + name + "' (all-correct, m1-correct, m2-correct, m3-correct)");
}

std::string to_string(Scenario s) {
    switch (s) {
        case Scenario::AllCorrect: return "all-correct";
        case Scenario::M1Correct: return "m1-correct";
        case Scenario::M2Correct: return "m2-correct";
        case Scenario::M3Correct: return "m3-correct";
    }
    return "unknown";
}

std::string to_string(Estimator e) { return e == Estimator::Mle ? "mle" : "tr"; }

void ScenarioSpec::validate() const {
    if (n < 100) throw Error(ErrorKind::Config, "simulation needs n >= 100");
}

Dataset simulate_dataset(const ScenarioSpec& spec, std::uint64_t replicate) {
    spec.validate();
    const DgpCoefficients& c = spec.coef;
    auto rng = replicate_stream(spec.seed, replicate);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::uniform_real_distribution<double> uniform(-1.0, 1.0);
    auto bernoulli = [&rng](double p) { return std::bernoulli_distribution(p)(rng) ? 1.0 : 0.0; };

    const auto n = static_cast<Eigen::Index>(spec.n);
    Dataset d;
    d.y.resize(n);
    d.a.resize(n);
    d.z.resize(n, 1);
    d.x.resize(n, 3);
    d.z_names = {"z"};
    d.x_names = {"x1", "x2", "x2star"};
    for (Eigen::Index i = 0; i < n; ++i) {
        const double x1 = bernoulli(0.5);
        const double x2 = normal(rng);
        const double x2star = uniform(rng);
        const double z = bernoulli(prob_z(c, x1, x2));
        const double a = bernoulli(prob_a(c, z, x1, x2));
        const Truth t = truth_at(c, x1, x2, z);
        const double p00 = gop::solve_p00({t.gamma, t.alpha, t.gop});
        const double p = a == 1.0 ? t.gamma + t.alpha * p00 : p00;
        d.x(i, 0) = x1;
        d.x(i, 1) = x2;
        d.x(i, 2) = x2star;
        d.z(i, 0) = z;
        d.a[i] = a;
        d.y[i] = bernoulli(p);
    }
    return d;
}

AnalysisCovariates apply_misspec(Scenario s) {
    const std::vector<std::string> correct{"x1", "x2"};
    const std::vector<std::string> wrong{"x1", "x2star"};
    AnalysisCovariates out{correct, correct, correct, correct};
    switch (s) {
        case Scenario::AllCorrect: break;
        case Scenario::M1Correct: out.propensity = wrong; break;
        case Scenario::M2Correct: out.gamma = wrong; break;
        case Scenario::M3Correct: out.alpha = wrong; break;
    }
    return out;
}

tr::TrSpec analysis_spec(Scenario s) {
    const AnalysisCovariates cov = apply_misspec(s);
    tr::TrSpec spec;
    spec.propensity_covariates = cov.propensity;
    spec.outcome.gamma_covariates = cov.gamma;
    spec.outcome.alpha_covariates = cov.alpha;
    spec.outcome.gop_covariates = cov.gop;
    spec.outcome.qivs = {"z"};
    return spec;
}

std::vector<tr::UnitNuisance> true_nuisances(const Dataset& d, const DgpCoefficients& c) {
    const int ix1 = d.x_index("x1");
    const int ix2 = d.x_index("x2");
    if (ix1 < 0 || ix2 < 0) throw Error(ErrorKind::Config, "true nuisances need columns x1 and x2");
    std::vector<tr::UnitNuisance> out(d.n());
    for (std::size_t i = 0; i < d.n(); ++i) {
        const auto r = static_cast<Eigen::Index>(i);
        const double x1 = d.x(r, ix1);
        const double x2 = d.x(r, ix2);
        tr::UnitNuisance& u = out[i];
        u.pz1 = prob_z(c, x1, x2);
        for (int z = 0; z < 2; ++z) {
            u.pa1[z] = prob_a(c, z, x1, x2);
            const Truth t = truth_at(c, x1, x2, z);
            u.e0[z] = gop::solve_p00({t.gamma, t.alpha, t.gop});
            u.alpha = t.alpha;
            u.gamma = t.gamma;
        }
    }
    return out;
}

double true_att_oracle(std::size_t draws, std::uint64_t seed, const DgpCoefficients& c) {
    auto rng = replicate_stream(seed, 0xA77ULL);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    double sum = 0.0;
    std::size_t treated = 0;
    for (std::size_t i = 0; i < draws; ++i) {
        const double x1 = unit(rng) < 0.5 ? 1.0 : 0.0;
        const double x2 = normal(rng);
        const double z = unit(rng) < prob_z(c, x1, x2) ? 1.0 : 0.0;
        if (unit(rng) < prob_a(c, z, x1, x2)) {
            sum += std::tanh(c.beta[0] + c.beta[1] * x1 + c.beta[2] * x2);
            ++treated;
        }
    }
    if (treated == 0) throw Error(ErrorKind::Numerical, "oracle draw produced no treated units");
    return sum / static_cast<double>(treated);
}

double EstimatorSummary::mc_se() const {
    return n_ok > 0 ? mc_sd / std::sqrt(static_cast<double>(n_ok)) : 0.0;
}

const EstimatorSummary& McSummary::summary(Estimator e) const {
    for (const auto& s : estimators) {
        if (s.estimator == e) return s;
    }
    throw Error(ErrorKind::Config, "estimator " + to_string(e) + " was not run");
}

std::vector<EstimatorSummary> summarize(const std::vector<ReplicateRecord>& records,
                                        const std::vector<Estimator>& estimators, double truth) {
    std::vector<EstimatorSummary> out;
    for (Estimator e : estimators) {
        EstimatorSummary s;
        s.estimator = e;
        std::vector<double> est, se;
        std::size_t covered = 0;
        for (const auto& r : records) {
            if (r.estimator != e) continue;
            if (!r.ok) {
                ++s.n_failed;
                continue;
            }
            est.push_back(r.estimate);
            se.push_back(r.se);
            if (r.covered) ++covered;
        }
        s.n_ok = est.size();
        s.mean = stats::mean(est);
        s.bias = s.mean - truth;
        s.mc_sd = stats::stddev(est);
        s.mean_se = stats::mean(se);
        s.coverage = s.n_ok > 0 ? static_cast<double>(covered) / static_cast<double>(s.n_ok) : 0.0;
        out.push_back(s);
    }
    return out;
}

unsigned default_thread_count() {
    if (const char* env = std::getenv("QIV_THREADS")) {
        const long v = std::strtol(env, nullptr, 10);
        if (v > 0) return static_cast<unsigned>(v);
    }
    return std::max(1u, std::thread::hardware_concurrency());
}

namespace {

std::vector<ReplicateRecord> run_replicate(const ScenarioSpec& spec, std::uint64_t r,
                                           const std::vector<Estimator>& estimators, const McOptions& opts) {
    std::vector<ReplicateRecord> out;
    auto fill = [&](Estimator e, const AttEstimate& est) {
        ReplicateRecord rec;
        rec.replicate = r;
        rec.estimator = e;
        rec.ok = std::isfinite(est.gamma_hat) && std::isfinite(est.se);
        rec.estimate = est.gamma_hat;
        rec.se = est.se;
        rec.ci_low = est.ci_low;
        rec.ci_high = est.ci_high;
        rec.covered = est.covers(opts.truth);
        if (!rec.ok) rec.error = "non-finite estimate or standard error";
        out.push_back(rec);
    };
    auto fail = [&](Estimator e, const std::string& msg) {
        ReplicateRecord rec;
        rec.replicate = r;
        rec.estimator = e;
        rec.error = msg;
        out.push_back(rec);
    };

    const Dataset d = simulate_dataset(spec, r);
    const tr::TrSpec aspec = analysis_spec(spec.scenario);
    const bool want_tr = std::find(estimators.begin(), estimators.end(), Estimator::Tr) != estimators.end();

    std::optional<tr::NuisanceFits> nf;
    std::string nf_error;
    if (want_tr) {
        try {
            nf = tr::fit_nuisances(d, aspec);
        } catch (const Error& e) {
            nf_error = e.what();
        }
    }
    for (Estimator e : estimators) {
        try {
            if (e == Estimator::Mle) {
                if (nf) {
                    if (!nf->outcome.converged) throw Error(ErrorKind::Numerical, "likelihood fit did not converge");
                    fill(e, mle::marginal_att_plugin(nf->outcome, nf->outcome_design, opts.level));
                } else {
                    const Design od = build_design(d, aspec.outcome);
                    const mle::MleFit fit = mle::fit_mle(od);
                    if (!fit.converged) throw Error(ErrorKind::Numerical, "likelihood fit did not converge");
                    fill(e, mle::marginal_att_plugin(fit, od, opts.level));
                }
            } else {
                if (!nf) throw Error(ErrorKind::Numerical, nf_error);
                fill(e, tr::tr_estimate(d, *nf, opts.level));
            }
        } catch (const Error& err) {
            fail(e, err.what());
        }
    }
    return out;
}

}  // namespace

McSummary run_mc(const ScenarioSpec& spec, const std::vector<Estimator>& estimators, const McOptions& opts) {
    spec.validate();
    McSummary summary;
    summary.spec = spec;
    summary.truth = opts.truth;

    const std::size_t reps = spec.replicates;
    std::vector<std::vector<ReplicateRecord>> slots(reps);
    std::atomic<std::size_t> next{0};
    auto worker = [&]() {
        for (std::size_t j = next++; j < reps; j = next++) {
            slots[j] = run_replicate(spec, opts.first_replicate + j, estimators, opts);
        }
    };
    const unsigned threads = std::min<std::size_t>(opts.threads > 0 ? opts.threads : default_thread_count(), std::max<std::size_t>(reps, 1));
    if (threads <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (unsigned t = 0; t < threads; ++t) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }
    for (auto& s : slots) summary.records.insert(summary.records.end(), s.begin(), s.end());
    summary.estimators = summarize(summary.records, estimators, opts.truth);
    return summary;
}

}  // namespace qiv::sim
