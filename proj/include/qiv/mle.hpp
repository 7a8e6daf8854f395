#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

#include "qiv/design.hpp"
#include "qiv/estimate.hpp"

namespace qiv::mle {

constexpr double kLikClamp = 1e-10;

// P(Y=1 | A=a, Z, X; phi) = gamma(x) a + alpha(x)^a p00(z, x) for one design row.
double risk(const ParamVector& phi, int a, const Design& d, std::size_t row);

// Sum of Bernoulli log-likelihood contributions with probabilities clamped to
// [1e-10, 1 - 1e-10]. Returns -inf when some row leaves the region where
// the GOP parameterization is defined (gamma <= -alpha).
double loglik(const ParamVector& phi, const Design& d);

// Analytic score (length k); p00 derivatives by implicit differentiation.
Eigen::VectorXd loglik_grad(const ParamVector& phi, const Design& d);

// Per-unit score contributions, n x k.
Eigen::MatrixXd unit_scores(const ParamVector& phi, const Design& d);

// Observed information: minus the central-difference Jacobian of the
// analytic score, symmetrized.
Eigen::MatrixXd observed_information(const ParamVector& phi, const Design& d);

struct FitConfig {
    int max_iter = 500;
    double mean_grad_tol = 1e-7;   // on |score|_inf / n
    bool compute_covariance = true;
    const ParamVector* start = nullptr;  // default: zero except omega0 = 3 logit(mean y)
};

struct MleFit {
    ParamVector phi_hat;
    Eigen::MatrixXd information;  // negative Hessian of the total log-likelihood
    Eigen::MatrixXd covariance;   // empty when the information is singular
    double loglik = 0.0;
    double kappa_hat = 0.0;       // lambda_min(information) / k
    bool converged = false;
    bool covariance_ok = false;
    int iterations = 0;
    std::string optimizer;
    std::size_t n = 0;
    std::vector<std::string> diagnostics;
};

MleFit fit_mle(const Design& d, const FitConfig& config = {});

// Mean of tanh(beta' x) over treated rows; delta-method SE from the fit
// covariance plus the sampling variance of the treated covariate average.
AttEstimate marginal_att_plugin(const MleFit& fit, const Design& d, double level = 0.95);

// 2 (loglik_full - loglik_null) against chi-square(dim beta), where the null
// fixes gamma(x) = 0.
TestReport lr_test_null(const Design& d, const FitConfig& config = {});

}  // namespace qiv::mle
