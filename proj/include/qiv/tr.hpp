#pragma once

#include <array>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "qiv/design.hpp"
#include "qiv/estimate.hpp"
#include "qiv/glm.hpp"
#include "qiv/mle.hpp"

namespace qiv::tr {

// Nuisance values for one unit, for both levels of the binary QIV.
struct UnitNuisance {
    double pz1 = 0.5;                 // P(Z=1 | X)
    std::array<double, 2> pa1{0.5, 0.5};  // P(A=1 | Z=z, X)
    std::array<double, 2> e0{0.5, 0.5};   // E(Y | A=0, Z=z, X)
    double alpha = 1.0;               // alpha(X)
    double gamma = 0.0;               // gamma(X)
};

// Covariates for each working model and the single QIV analysed.
struct TrSpec {
    std::vector<std::string> propensity_covariates;  // P(Z|X) and P(A|Z,X)
    ModelSpec outcome;                                // gamma, alpha and GOP links; exactly one QIV

    static TrSpec all_columns(const Dataset& d, const std::string& qiv);
};

struct TrConfig {
    bool dr_refit = true;
    int refit_passes = 1;
    double positivity_floor = 1e-3;
    double level = 0.95;
    mle::FitConfig mle;
};

struct RefitResult {
    Eigen::VectorXd coef;
    bool converged = false;
    int iterations = 0;
    double moment_norm = 0.0;  // |sum of moments|_inf at coef
};

struct NuisanceFits {
    glm::LogisticFit pi_z;
    glm::LogisticFit pi_a;
    Eigen::MatrixXd pz_design;  // [1, covariates]
    Eigen::MatrixXd pa_design;  // [1, z, covariates] at the observed z
    mle::MleFit outcome;
    Design outcome_design;
    Eigen::VectorXd theta;      // current alpha(X) coefficients
    Eigen::VectorXd beta;       // current gamma(X) coefficients (empty under the null)
    double p_treated = 0.0;
    int qiv_index = 0;
    bool alpha_refit = false;
    bool gamma_refit = false;
    std::vector<std::string> provenance;
    std::vector<UnitNuisance> units;
};

// Logistic fits for P(Z|X) and P(A|Z,X), the GOP likelihood fit for the
// outcome, then (by default) doubly robust refits of alpha(X) and gamma(X).
// Throws ErrorKind::Positivity when a fitted P(A,Z|X) cell falls below the
// floor.
NuisanceFits fit_nuisances(const Dataset& d, const TrSpec& spec, const TrConfig& config = {});

// Solves sum_i h_i (Z_i - P(Z=1|X_i)) { (Y(1-A) alpha(X) - Y A) / P(A|Z,X) + gamma(X) } = 0
// for the alpha coefficients. `h` has one row per unit; empty means the
// alpha design.
RefitResult dr_refit_alpha(const Dataset& d, const NuisanceFits& nf, const Eigen::MatrixXd& h = {});

// Solves sum_i h_i (Z_i - P(Z=1|X_i)) { (Y A - gamma(X) A) / (P(A|Z,X) E(Y|A=0,Z,X)) - alpha(X) } = 0
// for the gamma coefficients.
RefitResult dr_refit_gamma(const Dataset& d, const NuisanceFits& nf, const Eigen::MatrixXd& h = {});

struct UnitObs {
    double y = 0.0;
    double a = 0.0;
    int z = 0;
};

// Bracketed term of the efficient influence function (before scaling by
// 1 / P(A=1)); its mean over units estimates E{gamma(X) A}.
double eif_numerator(const UnitObs& o, const UnitNuisance& u);

// psi(O) = (numerator - gamma_bar A) / P(A=1).
double eif_value(const UnitObs& o, const UnitNuisance& u, double p_treated, double gamma_bar);

struct EifEvaluation {
    Eigen::VectorXd psi;
    double mean = 0.0;
    double variance = 0.0;
};

EifEvaluation evaluate_eif(const Dataset& d, int qiv_index, const std::vector<UnitNuisance>& units,
                           double p_treated, double gamma_bar);

AttEstimate tr_estimate(const Dataset& d, const NuisanceFits& nf, double level = 0.95);
AttEstimate tr_estimate(const Dataset& d, int qiv_index, const std::vector<UnitNuisance>& units, double p_treated,
                        double level = 0.95);

// Score-type test of gamma(X) = 0 built from the alpha moment with gamma
// fixed at zero, alpha from the null likelihood fit. Moment contributions
// are corrected for first-order nuisance estimation before forming the
// quadratic form. Throws ErrorKind::Numerical for a singular moment
// covariance.
TestReport dr_score_test(const Dataset& d, const TrSpec& spec, const TrConfig& config = {},
                         const Eigen::MatrixXd& h = {});

}  // namespace qiv::tr
