#pragma once

#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "qiv/gop.hpp"

namespace qiv {

// Observed units (Y, A, Z, X). Binary columns are stored as 0.0 / 1.0.
struct Dataset {
    Eigen::VectorXd y;
    Eigen::VectorXd a;
    Eigen::MatrixXd z;  // n x m quasi-instruments
    Eigen::MatrixXd x;  // n x q covariates
    std::string outcome_name = "y";
    std::string treatment_name = "a";
    std::vector<std::string> z_names;
    std::vector<std::string> x_names;

    std::size_t n() const { return static_cast<std::size_t>(y.size()); }
    std::size_t n_treated() const;

    // Throws ErrorKind::Data when an invariant fails.
    void validate() const;

    int z_index(const std::string& name) const;
    int x_index(const std::string& name) const;
};

// Which columns feed each link. Intercepts are always added for the gamma and
// alpha links; the GOP link gets omega0 as its intercept followed by the QIV
// columns, the covariates and any requested covariate-by-QIV interactions.
struct ModelSpec {
    std::vector<std::string> gamma_covariates;
    std::vector<std::string> alpha_covariates;
    std::vector<std::string> gop_covariates;
    std::vector<std::string> qivs;
    std::vector<std::pair<std::string, std::string>> gop_interactions;
    bool center = false;

    // Every covariate in every block, every QIV, no interactions.
    static ModelSpec all_columns(const Dataset& d);
};

// Block sizes of the flattened parameter vector
// phi = (beta, theta, omega0, omega, eta).
struct ParamLayout {
    int n_beta = 1;   // 0 fixes gamma(x) = 0
    int n_theta = 1;
    int n_qiv = 1;
    int n_eta = 0;    // covariates plus interactions in the GOP link

    int n_gop() const { return 1 + n_qiv + n_eta; }
    int size() const { return n_beta + n_theta + n_gop(); }
    int beta_offset() const { return 0; }
    int theta_offset() const { return n_beta; }
    int gop_offset() const { return n_beta + n_theta; }
};

struct ParamVector {
    ParamLayout layout;
    Eigen::VectorXd values;

    ParamVector() = default;
    explicit ParamVector(const ParamLayout& l) : layout(l), values(Eigen::VectorXd::Zero(l.size())) {}

    auto beta() const { return values.segment(layout.beta_offset(), layout.n_beta); }
    auto theta() const { return values.segment(layout.theta_offset(), layout.n_theta); }
    auto gop_coef() const { return values.segment(layout.gop_offset(), layout.n_gop()); }
    auto beta() { return values.segment(layout.beta_offset(), layout.n_beta); }
    auto theta() { return values.segment(layout.theta_offset(), layout.n_theta); }
    auto gop_coef() { return values.segment(layout.gop_offset(), layout.n_gop()); }
    double omega0() const { return values[layout.gop_offset()]; }

    bool finite() const { return values.allFinite(); }
};

// Design matrices for the three links, with deterministic column order.
struct Design {
    Eigen::MatrixXd gamma;  // n x n_beta   (intercept first)
    Eigen::MatrixXd alpha;  // n x n_theta  (intercept first)
    Eigen::MatrixXd gop;    // n x n_gop    (intercept, QIVs, covariates, interactions)
    Eigen::VectorXd y;
    Eigen::VectorXd a;
    std::vector<std::string> gamma_names;
    std::vector<std::string> alpha_names;
    std::vector<std::string> gop_names;
    ParamLayout layout;
    bool centered = false;

    std::size_t n() const { return static_cast<std::size_t>(y.size()); }

    // Same rows with the gamma block removed (gamma(x) = 0).
    Design without_gamma() const;
    // Rows duplicated `times` times, in order.
    Design replicated(int times) const;
};

Design build_design(const Dataset& d, const ModelSpec& spec);

// gamma = tanh(beta' g), alpha = exp(theta' a), GOP = exp(omega' o) for the
// design rows g, a, o of one unit.
gop::GopPoint eval_links(const ParamVector& phi,
                         const Eigen::Ref<const Eigen::RowVectorXd>& gamma_row,
                         const Eigen::Ref<const Eigen::RowVectorXd>& alpha_row,
                         const Eigen::Ref<const Eigen::RowVectorXd>& gop_row);

// Convenience form when every link uses the same covariates x and QIVs z.
gop::GopPoint eval_links(const ParamVector& phi, const Eigen::VectorXd& x_row, const Eigen::VectorXd& z_row);

// Intercept-prepended design from named covariate columns.
Eigen::MatrixXd intercept_design(const Dataset& d, const std::vector<std::string>& covariates);

}  // namespace qiv
