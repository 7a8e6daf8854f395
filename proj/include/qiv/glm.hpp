#pragma once

#include <Eigen/Dense>

namespace qiv::glm {

struct LogisticFit {
    Eigen::VectorXd coef;
    bool converged = false;
    int iterations = 0;
    double neg_loglik = 0.0;
    Eigen::MatrixXd covariance;  // inverse Fisher information at coef
};

constexpr double kProbClamp = 1e-10;

// Newton / IRLS with step halving. Throws ErrorKind::RankDeficient for a
// design without full column rank and ErrorKind::Separation when the
// coefficients diverge.
LogisticFit fit_logistic(const Eigen::VectorXd& response, const Eigen::MatrixXd& design);

// Clamped to [1e-10, 1 - 1e-10].
double predict_logistic(const LogisticFit& fit, const Eigen::Ref<const Eigen::RowVectorXd>& row);
Eigen::VectorXd predict_rows(const LogisticFit& fit, const Eigen::MatrixXd& design);

// Unclamped inverse logit, stable for large |eta|.
double expit(double eta);

}  // namespace qiv::glm
