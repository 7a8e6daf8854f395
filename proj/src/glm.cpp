#include "qiv/glm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "qiv/error.hpp"

namespace qiv::glm {

namespace {

constexpr int kMaxIter = 100;
constexpr double kCoefTol = 1e-10;
constexpr double kSeparationNorm = 30.0;

double neg_loglik(const Eigen::VectorXd& y, const Eigen::VectorXd& eta) {
    double nll = 0.0;
    for (Eigen::Index i = 0; i < y.size(); ++i) {
        // log(1 + e^eta) - y eta, written to avoid overflow
        const double e = eta[i];
        const double softplus = e > 0.0 ? e + std::log1p(std::exp(-e)) : std::log1p(std::exp(e));
        nll += softplus - y[i] * e;
    }
    return nll;
}

}  // namespace

double expit(double eta) {
    if (eta >= 0.0) return 1.0 / (1.0 + std::exp(-eta));
    const double e = std::exp(eta);
    return e / (1.0 + e);
}

LogisticFit fit_logistic(const Eigen::VectorXd& response, const Eigen::MatrixXd& design) {
    const Eigen::Index n = design.rows();
    const Eigen::Index p = design.cols();
    if (response.size() != n) throw Error(ErrorKind::Config, "response and design lengths differ");
    for (Eigen::Index i = 0; i < n; ++i) {
        if (response[i] != 0.0 && response[i] != 1.0) {
            throw Error(ErrorKind::Data, "logistic response must be binary");
        }
    }
    if (p == 0) throw Error(ErrorKind::Config, "empty logistic design");
    {
        Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(design);
        qr.setThreshold(1e-10);
        if (qr.rank() < p) {
            std::ostringstream os;
            os << "logistic design has rank " << qr.rank() << " < " << p << " columns";
            throw Error(ErrorKind::RankDeficient, os.str());
        }
    }

    LogisticFit fit;
    fit.coef = Eigen::VectorXd::Zero(p);
    Eigen::VectorXd eta = Eigen::VectorXd::Zero(n);
    double nll = neg_loglik(response, eta);

    for (int it = 1; it <= kMaxIter; ++it) {
        fit.iterations = it;
        Eigen::VectorXd mu(n), w(n);
        for (Eigen::Index i = 0; i < n; ++i) {
            mu[i] = expit(eta[i]);
            w[i] = mu[i] * (1.0 - mu[i]);
        }
        const Eigen::VectorXd score = design.transpose() * (response - mu);
        const Eigen::MatrixXd info = design.transpose() * w.asDiagonal() * design;
        Eigen::LDLT<Eigen::MatrixXd> ldlt(info);
        Eigen::VectorXd step = ldlt.solve(score);
        if (!step.allFinite()) break;

        // step halving keeps the deviance non-increasing, up to rounding in
        // the sum near the optimum
        const double slack = 64.0 * std::numeric_limits<double>::epsilon() * (std::abs(nll) + 1.0);
        double t = 1.0;
        Eigen::VectorXd next = fit.coef + step;
        Eigen::VectorXd next_eta = design * next;
        double next_nll = neg_loglik(response, next_eta);
        for (int h = 0; h < 30 && !(next_nll <= nll + slack); ++h) {
            t *= 0.5;
            next = fit.coef + t * step;
            next_eta = design * next;
            next_nll = neg_loglik(response, next_eta);
        }
        if (!(next_nll <= nll + slack)) {
            next = fit.coef;
            next_eta = eta;
            next_nll = nll;
        }
        const double change = (next - fit.coef).cwiseAbs().maxCoeff();
        fit.coef = next;
        eta = next_eta;
        nll = next_nll;
        if (change < kCoefTol) {
            fit.converged = true;
            break;
        }
    }

    if (fit.coef.cwiseAbs().maxCoeff() > kSeparationNorm) {
        std::ostringstream os;
        os << "logistic fit diverging (max |coef| = " << fit.coef.cwiseAbs().maxCoeff()
           << "); the response is (quasi-)separated by the design";
        throw Error(ErrorKind::Separation, os.str());
    }

    fit.neg_loglik = nll;
    Eigen::VectorXd w(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const double mu = expit(eta[i]);
        w[i] = mu * (1.0 - mu);
    }
    const Eigen::MatrixXd info = design.transpose() * w.asDiagonal() * design;
    fit.covariance = info.ldlt().solve(Eigen::MatrixXd::Identity(p, p));
    return fit;
}

double predict_logistic(const LogisticFit& fit, const Eigen::Ref<const Eigen::RowVectorXd>& row) {
    if (row.size() != fit.coef.size()) throw Error(ErrorKind::Config, "design row does not match logistic coefficients");
    return std::clamp(expit(row.dot(fit.coef)), kProbClamp, 1.0 - kProbClamp);
}

Eigen::VectorXd predict_rows(const LogisticFit& fit, const Eigen::MatrixXd& design) {
    if (design.cols() != fit.coef.size()) throw Error(ErrorKind::Config, "design does not match logistic coefficients");
    const Eigen::VectorXd eta = design * fit.coef;
    Eigen::VectorXd p(eta.size());
    for (Eigen::Index i = 0; i < eta.size(); ++i) p[i] = std::clamp(expit(eta[i]), kProbClamp, 1.0 - kProbClamp);
    return p;
}

}  // namespace qiv::glm
