#include "qiv/design.hpp"

#include <cmath>
#include <sstream>

#include "qiv/error.hpp"

namespace qiv {

namespace {

bool is_binary(double v) { return v == 0.0 || v == 1.0; }

void require_binary(const Eigen::Ref<const Eigen::VectorXd>& col, const std::string& name) {
    for (Eigen::Index i = 0; i < col.size(); ++i) {
        if (!is_binary(col[i])) {
            std::ostringstream os;
            os << "column '" << name << "' row " << (i + 1) << " is not binary: " << col[i];
            throw Error(ErrorKind::Data, os.str());
        }
    }
}

int find_name(const std::vector<std::string>& names, const std::string& name) {
    for (std::size_t j = 0; j < names.size(); ++j) {
        if (names[j] == name) return static_cast<int>(j);
    }
    return -1;
}

int require_x(const Dataset& d, const std::string& name) {
    const int j = d.x_index(name);
    if (j < 0) throw Error(ErrorKind::Config, "unknown covariate column '" + name + "'");
    return j;
}

int require_z(const Dataset& d, const std::string& name) {
    const int j = d.z_index(name);
    if (j < 0) throw Error(ErrorKind::Config, "unknown QIV column '" + name + "'");
    return j;
}

void center_columns(Eigen::MatrixXd& m, Eigen::Index first, Eigen::Index count) {
    for (Eigen::Index j = first; j < first + count; ++j) {
        m.col(j).array() -= m.col(j).mean();
    }
}

}  // namespace

std::size_t Dataset::n_treated() const {
    return static_cast<std::size_t>((a.array() == 1.0).count());
}

int Dataset::z_index(const std::string& name) const { return find_name(z_names, name); }
int Dataset::x_index(const std::string& name) const { return find_name(x_names, name); }

void Dataset::validate() const {
    const Eigen::Index rows = y.size();
    if (rows < 1) throw Error(ErrorKind::Data, "dataset has no rows");
    if (a.size() != rows || z.rows() != rows || x.rows() != rows) {
        throw Error(ErrorKind::Data, "column lengths differ");
    }
    if (z.cols() < 1) throw Error(ErrorKind::Data, "at least one QIV column is required");
    if (static_cast<std::size_t>(z.cols()) != z_names.size() ||
        static_cast<std::size_t>(x.cols()) != x_names.size()) {
        throw Error(ErrorKind::Data, "column names do not match matrix widths");
    }
    require_binary(y, outcome_name);
    require_binary(a, treatment_name);
    for (Eigen::Index j = 0; j < z.cols(); ++j) require_binary(z.col(j), z_names[j]);
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
        if (!x.col(j).allFinite()) {
            throw Error(ErrorKind::Data, "covariate '" + x_names[j] + "' has non-finite values");
        }
    }
    if (n_treated() == 0) throw Error(ErrorKind::Data, "no treated units (a = 1); the ATT is undefined");
}

ModelSpec ModelSpec::all_columns(const Dataset& d) {
    ModelSpec s;
    s.gamma_covariates = d.x_names;
    s.alpha_covariates = d.x_names;
    s.gop_covariates = d.x_names;
    s.qivs = d.z_names;
    return s;
}

Eigen::MatrixXd intercept_design(const Dataset& d, const std::vector<std::string>& covariates) {
    Eigen::MatrixXd m(d.n(), covariates.size() + 1);
    m.col(0).setOnes();
    for (std::size_t j = 0; j < covariates.size(); ++j) {
        m.col(j + 1) = d.x.col(require_x(d, covariates[j]));
    }
    return m;
}

Design build_design(const Dataset& d, const ModelSpec& spec) {
    if (spec.qivs.empty()) throw Error(ErrorKind::Config, "at least one QIV must be selected");

    Design out;
    out.y = d.y;
    out.a = d.a;
    out.gamma = intercept_design(d, spec.gamma_covariates);
    out.alpha = intercept_design(d, spec.alpha_covariates);

    out.gamma_names.push_back("(intercept)");
    out.gamma_names.insert(out.gamma_names.end(), spec.gamma_covariates.begin(), spec.gamma_covariates.end());
    out.alpha_names.push_back("(intercept)");
    out.alpha_names.insert(out.alpha_names.end(), spec.alpha_covariates.begin(), spec.alpha_covariates.end());

    const std::size_t m = spec.qivs.size();
    const std::size_t q = spec.gop_covariates.size();
    const std::size_t width = 1 + m + q + spec.gop_interactions.size();
    out.gop.resize(d.n(), width);
    out.gop.col(0).setOnes();
    out.gop_names.push_back("omega0");
    std::size_t col = 1;
    for (const auto& name : spec.qivs) {
        out.gop.col(col++) = d.z.col(require_z(d, name));
        out.gop_names.push_back(name);
    }
    for (const auto& name : spec.gop_covariates) {
        out.gop.col(col++) = d.x.col(require_x(d, name));
        out.gop_names.push_back(name);
    }
    for (const auto& [zname, xname] : spec.gop_interactions) {
        out.gop.col(col++) = d.z.col(require_z(d, zname)).cwiseProduct(d.x.col(require_x(d, xname)));
        out.gop_names.push_back(zname + ":" + xname);
    }

    if (spec.center) {
        center_columns(out.gamma, 1, out.gamma.cols() - 1);
        center_columns(out.alpha, 1, out.alpha.cols() - 1);
        center_columns(out.gop, static_cast<Eigen::Index>(1 + m), static_cast<Eigen::Index>(q));
        out.centered = true;
    }

    out.layout.n_beta = static_cast<int>(out.gamma.cols());
    out.layout.n_theta = static_cast<int>(out.alpha.cols());
    out.layout.n_qiv = static_cast<int>(m);
    out.layout.n_eta = static_cast<int>(width - 1 - m);
    return out;
}

Design Design::without_gamma() const {
    Design out = *this;
    out.gamma.resize(static_cast<Eigen::Index>(n()), 0);
    out.gamma_names.clear();
    out.layout.n_beta = 0;
    return out;
}

Design Design::replicated(int times) const {
    Design out = *this;
    auto rep = [times](const auto& m) { return m.replicate(times, 1).eval(); };
    out.gamma = rep(gamma);
    out.alpha = rep(alpha);
    out.gop = rep(gop);
    out.y = rep(y);
    out.a = rep(a);
    return out;
}

gop::GopPoint eval_links(const ParamVector& phi,
                         const Eigen::Ref<const Eigen::RowVectorXd>& gamma_row,
                         const Eigen::Ref<const Eigen::RowVectorXd>& alpha_row,
                         const Eigen::Ref<const Eigen::RowVectorXd>& gop_row) {
    const ParamLayout& l = phi.layout;
    if (gamma_row.size() != l.n_beta || alpha_row.size() != l.n_theta || gop_row.size() != l.n_gop()) {
        throw Error(ErrorKind::Config, "design row dimensions do not match the parameter layout");
    }
    gop::GopPoint g;
    g.gamma = l.n_beta > 0 ? std::tanh(gamma_row.dot(phi.beta())) : 0.0;
    g.alpha = std::exp(alpha_row.dot(phi.theta()));
    g.gop = std::exp(gop_row.dot(phi.gop_coef()));
    return g;
}

gop::GopPoint eval_links(const ParamVector& phi, const Eigen::VectorXd& x_row, const Eigen::VectorXd& z_row) {
    const Eigen::Index q = x_row.size();
    const Eigen::Index m = z_row.size();
    Eigen::RowVectorXd with_intercept(q + 1);
    with_intercept << 1.0, x_row.transpose();
    Eigen::RowVectorXd gop_row(1 + m + q);
    gop_row << 1.0, z_row.transpose(), x_row.transpose();
    return eval_links(phi, phi.layout.n_beta > 0 ? with_intercept : Eigen::RowVectorXd(0), with_intercept, gop_row);
}

}  // namespace qiv
