#include "qiv/gop.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

#include "qiv/error.hpp"

namespace qiv::gop {

namespace {

constexpr double kEndpointTol = 1e-12;
constexpr double kAcosTol = 1e-12;
constexpr double kResidualTol = 1e-10;
constexpr double kFlapBand = 1e-14;
constexpr double kBisectionTol = 1e-13;
constexpr int kBisectionMaxIter = 200;

double odds(double p) { return p / (1.0 - p); }

std::string describe(const GopPoint& g) {
    std::ostringstream os;
    os.precision(17);
    os << "(gamma=" << g.gamma << ", alpha=" << g.alpha << ", gop=" << g.gop << ")";
    return os.str();
}

void require_valid(const GopPoint& g) {
    if (!is_valid(g)) {
        throw Error(ErrorKind::Domain, "invalid GOP point " + describe(g));
    }
}

// F(p) = p11 p01 p00 - GOP q11 q01 q00, the cubic in factored form. Exact
// same polynomial as b1 p^3 + ... + b4 but evaluated without cancellation.
double factored_cubic(const GopPoint& g, double p) {
    const double p01 = g.alpha * p;
    const double p11 = g.gamma + p01;
    return p11 * p01 * p - g.gop * (1.0 - p11) * (1.0 - p01) * (1.0 - p);
}

// Move a candidate that sits within tolerance of an endpoint to the inside.
bool snap_into(const RootInterval& iv, double& p) {
    if (p <= iv.lo - kEndpointTol || p >= iv.hi + kEndpointTol) return false;
    if (p <= iv.lo) p = iv.lo + kEndpointTol;
    if (p >= iv.hi) p = iv.hi - kEndpointTol;
    return iv.contains(p);
}

// Newton steps on the monic cubic, kept only while they stay inside the
// interval and reduce the residual.
double polish(const CubicCoeffs& c, const RootInterval& iv, double p) {
    double res = std::abs(c.eval(p));
    for (int it = 0; it < 4 && res > 0.0; ++it) {
        const double d = c.derivative(p);
        if (d == 0.0) break;
        const double next = p - c.eval(p) / d;
        if (!iv.contains(next)) break;
        const double next_res = std::abs(c.eval(next));
        if (next_res >= res) break;
        p = next;
        res = next_res;
    }
    return p;
}

double signed_cbrt(double v) { return std::cbrt(v); }

// Single real root of the depressed cubic when delta >= 0.
double cardano_root(const CubicCoeffs& c) {
    const double sq = std::sqrt(std::max(c.delta, 0.0));
    // pick the sign that avoids cancellation, recover the second cube root
    // from u v = -xi / 3
    const double s = (c.zeta > 0.0) ? -0.5 * c.zeta - sq : -0.5 * c.zeta + sq;
    const double u = signed_cbrt(s);
    if (u == 0.0) return signed_cbrt(-c.zeta) - c.shift;
    const double v = -c.xi / (3.0 * u);
    return u + v - c.shift;
}

// Three real roots of the depressed cubic when delta < 0 (so xi < 0).
std::array<double, 3> trigonometric_roots(const CubicCoeffs& c) {
    if (!(c.xi < 0.0)) {
        throw Error(ErrorKind::Numerical, "trigonometric branch requires xi < 0");
    }
    double arg = (3.0 * c.zeta / (2.0 * c.xi)) * std::sqrt(-3.0 / c.xi);
    if (std::abs(arg) > 1.0 + kAcosTol) {
        std::ostringstream os;
        os.precision(17);
        os << "arccos argument " << arg << " outside [-1, 1]";
        throw Error(ErrorKind::Numerical, os.str());
    }
    arg = std::clamp(arg, -1.0, 1.0);
    const double theta = std::acos(arg);
    const double radius = 2.0 * std::sqrt(-c.xi / 3.0);
    std::array<double, 3> roots{};
    for (int k = 0; k < 3; ++k) {
        roots[k] = radius * std::cos((theta + 2.0 * k * std::numbers::pi) / 3.0) - c.shift;
    }
    return roots;
}

}  // namespace

double CubicCoeffs::monic_residual(double p) const { return std::abs(eval(p)) / b1; }

bool is_valid(const RiskTriple& r) noexcept {
    auto in_unit = [](double p) { return p > 0.0 && p < 1.0; };
    return in_unit(r.p11) && in_unit(r.p01) && in_unit(r.p00);
}

bool is_valid(const GopPoint& g) noexcept {
    if (!(g.gamma > -1.0 && g.gamma < 1.0)) return false;
    if (!(g.alpha > 0.0 && std::isfinite(g.alpha))) return false;
    if (!(g.gop > 0.0 && std::isfinite(g.gop))) return false;
    const RootInterval iv = root_interval(g);
    return iv.lo < iv.hi;
}

GopPoint gop_forward(const RiskTriple& r) {
    if (!is_valid(r)) {
        std::ostringstream os;
        os << "risk triple outside (0,1)^3: (" << r.p11 << ", " << r.p01 << ", " << r.p00 << ")";
        throw Error(ErrorKind::Domain, os.str());
    }
    GopPoint g;
    g.alpha = r.p01 / r.p00;
    g.gamma = r.p11 - g.alpha * r.p00;
    g.gop = odds(r.p11) * odds(r.p01) * odds(r.p00);
    return g;
}

RootInterval root_interval(const GopPoint& g) {
    RootInterval iv;
    iv.lo = std::max(0.0, -g.gamma / g.alpha);
    iv.hi = std::min({(1.0 - g.gamma) / g.alpha, 1.0 / g.alpha, 1.0});
    return iv;
}

CubicCoeffs cubic_coeffs(const GopPoint& g) {
    require_valid(g);
    const double gam = g.gamma;
    const double alp = g.alpha;
    const double G = g.gop;

    CubicCoeffs c;
    c.b1 = (1.0 + G) * alp * alp;
    c.b2 = alp * gam - G * (alp * alp + 2.0 * alp - alp * gam);
    c.b3 = -G * (alp * gam + gam - 2.0 * alp - 1.0);
    c.b4 = G * (gam - 1.0);

    const double b1 = c.b1, b2 = c.b2, b3 = c.b3, b4 = c.b4;
    c.xi = (3.0 * b1 * b3 - b2 * b2) / (3.0 * b1 * b1);
    c.zeta = (2.0 * b2 * b2 * b2 - 9.0 * b1 * b2 * b3 + 27.0 * b1 * b1 * b4) / (27.0 * b1 * b1 * b1);
    c.delta = (c.zeta / 2.0) * (c.zeta / 2.0) + (c.xi / 3.0) * (c.xi / 3.0) * (c.xi / 3.0);
    c.shift = b2 / (3.0 * b1);
    return c;
}

double solve_p00_bisection(const GopPoint& g) {
    require_valid(g);
    const RootInterval iv = root_interval(g);
    double lo = iv.lo;
    double hi = iv.hi;
    double f_lo = factored_cubic(g, lo);
    const double f_hi = factored_cubic(g, hi);
    if (f_lo > 0.0 || f_hi < 0.0) {
        throw Error(ErrorKind::Numerical, "cubic has no sign change on root interval for " + describe(g));
    }
    for (int it = 0; it < kBisectionMaxIter && hi - lo > kBisectionTol; ++it) {
        const double mid = 0.5 * (lo + hi);
        const double f_mid = factored_cubic(g, mid);
        if (f_mid == 0.0) return mid;
        if ((f_mid < 0.0) == (f_lo < 0.0)) {
            lo = mid;
            f_lo = f_mid;
        } else {
            hi = mid;
        }
    }
    double p = 0.5 * (lo + hi);
    if (!iv.contains(p)) snap_into(iv, p);
    return p;
}

double solve_p00(const GopPoint& g) {
    const CubicCoeffs c = cubic_coeffs(g);
    const RootInterval iv = root_interval(g);

    std::array<double, 4> raw{};
    std::size_t n_raw = 0;
    if (c.delta >= 0.0 || c.delta > -kFlapBand) {
        raw[n_raw++] = cardano_root(c);
    }
    if (c.delta < 0.0) {
        for (double r : trigonometric_roots(c)) raw[n_raw++] = r;
    }

    double best = std::numeric_limits<double>::quiet_NaN();
    double best_res = std::numeric_limits<double>::infinity();
    int n_inside = 0;
    double first_inside = 0.0;
    for (std::size_t i = 0; i < n_raw; ++i) {
        double p = raw[i];
        if (!std::isfinite(p) || !snap_into(iv, p)) continue;
        p = polish(c, iv, p);
        const double res = c.monic_residual(p);
        if (n_inside == 0 || std::abs(p - first_inside) > 1e-9) {
            if (n_inside == 0) first_inside = p;
            ++n_inside;
        }
        if (res < best_res) {
            best_res = res;
            best = p;
        }
    }
    // Near the discriminant boundary the Cardano root and a trigonometric
    // root can coincide; count distinct candidates only.
    if (n_inside >= 1 && best_res < kResidualTol && !(n_inside > 1 && c.delta <= -kFlapBand)) {
        return best;
    }

    const double p = polish(c, iv, solve_p00_bisection(g));
    if (!iv.contains(p)) {
        throw Error(ErrorKind::Numerical, "no root of the GOP cubic inside the interval for " + describe(g));
    }
    return p;
}

RiskTriple implied_risks(const GopPoint& g) {
    const double p00 = solve_p00(g);
    RiskTriple r;
    r.p00 = p00;
    r.p01 = g.alpha * p00;
    r.p11 = g.gamma + g.alpha * p00;
    return r;
}

P00Gradient p00_gradient(const GopPoint& g) {
    P00Gradient out;
    const double p = solve_p00(g);
    out.p00 = p;

    const double G = g.gop;
    const double p01 = g.alpha * p;
    const double p11 = g.gamma + p01;
    const double q00 = 1.0 - p, q01 = 1.0 - p01, q11 = 1.0 - p11;

    const double dF_dp = g.alpha * p01 * p + g.alpha * p11 * p + p11 * p01 +
                         G * (g.alpha * q01 * q00 + g.alpha * q11 * q00 + q11 * q01);
    if (std::abs(dF_dp) >= 1e-12) {
        const double dF_dgamma = p01 * p + G * q01 * q00;
        const double dF_dalpha = p * (p01 * p + p11 * p) + G * p * (q01 * q00 + q11 * q00);
        const double dF_dlog_gop = -G * q11 * q01 * q00;
        out.d_gamma = -dF_dgamma / dF_dp;
        out.d_log_alpha = -g.alpha * dF_dalpha / dF_dp;
        out.d_log_gop = -dF_dlog_gop / dF_dp;
        return out;
    }

    // Degenerate derivative: one-sided differences of the solver itself,
    // stepping toward the interior of the valid region.
    out.fallback = true;
    const double h = 1e-7;
    GopPoint s = g;
    s.gamma = g.gamma + (g.gamma > 0.0 ? -h : h);
    out.d_gamma = (solve_p00(s) - p) / (s.gamma - g.gamma);
    s = g;
    s.alpha = g.alpha * std::exp(h);
    out.d_log_alpha = (solve_p00(s) - p) / h;
    s = g;
    s.gop = g.gop * std::exp(h);
    out.d_log_gop = (solve_p00(s) - p) / h;
    return out;
}

}  // namespace qiv::gop
