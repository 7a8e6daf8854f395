#pragma once

// Generalized odds product (GOP) parameterization of the risk triple
// (p11, p01, p00) through (gamma, alpha, GOP), where
//   p01 = alpha * p00,   p11 = gamma + alpha * p00,
//   GOP = odds(p11) * odds(p01) * odds(p00).
// The map is a diffeomorphism from (0,1)^3 onto (-1,1) x R+ x R+; the inverse
// reduces to a cubic in p00 with a unique root in a known interval.

namespace qiv::gop {

struct RiskTriple {
    double p11 = 0.5;  // Pr(Y=1 | A=1, Z, X)
    double p01 = 0.5;  // Pr(Y_{a=0}=1 | A=1, Z, X)
    double p00 = 0.5;  // Pr(Y=1 | A=0, Z, X)
};

struct GopPoint {
    double gamma = 0.0;  // conditional ATT, in (-1, 1)
    double alpha = 1.0;  // multiplicative confounding, > 0
    double gop = 1.0;    // generalized odds product, > 0
};

// b1 p^3 + b2 p^2 + b3 p + b4 = 0, with the Cardano shift p = t - shift
// giving t^3 + xi t + zeta = 0 and discriminant delta = (zeta/2)^2 + (xi/3)^3.
struct CubicCoeffs {
    double b1 = 0.0;
    double b2 = 0.0;
    double b3 = 0.0;
    double b4 = 0.0;
    double xi = 0.0;
    double zeta = 0.0;
    double delta = 0.0;
    double shift = 0.0;  // b2 / (3 b1)

    double eval(double p) const { return ((b1 * p + b2) * p + b3) * p + b4; }
    double derivative(double p) const { return (3.0 * b1 * p + 2.0 * b2) * p + b3; }
    // residual of the monic cubic, |F(p)| / b1
    double monic_residual(double p) const;
};

// Open interval that contains exactly one root of the cubic.
struct RootInterval {
    double lo = 0.0;
    double hi = 1.0;
    bool contains(double p) const { return p > lo && p < hi; }
};

bool is_valid(const RiskTriple& r) noexcept;
bool is_valid(const GopPoint& g) noexcept;

GopPoint gop_forward(const RiskTriple& r);
CubicCoeffs cubic_coeffs(const GopPoint& g);
RootInterval root_interval(const GopPoint& g);

// Closed form (Cardano for delta >= 0, trigonometric otherwise) with
// bisection fallback. Throws ErrorKind::Domain for invalid input and
// ErrorKind::Numerical if no root can be isolated.
double solve_p00(const GopPoint& g);

// Plain bisection on the full root interval (tolerance 1e-13, 200 iterations).
double solve_p00_bisection(const GopPoint& g);

RiskTriple implied_risks(const GopPoint& g);

// Partial derivatives of p00 with respect to gamma, log(alpha) and log(GOP),
// by implicit differentiation of the cubic at its root.
struct P00Gradient {
    double p00 = 0.5;
    double d_gamma = 0.0;
    double d_log_alpha = 0.0;
    double d_log_gop = 0.0;
    bool fallback = false;  // one-sided finite differences were used
};

P00Gradient p00_gradient(const GopPoint& g);

}  // namespace qiv::gop
