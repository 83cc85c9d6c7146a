#pragma once

#include <cmath>
#include <string>

#include "pdv/error.hpp"
#include "pdv/model/params.hpp"

namespace pdv {

enum class SigmaFloor { none, zero };

struct MixedFactors {
    double r1 = 0.0;
    double r2 = 0.0;
};

// Convex mixes of the fast and slow factors; R1 is always evaluated before R2.
inline MixedFactors mixed_R(const ModelParams& p, const FactorState& s) {
    // Written so that equal factors mix to themselves exactly.
    const double r1 = s.r_10 + p.theta_1 * (s.r_11 - s.r_10);
    const double r2 = s.r_20 + p.theta_2 * (s.r_21 - s.r_20);
    return {r1, r2};
}

inline double sigma_of(const ModelParams& p, double r1, double r2) {
    const double trend = r1 > 0.0 ? p.beta_12 * r1 * r1 : 0.0;
    // sqrt(0) = 0 is the one-sided limit; r2 < 0 cannot occur on valid states.
    return p.beta_0 + p.beta_1 * r1 + p.beta_2 * std::sqrt(r2) + trend;
}

inline double sigma(const ModelParams& p, const FactorState& s, SigmaFloor floor = SigmaFloor::none) {
    const auto m = mixed_R(p, s);
    const double v = sigma_of(p, m.r1, m.r2);
    return floor == SigmaFloor::zero && v < 0.0 ? 0.0 : v;
}

// Rate-weighted factor average R_bar_n.
inline double r_bar(const ModelParams& p, const FactorState& s, int n) {
    const double th = p.theta(n);
    const double x0 = n == 1 ? s.r_10 : s.r_20;
    const double x1 = n == 1 ? s.r_11 : s.r_21;
    return ((1.0 - th) * p.lambda(n, 0) * x0 + th * p.lambda(n, 1) * x1) / lambda_bar(p, n);
}

struct SigmaDynamics {
    double mu = 0.0;  // drift of sigma
    double nu = 0.0;  // diffusion of sigma
};

// Ito drift and diffusion of sigma_t as a function of the factor state.
inline SigmaDynamics sigma_drift_diffusion(const ModelParams& p, const FactorState& s) {
    const auto m = mixed_R(p, s);
    const double sig = sigma_of(p, m.r1, m.r2);
    const double lb1 = lambda_bar(p, 1);
    const double lb2 = lambda_bar(p, 2);
    // d sigma / d R1; the parabolic form vanishes exactly at its vertex.
    const double slope =
        m.r1 > 0.0 && p.beta_12 != 0.0 ? 2.0 * p.beta_12 * (m.r1 - (-p.beta_1 / (2.0 * p.beta_12))) : p.beta_1;

    double vol_term = 0.0;
    if (p.beta_2 != 0.0) {
        if (!(m.r2 > 0.0)) {
            throw NumericalError("sigma drift is singular at R2 = 0 when beta_2 != 0");
        }
        vol_term = p.beta_2 * lb2 * (sig * sig - r_bar(p, s, 2)) / (2.0 * std::sqrt(m.r2));
    }
    // Ito correction from the curvature of beta_12 R1^2, which is only present
    // on R1 > 0.
    const double convexity = m.r1 > 0.0 ? p.beta_12 * lb1 * lb1 * sig * sig : 0.0;
    const double mu = -slope * lb1 * r_bar(p, s, 1) + vol_term + convexity;
    const double nu = slope * lb1 * sig;
    return {mu, nu};
}

// K_n(t): convex combination of two exponential densities.
inline double kernel(const ModelParams& p, int n, double t) {
    if (t < 0.0) throw InputError("kernel: t must be nonnegative, got " + std::to_string(t));
    const double l0 = p.lambda(n, 0);
    const double l1 = p.lambda(n, 1);
    const double th = p.theta(n);
    return (1.0 - th) * l0 * std::exp(-l0 * t) + th * l1 * std::exp(-l1 * t);
}

}  // namespace pdv
