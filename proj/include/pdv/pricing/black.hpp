#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include "pdv/error.hpp"
#include "pdv/kernels/normal.hpp"

namespace pdv {

enum class OptionKind { call, put };

inline const char* to_string(OptionKind k) { return k == OptionKind::call ? "call" : "put"; }

inline OptionKind parse_option_kind(const std::string& s) {
    if (s == "call" || s == "c" || s == "C") return OptionKind::call;
    if (s == "put" || s == "p" || s == "P") return OptionKind::put;
    throw InputError("unknown option kind '" + s + "' (expected call or put)");
}

inline double intrinsic(double forward, double strike, OptionKind kind) {
    return kind == OptionKind::call ? std::max(forward - strike, 0.0) : std::max(strike - forward, 0.0);
}

// Undiscounted Black-76 price.
inline double black_price(double forward, double strike, double t, double vol, OptionKind kind) {
    const double sd = vol * std::sqrt(t);
    if (!(sd > 0.0) || !(strike > 0.0)) {
        if (!(strike > 0.0)) return kind == OptionKind::call ? forward : 0.0;
        return intrinsic(forward, strike, kind);
    }
    const double d1 = std::log(forward / strike) / sd + 0.5 * sd;
    const double d2 = d1 - sd;
    if (kind == OptionKind::call) return forward * normal_cdf(d1) - strike * normal_cdf(d2);
    return strike * normal_cdf(-d2) - forward * normal_cdf(-d1);
}

inline double black_call(double forward, double strike, double t, double vol) {
    return black_price(forward, strike, t, vol, OptionKind::call);
}

inline double black_put(double forward, double strike, double t, double vol) {
    return black_price(forward, strike, t, vol, OptionKind::put);
}

// dPrice/dvol, identical for calls and puts.
inline double black_vega(double forward, double strike, double t, double vol) {
    const double sd = vol * std::sqrt(t);
    if (!(sd > 0.0) || !(strike > 0.0)) return 0.0;
    const double d1 = std::log(forward / strike) / sd + 0.5 * sd;
    return forward * normal_pdf(d1) * std::sqrt(t);
}

enum class BandEdge { error, zero };

struct ImpliedVolOptions {
    BandEdge at_band = BandEdge::error;
    double vol_lo = 1e-8;
    double vol_hi = 20.0;
    int max_iterations = 200;
};

// Black implied volatility from an undiscounted price.
//
// The inversion works on the out-of-the-money side (put-call parity) to avoid
// cancellation, then runs Newton steps kept inside a shrinking bisection
// bracket.
inline double implied_vol(double price, double forward, double strike, double t,
                          OptionKind kind = OptionKind::call, const ImpliedVolOptions& opt = {}) {
    if (!(forward > 0.0) || !(strike > 0.0) || !(t > 0.0) || !std::isfinite(price)) {
        throw InputError("implied_vol: forward, strike and maturity must be positive and price finite");
    }
    const double lower = intrinsic(forward, strike, kind);
    const double upper = kind == OptionKind::call ? forward : strike;
    const double tol = 1e-14 * forward;
    if (price <= lower || price >= upper) {
        if (price == lower && opt.at_band == BandEdge::zero) return 0.0;
        throw InputError("implied_vol: price " + std::to_string(price) + " outside the no-arbitrage band (" +
                         std::to_string(lower) + ", " + std::to_string(upper) + ")");
    }

    // Out-of-the-money equivalent.
    OptionKind side = kind;
    double target = price;
    if (kind == OptionKind::call && forward > strike) {
        side = OptionKind::put;
        target = price - (forward - strike);
    } else if (kind == OptionKind::put && strike > forward) {
        side = OptionKind::call;
        target = price - (strike - forward);
    }
    if (!(target > 0.0)) {
        if (opt.at_band == BandEdge::zero) return 0.0;
        throw InputError("implied_vol: price indistinguishable from intrinsic value");
    }

    double lo = opt.vol_lo, hi = opt.vol_hi;
    if (black_price(forward, strike, t, hi, side) < target) {
        throw InputError("implied_vol: price requires volatility above " + std::to_string(hi));
    }
    // Initial guess: Brenner-Subrahmanyam near the money, clipped to the bracket.
    double vol = std::clamp(std::sqrt(2.0 * std::numbers::pi / t) * (target + 0.5 * std::abs(forward - strike)) / forward,
                            0.05, 2.0);
    for (int it = 0; it < opt.max_iterations; ++it) {
        const double f = black_price(forward, strike, t, vol, side) - target;
        if (std::abs(f) <= tol) return vol;
        if (f > 0.0) {
            hi = vol;
        } else {
            lo = vol;
        }
        const double v = black_vega(forward, strike, t, vol);
        double next = v > 0.0 ? vol - f / v : 0.5 * (lo + hi);
        if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
        if (std::abs(next - vol) <= 1e-15 * vol) return next;
        vol = next;
        if (hi - lo <= 1e-15 * hi) return 0.5 * (lo + hi);
    }
    return vol;
}

}  // namespace pdv
