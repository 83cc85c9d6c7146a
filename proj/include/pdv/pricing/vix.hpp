#pragma once

// VIX futures and calls from simulated factor states at the VIX maturity:
//
//   F(T)    = mean_j VIX(Theta, R_T^j)
//   C(T, K) = exp(-int_0^T r) * mean_j (VIX(Theta, R_T^j) - K)^+
//
// where VIX(Theta, R) comes from any VixModel (the trained network, nested
// Monte Carlo, or a test stub). Implied vols are Black vols against the model
// future.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <concepts>
#include <cstddef>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "pdv/error.hpp"
#include "pdv/kernels/parallel.hpp"
#include "pdv/kernels/rng.hpp"
#include "pdv/kernels/stats.hpp"
#include "pdv/market/curves.hpp"
#include "pdv/mc/nested_vix.hpp"
#include "pdv/mc/simulate.hpp"
#include "pdv/model/params.hpp"
#include "pdv/pricing/black.hpp"

namespace pdv {

template <class M>
concept VixModel = requires(const M& m, const ModelParams& p, std::span<const FactorState> states,
                            std::span<double> out) {
    { m.predict(p, states, out) } -> std::same_as<void>;
    { m.covers(p) } -> std::convertible_to<bool>;
};

// Nested Monte Carlo behind the VixModel interface. State i uses inner seed
// split(seed, i).
struct NestedMcVix {
    NestedVixConfig cfg;
    unsigned threads = 1;

    void predict(const ModelParams& p, std::span<const FactorState> states, std::span<double> out) const {
        const RngStream master = make_stream(cfg.seed);
        parallel_for(states.size(), threads, [&](std::size_t i) {
            NestedVixConfig c = cfg;
            c.seed = split(master, i).key;
            c.threads = 1;
            out[i] = vix_nested(p, states[i], c);
        });
    }
    bool covers(const ModelParams&) const { return true; }
};

struct VixSlice {
    double maturity = 0.0;
    double future = 0.0;
    double future_stderr = 0.0;
    std::vector<double> strikes;
    std::vector<double> calls;
    std::vector<double> call_stderr;
    std::vector<double> ivs;  // NaN where the Black inversion fails
};

struct VixDerivativePrices {
    std::vector<VixSlice> slices;
    std::size_t clamped_outputs = 0;
    bool extrapolated = false;
};

struct VixPricingOptions {
    // Outputs below this floor (points) are raised to it before pricing.
    double output_floor = 0.01;
    // Escalate parameters outside the model's training domain to an error.
    bool strict = false;
};

template <VixModel Model>
VixDerivativePrices price_vix_derivatives(const ModelParams& params, const Model& model, const PathBundle& paths,
                                          std::span<const double> maturities,
                                          std::span<const std::vector<double>> strikes,
                                          const PiecewiseConstantCurve& rate,
                                          const VixPricingOptions& opt = {}) {
    if (strikes.size() != maturities.size()) {
        throw InputError("price_vix_derivatives: one strike list per maturity expected");
    }
    VixDerivativePrices out;
    if (!model.covers(params)) {
        if (opt.strict) {
            throw InputError("price_vix_derivatives: parameters outside the VIX model's training domain");
        }
        out.extrapolated = true;
    }
    for (std::size_t m = 0; m < maturities.size(); ++m) {
        const double t = maturities[m];
        const auto rec = paths.index_of(t);
        const auto states = paths.states_at(rec);
        std::vector<double> vix(states.size());
        model.predict(params, states, vix);
        for (double& v : vix) {
            if (!std::isfinite(v)) throw NumericalError("VIX model returned a non-finite value");
            if (v < opt.output_floor) {
                v = opt.output_floor;
                ++out.clamped_outputs;
            }
        }
        VixSlice slice;
        slice.maturity = t;
        const MeanEstimate f = paths.antithetic ? estimate_mean_antithetic(vix) : estimate_mean(vix);
        slice.future = f.mean;
        slice.future_stderr = f.stderr_;
        const double df = std::exp(-rate.integral(t));
        std::vector<double> payoff(vix.size());
        for (double k : strikes[m]) {
            for (std::size_t j = 0; j < vix.size(); ++j) payoff[j] = std::max(vix[j] - k, 0.0);
            const MeanEstimate c = paths.antithetic ? estimate_mean_antithetic(payoff) : estimate_mean(payoff);
            slice.strikes.push_back(k);
            slice.calls.push_back(df * c.mean);
            slice.call_stderr.push_back(df * c.stderr_);
            double iv = std::numeric_limits<double>::quiet_NaN();
            try {
                iv = implied_vol(c.mean, slice.future, k, t, OptionKind::call);
            } catch (const InputError&) {
            }
            slice.ivs.push_back(iv);
        }
        out.slices.push_back(std::move(slice));
    }
    return out;
}

}  // namespace pdv
