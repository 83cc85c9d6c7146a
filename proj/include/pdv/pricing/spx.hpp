#pragma once

// Monte Carlo prices of European options on S from a simulated path bundle:
//
//   C(T, K) = exp(-int_0^T r) * mean_j (S_T^j - K)^+,   puts alike.

#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <vector>

#include "pdv/error.hpp"
#include "pdv/kernels/parallel.hpp"
#include "pdv/kernels/stats.hpp"
#include "pdv/market/curves.hpp"
#include "pdv/mc/simulate.hpp"
#include "pdv/pricing/black.hpp"

namespace pdv {

struct OptionSpec {
    double maturity = 0.0;
    double strike = 0.0;
    OptionKind kind = OptionKind::call;
};

struct PricedOption {
    OptionSpec spec;
    double price = 0.0;
    double stderr_ = 0.0;
    double iv = std::numeric_limits<double>::quiet_NaN();
};

// Calls above the forward, puts below; the side whose price carries the
// smile information without the intrinsic value.
inline OptionKind otm_kind(double forward, double strike) {
    return strike < forward ? OptionKind::put : OptionKind::call;
}

inline std::vector<PricedOption> price_spx_options(const PathBundle& paths, std::span<const OptionSpec> chain,
                                                   const PiecewiseConstantCurve& rate, unsigned threads = 1) {
    std::vector<PricedOption> out(chain.size());
    std::vector<std::size_t> rec(chain.size());
    for (std::size_t i = 0; i < chain.size(); ++i) {
        if (!(chain[i].strike >= 0.0)) throw InputError("price_spx_options: strike must be nonnegative");
        rec[i] = paths.index_of(chain[i].maturity);
    }
    parallel_for(chain.size(), threads, [&](std::size_t i) {
        const auto& spec = chain[i];
        const auto spots = paths.spots_at(rec[i]);
        const double df = std::exp(-rate.integral(spec.maturity));
        std::vector<double> payoff(spots.size());
        for (std::size_t j = 0; j < spots.size(); ++j) {
            payoff[j] = spec.kind == OptionKind::call ? std::max(spots[j] - spec.strike, 0.0)
                                                      : std::max(spec.strike - spots[j], 0.0);
        }
        const MeanEstimate m = paths.antithetic ? estimate_mean_antithetic(payoff) : estimate_mean(payoff);
        out[i].spec = spec;
        out[i].price = df * m.mean;
        out[i].stderr_ = df * m.stderr_;
    });
    return out;
}

// Fills `iv` by Black inversion against the model forward. Cells whose
// price leaves the no-arbitrage band keep NaN; the return value counts them.
inline std::size_t attach_implied_vols(std::span<PricedOption> prices, double s0, const Curves& curves) {
    std::size_t failed = 0;
    for (auto& p : prices) {
        const double t = p.spec.maturity;
        const double df = curves.discount(t);
        const double fwd = curves.forward(s0, t);
        try {
            p.iv = implied_vol(p.price / df, fwd, p.spec.strike, t, p.spec.kind);
        } catch (const InputError&) {
            p.iv = std::numeric_limits<double>::quiet_NaN();
            ++failed;
        }
    }
    return failed;
}

}  // namespace pdv
