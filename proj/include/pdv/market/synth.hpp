#pragma once

// Model-generated quotes for round-trip tests: mids are Monte Carlo model
// values and the Monte Carlo standard errors serve as bid/ask half-widths.

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "pdv/error.hpp"
#include "pdv/market/chains.hpp"
#include "pdv/mc/simulate.hpp"
#include "pdv/pricing/spx.hpp"
#include "pdv/pricing/vix.hpp"

namespace pdv {

struct SynthGrid {
    std::vector<int> spx_days;
    std::vector<double> spx_moneyness;  // K / S0
    std::vector<int> vix_days;
    std::vector<double> vix_moneyness;  // K / model VIX future
};

struct SynthConfig {
    std::size_t n_paths = 100000;
    double dt = 1.0 / 504.0;  // largest step; shrunk to put every maturity on the grid
    std::uint64_t seed = 1;
    unsigned threads = 1;
    double s0 = 1.0;
    Curves curves;
    std::string date = "2000-01-01";
};

struct SyntheticMarket {
    OptionChain spx;
    VixChain vix;
    double dt = 0.0;
    std::size_t dropped_paths = 0;
};

inline std::vector<double> record_times_for(std::vector<int> days) {
    std::sort(days.begin(), days.end());
    days.erase(std::unique(days.begin(), days.end()), days.end());
    std::vector<double> t;
    for (int d : days) t.push_back(years_from_days(d));
    return t;
}

// `vix_model` may be null when grid.vix_days is empty.
template <VixModel Model>
SyntheticMarket synth_market(const ModelParams& params, const FactorState& init, const SynthGrid& grid,
                             const SynthConfig& cfg, const Model* vix_model) {
    if (grid.spx_days.empty() && grid.vix_days.empty()) throw InputError("synth_market: no maturities requested");
    if (!grid.vix_days.empty() && vix_model == nullptr) throw InputError("synth_market: VIX quotes need a VIX model");
    std::vector<int> all = grid.spx_days;
    all.insert(all.end(), grid.vix_days.begin(), grid.vix_days.end());

    SimConfig sc;
    sc.dt = aligned_step(all, cfg.dt);
    sc.n_paths = cfg.n_paths;
    sc.seed = cfg.seed;
    sc.threads = cfg.threads;
    sc.curves = cfg.curves;
    sc.record_times = record_times_for(all);
    sc.horizon = sc.record_times.back();
    sc.on_divergence = DivergencePolicy::drop;
    const PathBundle paths = simulate(params, init, cfg.s0, sc);

    SyntheticMarket out;
    out.dt = sc.dt;
    out.dropped_paths = paths.dropped_paths;
    out.spx.date = out.vix.date = cfg.date;
    out.spx.spot = cfg.s0;

    std::vector<int> spx_days = grid.spx_days;
    std::sort(spx_days.begin(), spx_days.end());
    spx_days.erase(std::unique(spx_days.begin(), spx_days.end()), spx_days.end());
    for (int d : spx_days) {
        const double t = years_from_days(d);
        const double fwd = cfg.curves.forward(cfg.s0, t);
        std::vector<OptionSpec> specs;
        for (double m : grid.spx_moneyness) {
            const double k = m * cfg.s0;
            specs.push_back({t, k, otm_kind(fwd, k)});
        }
        auto priced = price_spx_options(paths, specs, cfg.curves.rate, cfg.threads);
        attach_implied_vols(priced, cfg.s0, cfg.curves);
        SpxSlice slice;
        slice.days = d;
        slice.forward = fwd;
        for (const auto& p : priced) {
            if (!std::isfinite(p.iv)) {
                out.spx.warnings.push_back("synthetic SPX " + std::to_string(d) + "d K=" + io::fmt(p.spec.strike) +
                                           ": no implied vol; skipped");
                continue;
            }
            const double vega = black_vega(fwd, p.spec.strike, t, p.iv) * cfg.curves.discount(t);
            const double hw = vega > 0.0 ? p.stderr_ / vega : 0.0;
            slice.quotes.push_back({p.spec.strike, p.spec.kind, std::max(0.0, p.iv - hw), p.iv + hw, p.iv});
        }
        std::sort(slice.quotes.begin(), slice.quotes.end(), [](const auto& a, const auto& b) { return a.strike < b.strike; });
        if (slice.quotes.empty()) {
            out.spx.warnings.push_back("synthetic SPX " + std::to_string(d) + "d: no quotes; dropped");
        } else {
            out.spx.slices.push_back(std::move(slice));
        }
    }

    std::vector<int> vix_days = grid.vix_days;
    std::sort(vix_days.begin(), vix_days.end());
    vix_days.erase(std::unique(vix_days.begin(), vix_days.end()), vix_days.end());
    for (int d : vix_days) {
        const double t = years_from_days(d);
        // Strikes depend on the model future, so price the future first.
        const std::vector<double> ts{t};
        const std::vector<std::vector<double>> none{{}};
        const auto fut = price_vix_derivatives(params, *vix_model, paths, ts, none, cfg.curves.rate);
        const double f = fut.slices[0].future;
        std::vector<std::vector<double>> strikes(1);
        for (double m : grid.vix_moneyness) strikes[0].push_back(m * f);
        const auto res = price_vix_derivatives(params, *vix_model, paths, ts, strikes, cfg.curves.rate);
        const auto& s = res.slices[0];
        VixSliceQuotes slice;
        slice.days = d;
        slice.future = s.future;
        const double df = cfg.curves.discount(t);
        for (std::size_t i = 0; i < s.strikes.size(); ++i) {
            VixQuote q;
            q.strike = s.strikes[i];
            q.mid = s.calls[i];
            q.bid = std::max(0.0, q.mid - s.call_stderr[i]);
            q.ask = q.mid + s.call_stderr[i];
            try {
                q.mid_iv = implied_vol(q.mid / df, s.future, q.strike, t, OptionKind::call);
            } catch (const InputError&) {
            }
            slice.quotes.push_back(q);
        }
        out.vix.slices.push_back(std::move(slice));
    }
    return out;
}

}  // namespace pdv
