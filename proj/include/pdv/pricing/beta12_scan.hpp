#pragma once

// Effect of the parabolic coefficient beta_12 at one maturity: SPX smile,
// density of log(S_T / S0), VIX future and VIX smile, for a list of beta_12
// values with everything else fixed. All beta_12 values share the same random
// numbers.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

#include "pdv/error.hpp"
#include "pdv/kernels/stats.hpp"
#include "pdv/mc/simulate.hpp"
#include "pdv/pricing/spx.hpp"
#include "pdv/mc/nested_vix.hpp"
#include "pdv/kernels/parallel.hpp"
#include "pdv/pricing/black.hpp"

namespace pdv {

struct Beta12ScanConfig {
    std::vector<double> beta12{0.0, 0.05, 0.1, 0.15};
    int days = 16;
    std::vector<double> moneyness;  // K / S0; empty: 0.80, 0.81, ..., 1.20
    std::size_t n_paths = 100000;
    double dt = 1.0 / 2520.0;
    std::size_t density_bins = 120;
    double density_halfwidth = 0.3;  // log-return range [-h, h]
    std::size_t vix_outer = 500;
    NestedVixConfig vix_nested{.n_inner = 500};
    std::vector<double> vix_moneyness{0.9, 1.0, 1.1, 1.2, 1.3, 1.5, 1.7};  // K / model future
    std::uint64_t seed = 1;
    unsigned threads = 1;

    std::vector<double> strikes() const {
        if (!moneyness.empty()) return moneyness;
        std::vector<double> m;
        for (int i = 80; i <= 120; ++i) m.push_back(i / 100.0);
        return m;
    }
};

struct SmilePoint {
    double moneyness = 0.0;
    OptionKind kind = OptionKind::call;
    double price = 0.0;
    double stderr_ = 0.0;
    double iv = std::numeric_limits<double>::quiet_NaN();
    double iv_stderr = std::numeric_limits<double>::quiet_NaN();  // price error over vega
};

struct Beta12Case {
    double beta12 = 0.0;
    std::vector<SmilePoint> smile;
    Histogram density;  // counts of log(S_T / S0); normalize by n * bin width
    std::size_t dropped_paths = 0;
    double vix_future = 0.0;
    double vix_future_stderr = 0.0;
    std::vector<double> vix_strikes, vix_calls, vix_ivs;
    std::size_t vix_dropped_outer = 0;
};

inline std::vector<Beta12Case> beta12_scan(const ModelParams& base, const FactorState& init, const Beta12ScanConfig& cfg) {
    if (cfg.beta12.empty()) throw InputError("beta12_scan: no beta_12 values");
    if (cfg.days < 1) throw InputError("beta12_scan: maturity must be at least one day");
    const double t = cfg.days / 365.0;
    const double dt = aligned_step(std::vector<int>{cfg.days}, cfg.dt);
    const auto ms = cfg.strikes();
    std::vector<Beta12Case> out;
    for (double b : cfg.beta12) {
        ModelParams p = base;
        p.beta_12 = b;
        Beta12Case c;
        c.beta12 = b;

        SimConfig sc;
        sc.dt = dt;
        sc.n_paths = cfg.n_paths;
        sc.horizon = t;
        sc.record_times = {t};
        sc.seed = cfg.seed;
        sc.threads = cfg.threads;
        sc.on_divergence = DivergencePolicy::drop;
        const PathBundle paths = simulate(p, init, 1.0, sc);
        c.dropped_paths = paths.dropped_paths;
        std::vector<OptionSpec> specs;
        for (double m : ms) specs.push_back({t, m, otm_kind(1.0, m)});
        auto priced = price_spx_options(paths, specs, sc.curves.rate, cfg.threads);
        attach_implied_vols(priced, 1.0, sc.curves);
        for (std::size_t i = 0; i < priced.size(); ++i) {
            SmilePoint s{ms[i], priced[i].spec.kind, priced[i].price, priced[i].stderr_, priced[i].iv};
            if (std::isfinite(s.iv)) s.iv_stderr = s.stderr_ / black_vega(1.0, ms[i], t, s.iv);
            c.smile.push_back(s);
        }
        std::vector<double> logret;
        for (double s : paths.spots_at(0)) logret.push_back(std::log(s));
        c.density = make_histogram(logret, cfg.density_bins, -cfg.density_halfwidth, cfg.density_halfwidth);

        SimConfig outer = sc;
        outer.n_paths = cfg.vix_outer;
        outer.seed = split(make_stream(cfg.seed), 1).key;
        const PathBundle op = simulate(p, init, 1.0, outer);
        c.vix_dropped_outer = op.dropped_paths;
        // Nested VIX per outer state. A state whose inner paths all diverge
        // is left out together with its antithetic partner and counted.
        const auto states = op.states_at(0);
        std::vector<double> vix(states.size(), std::numeric_limits<double>::quiet_NaN());
        const RngStream inner = make_stream(cfg.vix_nested.seed);
        parallel_for(states.size(), cfg.threads, [&](std::size_t i) {
            NestedVixConfig nc = cfg.vix_nested;
            nc.seed = split(inner, i).key;
            nc.threads = 1;
            nc.on_divergence = DivergencePolicy::drop;
            try {
                vix[i] = vix_nested(p, states[i], nc);
            } catch (const NumericalError&) {
            }
        });
        const std::size_t group = op.antithetic ? 2 : 1;
        std::vector<double> kept;
        for (std::size_t g = 0; g + group <= vix.size(); g += group) {
            bool ok = true;
            for (std::size_t j = 0; j < group; ++j) ok = ok && std::isfinite(vix[g + j]);
            if (!ok) {
                c.vix_dropped_outer += group;
                continue;
            }
            for (std::size_t j = 0; j < group; ++j) kept.push_back(vix[g + j]);
        }
        if (kept.empty()) throw NumericalError("beta12_scan: every outer VIX state diverged");
        auto mean_of = [&](const std::vector<double>& x) { return op.antithetic ? estimate_mean_antithetic(x) : estimate_mean(x); };
        const MeanEstimate f = mean_of(kept);
        c.vix_future = f.mean;
        c.vix_future_stderr = f.stderr_;
        const double df = std::exp(-sc.curves.rate.integral(t));
        std::vector<double> payoff(kept.size());
        for (double m : cfg.vix_moneyness) {
            const double k = m * c.vix_future;
            for (std::size_t j = 0; j < kept.size(); ++j) payoff[j] = std::max(kept[j] - k, 0.0);
            const double call = mean_of(payoff).mean;
            double iv = std::numeric_limits<double>::quiet_NaN();
            try {
                iv = implied_vol(call, c.vix_future, k, t, OptionKind::call);
            } catch (const InputError&) {
            }
            c.vix_strikes.push_back(k);
            c.vix_calls.push_back(df * call);
            c.vix_ivs.push_back(iv);
        }
        out.push_back(std::move(c));
    }
    return out;
}

}  // namespace pdv
