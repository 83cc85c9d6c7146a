#pragma once

// VIX by nested Monte Carlo:
//
//   VIX_T^2 = E[ (1/Delta) int_T^{T+Delta} sigma_t^2 dt | R_T ],
//
// with the integral replaced by a left Riemann sum on inner paths restarted
// from R_T. Quoted in volatility points (x100).

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <vector>

#include "pdv/error.hpp"
#include "pdv/kernels/parallel.hpp"
#include "pdv/kernels/rng.hpp"
#include "pdv/kernels/stats.hpp"
#include "pdv/mc/simulate.hpp"
#include "pdv/model/params.hpp"
#include "pdv/model/volatility.hpp"

namespace pdv {

inline constexpr double vix_window_365 = 30.0 / 365.0;
inline constexpr double vix_window_252 = 30.0 / 252.0;

struct NestedVixConfig {
    std::size_t n_inner = 10000;
    double delta = vix_window_365;
    double inner_dt = 1.0 / 2520.0;
    std::uint64_t seed = 1;
    bool antithetic = true;
    SigmaFloor floor = SigmaFloor::none;
    DivergencePolicy on_divergence = DivergencePolicy::error;
    unsigned threads = 1;

    void validate() const {
        if (n_inner < 1) throw InputError("NestedVixConfig: n_inner must be >= 1");
        if (!(delta > 0.0)) throw InputError("NestedVixConfig: delta must be positive");
        if (!(inner_dt > 0.0)) throw InputError("NestedVixConfig: inner_dt must be positive");
    }

    std::size_t n_steps() const {
        return std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(delta / inner_dt)));
    }
};

struct VixEstimate {
    double vix = 0.0;           // points
    double mean_variance = 0.0; // mean of (1/Delta) * Riemann sum of sigma^2
    double variance_stderr = 0.0;
    std::size_t dropped = 0;    // diverged inner paths left out under DivergencePolicy::drop
};

namespace detail {

// Average of sigma^2 over the window on one inner path driven by z_path
// (negated for the antithetic partner). NaN when the path diverges.
inline double window_variance(const FactorStepper& stepper, FactorState r, const double* z_path,
                              std::size_t n_steps, double sign, std::size_t& clamps) {
    double acc = 0.0;
    for (std::size_t k = 0; k < n_steps; ++k) {
        const double z = sign * z_path[k];
        const double sig = stepper.step(r, z, clamps);
        acc += sig * sig;
        if (diverged(r)) return std::numeric_limits<double>::quiet_NaN();
    }
    return acc / static_cast<double>(n_steps);
}

}  // namespace detail

inline VixEstimate vix_nested_estimate(const ModelParams& params, const FactorState& state,
                                       const NestedVixConfig& cfg) {
    cfg.validate();
    require_valid(state);
    const std::size_t n_steps = cfg.n_steps();
    const double h = cfg.delta / static_cast<double>(n_steps);
    const detail::FactorStepper stepper{params, h, std::sqrt(h), cfg.floor};
    const bool anti = cfg.antithetic && cfg.n_inner % 2 == 0;
    const std::size_t group = anti ? 2 : 1;
    const std::size_t n_groups = cfg.n_inner / group;
    const RngStream master = make_stream(cfg.seed);

    std::vector<double> samples(cfg.n_inner);
    parallel_blocks(n_groups, cfg.threads, [&](std::size_t gb, std::size_t ge) {
        std::vector<double> z(n_steps);
        std::size_t clamps = 0;
        for (std::size_t g = gb; g < ge; ++g) {
            RngStream s = split(master, g);
            sample_gaussians(s, z);
            samples[g * group] = detail::window_variance(stepper, state, z.data(), n_steps, 1.0, clamps);
            if (anti) {
                samples[g * group + 1] = detail::window_variance(stepper, state, z.data(), n_steps, -1.0, clamps);
            }
        }
    });

    // Keep whole groups whose paths all stayed finite.
    std::vector<double> kept;
    kept.reserve(samples.size());
    for (std::size_t g = 0; g < n_groups; ++g) {
        bool ok = true;
        for (std::size_t j = 0; j < group; ++j) ok = ok && !std::isnan(samples[g * group + j]);
        if (!ok) {
            if (cfg.on_divergence == DivergencePolicy::error) {
                detail::throw_diverged(g * group, cfg.delta);
            }
            continue;
        }
        for (std::size_t j = 0; j < group; ++j) kept.push_back(samples[g * group + j]);
    }
    if (kept.empty()) throw NumericalError("nested VIX: every inner path diverged");

    const MeanEstimate m = anti ? estimate_mean_antithetic(kept) : estimate_mean(kept);
    VixEstimate out;
    out.mean_variance = m.mean;
    out.variance_stderr = m.stderr_;
    out.vix = 100.0 * std::sqrt(std::max(0.0, m.mean));
    out.dropped = cfg.n_inner - kept.size();
    return out;
}

inline double vix_nested(const ModelParams& params, const FactorState& state, const NestedVixConfig& cfg) {
    return vix_nested_estimate(params, state, cfg).vix;
}

struct PanelConfig {
    std::size_t n_obs = 200;
    double outer_dt = 1.0 / 2520.0;
    double t_end = 1.0;
    FactorState init{0.0, 0.0, 0.04, 0.04};
    std::uint64_t seed = 1;
    NestedVixConfig nested;
};

struct PanelRecord {
    double t = 0.0;
    FactorState state;
    double vix = 0.0;
    std::size_t dropped_inner = 0;
};

// First observation time: the slower of the two fast kernels has forgotten
// the initial state by then.
inline double panel_start(const ModelParams& p, double t_end = 1.0) {
    return std::min(t_end, std::max(1.0 / p.lambda_10, 1.0 / p.lambda_20));
}

// Evenly spaced observation times on [t1, t_end], snapped to the outer grid.
inline std::vector<double> panel_times(const ModelParams& p, const PanelConfig& cfg) {
    if (cfg.n_obs < 1) throw InputError("PanelConfig: n_obs must be >= 1");
    const double t1 = panel_start(p, cfg.t_end);
    std::vector<double> out(cfg.n_obs);
    for (std::size_t k = 0; k < cfg.n_obs; ++k) {
        const double t = cfg.n_obs == 1 ? t1
                                        : t1 + (cfg.t_end - t1) * static_cast<double>(k) /
                                                   static_cast<double>(cfg.n_obs - 1);
        out[k] = std::round(t / cfg.outer_dt) * cfg.outer_dt;
    }
    return out;
}

inline RngStream panel_outer_stream(std::uint64_t seed) { return split(make_stream(seed), 0); }
inline std::uint64_t panel_inner_seed(std::uint64_t seed, std::size_t record) {
    return split(split(make_stream(seed), 1), record).key;
}

// One outer path observed at the panel times, with a nested VIX per record.
inline std::vector<PanelRecord> vix_panel(const ModelParams& params, const PanelConfig& cfg) {
    const auto times = panel_times(params, cfg);
    SimConfig sim;
    sim.dt = cfg.outer_dt;
    sim.n_paths = 1;
    sim.antithetic = false;
    sim.horizon = std::max(times.back(), cfg.outer_dt);
    sim.seed = panel_outer_stream(cfg.seed).key;
    sim.record_times = times;
    sim.floor = cfg.nested.floor;
    sim.on_divergence = DivergencePolicy::error;
    const PathBundle outer = simulate(params, cfg.init, 1.0, sim);

    std::vector<PanelRecord> out(times.size());
    for (std::size_t k = 0; k < times.size(); ++k) {
        NestedVixConfig nested = cfg.nested;
        nested.seed = panel_inner_seed(cfg.seed, k);
        out[k].t = outer.times[k];
        out[k].state = outer.state(k, 0);
        const VixEstimate e = vix_nested_estimate(params, out[k].state, nested);
        out[k].vix = e.vix;
        out[k].dropped_inner = e.dropped;
    }
    return out;
}

}  // namespace pdv
