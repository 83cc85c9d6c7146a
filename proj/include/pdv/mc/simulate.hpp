#pragma once

// Euler-Maruyama simulation of (S, R) under the four-factor model.
//
//   log S += (r - q) dt - sigma^2 dt / 2 + sigma sqrt(dt) Z
//   R1p   += lambda_1p (-R1p dt + sigma sqrt(dt) Z)
//   R2p   += lambda_2p (sigma^2 - R2p) dt,   clamped at 0
//
// sigma is evaluated at the start of the step. Path i (or antithetic pair i)
// draws from split(seed, i), so results do not depend on how paths are
// distributed over threads.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "pdv/error.hpp"
#include "pdv/kernels/parallel.hpp"
#include "pdv/kernels/rng.hpp"
#include "pdv/market/curves.hpp"
#include "pdv/model/params.hpp"
#include "pdv/model/volatility.hpp"

namespace pdv {

inline constexpr double divergence_threshold = 1e6;

// What to do with a path whose trend factor leaves [-1e6, 1e6]. Explicit
// Euler on the superlinear trend feedback blows up on rare paths, mostly at
// coarse steps; `drop` removes the path (with its antithetic partner) and
// counts it.
enum class DivergencePolicy { error, drop };

struct SimConfig {
    double dt = 1.0 / 504.0;
    std::size_t n_paths = 10000;
    double horizon = 1.0;
    std::uint64_t seed = 1;
    bool antithetic = true;
    Curves curves;
    // Times to store; empty stores every grid node from 0 to the horizon.
    std::vector<double> record_times;
    unsigned threads = 1;
    SigmaFloor floor = SigmaFloor::none;
    DivergencePolicy on_divergence = DivergencePolicy::error;

    void validate() const {
        if (!(dt > 0.0) || !std::isfinite(dt)) throw InputError("SimConfig: dt must be positive");
        if (n_paths < 1) throw InputError("SimConfig: n_paths must be >= 1");
        if (antithetic && (n_paths < 2 || n_paths % 2 != 0)) {
            throw InputError("SimConfig: antithetic sampling needs an even n_paths >= 2");
        }
        if (!(horizon >= dt * (1.0 - 1e-12))) throw InputError("SimConfig: horizon must be >= dt");
    }
};

// Index of the grid node at time t; throws if t is not a node.
inline std::size_t grid_node(double t, double dt) {
    const double k = std::round(t / dt);
    if (k < 0.0 || std::abs(k * dt - t) > 1e-9 * std::max(1.0, std::abs(t))) {
        throw InputError("time " + std::to_string(t) + " is not on the simulation grid (dt = " +
                         std::to_string(dt) + ")");
    }
    return static_cast<std::size_t>(k);
}

inline std::size_t horizon_steps(double horizon, double dt) {
    const double k = std::round(horizon / dt);
    if (std::abs(k * dt - horizon) <= 1e-9 * std::max(1.0, horizon)) return static_cast<std::size_t>(k);
    return static_cast<std::size_t>(std::ceil(horizon / dt));
}

// Largest step <= target_dt that puts every maturity given in whole days
// (ACT/365) exactly on the grid.
inline double aligned_step(std::span<const int> maturity_days, double target_dt) {
    if (!(target_dt > 0.0)) throw InputError("aligned_step: target step must be positive");
    long g = 0;
    for (int d : maturity_days) {
        if (d <= 0) throw InputError("aligned_step: maturities must be positive day counts");
        long a = g, b = d;
        while (b != 0) {
            const long t = a % b;
            a = b;
            b = t;
        }
        g = a;
    }
    if (g == 0) return target_dt;
    const double unit = static_cast<double>(g) / 365.0;
    const double m = std::ceil(unit / target_dt - 1e-12);
    return unit / m;
}

struct PathBundle {
    double dt = 0.0;
    std::size_t n_paths = 0;
    bool antithetic = false;  // paths 2i and 2i+1 are mirrored
    std::vector<double> times;
    std::vector<std::size_t> nodes;
    // Column-major by record: value(k, path) = column[k * n_paths + path].
    std::vector<double> spot;
    std::vector<double> r10, r11, r20, r21;
    std::vector<double> vol;
    std::size_t clamp_events = 0;
    std::size_t dropped_paths = 0;  // diverged paths removed under DivergencePolicy::drop

    std::size_t n_times() const { return times.size(); }
    std::size_t at(std::size_t k, std::size_t path) const { return k * n_paths + path; }

    FactorState state(std::size_t k, std::size_t path) const {
        const auto i = at(k, path);
        return {r10[i], r11[i], r20[i], r21[i]};
    }

    std::span<const double> spots_at(std::size_t k) const {
        return std::span<const double>(spot).subspan(k * n_paths, n_paths);
    }

    // Record index of time t; maturities must be recorded exactly.
    std::size_t index_of(double t) const {
        for (std::size_t k = 0; k < times.size(); ++k) {
            if (std::abs(times[k] - t) <= 1e-9 * std::max(1.0, std::abs(t))) return k;
        }
        throw InputError("maturity " + std::to_string(t) + " is not a recorded node of the path bundle");
    }

    std::vector<FactorState> states_at(std::size_t k) const {
        std::vector<FactorState> out(n_paths);
        for (std::size_t p = 0; p < n_paths; ++p) out[p] = state(k, p);
        return out;
    }
};

namespace detail {

struct FactorStepper {
    const ModelParams& p;
    double dt;
    double sqrt_dt;
    SigmaFloor floor;

    // One Euler step of the factors given the normal draw z; returns sigma at
    // the start of the step. R2 clamps are counted in `clamps`.
    double step(FactorState& r, double z, std::size_t& clamps) const {
        const double sig = sigma(p, r, floor);
        const double dw = sqrt_dt * z;
        const double sig2 = sig * sig;
        r.r_10 += p.lambda_10 * (sig * dw - r.r_10 * dt);
        r.r_11 += p.lambda_11 * (sig * dw - r.r_11 * dt);
        r.r_20 += p.lambda_20 * (sig2 - r.r_20) * dt;
        r.r_21 += p.lambda_21 * (sig2 - r.r_21) * dt;
        if (r.r_20 < 0.0) {
            r.r_20 = 0.0;
            ++clamps;
        }
        if (r.r_21 < 0.0) {
            r.r_21 = 0.0;
            ++clamps;
        }
        return sig;
    }
};

inline bool diverged(const FactorState& r) {
    return !(std::abs(r.r_10) <= divergence_threshold && std::abs(r.r_11) <= divergence_threshold &&
             std::isfinite(r.r_20) && std::isfinite(r.r_21));
}

[[noreturn]] inline void throw_diverged(std::size_t path, double t) {
    throw NumericalError("path " + std::to_string(path) + " diverged at t = " + std::to_string(t) +
                         " (|R1| above " + std::to_string(divergence_threshold) + ")");
}

}  // namespace detail

inline PathBundle simulate(const ModelParams& params, const FactorState& init, double s0,
                           const SimConfig& cfg) {
    cfg.validate();
    require_valid(init);
    if (!(s0 > 0.0)) throw InputError("simulate: s0 must be positive");

    const std::size_t n_steps = horizon_steps(cfg.horizon, cfg.dt);

    PathBundle out;
    out.dt = cfg.dt;
    out.n_paths = cfg.n_paths;
    out.antithetic = cfg.antithetic;
    if (cfg.record_times.empty()) {
        for (std::size_t k = 0; k <= n_steps; ++k) out.nodes.push_back(k);
    } else {
        for (double t : cfg.record_times) out.nodes.push_back(grid_node(t, cfg.dt));
        if (!std::is_sorted(out.nodes.begin(), out.nodes.end())) {
            throw InputError("simulate: record times must be nondecreasing");
        }
        if (out.nodes.back() > n_steps) throw InputError("simulate: record time beyond horizon");
    }
    for (auto k : out.nodes) out.times.push_back(static_cast<double>(k) * cfg.dt);

    const std::size_t n_rec = out.nodes.size();
    const std::size_t total = n_rec * cfg.n_paths;
    out.spot.resize(total);
    out.r10.resize(total);
    out.r11.resize(total);
    out.r20.resize(total);
    out.r21.resize(total);
    out.vol.resize(total);

    // Integrated carry over each step.
    std::vector<double> carry(n_steps);
    for (std::size_t k = 0; k < n_steps; ++k) {
        const double a = static_cast<double>(k) * cfg.dt;
        const double b = static_cast<double>(k + 1) * cfg.dt;
        carry[k] = cfg.curves.rate.integral(a, b) - cfg.curves.dividend.integral(a, b);
    }

    const detail::FactorStepper stepper{params, cfg.dt, std::sqrt(cfg.dt), cfg.floor};
    const RngStream master = make_stream(cfg.seed);
    const std::size_t group = cfg.antithetic ? 2 : 1;
    const std::size_t n_groups = cfg.n_paths / group;

    auto store = [&](std::size_t rec, std::size_t path, double log_s, const FactorState& r) {
        const auto i = out.at(rec, path);
        out.spot[i] = s0 * std::exp(log_s);
        out.r10[i] = r.r_10;
        out.r11[i] = r.r_11;
        out.r20[i] = r.r_20;
        out.r21[i] = r.r_21;
        out.vol[i] = sigma(params, r, cfg.floor);
    };

    std::vector<std::size_t> clamps_per_group(n_groups, 0);
    std::vector<unsigned char> diverged_group(n_groups, 0);
    parallel_blocks(n_groups, cfg.threads, [&](std::size_t gb, std::size_t ge) {
        for (std::size_t g = gb; g < ge; ++g) {
            GaussianSource normal(split(master, g));
            FactorState ra = init, rb = init;
            double la = 0.0, lb = 0.0;
            std::size_t clamps = 0;
            std::size_t rec = 0;
            const std::size_t pa = g * group;
            for (std::size_t k = 0; k <= n_steps && rec < n_rec; ++k) {
                while (rec < n_rec && out.nodes[rec] == k) {
                    store(rec, pa, la, ra);
                    if (group == 2) store(rec, pa + 1, lb, rb);
                    ++rec;
                }
                if (rec == n_rec || k == n_steps) break;
                const double z = normal();
                const double sa = stepper.step(ra, z, clamps);
                la += carry[k] - 0.5 * sa * sa * cfg.dt + sa * stepper.sqrt_dt * z;
                bool bad = detail::diverged(ra);
                std::size_t bad_path = pa;
                if (group == 2) {
                    const double sb = stepper.step(rb, -z, clamps);
                    lb += carry[k] - 0.5 * sb * sb * cfg.dt - sb * stepper.sqrt_dt * z;
                    if (!bad && detail::diverged(rb)) {
                        bad = true;
                        bad_path = pa + 1;
                    }
                }
                if (bad) {
                    if (cfg.on_divergence == DivergencePolicy::error) {
                        detail::throw_diverged(bad_path, static_cast<double>(k + 1) * cfg.dt);
                    }
                    diverged_group[g] = 1;
                    break;
                }
            }
            clamps_per_group[g] = clamps;
        }
    });
    for (auto c : clamps_per_group) out.clamp_events += c;

    // Compact the surviving groups in index order.
    std::size_t kept = 0;
    for (std::size_t g = 0; g < n_groups; ++g) kept += diverged_group[g] == 0;
    if (kept == 0) throw NumericalError("simulate: every path diverged");
    if (kept < n_groups) {
        const std::size_t n_keep = kept * group;
        auto compact = [&](std::vector<double>& col) {
            std::vector<double> next(n_rec * n_keep);
            for (std::size_t r = 0; r < n_rec; ++r) {
                std::size_t dst = r * n_keep;
                for (std::size_t g = 0; g < n_groups; ++g) {
                    if (diverged_group[g]) continue;
                    for (std::size_t j = 0; j < group; ++j) next[dst++] = col[r * cfg.n_paths + g * group + j];
                }
            }
            col.swap(next);
        };
        for (auto* col : {&out.spot, &out.r10, &out.r11, &out.r20, &out.r21, &out.vol}) compact(*col);
        out.dropped_paths = cfg.n_paths - n_keep;
        out.n_paths = n_keep;
    }
    return out;
}

}  // namespace pdv
