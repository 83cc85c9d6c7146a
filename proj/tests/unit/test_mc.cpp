#include <catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "pdv/kernels/stats.hpp"
#include "pdv/mc/nested_vix.hpp"
#include "pdv/mc/simulate.hpp"
#include "pdv/model/params.hpp"

using Catch::Approx;
using namespace pdv;

namespace {

ModelParams constant_vol(double b0 = 0.2) {
    ModelParams p = reference_params::beta12_study();
    p.beta_0 = b0;
    p.beta_1 = p.beta_2 = p.beta_12 = 0.0;
    return p;
}

}  // namespace

TEST_CASE("constant volatility paths are lognormal") {
    SimConfig cfg;
    cfg.dt = 1.0 / 252.0;
    cfg.n_paths = 20000;
    cfg.horizon = 1.0;
    cfg.record_times = {1.0};
    const auto b = simulate(constant_vol(), {0, 0, 0.04, 0.04}, 100.0, cfg);
    const auto s = b.spots_at(0);
    std::vector<double> ratio(s.size()), logs(s.size());
    for (std::size_t i = 0; i < s.size(); ++i) {
        ratio[i] = s[i] / 100.0;
        logs[i] = std::log(ratio[i]);
    }
    const auto m = estimate_mean_antithetic(ratio);
    CHECK(std::abs(m.mean - 1.0) < 3 * m.stderr_ + 1e-12);
    // Standard error of the sample standard deviation is about sd / sqrt(2n).
    const double sd = std::sqrt(sample_variance(logs));
    CHECK(std::abs(sd - 0.2) < 3 * 0.2 / std::sqrt(2.0 * s.size()));
}

TEST_CASE("variance factors stay at the constant-vol fixed point") {
    SimConfig cfg;
    cfg.dt = 1.0 / 504.0;
    cfg.n_paths = 10;
    cfg.horizon = 0.25;
    const auto b = simulate(constant_vol(), {0, 0, 0.04, 0.04}, 1.0, cfg);
    for (std::size_t k = 0; k < b.n_times(); ++k) {
        for (std::size_t p = 0; p < b.n_paths; ++p) {
            CHECK(b.state(k, p).r_20 == 0.04);
            CHECK(b.state(k, p).r_21 == 0.04);
        }
    }
}

TEST_CASE("simulation is deterministic and thread-count independent") {
    const ModelParams p = reference_params::joint_2021_06_02();
    SimConfig cfg;
    cfg.n_paths = 2000;
    cfg.horizon = 0.1;
    cfg.dt = 1.0 / 1000.0;
    cfg.seed = 77;
    cfg.on_divergence = DivergencePolicy::drop;
    const auto a = simulate(p, reference_params::joint_2021_06_02_state(), 1.0, cfg);
    const auto b = simulate(p, reference_params::joint_2021_06_02_state(), 1.0, cfg);
    cfg.threads = 3;
    const auto c = simulate(p, reference_params::joint_2021_06_02_state(), 1.0, cfg);
    CHECK(a.spot == b.spot);
    CHECK(a.spot == c.spot);
    CHECK(a.r10 == c.r10);
    CHECK(a.r21 == c.r21);
    CHECK(a.vol == c.vol);
    cfg.seed = 78;
    const auto d = simulate(p, reference_params::joint_2021_06_02_state(), 1.0, cfg);
    CHECK(a.spot != d.spot);
}

TEST_CASE("antithetic partners mirror the first step") {
    SimConfig cfg;
    cfg.n_paths = 4;
    cfg.horizon = 1.0 / 504.0;
    const auto b = simulate(constant_vol(), {0, 0, 0.04, 0.04}, 1.0, cfg);
    REQUIRE(b.n_times() == 2);
    const double drift = -0.5 * 0.04 / 504.0;
    CHECK(std::log(b.spot[b.at(1, 0)]) - drift == Approx(-(std::log(b.spot[b.at(1, 1)]) - drift)).epsilon(1e-12));
}

TEST_CASE("antithetic sampling does not increase the variance of the mean") {
    int wins = 0;
    for (std::uint64_t seed = 1; seed <= 30; ++seed) {
        SimConfig cfg;
        cfg.dt = 1.0 / 52.0;
        cfg.n_paths = 200;
        cfg.horizon = 1.0;
        cfg.seed = seed;
        cfg.record_times = {1.0};
        const auto a = simulate(constant_vol(), {0, 0, 0.04, 0.04}, 1.0, cfg);
        cfg.antithetic = false;
        const auto p = simulate(constant_vol(), {0, 0, 0.04, 0.04}, 1.0, cfg);
        const auto ea = estimate_mean_antithetic(a.spots_at(0));
        const auto ep = estimate_mean(p.spots_at(0));
        wins += ea.stderr_ <= ep.stderr_;
    }
    CHECK(wins >= 28);
}

TEST_CASE("variance clamp never fires at fine steps") {
    const ModelParams p = reference_params::spx_surface_2021_06_03();  // lambda_20 = 95.63
    SimConfig cfg;
    cfg.dt = 1.0 / 2520.0;
    cfg.n_paths = 200;
    cfg.horizon = 0.5;
    cfg.record_times = {0.5};
    cfg.on_divergence = DivergencePolicy::drop;
    CHECK(p.lambda_20 * cfg.dt < 1.0);
    const auto b = simulate(p, reference_params::spx_surface_2021_06_03_state(), 1.0, cfg);
    CHECK(b.clamp_events == 0);
}

TEST_CASE("grid checks") {
    CHECK(grid_node(0.5, 1.0 / 504.0) == 252);
    CHECK_THROWS_AS(grid_node(0.5001, 1.0 / 504.0), InputError);
    const int days[] = {16, 44};
    const double h = aligned_step(days, 1.0 / 504.0);
    CHECK(h <= 1.0 / 504.0);
    CHECK_NOTHROW(grid_node(16.0 / 365.0, h));
    CHECK_NOTHROW(grid_node(44.0 / 365.0, h));
    CHECK(h == Approx(4.0 / 365.0 / 6.0));

    SimConfig cfg;
    cfg.n_paths = 3;
    CHECK_THROWS_AS(cfg.validate(), InputError);
    cfg.antithetic = false;
    CHECK_NOTHROW(cfg.validate());
    cfg.horizon = 0.0;
    CHECK_THROWS_AS(cfg.validate(), InputError);
}

TEST_CASE("diverging paths are reported") {
    ModelParams p = reference_params::beta12_study();
    p.beta_0 = 50.0;
    p.beta_12 = 0.3;
    SimConfig cfg;
    cfg.n_paths = 2;
    cfg.dt = 1.0 / 52.0;
    CHECK_THROWS_AS(simulate(p, {1.0, 1.0, 0.04, 0.04}, 1.0, cfg), NumericalError);
}

TEST_CASE("dropping diverged paths keeps the survivors intact") {
    const ModelParams p = [] {
        ModelParams q = reference_params::beta12_study();
        q.beta_12 = 0.15;
        return q;
    }();
    SimConfig cfg;
    cfg.dt = 1.0 / 200.0;
    cfg.n_paths = 2000;
    cfg.horizon = 0.25;
    cfg.record_times = {0.1, 0.25};
    cfg.on_divergence = DivergencePolicy::drop;
    const FactorState init = reference_params::beta12_study_state();
    const auto b = simulate(p, init, 1.0, cfg);
    REQUIRE(b.dropped_paths > 0);
    CHECK(b.dropped_paths % 2 == 0);
    CHECK(b.n_paths + b.dropped_paths == cfg.n_paths);
    CHECK(b.spot.size() == b.n_paths * 2);
    for (double x : b.r10) CHECK(std::abs(x) <= divergence_threshold);
    cfg.on_divergence = DivergencePolicy::error;
    CHECK_THROWS_AS(simulate(p, init, 1.0, cfg), NumericalError);
    // Same survivors whatever the thread count.
    cfg.on_divergence = DivergencePolicy::drop;
    cfg.threads = 4;
    CHECK(simulate(p, init, 1.0, cfg).spot == b.spot);
}

TEST_CASE("nested VIX of constant volatility") {
    NestedVixConfig cfg;
    cfg.n_inner = 10;
    CHECK(std::abs(vix_nested(constant_vol(), {0.1, -0.2, 0.03, 0.05}, cfg) - 20.0) < 1e-6);
    cfg.n_inner = 3;
    CHECK(std::abs(vix_nested(constant_vol(), {0, 0, 0, 0}, cfg) - 20.0) < 1e-6);
}

TEST_CASE("nested VIX deterministic and thread independent") {
    const ModelParams p = reference_params::joint_2021_06_02();
    NestedVixConfig cfg;
    cfg.n_inner = 400;
    cfg.seed = 5;
    const double a = vix_nested(p, reference_params::joint_2021_06_02_state(), cfg);
    cfg.threads = 3;
    CHECK(vix_nested(p, reference_params::joint_2021_06_02_state(), cfg) == a);
    CHECK(a > 5.0);
    CHECK(a < 60.0);
}

// Tower property: averaging nested VIX^2 over outer states gives the plain
// estimate of the forward average variance.
TEST_CASE("nested estimator is consistent with plain paths") {
    const ModelParams p = reference_params::beta12_study();
    const FactorState init = reference_params::beta12_study_state();
    const double T = 10.0 / 365.0;
    const double delta = vix_window_365;
    const double dt = 1.0 / 730.0;

    SimConfig outer;
    outer.dt = dt;
    outer.n_paths = 200;
    outer.horizon = T;
    outer.record_times = {T};
    outer.seed = 3;
    const auto states = simulate(p, init, 1.0, outer).states_at(0);
    NestedVixConfig nc;
    nc.n_inner = 200;
    nc.inner_dt = dt;
    nc.delta = delta;
    std::vector<double> nested(states.size());
    for (std::size_t i = 0; i < states.size(); ++i) {
        nc.seed = 1000 + i;
        nested[i] = vix_nested_estimate(p, states[i], nc).mean_variance;
    }
    const auto en = estimate_mean(nested);

    SimConfig plain;
    plain.dt = dt;
    plain.n_paths = 20000;
    plain.horizon = T + delta;
    plain.seed = 9;
    const auto b = simulate(p, init, 1.0, plain);
    const std::size_t k0 = b.index_of(T);
    const std::size_t n_win = nc.n_steps();
    std::vector<double> avg(b.n_paths, 0.0);
    for (std::size_t path = 0; path < b.n_paths; ++path) {
        for (std::size_t k = k0; k < k0 + n_win; ++k) {
            const double v = b.vol[b.at(k, path)];
            avg[path] += v * v / static_cast<double>(n_win);
        }
    }
    const auto ep = estimate_mean_antithetic(avg);
    const double combined = std::sqrt(en.stderr_ * en.stderr_ + ep.stderr_ * ep.stderr_);
    CHECK(std::abs(en.mean - ep.mean) < 3 * combined);
}

TEST_CASE("vix panel layout") {
    const ModelParams p = reference_params::beta12_study();
    PanelConfig cfg;
    cfg.n_obs = 5;
    cfg.nested.n_inner = 20;
    const auto times = panel_times(p, cfg);
    CHECK(panel_start(p) == Approx(1.0 / 9.57));
    CHECK(times.front() == Approx(1.0 / 9.57).margin(1.0 / 2520.0));
    CHECK(times.back() == Approx(1.0));
    const auto panel = vix_panel(p, cfg);
    CHECK(panel.size() == 5);
    for (const auto& r : panel) CHECK(r.vix > 0.0);

    cfg.n_obs = 1;
    CHECK(panel_times(p, cfg).size() == 1);
    ModelParams slow = p;
    slow.lambda_10 = 1.0;
    slow.lambda_11 = 0.5;
    slow.lambda_20 = 1.0;
    slow.lambda_21 = 0.5;
    cfg.n_obs = 4;
    for (double t : panel_times(slow, cfg)) CHECK(t == Approx(1.0));
}
