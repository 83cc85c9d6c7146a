// Acceptance run: one PASS/FAIL line per criterion.
//
//   acceptance [--only 1,4,7] [--fresh] [--report]
//
// --fresh rebuilds the cached surrogate (criteria 6, 7, 9). --report exits 0
// whenever every criterion ran to a verdict, so the run can sit in ctest
// while known failures stay visible in the output.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iostream>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <sys/wait.h>

#include <json.hpp>

#include "pdv/calibration/calibrate.hpp"
#include "pdv/calibration/loss.hpp"
#include "pdv/cli/run.hpp"
#include "pdv/io/files.hpp"
#include "pdv/market/synth.hpp"
#include "pdv/mc/nested_vix.hpp"
#include "pdv/mc/simulate.hpp"
#include "pdv/model/params.hpp"
#include "pdv/model/volatility.hpp"
#include "pdv/pricing/beta12_scan.hpp"
#include "pdv/pricing/black.hpp"
#include "pdv/pricing/spx.hpp"
#include "pdv/surrogate/mlp.hpp"
#include "pdv/surrogate/surrogate.hpp"

#ifndef PDV_CLI
#error "PDV_CLI must name the pdv executable"
#endif
#ifndef PDV_WORK_DIR
#error "PDV_WORK_DIR must name a scratch directory"
#endif
#ifndef PDV_REPORT_FILE
#error "PDV_REPORT_FILE must name the file that receives the verdict lines"
#endif

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace pdv;

namespace {

struct Verdict {
    bool pass = false;
    std::string detail;
};

bool g_fresh = false;
const fs::path work = PDV_WORK_DIR;

std::string num(double v, int prec = 4) {
    std::ostringstream o;
    o.precision(prec);
    o << v;
    return o.str();
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// Runs the CLI with its console output sent to `log`; returns the exit code.
int pdv_cli(const std::string& args, const fs::path& log) {
    const std::string cmd = std::string("\"") + PDV_CLI + "\" " + args + " > \"" + log.string() + "\" 2>&1";
    const int rc = std::system(cmd.c_str());
    if (rc == -1) return -1;
    return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

json read_json(const fs::path& p) { return json::parse(io::read_text(p)); }

std::string list(const std::vector<double>& v) {
    std::string s;
    for (double x : v) s += (s.empty() ? "" : ",") + io::fmt(x);
    return s;
}

std::string state_list(const FactorState& s) { return list({s.r_10, s.r_11, s.r_20, s.r_21}); }

double black_call_closed(double f, double k, double t, double vol) {
    const double sd = vol * std::sqrt(t);
    const double d1 = (std::log(f / k) + 0.5 * sd * sd) / sd, d2 = d1 - sd;
    auto n = [](double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); };
    return f * n(d1) - k * n(d2);
}

ModelParams constant_vol() {
    ModelParams p = reference_params::beta12_study();
    p.beta_0 = 0.2;
    p.beta_1 = p.beta_2 = p.beta_12 = 0.0;
    return p;
}

// ------------------------------------------------------------------ 1

Verdict black_scholes_reduction() {
    const auto t0 = std::chrono::steady_clock::now();
    SimConfig sc;
    sc.dt = 1.0 / 2520.0;
    sc.n_paths = 100000;
    sc.horizon = 1.0;
    sc.record_times = {0.1, 1.0};
    sc.seed = 101;
    sc.threads = std::max(1u, std::thread::hardware_concurrency());
    const PathBundle b = simulate(constant_vol(), {0, 0, 0.04, 0.04}, 1.0, sc);
    std::vector<OptionSpec> specs;
    for (double t : {0.1, 1.0}) {
        for (double m : {0.9, 1.0, 1.1}) specs.push_back({t, m, OptionKind::call});
    }
    const auto priced = price_spx_options(b, specs, sc.curves.rate, sc.threads);
    double worst = 0.0;
    for (const auto& p : priced) {
        const double z = std::abs(p.price - black_call_closed(1.0, p.spec.strike, p.spec.maturity, 0.2)) / p.stderr_;
        worst = std::max(worst, z);
    }
    const double secs = seconds_since(t0);
    return {worst < 3.0 && secs < 60.0, "max |MC - Black| / stderr = " + num(worst) + " (< 3) over 6 calls, " +
                                            num(secs, 3) + " s (< 60 s)"};
}

// ------------------------------------------------------------------ 2

Verdict constant_vol_vix() {
    const ModelParams p = constant_vol();
    double worst = 0.0;
    std::size_t runs = 0;
    for (std::size_t n : {1, 2, 7, 100, 1000}) {
        for (const FactorState s : {FactorState{0, 0, 0.04, 0.04}, FactorState{0.3, -0.2, 0.01, 0.09}}) {
            NestedVixConfig nc;
            nc.n_inner = n;
            nc.seed = 5 + n;
            worst = std::max(worst, std::abs(vix_nested(p, s, nc) - 20.0));
            ++runs;
        }
    }
    return {worst <= 1e-6, "max |VIX - 20| = " + num(worst, 3) + " over " + std::to_string(runs) +
                               " runs with 1..1000 inner paths (<= 1e-6)"};
}

// ------------------------------------------------------------------ 3

Verdict vol_of_vol() {
    const ModelParams p = reference_params::beta12_study();
    const double expected = std::abs(p.beta_1) * lambda_bar(p, 1);
    RngStream s = make_stream(303);
    double worst = 0.0;
    for (int i = 0; i < 10000; ++i) {
        const FactorState x{2 * next_uniform(s) - 1, 2 * next_uniform(s) - 1, 0.2 * next_uniform(s) + 1e-6,
                            0.2 * next_uniform(s) + 1e-6};
        const double sig = sigma(p, x);
        if (sig == 0.0) continue;
        worst = std::max(worst, std::abs(std::abs(sigma_drift_diffusion(p, x).nu / sig) - expected) / expected);
    }
    bool zero = true;
    for (double b12 : {0.05, 0.1, 0.15, 0.3}) {
        ModelParams q = p;
        q.beta_12 = b12;
        const double r1 = -q.beta_1 / (2 * q.beta_12);
        zero = zero && sigma_drift_diffusion(q, {r1, r1, 0.02, 0.02}).nu == 0.0;
    }
    return {worst <= 1e-12 && zero, "max relative deviation of |nu/sigma| from |beta_1| lambda_bar_1 = " + num(worst, 3) +
                                        " over 1e4 states (<= 1e-12); nu == 0 at the parabola bottom: " +
                                        (zero ? "yes" : "no")};
}

// ------------------------------------------------------------------ 4

Verdict beta12_monotonicity() {
    Beta12ScanConfig cfg;
    cfg.moneyness = {0.9, 1.0, 1.05, 1.1, 1.2};
    cfg.threads = std::max(1u, std::thread::hardware_concurrency());
    cfg.seed = 404;
    cfg.vix_nested.seed = 405;
    const auto cases = beta12_scan(reference_params::beta12_study(), reference_params::beta12_study_state(), cfg);
    auto at = [](const Beta12Case& c, double m) {
        for (const auto& s : c.smile) {
            if (std::abs(s.moneyness - m) < 1e-9) return s;
        }
        throw std::runtime_error("moneyness missing");
    };
    bool iv_up = true, vix_up = true;
    std::string ivs, futs;
    for (std::size_t i = 0; i < cases.size(); ++i) {
        const auto s = at(cases[i], 1.1);
        ivs += (i ? ", " : "") + (std::isfinite(s.iv) ? num(s.iv) : std::string("undefined"));
        futs += (i ? ", " : "") + num(cases[i].vix_future) + " +- " + num(cases[i].vix_future_stderr, 2);
        if (i == 0) continue;
        const auto r = at(cases[i - 1], 1.1);
        const bool defined = std::isfinite(s.iv) && std::isfinite(r.iv);
        iv_up = iv_up && defined && s.iv - r.iv > std::hypot(s.iv_stderr, r.iv_stderr);
        vix_up = vix_up && cases[i].vix_future > cases[i - 1].vix_future;
    }
    // Right wing turning upward: IV at 1.2 above IV at 1.1 for beta_12 >= 0.1.
    std::string hockey;
    for (const auto& c : cases) {
        if (c.beta12 < 0.1 - 1e-12) continue;
        const double a = at(c, 1.1).iv, b = at(c, 1.2).iv;
        hockey += " beta_12=" + num(c.beta12) + ":" + (std::isfinite(a) && std::isfinite(b) && b > a ? "yes" : "no");
    }
    return {iv_up && vix_up, std::string("(a) IV(1.1) ") + (iv_up ? "increasing" : "NOT increasing") + " [" + ivs +
                                 "]; (b) VIX future " + (vix_up ? "increasing" : "NOT increasing") + " [" + futs +
                                 "]; right wing up:" + hockey};
}

// ------------------------------------------------------------------ 5

double half_sq_loss(const Mlp<double>& net, const Mlp<double>::Matrix& x, double target) {
    const double y = net.forward(x)(0, 0);
    return 0.5 * (y - target) * (y - target);
}

Verdict gradient_check() {
    MlpSpec spec{14, {{8, Activation::tanh}, {1, Activation::linear}}};
    Mlp<double> net(spec);
    net.initialize(make_stream(505));
    RngStream s = make_stream(506);
    for (auto& b : net.biases()) {
        for (Eigen::Index i = 0; i < b.size(); ++i) b(i) = 0.3 * (2 * next_uniform(s) - 1);
    }
    double worst = 0.0;
    for (int point = 0; point < 100; ++point) {
        Mlp<double>::Matrix x(14, 1);
        for (int i = 0; i < 14; ++i) x(i, 0) = 2 * next_uniform(s) - 1;
        const double target = next_uniform(s);
        Mlp<double>::Workspace ws;
        Mlp<double>::Matrix d(1, 1);
        d(0, 0) = net.forward_train(x, ws)(0, 0) - target;
        Mlp<double>::Gradients g;
        net.backward(ws, d, g);
        double diff = 0, na = 0, nn = 0;
        auto probe = [&](double& w, double analytic) {
            const double keep = w, h = 1e-6;
            w = keep + h;
            const double up = half_sq_loss(net, x, target);
            w = keep - h;
            const double dn = half_sq_loss(net, x, target);
            w = keep;
            const double numeric = (up - dn) / (2 * h);
            diff += (analytic - numeric) * (analytic - numeric);
            na += analytic * analytic;
            nn += numeric * numeric;
        };
        for (std::size_t l = 0; l < net.n_layers(); ++l) {
            auto& W = net.weights()[l];
            for (Eigen::Index i = 0; i < W.rows(); ++i) {
                for (Eigen::Index j = 0; j < W.cols(); ++j) probe(W(i, j), g.w[l](i, j));
            }
            auto& b = net.biases()[l];
            for (Eigen::Index i = 0; i < b.size(); ++i) probe(b(i), g.b[l](i));
        }
        worst = std::max(worst, std::sqrt(diff) / std::max({std::sqrt(na), std::sqrt(nn), 1e-12}));
    }
    return {worst < 1e-4, "worst relative gradient error " + num(worst, 3) + " over 100 points (< 1e-4)"};
}

// ------------------------------------------------------------------ 6

// The desk-scale network, trained once and kept in the work directory.
fs::path surrogate_file() {
    const fs::path dir = work / "surrogate";
    const fs::path net = dir / "train" / "surrogate.pdvnn";
    const fs::path done = dir / "train" / "manifest.json";
    if (!g_fresh && fs::exists(net) && fs::exists(done) && read_json(done).at("status") == 0) return net;
    fs::create_directories(dir);
    const unsigned hw = std::max(1u, std::thread::hardware_concurrency());
    const std::string threads = " --threads " + std::to_string(hw);
    std::cout << "  building the desk-scale dataset and surrogate (cached in " << dir.string() << ")\n" << std::flush;
    int rc = pdv_cli("build-dataset --out \"" + (dir / "dataset").string() +
                         "\" --sampler uniform --n_configs 4000 --panel_obs 25 --n_inner 500 --seed 601" + threads,
                     dir / "dataset.log");
    if (rc != 0) throw std::runtime_error("build-dataset exited with " + std::to_string(rc));
    rc = pdv_cli("train-surrogate --out \"" + (dir / "train").string() + "\" --dataset \"" +
                     (dir / "dataset" / "dataset.bin").string() + "\" --seed 602" + threads,
                 dir / "train.log");
    if (rc != 0) throw std::runtime_error("train-surrogate exited with " + std::to_string(rc));
    return net;
}

Verdict surrogate_quality() {
    const fs::path net = surrogate_file();
    const fs::path out = work / "surrogate" / "eval";
    const unsigned hw = std::max(1u, std::thread::hardware_concurrency());
    const int rc = pdv_cli("eval-surrogate --out \"" + out.string() + "\" --surrogate \"" + net.string() +
                               "\" --sampler realistic --n_configs 20 --panel_obs 25 --n_inner 500 --seed 603 --threads " +
                               std::to_string(hw),
                           work / "surrogate" / "eval.log");
    if (rc != 0) throw std::runtime_error("eval-surrogate exited with " + std::to_string(rc));
    const json e = read_json(out / "eval.json");
    const json t = read_json(net.parent_path() / "train_report.json");
    const double mae = e.at("mean_mae");
    const std::size_t failed = e.at("failed");
    const bool pass = failed < 20 && mae < 0.6;
    return {pass, "mean |surrogate - nested| = " + num(mae) + " points (< 0.6) over " + std::to_string(20 - failed) +
                      " of 20 realistic configs (" + std::to_string(failed) + " outer paths diverged, " +
                      std::to_string(e.at("states_above_cap").get<std::size_t>()) +
                      " states above the cap); validation RMSE " + num(t.at("best_val_rmse").get<double>())};
}

// ------------------------------------------------------------------ 7

Verdict joint_round_trip() {
    const auto t0 = std::chrono::steady_clock::now();
    Surrogate net = load_surrogate(surrogate_file());
    net.threads = std::max(1u, std::thread::hardware_concurrency());
    const ModelParams truth = reference_params::joint_2021_06_02();
    const FactorState init = reference_params::joint_2021_06_02_state();

    SynthGrid g;
    g.spx_days = {30, 90};
    for (int i = 0; i <= 10; ++i) g.spx_moneyness.push_back(0.8 + 0.04 * i);
    g.vix_days = {30};
    g.vix_moneyness = {0.9, 1.0, 1.1, 1.2, 1.3, 1.5, 1.7};
    SynthConfig sc;
    sc.n_paths = 50000;
    sc.seed = 701;
    sc.threads = net.threads;
    sc.date = "2021-06-02";
    const SyntheticMarket mk = synth_market(truth, init, g, sc, &net);

    CalibConfig cfg;
    cfg.target = CalibrationTarget::joint;
    cfg.n_paths = 50000;
    cfg.dt = 1.0 / 504.0;
    cfg.seed = 702;
    cfg.threads = net.threads;
    cfg.weights = {10.0, 5.0, 20.0};
    cfg.restarts = 3;
    cfg.optimizer = OptimizerKind::nelder_mead;
    cfg.opt.max_evals = 900;
    cfg.init.state = init;
    const CalibrationProblem<Surrogate> problem(mk.spx, mk.vix, cfg, &net);
    const double at_truth = problem.evaluate(truth).total;
    const CalibrationResult r = calibrate(problem);
    const double secs = seconds_since(t0);
    fs::create_directories(work / "joint");
    io::write_text(work / "joint" / "calibration.json", calibration_report(problem, r).dump(2) + "\n");

    const auto a = r.params.to_array(), b = truth.to_array();
    double worst = 0.0;
    std::string betas;
    for (std::size_t i = 6; i < n_params; ++i) {
        worst = std::max(worst, std::abs(a[i] - b[i]));
        betas += (i > 6 ? ", " : "") + num(a[i]);
    }
    const bool pass = worst <= 0.02 && r.best.total <= 2.0 * at_truth && secs < 1800.0;
    return {pass, "max |beta - true beta| = " + num(worst) + " (<= 0.02), recovered [" + betas + "]; loss " +
                      num(r.best.total) + " vs " + num(at_truth) + " at the true params (<= 2x); " + num(secs, 4) +
                      " s (< 1800 s)"};
}

// ------------------------------------------------------------------ 8

Verdict loss_identities() {
    std::vector<std::string> broken;
    const double s = score(1.1, 1.0);
    // 1.1 is not representable; the identity holds to double rounding.
    if (std::abs(s - 0.01) > 1e-15) broken.push_back("score(1.1, 1) = " + num(s, 17));

    OptionChain spx;
    for (int days : {30, 90}) {
        SpxSlice sl;
        sl.days = days;
        sl.forward = 1.0;
        for (double k : {0.9, 1.0, 1.1}) {
            const double v = 0.2 + 0.3 * (1.0 - k);
            sl.quotes.push_back({k, k < 1.0 ? OptionKind::put : OptionKind::call, v - 0.01, v + 0.01, v});
        }
        spx.slices.push_back(sl);
    }
    std::vector<double> ivs;
    for (const auto& sl : spx.slices) {
        for (const auto& q : sl.quotes) ivs.push_back(q.mid_iv);
    }
    if (spx_loss_from_ivs(spx, ivs, 10.0).value != 0.0) broken.push_back("SPX loss at model == market");

    auto vix_chain = [](double scale) {
        VixChain c;
        VixSliceQuotes sl;
        sl.days = 30;
        sl.future = 20.0 * scale;
        const double ks[] = {16.0, 20.0, 25.0, 30.0}, vs[] = {0.9, 1.0, 1.2, 1.4};
        for (int i = 0; i < 4; ++i) {
            VixQuote q;
            q.strike = ks[i] * scale;
            q.mid = black_call(sl.future, q.strike, sl.maturity(), vs[i]);
            q.bid = 0.99 * q.mid;
            q.ask = 1.01 * q.mid;
            q.mid_iv = vs[i];
            sl.quotes.push_back(q);
        }
        c.slices.push_back(sl);
        return c;
    };
    const LossWeights lw{10.0, 5.0, 20.0};
    const VixChain c1 = vix_chain(1.0), c2 = vix_chain(2.0);
    const auto w1 = vega_weights(c1), w2 = vega_weights(c2);
    auto calls = [](const VixChain& c, bool bumped) {
        std::vector<double> v;
        for (std::size_t i = 0; i < c.slices[0].quotes.size(); ++i) {
            v.push_back(c.slices[0].quotes[i].mid * (bumped ? 1.0 + 0.05 * static_cast<double>(i) : 1.0));
        }
        return std::vector<std::vector<double>>{v};
    };
    const std::vector<double> f1{20.0}, f2{40.0};
    if (vix_loss_from_prices(c1, w1, f1, calls(c1, false), lw).value != 0.0) broken.push_back("VIX loss at model == market");
    double gamma_sum = 0.0, gamma_gap = 0.0;
    for (std::size_t i = 0; i < w1.gamma[0].size(); ++i) {
        gamma_sum += w1.gamma[0][i];
        gamma_gap = std::max(gamma_gap, std::abs(w1.gamma[0][i] - w2.gamma[0][i]));
    }
    if (std::abs(gamma_sum - 1.0) > 1e-14) broken.push_back("vega weights sum to " + num(gamma_sum, 17));
    const std::vector<double> g1{21.0}, g2{42.0};
    const double l1 = vix_loss_from_prices(c1, w1, g1, calls(c1, true), lw).value;
    const double l2 = vix_loss_from_prices(c2, w2, g2, calls(c2, true), lw).value;
    if (gamma_gap > 1e-14 || std::abs(l1 - l2) > 1e-14 * std::max(1.0, l1)) {
        broken.push_back("rescaled market changes weights or loss");
    }
    std::string detail = "score(1.1,1) = 0.01 to rounding; zero loss at model == market (SPX and VIX); vega weights "
                         "sum to 1 and are invariant to rescaling the VIX market";
    if (!broken.empty()) {
        detail = "broken:";
        for (const auto& b : broken) detail += " [" + b + "]";
    }
    return {broken.empty(), detail};
}

// ------------------------------------------------------------------ 9

Verdict determinism() {
    const fs::path dir = work / "determinism";
    fs::remove_all(dir);
    fs::create_directories(dir);
    const std::string net = surrogate_file().string();
    const std::string jp = state_list(reference_params::joint_2021_06_02_state());
    struct Step {
        std::string name, args;
    };
    auto out = [&](const std::string& n) { return "--out \"" + (dir / n).string() + "\" --threads 1 "; };
    const std::vector<Step> steps{
        {"simulate", out("simulate") + "--preset joint_2021_06_02 --n_paths 64 --horizon 0.1 --on_divergence drop "
                                       "--vix_panel true --panel_obs 5 --panel_inner 50"},
        {"build-dataset", out("build-dataset") + "--n_configs 6 --panel_obs 4 --n_inner 40"},
        {"train-surrogate", out("train-surrogate") + "--dataset \"" + (dir / "build-dataset" / "dataset.bin").string() +
                                "\" --hidden 16:tanh,8:relu --max_epochs 5 --batch 8 --val_fraction 0.34"},
        {"eval-surrogate", out("eval-surrogate") + "--surrogate \"" +
                               (dir / "train-surrogate" / "surrogate.pdvnn").string() +
                               "\" --n_configs 4 --panel_obs 4 --n_inner 40"},
        {"price", out("price") + "--preset joint_2021_06_02 --n_paths 2000 --spx_days 30 --vix_days 30 --n_inner 40"},
        {"synth-market", out("synth-market") + "--preset joint_2021_06_02 --n_paths 4000 --surrogate \"" + net + "\""},
        {"calibrate-spx", out("calibrate-spx") + "--spx_chain \"" + (dir / "synth-market" / "spx_chain.csv").string() +
                              "\" --init " + jp + " --n_paths 2000 --restarts 2 --max_evals 40"},
        {"calibrate-joint", out("calibrate-joint") + "--spx_chain \"" +
                                (dir / "synth-market" / "spx_chain.csv").string() + "\" --vix_chain \"" +
                                (dir / "synth-market" / "vix_chain.csv").string() + "\" --surrogate \"" + net +
                                "\" --init " + jp + " --n_paths 2000 --restarts 2 --max_evals 40"},
        {"stability", out("stability") + "--spx_chains \"" + (dir / "synth-market" / "spx_chain.csv").string() +
                          "\",\"" + (dir / "synth-market" / "spx_chain.csv").string() + "\" --init " + jp +
                          " --n_paths 2000 --restarts 1 --max_evals 40"},
        {"beta12-scan", out("beta12-scan") + "--n_paths 2000 --moneyness 0.95,1,1.05 --vix_outer 20 --vix_inner 20"},
    };
    std::vector<std::string> bad;
    for (const auto& st : steps) {
        const int rc = pdv_cli(st.name + " " + st.args, dir / (st.name + ".log"));
        const fs::path manifest = dir / st.name / "manifest.json";
        if (!fs::exists(manifest) || (rc != 0 && rc != exit_code::budget_exhausted)) {
            bad.push_back(st.name + " exited " + std::to_string(rc));
            continue;
        }
        for (int threads : {1, 3}) {
            const fs::path rdir = dir / (st.name + "_replay_t" + std::to_string(threads));
            const int rr = pdv_cli("replay \"" + manifest.string() + "\" --out \"" + rdir.string() + "\" --threads " +
                                       std::to_string(threads),
                                   dir / (st.name + "_replay_t" + std::to_string(threads) + ".log"));
            if (rr != 0 || !read_json(rdir / "replay.json").at("identical").get<bool>()) {
                bad.push_back(st.name + " on " + std::to_string(threads) + " thread(s)");
            }
        }
    }
    std::string detail = std::to_string(steps.size()) + " subcommands replayed from their manifests on 1 and 3 threads: ";
    if (bad.empty()) return {true, detail + "all outputs bit-identical"};
    detail += "mismatch in";
    for (const auto& b : bad) detail += " [" + b + "]";
    return {false, detail};
}

// ----------------------------------------------------------------- 10

Verdict stability_workflow() {
    const fs::path dir = work / "stability";
    fs::remove_all(dir);
    fs::create_directories(dir);
    const unsigned hw = std::max(1u, std::thread::hardware_concurrency());
    const std::string threads = " --threads " + std::to_string(hw);
    std::string chains;
    for (int d = 1; d <= 5; ++d) {
        const fs::path o = dir / ("day" + std::to_string(d));
        const int rc = pdv_cli("synth-market --out \"" + o.string() + "\" --preset spx_2021_06_03 --date 2021-06-0" +
                                   std::to_string(d) + " --spx_days 30,60,90 --vix_days \"\" --n_paths 50000 --seed " +
                                   std::to_string(1000 + d) + threads,
                               dir / ("day" + std::to_string(d) + ".log"));
        if (rc != 0) throw std::runtime_error("synth-market exited with " + std::to_string(rc));
        chains += (chains.empty() ? "" : ",") + ("\"" + (o / "spx_chain.csv").string() + "\"");
    }
    const fs::path o = dir / "report";
    const int rc = pdv_cli("stability --out \"" + o.string() + "\" --spx_chains " + chains + " --init " +
                               state_list(reference_params::spx_surface_2021_06_03_state()) +
                               " --first_restarts 8 --restarts 1 --optimizer nelder_mead --max_evals 400 --n_paths 50000 --seed 2001" +
                               threads,
                           dir / "stability.log");
    if (!fs::exists(o / "stability.json")) throw std::runtime_error("stability exited with " + std::to_string(rc));
    const json j = read_json(o / "stability.json");
    const double drift = j.at("max_beta_drift");
    const std::size_t failed = j.at("failed");
    const auto kernels = io::read_text(o / "stability_kernels.csv");
    const auto mae = io::read_text(o / "stability_mae.csv");
    const auto lines = [](const std::string& s) { return std::count(s.begin(), s.end(), '\n'); };
    const bool emitted = lines(kernels) == 1 + 5 * 201 && lines(mae) == 6 && fs::exists(o / "stability_kernels.gp");
    std::string maes;
    for (const auto& r : j.at("rows")) maes += (maes.empty() ? "" : ", ") + (r.at("mae").is_null() ? "-" : num(r.at("mae").get<double>(), 3));
    const bool pass = failed == 0 && drift < 0.03 && emitted;
    return {pass, "max day-over-day beta drift " + num(drift) + " (< 0.03) over 5 days, " + std::to_string(failed) +
                      " failed; kernel overlay and MAE table " + (emitted ? "emitted" : "MISSING") + " (MAE [" + maes +
                      "])" + (rc != 0 ? "; exit " + std::to_string(rc) : "")};
}

}  // namespace

int main(int argc, char** argv) {
    std::set<int> only;
    bool report = false;
    for (int i = 1; i < argc; ++i) {
        const std::string a = argv[i];
        if (a == "--fresh") g_fresh = true;
        else if (a == "--report") report = true;
        else if (a == "--only" && i + 1 < argc) {
            for (const auto& s : cli::split_list(argv[++i])) only.insert(std::stoi(s));
        } else {
            std::cerr << "usage: acceptance [--only 1,2,...] [--fresh] [--report]\n";
            return 2;
        }
    }
    fs::create_directories(work);
    const std::vector<std::pair<std::string, std::function<Verdict()>>> criteria{
        {"Black-Scholes reduction", black_scholes_reduction},
        {"constant-vol VIX", constant_vol_vix},
        {"vol-of-vol constancy", vol_of_vol},
        {"beta_12 monotonicity", beta12_monotonicity},
        {"surrogate gradient check", gradient_check},
        {"desk-scale surrogate quality", surrogate_quality},
        {"synthetic joint-calibration round trip", joint_round_trip},
        {"loss identities", loss_identities},
        {"determinism", determinism},
        {"stability workflow", stability_workflow},
    };
    int failed = 0, errors = 0, ran = 0;
    std::string lines;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        const int id = static_cast<int>(i) + 1;
        if (!only.empty() && !only.count(id)) continue;
        ++ran;
        const auto t0 = std::chrono::steady_clock::now();
        Verdict v;
        try {
            v = criteria[i].second();
        } catch (const std::exception& e) {
            v = {false, std::string("ERROR ") + e.what()};
            ++errors;
        }
        if (!v.pass) ++failed;
        const std::string line = std::string(v.pass ? "PASS" : "FAIL") + "  " + std::to_string(id) + ". " +
                                 criteria[i].first + ": " + v.detail + "  [" + num(seconds_since(t0), 3) + " s]\n";
        std::cout << line << std::flush;
        lines += line;
    }
    lines += std::to_string(ran - failed) + " of " + std::to_string(ran) + " criteria passed\n";
    std::cout << lines.substr(lines.rfind('\n', lines.size() - 2) + 1);
    io::write_text(PDV_REPORT_FILE, lines);
    if (report) return errors == 0 ? 0 : 1;
    return failed == 0 ? 0 : 1;
}
