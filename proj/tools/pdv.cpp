// pdv: command-line front end for simulation, surrogate training, pricing,
// calibration and the stability / beta_12 studies. Run `pdv --help` or
// `pdv <command> --help` for the settings of each command.

#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "pdv/calibration/calibrate.hpp"
#include "pdv/calibration/stability.hpp"
#include "pdv/cli/run.hpp"
#include "pdv/io/export.hpp"
#include "pdv/market/chains.hpp"
#include "pdv/market/synth.hpp"
#include "pdv/pricing/beta12_scan.hpp"
#include "pdv/surrogate/dataset.hpp"
#include "pdv/surrogate/surrogate.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace pdv;
using cli::Kind;
using cli::Option;
using cli::Schema;

namespace {

// ---------------------------------------------------------------- settings

std::size_t count(const json& s, const char* key) {
    const long long v = s.at(key).get<long long>();
    if (v < 0) throw InputError(std::string(key) + " must be nonnegative");
    return static_cast<std::size_t>(v);
}
double real(const json& s, const char* key) { return s.at(key).get<double>(); }
std::string text(const json& s, const char* key) { return s.at(key).get<std::string>(); }
bool flag(const json& s, const char* key) { return s.at(key).get<bool>(); }
std::vector<double> reals(const json& s, const char* key) { return s.at(key).get<std::vector<double>>(); }
std::vector<int> ints(const json& s, const char* key) { return s.at(key).get<std::vector<int>>(); }
std::vector<std::string> paths(const json& s, const char* key) { return s.at(key).get<std::vector<std::string>>(); }
std::uint64_t seed_of(const json& s) { return s.at("seed").get<std::uint64_t>(); }
unsigned threads_of(const json& s) { return static_cast<unsigned>(std::max<std::size_t>(1, count(s, "threads"))); }

std::string require_path(const json& s, const char* key, const std::string& hint) {
    const std::string p = text(s, key);
    if (p.empty()) throw InputError("missing --" + std::string(key) + ": " + hint);
    if (!fs::exists(p)) throw InputError("--" + std::string(key) + ": no such file " + p);
    return p;
}

json grid(double lo, double hi, double step) {
    json a = json::array();
    const int n = static_cast<int>(std::llround((hi - lo) / step));
    for (int i = 0; i <= n; ++i) a.push_back(std::round((lo + step * i) * 1e10) / 1e10);
    return a;
}

Schema common_options() {
    const char* env = std::getenv("PDV_OUT_DIR");
    const unsigned hw = std::max(1u, std::thread::hardware_concurrency());
    return {{"out", Kind::path, env && *env ? env : "pdv_out", "output directory (default: $PDV_OUT_DIR or ./pdv_out)"},
            {"seed", Kind::integer, 1, "master seed"},
            {"threads", Kind::integer, hw, "worker threads; results do not depend on it"}};
}

Schema model_options(const char* default_preset = "") {
    return {{"params", Kind::path, "", "JSON file with the ten parameters, flat or under \"params\" (optional \"init\")"},
            {"preset", Kind::text, default_preset,
             "built-in parameter set: beta12_study, spx_2021_06_03, spx_2023_10_25, joint_2021_06_02, "
             "joint_2021_06_03, surrogate_check"},
            {"beta_12", Kind::real, json(), "override beta_12 of the loaded set"},
            {"init", Kind::reals, json::array(), "initial factors R10,R11,R20,R21 (overrides the set's own)"}};
}

Schema curve_options() {
    return {{"rate_curve", Kind::path, "", "CSV t_years,rate (default: zero rates)"},
            {"dividend_curve", Kind::path, "", "CSV t_years,rate (default: zero)"}};
}

Schema calibration_options() {
    return {{"rate_curve", Kind::path, "", "CSV t_years,rate"},
            {"dividend_curve", Kind::path, "", "CSV t_years,rate"},
            {"s0", Kind::real, 1.0, "spot the chain strikes refer to"},
            {"returns", Kind::path, "", "CSV of past daily returns; factors are rebuilt for every trial"},
            {"cutoff_days", Kind::integer, 1000, "history length used for the initial factors"},
            {"log_returns", Kind::boolean, false, "convert the returns to log returns first"},
            {"init", Kind::reals, json::array(), "fixed initial factors R10,R11,R20,R21 (instead of --returns)"},
            {"start", Kind::path, "", "JSON parameters used as the first start"},
            {"start_preset", Kind::text, "", "built-in parameter set used as the first start"},
            {"bounds", Kind::path, "", "JSON map name -> [lo, hi] (default: the training box)"},
            {"n_paths", Kind::integer, 50000, "Monte Carlo paths per evaluation"},
            {"dt", Kind::real, "1/504", "largest time step"},
            {"restarts", Kind::integer, 3, "number of starts"},
            {"optimizer", Kind::text, "trust_region", "trust_region or nelder_mead"},
            {"rho_begin", Kind::real, 0.1, "initial step in the unit-scaled box"},
            {"rho_end", Kind::real, 1e-3, "final step"},
            {"max_evals", Kind::integer, 500, "evaluation budget per start"},
            {"w_spx", Kind::real, 10.0, "SPX loss weight"},
            {"w_vix", Kind::real, 5.0, "VIX option loss weight"},
            {"w_future", Kind::real, 20.0, "VIX future loss weight"}};
}

Schema join(std::initializer_list<Schema> parts) {
    Schema out;
    for (const auto& p : parts) {
        for (const auto& o : p) {
            auto it = std::find_if(out.begin(), out.end(), [&](const Option& x) { return x.name == o.name; });
            if (it == out.end()) out.push_back(o);
            else *it = o;
        }
    }
    return out;
}

// ------------------------------------------------------------- model input

struct Preset {
    ModelParams params;
    std::optional<FactorState> init;
};

Preset preset(const std::string& name) {
    namespace rp = reference_params;
    if (name == "beta12_study") return {rp::beta12_study(), rp::beta12_study_state()};
    if (name == "spx_2021_06_03") return {rp::spx_surface_2021_06_03(), rp::spx_surface_2021_06_03_state()};
    if (name == "spx_2023_10_25") return {rp::spx_surface_2023_10_25(), rp::spx_surface_2023_10_25_state()};
    if (name == "joint_2021_06_02") return {rp::joint_2021_06_02(), rp::joint_2021_06_02_state()};
    if (name == "joint_2021_06_03") return {rp::joint_2021_06_03(), rp::joint_2021_06_03_state()};
    if (name == "surrogate_check") return {rp::surrogate_check(), std::nullopt};
    throw InputError("unknown preset '" + name + "'");
}

Preset load_params_file(cli::Run& run, const std::string& path) {
    run.input(path);
    json j;
    try {
        j = json::parse(io::read_text(path));
    } catch (const json::exception& e) {
        throw InputError(path + ": " + e.what());
    }
    if (j.contains("params")) {
        Preset p{params_from_json(j.at("params")), std::nullopt};
        if (j.contains("init")) p.init = state_from_json(j.at("init"));
        return p;
    }
    return {params_from_json(j), std::nullopt};
}

FactorState state_from_list(const std::vector<double>& v, const char* key) {
    if (v.size() != 4) throw InputError(std::string("--") + key + " needs four values R10,R11,R20,R21");
    FactorState s{v[0], v[1], v[2], v[3]};
    require_valid(s);
    return s;
}

struct ModelInput {
    ModelParams params;
    FactorState init;
};

ModelInput load_model(cli::Run& run, bool need_init = true) {
    const auto& s = run.settings();
    Preset p;
    if (!text(s, "params").empty()) p = load_params_file(run, text(s, "params"));
    else if (!text(s, "preset").empty()) p = preset(text(s, "preset"));
    else throw InputError("no model parameters: pass --params <file> or --preset <name>");
    if (!s.at("beta_12").is_null()) p.params.beta_12 = real(s, "beta_12");
    const auto init = reals(s, "init");
    if (!init.empty()) p.init = state_from_list(init, "init");
    if (!p.init && need_init) throw InputError("no initial factors: pass --init R10,R11,R20,R21");
    return {p.params, p.init.value_or(FactorState{})};
}

Curves load_curves(cli::Run& run) {
    const auto& s = run.settings();
    Curves c;
    if (!text(s, "rate_curve").empty()) {
        run.input(text(s, "rate_curve"));
        c.rate = load_curve(text(s, "rate_curve"));
    }
    if (!text(s, "dividend_curve").empty()) {
        run.input(text(s, "dividend_curve"));
        c.dividend = load_curve(text(s, "dividend_curve"));
    }
    return c;
}

Surrogate open_surrogate(cli::Run& run, const std::string& path, unsigned threads) {
    run.input(path);
    Surrogate net = load_surrogate(path);
    net.threads = threads;
    return net;
}

DivergencePolicy parse_policy(const std::string& s) {
    if (s == "error") return DivergencePolicy::error;
    if (s == "drop") return DivergencePolicy::drop;
    throw InputError("on_divergence must be error or drop, got '" + s + "'");
}

std::string gnuplot_quote(const std::string& s) { return "'" + s + "'"; }

// ---------------------------------------------------------------- simulate

Schema simulate_schema() {
    return join({common_options(), model_options(), curve_options(), {
        {"s0", Kind::real, 1.0, "initial spot"},
        {"n_paths", Kind::integer, 100, "paths"},
        {"dt", Kind::real, "1/2520", "time step (years)"},
        {"horizon", Kind::real, 1.0, "horizon (years)"},
        {"record_times", Kind::reals, json::array(), "times to store; empty stores every step"},
        {"antithetic", Kind::boolean, true, "mirror pairs of paths"},
        {"on_divergence", Kind::text, "error", "error or drop"},
        {"format", Kind::text, "csv", "paths file format: csv or binary"},
        {"vix_panel", Kind::boolean, false, "also write a nested-MC VIX panel along one path"},
        {"panel_obs", Kind::integer, 200, "panel observations"},
        {"panel_outer_dt", Kind::real, "1/2520", "panel outer step"},
        {"panel_inner", Kind::integer, 1000, "inner paths per panel point"},
        {"panel_inner_dt", Kind::real, "1/2520", "inner step"},
    }});
}

int cmd_simulate(cli::Run& run) {
    const auto& s = run.settings();
    const auto m = load_model(run);
    SimConfig sc;
    sc.dt = real(s, "dt");
    sc.n_paths = count(s, "n_paths");
    sc.horizon = real(s, "horizon");
    sc.record_times = reals(s, "record_times");
    sc.antithetic = flag(s, "antithetic");
    sc.on_divergence = parse_policy(text(s, "on_divergence"));
    sc.seed = split(make_stream(seed_of(s)), 0).key;
    sc.threads = threads_of(s);
    sc.curves = load_curves(run);
    const PathBundle b = simulate(m.params, m.init, real(s, "s0"), sc);
    const std::string format = text(s, "format");
    if (format == "csv") run.write("paths.csv", io::paths_csv(b));
    else if (format == "binary") run.write("paths.bin", io::paths_binary(b));
    else throw InputError("format must be csv or binary");
    json summary = {{"params", to_json(m.params)}, {"init", to_json(m.init)}, {"n_paths", b.n_paths},
                    {"records", b.n_times()},     {"dt", b.dt},                {"dropped_paths", b.dropped_paths},
                    {"clamp_events", b.clamp_events}};
    if (flag(s, "vix_panel")) {
        PanelConfig pc;
        pc.n_obs = count(s, "panel_obs");
        pc.outer_dt = real(s, "panel_outer_dt");
        pc.t_end = real(s, "horizon");
        pc.init = m.init;
        pc.seed = split(make_stream(seed_of(s)), 1).key;
        pc.nested.n_inner = count(s, "panel_inner");
        pc.nested.inner_dt = real(s, "panel_inner_dt");
        pc.nested.on_divergence = DivergencePolicy::drop;
        pc.nested.threads = threads_of(s);
        const auto panel = vix_panel(m.params, pc);
        run.write("panel.csv", io::panel_csv(panel));
        summary["panel_points"] = panel.size();
    }
    run.write_json("summary.json", summary);
    return exit_code::ok;
}

// ----------------------------------------------------------- build-dataset

Schema sampler_options(const char* sampler, std::size_t n) {
    return {{"n_configs", Kind::integer, n, "parameter configurations"},
            {"sampler", Kind::text, sampler, "uniform (rejection in the box) or realistic (near two market fits)"},
            {"spread", Kind::real, 0.1, "relative spread of the realistic sampler"},
            {"bounds", Kind::path, "", "JSON map name -> [lo, hi] (default: the training box)"}};
}

Schema panel_options(std::size_t obs, std::size_t inner) {
    return {{"panel_obs", Kind::integer, obs, "observations per outer path"},
            {"outer_dt", Kind::real, "1/2520", "outer step"},
            {"n_inner", Kind::integer, inner, "inner paths per nested VIX"},
            {"inner_dt", Kind::real, "1/2520", "inner step"},
            {"panel_init", Kind::reals, json::array({0.0, 0.0, 0.04, 0.04}), "factors at t = 0 of every outer path"},
            {"max_vix", Kind::real, 150.0, "states whose nested VIX exceeds this are left out"}};
}

ParamBounds load_bounds(cli::Run& run) {
    const std::string p = text(run.settings(), "bounds");
    if (p.empty()) return ParamBounds::defaults();
    run.input(p);
    try {
        return bounds_from_json(json::parse(io::read_text(p)));
    } catch (const json::exception& e) {
        throw InputError(p + ": " + e.what());
    }
}

std::vector<ModelParams> sample_configs(cli::Run& run, std::uint64_t seed) {
    const auto& s = run.settings();
    const ParamBounds b = load_bounds(run);
    const std::string sampler = text(s, "sampler");
    if (sampler == "uniform") return sample_param_configs(b, count(s, "n_configs"), seed);
    if (sampler == "realistic") return realistic_configs(count(s, "n_configs"), seed, real(s, "spread"), b);
    throw InputError("sampler must be uniform or realistic, got '" + sampler + "'");
}

PanelConfig panel_config(const json& s) {
    PanelConfig pc;
    pc.n_obs = count(s, "panel_obs");
    pc.outer_dt = real(s, "outer_dt");
    pc.init = state_from_list(reals(s, "panel_init"), "panel_init");
    pc.nested.n_inner = count(s, "n_inner");
    pc.nested.inner_dt = real(s, "inner_dt");
    return pc;
}

Schema build_dataset_schema() {
    return join({common_options(), sampler_options("uniform", 100), panel_options(200, 1000), {
        {"outer_paths", Kind::integer, 1, "outer paths per configuration"},
        {"format", Kind::text, "binary", "binary or csv"},
    }});
}

int cmd_build_dataset(cli::Run& run) {
    const auto& s = run.settings();
    const auto configs = sample_configs(run, split(make_stream(seed_of(s)), 0).key);
    DatasetConfig dc;
    dc.panel = panel_config(s);
    dc.outer_paths = count(s, "outer_paths");
    dc.seed = split(make_stream(seed_of(s)), 1).key;
    dc.threads = threads_of(s);
    dc.max_vix = real(s, "max_vix");
    BuildLog log;
    cli::Stopwatch sw;
    const Dataset ds = build_dataset(configs, dc, &log);
    run.timing("build_seconds", sw.seconds());
    const std::string format = text(s, "format");
    const fs::path tmp = run.out() / ".dataset.tmp";
    if (format == "binary") save_dataset(tmp, ds, DatasetFormat::binary);
    else if (format == "csv") save_dataset(tmp, ds, DatasetFormat::csv);
    else throw InputError("format must be binary or csv");
    const std::string bytes = io::read_text(tmp);
    fs::remove(tmp);
    run.write(format == "binary" ? "dataset.bin" : "dataset.csv", bytes);
    json j = ds.meta;
    j["messages"] = log.messages;
    run.write_json("build_log.json", j);
    std::cout << "dataset: " << log.rows << " rows from " << log.configs << " configurations ("
              << log.dropped_outer_paths << " outer paths dropped, " << log.rows_above_cap << " rows above the cap)\n";
    return exit_code::ok;
}

// --------------------------------------------------------- train-surrogate

Schema train_schema() {
    const TrainConfig d;
    return join({common_options(), {
        {"dataset", Kind::path, "", "dataset file from build-dataset"},
        {"hidden", Kind::text, d.spec.hidden_string(), "hidden layers width:activation,..."},
        {"learning_rate", Kind::real, d.learning_rate, "Adam learning rate"},
        {"lr_decay", Kind::real, d.lr_decay, "learning-rate factor per epoch"},
        {"batch", Kind::integer, d.batch, "mini-batch size"},
        {"max_epochs", Kind::integer, d.max_epochs, "epoch cap"},
        {"patience", Kind::integer, d.patience, "epochs without validation improvement before stopping"},
        {"val_fraction", Kind::real, d.val_fraction, "share of configurations held out"},
        {"standardize_target", Kind::boolean, d.standardize_target, "train on a standardized target"},
        {"time_limit", Kind::real, 0.0, "wall-clock cap in seconds (0: none); hitting it exits with code 4"},
    }});
}

int cmd_train(cli::Run& run) {
    const auto& s = run.settings();
    const std::string path = require_path(s, "dataset", "build one with `pdv build-dataset`");
    run.input(path);
    const Dataset ds = load_dataset(path);
    TrainConfig tc;
    tc.spec = MlpSpec::parse_hidden(text(s, "hidden"));
    tc.learning_rate = real(s, "learning_rate");
    tc.lr_decay = real(s, "lr_decay");
    tc.batch = count(s, "batch");
    tc.max_epochs = count(s, "max_epochs");
    tc.patience = count(s, "patience");
    tc.val_fraction = real(s, "val_fraction");
    tc.standardize_target = flag(s, "standardize_target");
    tc.time_limit = real(s, "time_limit");
    tc.seed = seed_of(s);
    cli::Stopwatch sw;
    const TrainResult r = train(ds, tc, [](const EpochReport& e) {
        if (e.epoch % 10 == 0) {
            std::cout << "epoch " << e.epoch << " train " << e.train_rmse << " val " << e.val_rmse << "\n";
        }
    });
    run.timing("train_seconds", sw.seconds());
    std::string lines;
    json secs = json::array();
    for (const auto& e : r.report.epochs) {
        json j = to_json(e);
        secs.push_back(j["seconds"]);
        j.erase("seconds");
        lines += j.dump() + "\n";
    }
    run.timing("epoch_seconds", secs);
    run.write("training.jsonl", lines);
    run.write("surrogate.pdvnn", serialize_surrogate(r.surrogate));
    run.write_json("train_report.json", {{"best_epoch", r.report.best_epoch},
                                         {"best_val_rmse", r.report.best_val_rmse},
                                         {"train_rows", r.report.n_train_rows},
                                         {"val_rows", r.report.n_val_rows},
                                         {"train_configs", r.report.n_train_groups},
                                         {"val_configs", r.report.n_val_groups},
                                         {"stop_reason", r.report.stop_reason}});
    std::cout << "best validation RMSE " << r.report.best_val_rmse << " at epoch " << r.report.best_epoch << " ("
              << r.report.stop_reason << ")\n";
    return r.report.stop_reason == "time limit" ? exit_code::budget_exhausted : exit_code::ok;
}

// ---------------------------------------------------------- eval-surrogate

Schema eval_schema() {
    return join({common_options(), sampler_options("realistic", 20), panel_options(25, 500), {
        {"surrogate", Kind::path, "", "network file from train-surrogate"},
        {"threshold", Kind::real, 0.55, "report the share of configurations below this mean error"},
        {"bins", Kind::integer, 20, "histogram bins"},
    }});
}

int cmd_eval(cli::Run& run) {
    const auto& s = run.settings();
    const Surrogate net = open_surrogate(run, require_path(s, "surrogate", "train one with `pdv train-surrogate`"),
                                         1);
    const auto configs = sample_configs(run, split(make_stream(seed_of(s)), 0).key);
    EvalConfig ec;
    ec.panel = panel_config(s);
    ec.seed = split(make_stream(seed_of(s)), 1).key;
    ec.threads = threads_of(s);
    ec.threshold = real(s, "threshold");
    ec.bins = count(s, "bins");
    ec.max_vix = real(s, "max_vix");
    const EvalReport rep = evaluate_surrogate(net, configs, ec);
    json j = rep.to_json();
    json cj = json::array();
    for (const auto& p : configs) cj.push_back(to_json(p));
    j["configs"] = cj;
    run.write_json("eval.json", j);
    std::string csv = "config";
    for (auto n : param_names) csv += "," + std::string(n);
    csv += ",mae,mean_nested_vix\n";
    for (std::size_t i = 0; i < configs.size(); ++i) {
        csv += std::to_string(i);
        for (double v : configs[i].to_array()) csv += "," + io::fmt(v);
        csv += "," + (std::isnan(rep.mae[i]) ? std::string() : io::fmt(rep.mae[i]));
        csv += "," + (std::isnan(rep.mean_nested[i]) ? std::string() : io::fmt(rep.mean_nested[i])) + "\n";
    }
    run.write("eval_mae.csv", csv);
    std::cout << "mean |surrogate - nested| = " << rep.mean_mae << " points over " << configs.size() - rep.failed
              << " configurations (" << rep.failed << " failed)\n";
    return exit_code::ok;
}

// ------------------------------------------------------------------- price

Schema price_schema() {
    return join({common_options(), model_options(), curve_options(), {
        {"s0", Kind::real, 1.0, "spot"},
        {"spx_days", Kind::integers, json::array({30, 90}), "SPX maturities in days"},
        {"spx_moneyness", Kind::reals, grid(0.8, 1.2, 0.05), "SPX strikes over spot"},
        {"vix_days", Kind::integers, json::array(), "VIX maturities in days"},
        {"vix_moneyness", Kind::reals, json::array({0.9, 1.0, 1.1, 1.2, 1.3, 1.5, 1.7}), "VIX strikes over the model future"},
        {"surrogate", Kind::path, "", "VIX network; empty uses nested Monte Carlo"},
        {"n_inner", Kind::integer, 1000, "inner paths when the VIX is nested"},
        {"inner_dt", Kind::real, "1/2520", "inner step"},
        {"n_paths", Kind::integer, 100000, "paths"},
        {"dt", Kind::real, "1/504", "largest time step"},
    }});
}

template <VixModel Model>
void price_vix(cli::Run& run, const ModelInput& m, const PathBundle& paths, const Curves& c, const Model& model) {
    const auto& s = run.settings();
    std::string csv = "T,K,kind,price,stderr,iv\n", fut = "T,future,stderr\n";
    for (int d : ints(s, "vix_days")) {
        const double t = years_from_days(d);
        const std::vector<double> ts{t};
        const std::vector<std::vector<double>> none{{}};
        const auto f = price_vix_derivatives(m.params, model, paths, ts, none, c.rate);
        std::vector<std::vector<double>> ks(1);
        for (double k : reals(s, "vix_moneyness")) ks[0].push_back(k * f.slices[0].future);
        const auto r = price_vix_derivatives(m.params, model, paths, ts, ks, c.rate);
        const auto& sl = r.slices[0];
        fut += io::fmt(t) + "," + io::fmt(sl.future) + "," + io::fmt(sl.future_stderr) + "\n";
        for (std::size_t i = 0; i < sl.strikes.size(); ++i) {
            csv += io::fmt(t) + "," + io::fmt(sl.strikes[i]) + ",call," + io::fmt(sl.calls[i]) + "," +
                   io::fmt(sl.call_stderr[i]) + "," + (std::isnan(sl.ivs[i]) ? std::string() : io::fmt(sl.ivs[i])) +
                   "\n";
        }
        if (r.extrapolated) run.note("vix_extrapolated", true);
    }
    run.write("vix_prices.csv", csv);
    run.write("vix_futures.csv", fut);
}

int cmd_price(cli::Run& run) {
    const auto& s = run.settings();
    const auto m = load_model(run);
    const Curves c = load_curves(run);
    const double s0 = real(s, "s0");
    std::vector<int> days = ints(s, "spx_days");
    const auto vdays = ints(s, "vix_days");
    days.insert(days.end(), vdays.begin(), vdays.end());
    if (days.empty()) throw InputError("nothing to price: give --spx_days and/or --vix_days");
    SimConfig sc;
    sc.dt = aligned_step(days, real(s, "dt"));
    sc.n_paths = count(s, "n_paths");
    sc.seed = seed_of(s);
    sc.threads = threads_of(s);
    sc.curves = c;
    sc.record_times = record_times_for(days);
    sc.horizon = sc.record_times.back();
    sc.on_divergence = DivergencePolicy::drop;
    const PathBundle paths = simulate(m.params, m.init, s0, sc);
    std::vector<OptionSpec> specs;
    for (int d : ints(s, "spx_days")) {
        const double t = years_from_days(d);
        for (double k : reals(s, "spx_moneyness")) specs.push_back({t, k * s0, otm_kind(c.forward(s0, t), k * s0)});
    }
    auto priced = price_spx_options(paths, specs, c.rate, sc.threads);
    attach_implied_vols(priced, s0, c);
    run.write("spx_prices.csv", io::prices_csv(priced));
    if (!vdays.empty()) {
        if (text(s, "surrogate").empty()) {
            NestedVixConfig nc;
            nc.n_inner = count(s, "n_inner");
            nc.inner_dt = real(s, "inner_dt");
            nc.seed = split(make_stream(seed_of(s)), 1).key;
            nc.on_divergence = DivergencePolicy::drop;
            price_vix(run, m, paths, c, NestedMcVix{nc, sc.threads});
        } else {
            price_vix(run, m, paths, c, open_surrogate(run, text(s, "surrogate"), sc.threads));
        }
    }
    run.write_json("summary.json", {{"params", to_json(m.params)}, {"init", to_json(m.init)}, {"dt", sc.dt},
                                    {"dropped_paths", paths.dropped_paths}});
    return exit_code::ok;
}

// ------------------------------------------------------------ synth-market

Schema synth_schema() {
    return join({common_options(), model_options(), curve_options(), {
        {"s0", Kind::real, 1.0, "spot"},
        {"date", Kind::text, "2000-01-01", "quote date written to the chains"},
        {"spx_days", Kind::integers, json::array({30, 90}), "SPX maturities in days"},
        {"spx_moneyness", Kind::reals, grid(0.8, 1.2, 0.04), "SPX strikes over spot"},
        {"vix_days", Kind::integers, json::array({30}), "VIX maturities in days"},
        {"vix_moneyness", Kind::reals, json::array({0.9, 1.0, 1.1, 1.2, 1.3, 1.5, 1.7}), "VIX strikes over the model future"},
        {"surrogate", Kind::path, "", "VIX network; empty uses nested Monte Carlo"},
        {"n_inner", Kind::integer, 1000, "inner paths when the VIX is nested"},
        {"inner_dt", Kind::real, "1/2520", "inner step"},
        {"n_paths", Kind::integer, 50000, "paths"},
        {"dt", Kind::real, "1/504", "largest time step"},
    }});
}

int cmd_synth(cli::Run& run) {
    const auto& s = run.settings();
    const auto m = load_model(run);
    SynthGrid g{ints(s, "spx_days"), reals(s, "spx_moneyness"), ints(s, "vix_days"), reals(s, "vix_moneyness")};
    SynthConfig sc;
    sc.n_paths = count(s, "n_paths");
    sc.dt = real(s, "dt");
    sc.seed = seed_of(s);
    sc.threads = threads_of(s);
    sc.s0 = real(s, "s0");
    sc.curves = load_curves(run);
    sc.date = text(s, "date");
    SyntheticMarket mk;
    if (text(s, "surrogate").empty()) {
        NestedVixConfig nc;
        nc.n_inner = count(s, "n_inner");
        nc.inner_dt = real(s, "inner_dt");
        nc.seed = split(make_stream(seed_of(s)), 1).key;
        nc.on_divergence = DivergencePolicy::drop;
        const NestedMcVix model{nc, sc.threads};
        mk = synth_market(m.params, m.init, g, sc, &model);
    } else {
        const Surrogate net = open_surrogate(run, text(s, "surrogate"), sc.threads);
        mk = synth_market(m.params, m.init, g, sc, &net);
    }
    run.write("spx_chain.csv", format_spx_chain(mk.spx));
    if (!g.vix_days.empty()) run.write("vix_chain.csv", format_vix_chain(mk.vix));
    json warnings = mk.spx.warnings;
    for (const auto& w : mk.vix.warnings) warnings.push_back(w);
    run.write_json("truth.json", {{"params", to_json(m.params)},
                                  {"init", to_json(m.init)},
                                  {"dt", mk.dt},
                                  {"dropped_paths", mk.dropped_paths},
                                  {"warnings", warnings}});
    return exit_code::ok;
}

// -------------------------------------------------------------- calibrate

CalibConfig calibration_config(cli::Run& run, CalibrationTarget target) {
    const auto& s = run.settings();
    CalibConfig cfg;
    cfg.target = target;
    cfg.n_paths = count(s, "n_paths");
    cfg.dt = real(s, "dt");
    cfg.seed = seed_of(s);
    cfg.threads = threads_of(s);
    cfg.weights = {real(s, "w_spx"), real(s, "w_vix"), real(s, "w_future")};
    cfg.bounds = load_bounds(run);
    cfg.restarts = count(s, "restarts");
    cfg.optimizer = parse_optimizer(text(s, "optimizer"));
    cfg.opt.rho_begin = real(s, "rho_begin");
    cfg.opt.rho_end = real(s, "rho_end");
    cfg.opt.max_evals = count(s, "max_evals");
    cfg.s0 = real(s, "s0");
    cfg.curves = load_curves(run);
    if (!text(s, "start").empty()) cfg.start = load_params_file(run, text(s, "start")).params;
    else if (!text(s, "start_preset").empty()) cfg.start = preset(text(s, "start_preset")).params;
    const auto init = reals(s, "init");
    if (!init.empty()) {
        cfg.init.state = state_from_list(init, "init");
    } else if (!text(s, "returns").empty()) {
        run.input(text(s, "returns"));
        cfg.init.returns = load_returns(text(s, "returns")).returns;
        cfg.init.history.cutoff_days = count(s, "cutoff_days");
        cfg.init.history.convention = flag(s, "log_returns") ? ReturnConvention::log : ReturnConvention::simple;
    } else {
        throw InputError("initial factors: pass --returns <csv> or --init R10,R11,R20,R21");
    }
    return cfg;
}

std::string spx_fit_csv(const Evaluation& ev) {
    std::string out = "T_days,K,kind,market_iv,model_iv,model_price,score,dropped\n";
    for (const auto& c : ev.spx.cells) {
        out += std::to_string(c.days) + "," + io::fmt(c.strike) + "," + to_string(c.kind) + "," + io::fmt(c.market_iv) +
               "," + (std::isfinite(c.model_iv) ? io::fmt(c.model_iv) : "") + "," + io::fmt(c.model_price) + "," +
               (c.dropped ? "" : io::fmt(c.score)) + "," + (c.dropped ? "1" : "0") + "\n";
    }
    return out;
}

std::string vix_fit_csv(const Evaluation& ev) {
    std::string out = "T_days,K,market_price,model_price,market_iv,model_iv,gamma,score\n";
    if (!ev.vix) return out;
    for (const auto& f : ev.vix->futures) {
        out += std::to_string(f.days) + ",future," + io::fmt(f.market) + "," + io::fmt(f.model) + ",,,," +
               io::fmt(f.score) + "\n";
    }
    for (const auto& c : ev.vix->cells) {
        out += std::to_string(c.days) + "," + io::fmt(c.strike) + "," + io::fmt(c.market_price) + "," +
               io::fmt(c.model_price) + "," + (std::isfinite(c.market_iv) ? io::fmt(c.market_iv) : "") + "," +
               (std::isfinite(c.model_iv) ? io::fmt(c.model_iv) : "") + "," + io::fmt(c.gamma) + "," +
               io::fmt(c.score) + "\n";
    }
    return out;
}

template <VixModel Model>
int finish_calibration(cli::Run& run, const CalibrationProblem<Model>& problem, const CalibrationResult& r,
                       const std::string& prefix = "") {
    run.write_json(prefix + "calibration.json", calibration_report(problem, r));
    run.write_json(prefix + "params.json", {{"params", to_json(r.params)}, {"init", to_json(r.init)}});
    run.write(prefix + "spx_fit.csv", spx_fit_csv(r.best));
    if (r.best.vix) run.write(prefix + "vix_fit.csv", vix_fit_csv(r.best));
    std::string trace = "restart,eval,f,best\n";
    for (std::size_t i = 0; i < r.traces.size(); ++i) {
        for (const auto& t : r.traces[i]) {
            trace += std::to_string(i) + "," + std::to_string(t.eval) + "," + io::fmt(t.f) + "," + io::fmt(t.best) + "\n";
        }
    }
    run.write(prefix + "trace.csv", trace);
    json secs = json::array();
    for (const auto& rs : r.restarts) secs.push_back(rs.seconds);
    run.timing(prefix + "restart_seconds", secs);
    run.timing(prefix + "calibration_seconds", r.seconds);
    std::cout << (prefix.empty() ? std::string() : prefix.substr(0, prefix.size() - 1) + ": ") << "loss " << r.best.total << " after " << r.restarts.size() << " start(s)"
              << (r.budget_exhausted ? " (budget exhausted)" : "") << "\n";
    return r.budget_exhausted ? exit_code::budget_exhausted : exit_code::ok;
}

Schema calibrate_spx_schema() {
    return join({common_options(), calibration_options(), {
        {"spx_chain", Kind::path, "", "SPX chain CSV (date,T_days,K,kind,bid_iv,ask_iv,mid_iv)"},
    }});
}

Schema calibrate_joint_schema() {
    return join({calibrate_spx_schema(), {
        {"vix_chain", Kind::path, "", "VIX chain CSV (date,T_days,future,K,bid,ask,mid)"},
        {"surrogate", Kind::path, "", "VIX network from train-surrogate"},
    }});
}

int cmd_calibrate_spx(cli::Run& run) {
    const auto& s = run.settings();
    const std::string chain = require_path(s, "spx_chain", "SPX quotes are required");
    CalibConfig cfg = calibration_config(run, CalibrationTarget::spx_only);
    run.input(chain);
    const CalibrationProblem<> problem(load_spx_chain(chain, cfg.curves, cfg.s0), std::nullopt, cfg);
    return finish_calibration(run, problem, calibrate(problem));
}

int cmd_calibrate_joint(cli::Run& run) {
    const auto& s = run.settings();
    const std::string chain = require_path(s, "spx_chain", "SPX quotes are required");
    const std::string vchain = require_path(s, "vix_chain", "VIX quotes are required for joint calibration");
    const std::string net_path =
        require_path(s, "surrogate", "joint calibration prices the VIX with a trained network; "
                                     "build one with `pdv build-dataset` then `pdv train-surrogate`");
    CalibConfig cfg = calibration_config(run, CalibrationTarget::joint);
    run.input(chain);
    run.input(vchain);
    const Surrogate net = open_surrogate(run, net_path, cfg.threads);
    const CalibrationProblem<Surrogate> problem(load_spx_chain(chain, cfg.curves, cfg.s0),
                                                load_vix_chain(vchain, cfg.curves), cfg, &net);
    return finish_calibration(run, problem, calibrate(problem));
}

// --------------------------------------------------------------- stability

Schema stability_schema() {
    return join({common_options(), calibration_options(), {
        {"spx_chains", Kind::paths, json::array(), "SPX chain CSVs, one per date, in date order"},
        {"returns_files", Kind::paths, json::array(), "return histories aligned with the chains (optional)"},
        {"warm_start", Kind::boolean, true, "start each date from the previous date's fit"},
        {"first_restarts", Kind::integer, 0, "starts for a date without a warm start (0: --restarts)"},
        {"warm_rho_begin", Kind::real, 0.02, "initial step of a warm-started refit"},
        {"kernel_points", Kind::integer, 201, "points of the kernel curves"},
        {"kernel_t_max", Kind::real, 0.5, "kernel curve range (years)"},
    }});
}

int cmd_stability(cli::Run& run) {
    const auto& s = run.settings();
    const auto chains = paths(s, "spx_chains");
    const auto rets = paths(s, "returns_files");
    if (chains.size() < 2) throw InputError("stability needs at least two --spx_chains");
    if (!rets.empty() && rets.size() != chains.size()) {
        throw InputError("--returns_files must list one file per chain");
    }
    std::vector<DatedCalibration> days;
    std::optional<ModelParams> previous;
    int status = exit_code::ok;
    for (std::size_t i = 0; i < chains.size(); ++i) {
        DatedCalibration d;
        d.date = chains[i];
        try {
            CalibConfig cfg = calibration_config(run, CalibrationTarget::spx_only);
            if (!rets.empty()) {
                run.input(rets[i]);
                cfg.init.state.reset();
                cfg.init.returns = load_returns(rets[i]).returns;
            }
            if (flag(s, "warm_start") && previous) {
                cfg.start = *previous;
                cfg.opt.rho_begin = real(s, "warm_rho_begin");
            } else if (count(s, "first_restarts") > 0) {
                cfg.restarts = count(s, "first_restarts");
            }
            run.input(chains[i]);
            const CalibrationProblem<> problem(load_spx_chain(chains[i], cfg.curves, cfg.s0), std::nullopt, cfg);
            d.date = problem.spx().date;
            const CalibrationResult r = calibrate(problem);
            const int st = finish_calibration(run, problem, r, d.date + "_");
            if (st != exit_code::ok) status = st;
            d.params = r.params;
            d.init = r.init;
            d.spot = cfg.s0;
            d.cells = r.best.spx.cells;
            d.loss = r.best.total;
            previous = r.params;
        } catch (const Error& e) {
            d.failed = true;
            d.failure = e.what();
            std::cerr << "date " << d.date << " failed: " << e.what() << "\n";
        }
        days.push_back(std::move(d));
    }
    const StabilityReport rep = stability_report(days, {count(s, "kernel_points"), real(s, "kernel_t_max")});
    run.write("stability_params.csv", stability_params_csv(rep));
    run.write("stability_kernels.csv", stability_kernels_csv(rep));
    run.write("stability_mae.csv", stability_mae_csv(rep));
    json j = to_json(rep);
    for (std::size_t i = 0; i < days.size(); ++i) {
        if (days[i].failed) j["rows"][i]["failure"] = days[i].failure;
    }
    run.write_json("stability.json", j);
    std::string gp = "set datafile separator ','\nset key outside\nset xlabel 't (years)'\n"
                     "set multiplot layout 1,2\nset title 'K1'\nplot ";
    std::string gp2 = "set title 'K2'\nplot ";
    bool first = true;
    for (const auto& row : rep.rows) {
        if (row.failed) continue;
        gp += std::string(first ? "" : ", ") + "'stability_kernels.csv' using 2:(strcol(1) eq '" + row.date +
              "' ? $3 : 1/0) with lines title " + gnuplot_quote(row.date);
        gp2 += std::string(first ? "" : ", ") + "'stability_kernels.csv' using 2:(strcol(1) eq '" + row.date +
               "' ? $4 : 1/0) with lines title " + gnuplot_quote(row.date);
        first = false;
    }
    run.write("stability_kernels.gp", gp + "\n" + gp2 + "\nunset multiplot\n");
    std::cout << "stability: " << rep.rows.size() - rep.failed << " of " << rep.rows.size()
              << " dates calibrated, max beta drift " << rep.max_beta_drift << "\n";
    if (rep.failed == rep.rows.size()) return exit_code::numerical;
    return status;
}

// ------------------------------------------------------------- beta12-scan

Schema beta12_scan_schema() {
    const Beta12ScanConfig d;
    return join({common_options(), model_options("beta12_study"), {
        {"beta12", Kind::reals, d.beta12, "beta_12 values"},
        {"days", Kind::integer, d.days, "maturity in days"},
        {"moneyness", Kind::reals, grid(0.8, 1.2, 0.01), "SPX strikes over spot"},
        {"n_paths", Kind::integer, d.n_paths, "SPX paths"},
        {"dt", Kind::real, "1/2520", "time step"},
        {"density_bins", Kind::integer, d.density_bins, "histogram bins of log(S_T/S0)"},
        {"density_halfwidth", Kind::real, d.density_halfwidth, "histogram range [-h, h]"},
        {"vix_outer", Kind::integer, d.vix_outer, "outer paths for the VIX"},
        {"vix_inner", Kind::integer, d.vix_nested.n_inner, "inner paths per nested VIX"},
        {"vix_inner_dt", Kind::real, "1/2520", "inner step"},
        {"vix_moneyness", Kind::reals, d.vix_moneyness, "VIX strikes over the model future"},
    }});
}

int cmd_beta12_scan(cli::Run& run) {
    const auto& s = run.settings();
    const auto m = load_model(run);
    Beta12ScanConfig cfg;
    cfg.beta12 = reals(s, "beta12");
    cfg.days = static_cast<int>(count(s, "days"));
    cfg.moneyness = reals(s, "moneyness");
    cfg.n_paths = count(s, "n_paths");
    cfg.dt = real(s, "dt");
    cfg.density_bins = count(s, "density_bins");
    cfg.density_halfwidth = real(s, "density_halfwidth");
    cfg.vix_outer = count(s, "vix_outer");
    cfg.vix_nested.n_inner = count(s, "vix_inner");
    cfg.vix_nested.inner_dt = real(s, "vix_inner_dt");
    cfg.vix_nested.seed = split(make_stream(seed_of(s)), 2).key;
    cfg.vix_moneyness = reals(s, "vix_moneyness");
    cfg.seed = seed_of(s);
    cfg.threads = threads_of(s);
    const auto cases = beta12_scan(m.params, m.init, cfg);

    std::string smile = "beta12,moneyness,kind,price,stderr,iv,iv_stderr\n";
    std::string dens = "beta12,x_lo,x_hi,density\n";
    std::string vix = "beta12,future,future_stderr,moneyness,K,call,iv\n";
    json summary = json::array();
    for (const auto& c : cases) {
        for (const auto& p : c.smile) {
            smile += io::fmt(c.beta12) + "," + io::fmt(p.moneyness) + "," + to_string(p.kind) + "," + io::fmt(p.price) +
                     "," + io::fmt(p.stderr_) + "," + (std::isnan(p.iv) ? "" : io::fmt(p.iv)) + "," +
                     (std::isnan(p.iv_stderr) ? "" : io::fmt(p.iv_stderr)) + "\n";
        }
        const double n = static_cast<double>(cfg.n_paths - c.dropped_paths);
        for (std::size_t b = 0; b < c.density.counts.size(); ++b) {
            const double w = c.density.edges[b + 1] - c.density.edges[b];
            dens += io::fmt(c.beta12) + "," + io::fmt(c.density.edges[b]) + "," + io::fmt(c.density.edges[b + 1]) + "," +
                    io::fmt(static_cast<double>(c.density.counts[b]) / (n * w)) + "\n";
        }
        for (std::size_t i = 0; i < c.vix_strikes.size(); ++i) {
            vix += io::fmt(c.beta12) + "," + io::fmt(c.vix_future) + "," + io::fmt(c.vix_future_stderr) + "," +
                   io::fmt(cfg.vix_moneyness[i]) + "," + io::fmt(c.vix_strikes[i]) + "," + io::fmt(c.vix_calls[i]) +
                   "," + (std::isnan(c.vix_ivs[i]) ? "" : io::fmt(c.vix_ivs[i])) + "\n";
        }
        summary.push_back({{"beta12", c.beta12},
                           {"dropped_paths", c.dropped_paths},
                           {"vix_future", c.vix_future},
                           {"vix_future_stderr", c.vix_future_stderr},
                           {"vix_dropped_outer", c.vix_dropped_outer}});
    }
    run.write("beta12_smile.csv", smile);
    run.write("beta12_density.csv", dens);
    run.write("beta12_vix.csv", vix);
    run.write_json("beta12_summary.json", {{"params", to_json(m.params)}, {"init", to_json(m.init)}, {"cases", summary}});

    std::string gp = "set datafile separator ','\nset key top center\nset multiplot layout 1,3\n";
    auto plot = [&](const std::string& file, int x, int y) {
        std::string out = "plot ";
        for (std::size_t i = 0; i < cases.size(); ++i) {
            const std::string b = io::fmt(cases[i].beta12);
            out += std::string(i ? ", " : "") + gnuplot_quote(file) + " using " + std::to_string(x) +
                   ":(abs($1 - " + b + ") < 1e-12 ? $" + std::to_string(y) + " : 1/0) with lines title 'beta12=" + b +
                   "'";
        }
        return out + "\n";
    };
    gp += "set title 'SPX implied vol, " + std::to_string(cfg.days) + " days'\nset xlabel 'K/S0'\n" +
          plot("beta12_smile.csv", 2, 6);
    gp += "set title 'density of log(S_T/S0)'\nset xlabel 'log(S_T/S0)'\n" + plot("beta12_density.csv", 2, 4);
    gp += "set title 'VIX implied vol'\nset xlabel 'K'\n" + plot("beta12_vix.csv", 5, 7);
    gp += "unset multiplot\n";
    run.write("beta12_scan.gp", gp);
    for (const auto& c : cases) {
        std::cout << "beta12 " << c.beta12 << ": VIX future " << c.vix_future << " +- " << c.vix_future_stderr << "\n";
    }
    return exit_code::ok;
}

// ---------------------------------------------------------------- dispatch

struct Command {
    std::string name;
    std::string help;
    Schema schema;
    std::function<int(cli::Run&)> run;
};

const std::vector<Command>& commands() {
    static const std::vector<Command> c{
        {"simulate", "simulate paths (and optionally a nested VIX panel)", simulate_schema(), cmd_simulate},
        {"build-dataset", "sample parameters and build the (Theta, R, VIX) training set", build_dataset_schema(),
         cmd_build_dataset},
        {"train-surrogate", "train the VIX network", train_schema(), cmd_train},
        {"eval-surrogate", "compare the network with fresh nested Monte Carlo", eval_schema(), cmd_eval},
        {"price", "price SPX options and VIX futures/options", price_schema(), cmd_price},
        {"synth-market", "write model-generated SPX and VIX chains", synth_schema(), cmd_synth},
        {"calibrate-spx", "calibrate to an SPX smile surface", calibrate_spx_schema(), cmd_calibrate_spx},
        {"calibrate-joint", "calibrate jointly to SPX and VIX quotes", calibrate_joint_schema(), cmd_calibrate_joint},
        {"stability", "calibrate a sequence of dates and report parameter stability", stability_schema(),
         cmd_stability},
        {"beta12-scan", "impact of beta_12 on the SPX smile, density and VIX", beta12_scan_schema(), cmd_beta12_scan},
    };
    return c;
}

const Command& find_command(const std::string& name) {
    for (const auto& c : commands()) {
        if (c.name == name) return c;
    }
    throw InputError("unknown command '" + name + "'");
}

int execute(const Command& cmd, const json& settings) {
    cli::Run run(cmd.name, settings, text(settings, "out"));
    int status = exit_code::ok;
    std::string error;
    try {
        status = cmd.run(run);
    } catch (const Error& e) {
        status = e.exit_code();
        error = e.what();
    } catch (const json::exception& e) {
        status = exit_code::input;
        error = std::string("bad setting: ") + e.what();
    }
    if (!error.empty()) run.note("error", error);
    run.finish(status);
    if (!error.empty()) std::cerr << "error: " << error << "\n";
    return status;
}

// Reruns a manifest into a fresh directory and compares the output hashes.
int replay(const std::string& manifest_path, const std::string& out, const std::optional<unsigned>& threads) {
    json m;
    try {
        m = json::parse(io::read_text(manifest_path));
    } catch (const json::exception& e) {
        throw InputError(manifest_path + ": " + e.what());
    }
    const Command& cmd = find_command(m.at("command").get<std::string>());
    json settings = m.at("settings");
    for (const auto& [path, hash] : m.at("inputs").items()) {
        if (!fs::exists(path)) throw InputError("replay: input " + path + " no longer exists");
        if (cli::hash_file(path) != hash.get<std::string>()) throw InputError("replay: input " + path + " has changed");
    }
    const fs::path dir = out.empty() ? fs::path(manifest_path).parent_path() / "replay" : fs::path(out);
    settings["out"] = fs::absolute(dir).lexically_normal().string();
    if (threads) settings["threads"] = *threads;
    const int status = execute(cmd, settings);
    const json again = json::parse(io::read_text(dir / "manifest.json"));
    json diff = json::array();
    const auto& want = m.at("outputs");
    const auto& got = again.at("outputs");
    for (const auto& [name, hash] : want.items()) {
        if (!got.contains(name) || got.at(name) != hash) diff.push_back(name);
    }
    for (const auto& [name, _] : got.items()) {
        if (!want.contains(name)) diff.push_back(name);
    }
    const bool same_status = status == m.at("status").get<int>();
    io::write_text(dir / "replay.json", json{{"manifest", manifest_path},
                                             {"identical", diff.empty() && same_status},
                                             {"mismatched", diff},
                                             {"status", status},
                                             {"original_status", m.at("status")}}
                                                .dump(2) +
                                            "\n");
    if (diff.empty() && same_status) {
        std::cout << "replay: " << want.size() << " outputs identical\n";
        return exit_code::ok;
    }
    std::cerr << "replay: outputs differ: " << diff.dump() << "\n";
    return exit_code::replay_mismatch;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"pdv: four-factor path-dependent volatility toolkit"};
    app.require_subcommand(1);
    std::map<std::string, std::map<std::string, std::string>> values;
    std::map<std::string, std::string> config_files;
    std::map<std::string, CLI::App*> subs;
    for (const auto& c : commands()) {
        CLI::App* sub = app.add_subcommand(c.name, c.help);
        sub->add_option("--config", config_files[c.name], "JSON file with settings; flags override it");
        for (const auto& o : c.schema) {
            std::string help = o.help;
            if (!o.def.is_null() && !(o.def.is_string() && o.def.get<std::string>().empty()) &&
                !(o.def.is_array() && o.def.empty())) {
                help += " [" + (o.def.is_string() ? o.def.get<std::string>() : o.def.dump()) + "]";
            }
            sub->add_option("--" + o.name, values[c.name][o.name], help);
        }
        subs[c.name] = sub;
    }
    std::string manifest, replay_out;
    unsigned replay_threads = 0;
    CLI::App* rp = app.add_subcommand("replay", "rerun a manifest and check the outputs are bit-identical");
    rp->add_option("manifest", manifest, "manifest.json of an earlier run")->required();
    rp->add_option("--out", replay_out, "directory for the rerun (default: <manifest dir>/replay)");
    auto* rt = rp->add_option("--threads", replay_threads, "thread count for the rerun (default: as recorded)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? exit_code::ok : exit_code::input;
    }

    try {
        if (rp->parsed()) {
            std::optional<unsigned> t;
            if (rt->count() > 0) t = replay_threads;
            return replay(manifest, replay_out, t);
        }
        for (const auto& c : commands()) {
            CLI::App* sub = subs[c.name];
            if (!sub->parsed()) continue;
            std::map<std::string, std::string> flags;
            for (const auto& o : c.schema) {
                if (sub->get_option("--" + o.name)->count() > 0) flags[o.name] = values[c.name][o.name];
            }
            json config;
            const std::string& cf = config_files[c.name];
            if (!cf.empty()) {
                try {
                    config = json::parse(io::read_text(cf));
                } catch (const json::exception& e) {
                    throw InputError(cf + ": " + e.what());
                }
            }
            const json settings = cli::resolve_settings(c.schema, config, flags, cf.empty() ? "config" : cf);
            return execute(c, settings);
        }
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return e.exit_code();
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return exit_code::unexpected;
    }
    return exit_code::unexpected;
}
