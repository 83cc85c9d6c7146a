#pragma once

// Calibration to SPX options alone or jointly to SPX options and VIX
// futures/options. Every objective evaluation simulates with the same seed,
// so the objective is a deterministic function of the parameters. The
// optimizer works on the free parameters mapped affinely to [0, 1].

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "pdv/calibration/factors.hpp"
#include "pdv/calibration/loss.hpp"
#include "pdv/calibration/optimizer.hpp"
#include "pdv/error.hpp"
#include "pdv/kernels/rng.hpp"
#include "pdv/market/chains.hpp"
#include "pdv/market/synth.hpp"
#include "pdv/mc/simulate.hpp"
#include "pdv/model/params.hpp"
#include "pdv/pricing/spx.hpp"
#include "pdv/pricing/vix.hpp"

namespace pdv {

enum class CalibrationTarget { spx_only, joint };
enum class OptimizerKind { trust_region, nelder_mead };

inline const char* to_string(CalibrationTarget t) { return t == CalibrationTarget::joint ? "joint" : "spx_only"; }
inline const char* to_string(OptimizerKind k) { return k == OptimizerKind::nelder_mead ? "nelder_mead" : "trust_region"; }

inline OptimizerKind parse_optimizer(const std::string& s) {
    if (s == "trust_region") return OptimizerKind::trust_region;
    if (s == "nelder_mead") return OptimizerKind::nelder_mead;
    throw InputError("unknown optimizer '" + s + "' (expected trust_region or nelder_mead)");
}

// Factor values at t = 0: either fixed, or recomputed from the return history
// for every trial parameter set (the rates change the weighting).
struct FactorInit {
    std::optional<FactorState> state;
    std::vector<double> returns;  // oldest first
    HistoryInit history;

    FactorState resolve(const ModelParams& p, std::vector<std::string>* warnings = nullptr) const {
        if (state) return *state;
        if (returns.empty()) throw InputError("calibration needs initial factors or a return history");
        return init_factors_from_history(p, returns, history, warnings);
    }
};

struct CalibConfig {
    CalibrationTarget target = CalibrationTarget::spx_only;
    std::size_t n_paths = 200000;
    double dt = 1.0 / 504.0;
    std::uint64_t seed = 1;
    unsigned threads = 1;
    LossWeights weights;
    ParamBounds bounds = ParamBounds::defaults();
    std::size_t restarts = 3;
    std::optional<ModelParams> start;  // first start; the others are drawn in the box
    OptimizerKind optimizer = OptimizerKind::trust_region;
    OptimizerOptions opt{0.1, 1e-3, 500, 0.0};
    double s0 = 1.0;
    Curves curves;
    FactorInit init;
    VixPricingOptions vix_pricing;

    void validate() const {
        if (n_paths < 2 || n_paths % 2 != 0) throw InputError("calibration: n_paths must be even and >= 2");
        if (!(dt > 0.0)) throw InputError("calibration: dt must be positive");
        if (restarts < 1) throw InputError("calibration: need at least one start");
        bounds.validate();
        weights.validate();
        if (start && !bounds.contains(*start)) throw InputError("calibration: start point outside the bounds");
    }
};

// Loss assigned when no path survives the simulation or a price is not finite.
inline constexpr double failed_evaluation_loss = 1e3;

struct Evaluation {
    ModelParams params;
    FactorState init;
    double total = 0.0;
    SpxLoss spx;
    std::optional<VixLoss> vix;
    double constraint_penalty = 0.0;
    std::size_t dropped_paths = 0;
    std::size_t clamped_vix_outputs = 0;
    bool extrapolated = false;
    bool failed = false;
    std::string failure;
};

// Stand-in model type for SPX-only problems.
struct NoVixModel {
    void predict(const ModelParams&, std::span<const FactorState>, std::span<double>) const {
        throw InputError("no VIX model configured");
    }
    bool covers(const ModelParams&) const { return false; }
};

template <VixModel Model = NoVixModel>
class CalibrationProblem {
public:
    CalibrationProblem(OptionChain spx, std::optional<VixChain> vix, CalibConfig cfg, const Model* model = nullptr)
        : spx_(std::move(spx)), vix_(std::move(vix)), cfg_(std::move(cfg)), model_(model) {
        cfg_.validate();
        if (cfg_.target == CalibrationTarget::joint) {
            if (!vix_ || vix_->slices.empty()) throw InputError("joint calibration needs a VIX chain");
            if (model_ == nullptr) throw InputError("joint calibration needs a VIX surrogate");
            vega_ = vega_weights(*vix_);
        } else {
            vix_.reset();
        }
        std::vector<int> days;
        for (const auto& s : spx_.slices) days.push_back(s.days);
        if (vix_) {
            for (const auto& s : vix_->slices) days.push_back(s.days);
        }
        if (days.empty()) throw InputError("calibration: no quotes");
        dt_ = aligned_step(days, cfg_.dt);
        times_ = record_times_for(days);
        for (const auto& s : spx_.slices) {
            const double fwd = cfg_.curves.forward(cfg_.s0, s.maturity());
            for (const auto& q : s.quotes) specs_.push_back({s.maturity(), q.strike, otm_kind(fwd, q.strike)});
        }
    }

    const CalibConfig& config() const { return cfg_; }
    const OptionChain& spx() const { return spx_; }
    const std::optional<VixChain>& vix() const { return vix_; }
    const VegaWeights& vega() const { return vega_; }
    double dt() const { return dt_; }

    Evaluation evaluate(ModelParams p) const {
        Evaluation ev;
        FactorState init{};
        if (cfg_.init.state) {
            init = *cfg_.init.state;
            canonical_order(p, init);
        } else {
            FactorState dummy{};
            canonical_order(p, dummy);
            init = cfg_.init.resolve(p);
        }
        ev.params = p;
        ev.init = init;

        SimConfig sc;
        sc.dt = dt_;
        sc.n_paths = cfg_.n_paths;
        sc.seed = cfg_.seed;
        sc.threads = cfg_.threads;
        sc.curves = cfg_.curves;
        sc.record_times = times_;
        sc.horizon = times_.back();
        sc.on_divergence = DivergencePolicy::drop;
        PathBundle paths;
        try {
            paths = simulate(p, init, cfg_.s0, sc);
        } catch (const NumericalError& e) {
            return fail(std::move(ev), e.what());
        }
        ev.dropped_paths = paths.dropped_paths;

        auto priced = price_spx_options(paths, specs_, cfg_.curves.rate, cfg_.threads);
        attach_implied_vols(priced, cfg_.s0, cfg_.curves);
        std::vector<double> ivs(priced.size());
        for (std::size_t i = 0; i < priced.size(); ++i) ivs[i] = priced[i].iv;
        ev.spx = spx_loss_from_ivs(spx_, ivs, cfg_.weights.spx);
        for (std::size_t i = 0; i < priced.size(); ++i) {
            ev.spx.cells[i].model_price = priced[i].price;
            ev.spx.cells[i].model_stderr = priced[i].stderr_;
        }

        if (vix_) {
            const double excess = std::abs(p.beta_1) * lambda_bar(p, 1) - max_vol_of_vol;
            if (excess > 0.0) ev.constraint_penalty = 1.0 + excess;
            std::vector<double> mats;
            std::vector<std::vector<double>> strikes;
            for (const auto& s : vix_->slices) {
                mats.push_back(s.maturity());
                strikes.emplace_back();
                for (const auto& q : s.quotes) strikes.back().push_back(q.strike);
            }
            VixDerivativePrices vp;
            try {
                vp = price_vix_derivatives(p, *model_, paths, mats, strikes, cfg_.curves.rate, cfg_.vix_pricing);
            } catch (const NumericalError& e) {
                return fail(std::move(ev), e.what());
            }
            ev.extrapolated = vp.extrapolated;
            ev.clamped_vix_outputs = vp.clamped_outputs;
            std::vector<double> futs;
            std::vector<std::vector<double>> calls;
            for (const auto& s : vp.slices) {
                futs.push_back(s.future);
                calls.push_back(s.calls);
            }
            ev.vix = vix_loss_from_prices(*vix_, vega_, futs, calls, cfg_.weights);
            std::size_t c = 0;
            for (const auto& s : vp.slices) {
                for (double iv : s.ivs) ev.vix->cells[c++].model_iv = iv;
            }
        }
        ev.total = ev.spx.value + (ev.vix ? ev.vix->value : 0.0) + ev.constraint_penalty;
        if (!std::isfinite(ev.total)) return fail(std::move(ev), "non-finite loss");
        return ev;
    }

private:
    static Evaluation fail(Evaluation ev, const std::string& why) {
        ev.failed = true;
        ev.failure = why;
        ev.total = failed_evaluation_loss;
        return ev;
    }

    OptionChain spx_;
    std::optional<VixChain> vix_;
    CalibConfig cfg_;
    const Model* model_;
    VegaWeights vega_;
    double dt_ = 0.0;
    std::vector<double> times_;
    std::vector<OptionSpec> specs_;
};

// Affine map between the free parameters and [0, 1]. Parameters whose bounds
// collapse to a point are held fixed.
struct ParamScaling {
    ParamBounds bounds;
    std::vector<std::size_t> free;

    explicit ParamScaling(const ParamBounds& b) : bounds(b) {
        for (std::size_t i = 0; i < n_params; ++i) {
            if (b.box[i].width() > 0.0) free.push_back(i);
        }
    }

    std::vector<double> to_unit(const ModelParams& p) const {
        const auto a = p.to_array();
        std::vector<double> u;
        for (auto i : free) u.push_back((a[i] - bounds.box[i].lo) / bounds.box[i].width());
        return u;
    }

    ModelParams from_unit(std::span<const double> u) const {
        std::array<double, n_params> a{};
        for (std::size_t i = 0; i < n_params; ++i) a[i] = bounds.box[i].lo;
        for (std::size_t k = 0; k < free.size(); ++k) {
            const auto i = free[k];
            a[i] = bounds.box[i].lo + std::clamp(u[k], 0.0, 1.0) * bounds.box[i].width();
        }
        return ModelParams::from_array(a);
    }
};

struct RestartSummary {
    ModelParams start;
    ModelParams end;
    double loss = 0.0;
    std::size_t evals = 0;
    bool budget_exhausted = false;
    std::string stop_reason;
    double seconds = 0.0;
};

struct CalibrationResult {
    ModelParams params;
    FactorState init;
    Evaluation best;
    std::vector<RestartSummary> restarts;
    std::size_t best_restart = 0;
    std::vector<std::vector<TracePoint>> traces;  // per restart
    bool budget_exhausted = false;
    double seconds = 0.0;
};

// Start points after the first are uniform in the box; in joint mode they
// also satisfy the vol-of-vol bound the surrogate was trained under.
inline ModelParams random_start(const CalibConfig& cfg, std::size_t restart) {
    RngStream s = split(split(make_stream(cfg.seed), ~std::uint64_t{0}), restart);
    ModelParams p;
    for (int attempt = 0; attempt < 10000; ++attempt) {
        std::array<double, n_params> a{};
        for (std::size_t i = 0; i < n_params; ++i) a[i] = cfg.bounds.box[i].lo + cfg.bounds.box[i].width() * next_uniform(s);
        p = ModelParams::from_array(a);
        if (cfg.target == CalibrationTarget::spx_only || std::abs(p.beta_1) * lambda_bar(p, 1) <= max_vol_of_vol) break;
    }
    return p;
}

template <VixModel Model>
CalibrationResult calibrate(const CalibrationProblem<Model>& problem) {
    const auto& cfg = problem.config();
    const ParamScaling scaling(cfg.bounds);
    if (scaling.free.empty()) throw InputError("calibration: every parameter is fixed by its bounds");
    const std::vector<double> lo(scaling.free.size(), 0.0), hi(scaling.free.size(), 1.0);
    const ObjectiveFn f = [&](std::span<const double> u) { return problem.evaluate(scaling.from_unit(u)).total; };

    CalibrationResult res;
    const auto t0 = std::chrono::steady_clock::now();
    double best = std::numeric_limits<double>::infinity();
    std::vector<double> best_u;
    for (std::size_t r = 0; r < cfg.restarts; ++r) {
        const auto tr = std::chrono::steady_clock::now();
        const ModelParams start = (r == 0 && cfg.start) ? *cfg.start : random_start(cfg, r);
        const auto u0 = scaling.to_unit(start);
        const OptimResult o = cfg.optimizer == OptimizerKind::trust_region ? minimize_trust_region(f, u0, lo, hi, cfg.opt)
                                                                           : minimize_nelder_mead(f, u0, lo, hi, cfg.opt);
        RestartSummary sum;
        sum.start = start;
        sum.end = scaling.from_unit(o.x);
        sum.loss = o.f;
        sum.evals = o.evals;
        sum.budget_exhausted = o.budget_exhausted;
        sum.stop_reason = o.stop_reason;
        sum.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - tr).count();
        res.restarts.push_back(sum);
        res.traces.push_back(o.trace);
        if (o.f < best) {
            best = o.f;
            best_u = o.x;
            res.best_restart = r;
        }
    }
    res.best = problem.evaluate(scaling.from_unit(best_u));
    res.params = res.best.params;
    res.init = res.best.init;
    res.budget_exhausted = res.restarts[res.best_restart].budget_exhausted;
    res.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return res;
}

inline nlohmann::json evaluation_json(const Evaluation& ev) {
    nlohmann::json spx = nlohmann::json::array();
    for (const auto& c : ev.spx.cells) {
        spx.push_back({{"T_days", c.days},
                       {"K", c.strike},
                       {"kind", to_string(c.kind)},
                       {"market_iv", c.market_iv},
                       {"model_iv", std::isfinite(c.model_iv) ? nlohmann::json(c.model_iv) : nlohmann::json()},
                       {"model_price", c.model_price},
                       {"model_stderr", c.model_stderr},
                       {"score", c.dropped ? nlohmann::json() : nlohmann::json(c.score)},
                       {"dropped", c.dropped}});
    }
    nlohmann::json j = {{"total", ev.total},
                        {"spx", {{"loss", ev.spx.value}, {"dropped_cells", ev.spx.dropped}, {"penalty", ev.spx.penalty}, {"cells", spx}}},
                        {"constraint_penalty", ev.constraint_penalty},
                        {"dropped_paths", ev.dropped_paths},
                        {"failed", ev.failed}};
    if (ev.failed) j["failure"] = ev.failure;
    if (ev.vix) {
        nlohmann::json fut = nlohmann::json::array(), cells = nlohmann::json::array();
        for (const auto& f : ev.vix->futures) {
            fut.push_back({{"T_days", f.days}, {"market", f.market}, {"model", f.model}, {"score", f.score}});
        }
        for (const auto& c : ev.vix->cells) {
            cells.push_back({{"T_days", c.days},
                             {"K", c.strike},
                             {"market_price", c.market_price},
                             {"model_price", c.model_price},
                             {"market_iv", std::isfinite(c.market_iv) ? nlohmann::json(c.market_iv) : nlohmann::json()},
                             {"model_iv", std::isfinite(c.model_iv) ? nlohmann::json(c.model_iv) : nlohmann::json()},
                             {"gamma", c.gamma},
                             {"used", c.used},
                             {"score", c.score}});
        }
        j["vix"] = {{"loss", ev.vix->value},
                    {"future_term", ev.vix->future_term},
                    {"option_term", ev.vix->option_term},
                    {"futures", fut},
                    {"cells", cells},
                    {"clamped_outputs", ev.clamped_vix_outputs},
                    {"extrapolated", ev.extrapolated}};
    }
    return j;
}

// Deterministic content only; wall-clock timings are reported separately.
template <VixModel Model>
nlohmann::json calibration_report(const CalibrationProblem<Model>& problem, const CalibrationResult& r) {
    const auto& cfg = problem.config();
    nlohmann::json restarts = nlohmann::json::array();
    for (std::size_t i = 0; i < r.restarts.size(); ++i) {
        const auto& s = r.restarts[i];
        nlohmann::json trace = nlohmann::json::array();
        for (const auto& t : r.traces[i]) trace.push_back({t.eval, t.f, t.best});
        restarts.push_back({{"start", to_json(s.start)},
                            {"end", to_json(s.end)},
                            {"loss", s.loss},
                            {"evals", s.evals},
                            {"budget_exhausted", s.budget_exhausted},
                            {"stop_reason", s.stop_reason},
                            {"trace", trace}});
    }
    nlohmann::json warnings = problem.spx().warnings;
    if (problem.vix()) {
        for (const auto& w : problem.vix()->warnings) warnings.push_back(w);
        for (const auto& w : problem.vega().warnings) warnings.push_back(w);
    }
    return {{"target", to_string(cfg.target)},
            {"params", to_json(r.params)},
            {"init_factors", to_json(r.init)},
            {"loss", evaluation_json(r.best)},
            {"best_restart", r.best_restart},
            {"budget_exhausted", r.budget_exhausted},
            {"restarts", restarts},
            {"settings",
             {{"n_paths", cfg.n_paths},
              {"dt_requested", cfg.dt},
              {"dt", problem.dt()},
              {"seed", cfg.seed},
              {"weights", to_json(cfg.weights)},
              {"bounds", to_json(cfg.bounds)},
              {"optimizer", to_string(cfg.optimizer)},
              {"rho_begin", cfg.opt.rho_begin},
              {"rho_end", cfg.opt.rho_end},
              {"max_evals", cfg.opt.max_evals},
              {"restarts", cfg.restarts}}},
            {"warnings", warnings}};
}

}  // namespace pdv
