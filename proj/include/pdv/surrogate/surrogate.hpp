#pragma once

// The trained VIX map (Theta, R) -> VIX in points: standardized inputs, a
// float network, an optional affine target scaling, and the box it was
// trained on.

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include <json.hpp>

#include "pdv/error.hpp"
#include "pdv/io/files.hpp"
#include "pdv/kernels/parallel.hpp"
#include "pdv/kernels/rng.hpp"
#include "pdv/kernels/stats.hpp"
#include "pdv/mc/nested_vix.hpp"
#include "pdv/model/params.hpp"
#include "pdv/pricing/vix.hpp"
#include "pdv/surrogate/dataset.hpp"
#include "pdv/surrogate/mlp.hpp"

namespace pdv {

inline constexpr int surrogate_inputs = static_cast<int>(n_params + 4);

struct Standardization {
    std::array<double, surrogate_inputs> mean{};
    std::array<double, surrogate_inputs> scale{};  // standard deviations, > 0

    static Standardization identity() {
        Standardization s;
        s.scale.fill(1.0);
        return s;
    }

    double standardize(int i, double x) const { return (x - mean[i]) / scale[i]; }
    double destandardize(int i, double z) const { return z * scale[i] + mean[i]; }

    friend bool operator==(const Standardization&, const Standardization&) = default;
};

inline std::array<double, surrogate_inputs> surrogate_features(const ModelParams& p, const FactorState& s) {
    std::array<double, surrogate_inputs> x{};
    const auto a = p.to_array();
    std::copy(a.begin(), a.end(), x.begin());
    const auto r = s.to_array();
    std::copy(r.begin(), r.end(), x.begin() + n_params);
    return x;
}

class Surrogate {
public:
    // Inputs are processed in blocks of this many columns, always padded to
    // full size, so every output is computed by the same arithmetic no
    // matter how the batch is split across threads.
    static constexpr std::size_t block = 1024;

    MlpSpec spec;
    Mlp<float> net;
    Standardization inputs = Standardization::identity();
    double target_mean = 0.0;
    double target_scale = 1.0;
    ParamBounds box = ParamBounds::defaults();
    unsigned threads = 1;

    Surrogate() = default;
    Surrogate(MlpSpec s, Mlp<float> n) : spec(std::move(s)), net(std::move(n)) {}

    bool covers(const ModelParams& p) const { return box.contains(p); }

    void predict(const ModelParams& p, std::span<const FactorState> states, std::span<double> out) const {
        if (out.size() != states.size()) throw InputError("Surrogate::predict: output size mismatch");
        const std::size_t n_blocks = (states.size() + block - 1) / block;
        std::array<float, n_params> theta{};
        const auto a = p.to_array();
        for (std::size_t i = 0; i < n_params; ++i) theta[i] = static_cast<float>(inputs.standardize(int(i), a[i]));
        parallel_for(n_blocks, threads, [&](std::size_t b) {
            const std::size_t begin = b * block;
            const std::size_t end = std::min(states.size(), begin + block);
            Mlp<float>::Matrix x = Mlp<float>::Matrix::Zero(surrogate_inputs, block);
            for (std::size_t j = begin; j < end; ++j) {
                const auto c = static_cast<Eigen::Index>(j - begin);
                for (std::size_t i = 0; i < n_params; ++i) x(Eigen::Index(i), c) = theta[i];
                const auto r = states[j].to_array();
                for (int k = 0; k < 4; ++k) {
                    x(Eigen::Index(n_params) + k, c) = static_cast<float>(inputs.standardize(int(n_params) + k, r[k]));
                }
            }
            const auto y = net.forward(x);
            for (std::size_t j = begin; j < end; ++j) {
                out[j] = static_cast<double>(y(0, Eigen::Index(j - begin))) * target_scale + target_mean;
            }
        });
    }

    double predict_one(const ModelParams& p, const FactorState& s) const {
        double v = 0.0;
        predict(p, std::span<const FactorState>(&s, 1), std::span<double>(&v, 1));
        return v;
    }

    // Rows of a dataset, each with its own Theta; same blocking as predict().
    std::vector<double> predict_rows(const Dataset& ds) const {
        std::vector<double> out(ds.rows());
        const std::size_t n_blocks = (ds.rows() + block - 1) / block;
        parallel_for(n_blocks, threads, [&](std::size_t b) {
            const std::size_t begin = b * block;
            const std::size_t end = std::min(ds.rows(), begin + block);
            Mlp<float>::Matrix x = Mlp<float>::Matrix::Zero(surrogate_inputs, block);
            for (std::size_t j = begin; j < end; ++j) {
                const double* r = ds.row(j);
                for (int i = 0; i < surrogate_inputs; ++i) {
                    x(i, Eigen::Index(j - begin)) = static_cast<float>(inputs.standardize(i, r[i]));
                }
            }
            const auto y = net.forward(x);
            for (std::size_t j = begin; j < end; ++j) {
                out[j] = static_cast<double>(y(0, Eigen::Index(j - begin))) * target_scale + target_mean;
            }
        });
        return out;
    }
};

static_assert(VixModel<Surrogate>);

// Column means and standard deviations of the 14 inputs over the given rows;
// a constant column keeps scale 1.
// Mean and standard deviation; spreads at rounding level count as constant and
// get scale 1.
template <class Get>
std::pair<double, double> column_moments(std::span<const std::size_t> rows, Get get) {
    double m = 0.0;
    for (auto r : rows) m += get(r);
    m /= static_cast<double>(rows.size());
    double v = 0.0;
    for (auto r : rows) v += (get(r) - m) * (get(r) - m);
    v /= static_cast<double>(rows.size());
    const double sd = std::sqrt(v);
    return {m, sd > 1e-12 * std::max(1.0, std::abs(m)) ? sd : 1.0};
}

inline Standardization fit_standardization(const Dataset& ds, std::span<const std::size_t> rows) {
    Standardization s = Standardization::identity();
    if (rows.empty()) return s;
    for (int i = 0; i < surrogate_inputs; ++i) {
        std::tie(s.mean[i], s.scale[i]) = column_moments(rows, [&](std::size_t r) { return ds.row(r)[i]; });
    }
    return s;
}

struct TrainConfig {
    MlpSpec spec = MlpSpec::vix_default();
    // Share of configurations held out for validation; N2 / (N1 + N2).
    double val_fraction = 1.2 / 8.0;
    double learning_rate = 4.2e-5;
    // Multiplies the learning rate after every epoch.
    double lr_decay = 1.0;
    std::size_t batch = 1024;
    std::size_t max_epochs = 500;
    std::size_t patience = 20;
    std::uint64_t seed = 1;
    bool standardize_target = false;
    ParamBounds box = ParamBounds::defaults();
    // Wall-clock cap in seconds; 0 disables it.
    double time_limit = 0.0;

    void validate() const {
        spec.validate();
        if (spec.input != surrogate_inputs) throw InputError("TrainConfig: network input width must be 14");
        if (!(learning_rate > 0.0)) throw InputError("TrainConfig: learning rate must be positive");
        if (!(val_fraction > 0.0 && val_fraction < 1.0)) throw InputError("TrainConfig: val_fraction must lie in (0,1)");
        if (batch < 1 || max_epochs < 1) throw InputError("TrainConfig: batch and max_epochs must be >= 1");
        box.validate();
    }
};

struct EpochReport {
    std::size_t epoch = 0;
    double train_rmse = 0.0;
    double val_rmse = 0.0;
    double learning_rate = 0.0;
    double seconds = 0.0;
};

inline nlohmann::json to_json(const EpochReport& e) {
    return {{"epoch", e.epoch},
            {"train_rmse", e.train_rmse},
            {"val_rmse", e.val_rmse},
            {"learning_rate", e.learning_rate},
            {"seconds", e.seconds}};
}

struct TrainReport {
    std::vector<EpochReport> epochs;
    std::size_t best_epoch = 0;
    double best_val_rmse = std::numeric_limits<double>::infinity();
    std::size_t n_train_rows = 0, n_val_rows = 0;
    std::size_t n_train_groups = 0, n_val_groups = 0;
    std::string stop_reason;

    std::string jsonl() const {
        std::string out;
        for (const auto& e : epochs) out += to_json(e).dump() + "\n";
        return out;
    }
};

struct TrainResult {
    Surrogate surrogate;
    TrainReport report;
};

namespace detail {

inline double rmse_on(const Surrogate& s, const Dataset& ds, std::span<const std::size_t> rows) {
    if (rows.empty()) return std::numeric_limits<double>::quiet_NaN();
    Dataset sub;
    sub.values.reserve(rows.size() * dataset_columns);
    for (auto r : rows) sub.values.insert(sub.values.end(), ds.row(r), ds.row(r) + dataset_columns);
    const auto y = s.predict_rows(sub);
    double acc = 0.0;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const double e = y[i] - sub.target(i);
        acc += e * e;
    }
    return std::sqrt(acc / static_cast<double>(rows.size()));
}

}  // namespace detail

// Adam on the RMSE of each mini-batch. Rows are split into training and
// validation by configuration (runs of equal Theta), standardization is fitted
// on the training rows, and the weights of the best validation epoch are
// returned.
inline TrainResult train(const Dataset& ds, const TrainConfig& cfg,
                         const std::function<void(const EpochReport&)>& on_epoch = {}) {
    cfg.validate();
    if (ds.rows() == 0) throw InputError("train: empty dataset");
    const auto starts = ds.group_starts();
    const std::size_t n_groups = starts.size();
    std::vector<std::size_t> order(n_groups);
    for (std::size_t i = 0; i < n_groups; ++i) order[i] = i;
    RngStream split_stream = split(make_stream(cfg.seed), 0);
    shuffle(split_stream, std::span<std::size_t>(order));
    std::size_t n_val = static_cast<std::size_t>(std::llround(cfg.val_fraction * static_cast<double>(n_groups)));
    if (n_groups >= 2) n_val = std::clamp<std::size_t>(n_val, 1, n_groups - 1);
    else n_val = 0;

    std::vector<std::size_t> train_rows, val_rows;
    for (std::size_t k = 0; k < n_groups; ++k) {
        const std::size_t g = order[k];
        const std::size_t b = starts[g], e = g + 1 < n_groups ? starts[g + 1] : ds.rows();
        auto& dst = k < n_val ? val_rows : train_rows;
        for (std::size_t r = b; r < e; ++r) dst.push_back(r);
    }
    std::sort(train_rows.begin(), train_rows.end());
    std::sort(val_rows.begin(), val_rows.end());

    Surrogate s(cfg.spec, Mlp<float>(cfg.spec));
    s.inputs = fit_standardization(ds, train_rows);
    s.box = cfg.box;
    if (cfg.standardize_target) {
        std::tie(s.target_mean, s.target_scale) =
            column_moments(train_rows, [&](std::size_t r) { return ds.target(r); });
    }
    s.net.initialize(split(make_stream(cfg.seed), 1));

    // Standardized training matrix, one column per row.
    const auto n_train = static_cast<Eigen::Index>(train_rows.size());
    Mlp<float>::Matrix x_all(surrogate_inputs, n_train);
    Mlp<float>::Matrix t_all(1, n_train);
    for (Eigen::Index c = 0; c < n_train; ++c) {
        const double* r = ds.row(train_rows[std::size_t(c)]);
        for (int i = 0; i < surrogate_inputs; ++i) x_all(i, c) = static_cast<float>(s.inputs.standardize(i, r[i]));
        t_all(0, c) = static_cast<float>((r[dataset_columns - 1] - s.target_mean) / s.target_scale);
    }

    typename Adam<float>::Options adam_opt;
    adam_opt.learning_rate = cfg.learning_rate;
    Adam<float> adam(s.net, adam_opt);
    Mlp<float>::Workspace ws;
    Mlp<float>::Gradients grads;

    TrainResult result;
    auto& rep = result.report;
    rep.n_train_rows = train_rows.size();
    rep.n_val_rows = val_rows.size();
    rep.n_train_groups = n_groups - n_val;
    rep.n_val_groups = n_val;
    Mlp<float> best = s.net;
    const auto t_start = std::chrono::steady_clock::now();
    std::vector<std::size_t> perm(train_rows.size());
    double lr = cfg.learning_rate;

    for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
        const auto t0 = std::chrono::steady_clock::now();
        for (std::size_t i = 0; i < perm.size(); ++i) perm[i] = i;
        RngStream es = split(make_stream(cfg.seed), 2 + epoch);
        shuffle(es, std::span<std::size_t>(perm));
        adam.set_learning_rate(lr);

        double sq_sum = 0.0;
        for (std::size_t b = 0; b < perm.size(); b += cfg.batch) {
            const std::size_t e = std::min(perm.size(), b + cfg.batch);
            const auto n = static_cast<Eigen::Index>(e - b);
            Mlp<float>::Matrix xb(surrogate_inputs, n), tb(1, n);
            for (Eigen::Index c = 0; c < n; ++c) {
                const auto src = static_cast<Eigen::Index>(perm[b + std::size_t(c)]);
                xb.col(c) = x_all.col(src);
                tb(0, c) = t_all(0, src);
            }
            const auto& y = s.net.forward_train(xb, ws);
            Mlp<float>::Matrix resid = y - tb;
            const double sq = resid.template cast<double>().squaredNorm();
            if (!std::isfinite(sq)) {
                throw NumericalError("train: non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                                     std::to_string(b / cfg.batch) + " (learning rate " + std::to_string(lr) +
                                     "); lower the learning rate or check the dataset for extreme targets");
            }
            sq_sum += sq;
            const double rmse = std::sqrt(sq / static_cast<double>(n));
            // d RMSE / d y = resid / (n * RMSE)
            Mlp<float>::Matrix d_out =
                rmse > 0.0 ? Mlp<float>::Matrix(resid / static_cast<float>(static_cast<double>(n) * rmse))
                           : Mlp<float>::Matrix::Zero(1, n);
            s.net.backward(ws, d_out, grads);
            adam.step(s.net, grads);
        }
        EpochReport er;
        er.epoch = epoch;
        er.train_rmse = std::sqrt(sq_sum / static_cast<double>(std::max<std::size_t>(1, perm.size()))) * s.target_scale;
        er.val_rmse = val_rows.empty() ? er.train_rmse : detail::rmse_on(s, ds, val_rows);
        er.learning_rate = lr;
        er.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        if (!std::isfinite(er.val_rmse)) throw NumericalError("train: non-finite validation RMSE at epoch " + std::to_string(epoch));
        rep.epochs.push_back(er);
        if (on_epoch) on_epoch(er);
        if (er.val_rmse < rep.best_val_rmse) {
            rep.best_val_rmse = er.val_rmse;
            rep.best_epoch = epoch;
            best = s.net;
        }
        lr *= cfg.lr_decay;
        if (epoch - rep.best_epoch >= cfg.patience) {
            rep.stop_reason = "early stopping: no validation improvement for " + std::to_string(cfg.patience) + " epochs";
            break;
        }
        const double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
        if (cfg.time_limit > 0.0 && elapsed > cfg.time_limit) {
            rep.stop_reason = "time limit";
            break;
        }
    }
    if (rep.stop_reason.empty()) rep.stop_reason = "max epochs";
    s.net = best;
    if (!s.net.finite()) throw NumericalError("train: non-finite weights");
    result.surrogate = std::move(s);
    return result;
}

// Error of a VIX model against fresh nested Monte Carlo along one outer path
// per configuration.
struct EvalConfig {
    PanelConfig panel;
    std::uint64_t seed = 1;
    unsigned threads = 1;
    double threshold = 0.55;  // points
    std::size_t bins = 20;
    // States whose nested VIX exceeds this are left out, as in the dataset.
    double max_vix = 150.0;
};

struct EvalReport {
    std::vector<double> mae;  // per configuration, points; NaN if the outer path diverged or every state is above the cap
    std::vector<double> mean_nested;  // per configuration
    std::size_t failed = 0;
    std::size_t states = 0;
    std::size_t states_above_cap = 0;
    double mean_mae = 0.0;
    double max_mae = 0.0;
    double frac_below = 0.0;
    Histogram histogram;

    nlohmann::json to_json() const {
        nlohmann::json j = {{"mae", mae},
                            {"mean_nested_vix", mean_nested},
                            {"failed", failed},
                            {"states", states},
                            {"states_above_cap", states_above_cap},
                            {"mean_mae", mean_mae},
                            {"max_mae", max_mae},
                            {"frac_below_threshold", frac_below}};
        j["histogram"] = {{"edges", histogram.edges}, {"counts", histogram.counts}};
        return j;
    }
};

template <VixModel Model>
EvalReport evaluate_surrogate(const Model& model, std::span<const ModelParams> configs, const EvalConfig& cfg) {
    EvalReport rep;
    rep.mae.assign(configs.size(), std::numeric_limits<double>::quiet_NaN());
    rep.mean_nested.assign(configs.size(), std::numeric_limits<double>::quiet_NaN());
    std::vector<std::size_t> kept(configs.size(), 0), above(configs.size(), 0);
    const RngStream master = make_stream(cfg.seed);
    parallel_for(configs.size(), cfg.threads, [&](std::size_t i) {
        PanelConfig pc = cfg.panel;
        pc.seed = split(master, i).key;
        pc.nested.threads = 1;
        pc.nested.on_divergence = DivergencePolicy::drop;
        std::vector<PanelRecord> panel;
        try {
            panel = vix_panel(configs[i], pc);
        } catch (const NumericalError&) {
            return;
        }
        std::vector<FactorState> states;
        std::vector<double> ref;
        for (const auto& r : panel) {
            if (r.vix > cfg.max_vix) continue;
            states.push_back(r.state);
            ref.push_back(r.vix);
        }
        kept[i] = states.size();
        above[i] = panel.size() - states.size();
        if (states.empty()) return;
        std::vector<double> pred(states.size());
        model.predict(configs[i], states, pred);
        double acc = 0.0;
        for (std::size_t k = 0; k < states.size(); ++k) acc += std::abs(pred[k] - ref[k]);
        rep.mae[i] = acc / static_cast<double>(states.size());
        rep.mean_nested[i] = mean(ref);
    });
    for (std::size_t i = 0; i < configs.size(); ++i) {
        rep.states += kept[i];
        rep.states_above_cap += above[i];
    }
    std::vector<double> ok;
    for (double m : rep.mae) {
        if (std::isnan(m)) ++rep.failed;
        else ok.push_back(m);
    }
    if (!ok.empty()) {
        rep.mean_mae = mean(ok);
        rep.max_mae = *std::max_element(ok.begin(), ok.end());
        std::size_t below = 0;
        for (double m : ok) below += m < cfg.threshold;
        rep.frac_below = static_cast<double>(below) / static_cast<double>(ok.size());
        rep.histogram = make_histogram(ok, cfg.bins, 0.0, std::max(2.0 * cfg.threshold, rep.max_mae));
    }
    return rep;
}

// File layout: magic, version, JSON header (spec, standardization, target
// scaling, box), float32 weight blocks row-major then biases per layer, and
// an FNV-1a checksum of everything before it.
inline constexpr char surrogate_magic[8] = {'P', 'D', 'V', 'S', 'U', 'R', 'R', '1'};
inline constexpr std::uint32_t surrogate_version = 1;

inline std::string serialize_surrogate(const Surrogate& s) {
    nlohmann::json layers = nlohmann::json::array();
    for (const auto& l : s.spec.layers) layers.push_back({{"width", l.width}, {"activation", to_string(l.act)}});
    const nlohmann::json header = {
        {"spec", {{"input", s.spec.input}, {"layers", layers}}},
        {"standardization", {{"mean", s.inputs.mean}, {"scale", s.inputs.scale}}},
        {"target", {{"mean", s.target_mean}, {"scale", s.target_scale}}},
        {"box", to_json(s.box)},
        {"scalar", "float32"},
    };
    io::ByteWriter w;
    w.put_raw(surrogate_magic, sizeof surrogate_magic);
    w.put<std::uint32_t>(surrogate_version);
    const std::string h = header.dump();
    w.put<std::uint64_t>(h.size());
    w.put_raw(h.data(), h.size());
    for (std::size_t l = 0; l < s.net.n_layers(); ++l) {
        const auto& W = s.net.weights()[l];
        for (Eigen::Index i = 0; i < W.rows(); ++i) {
            for (Eigen::Index j = 0; j < W.cols(); ++j) w.put<float>(W(i, j));
        }
        const auto& b = s.net.biases()[l];
        for (Eigen::Index i = 0; i < b.size(); ++i) w.put<float>(b(i));
    }
    w.put<std::uint64_t>(io::fnv1a(w.bytes));
    return w.bytes;
}

inline Surrogate deserialize_surrogate(const std::string& bytes, const std::string& source = "surrogate") {
    if (bytes.size() < sizeof surrogate_magic + 4 + 8 + 8 ||
        !std::equal(surrogate_magic, surrogate_magic + 8, bytes.begin())) {
        throw InputError(source + ": not a surrogate file (bad magic)");
    }
    const std::string_view body(bytes.data(), bytes.size() - 8);
    std::uint64_t stored = 0;
    std::memcpy(&stored, bytes.data() + bytes.size() - 8, 8);
    io::ByteReader r{body, sizeof surrogate_magic, source};
    const auto version = r.get<std::uint32_t>();
    if (version != surrogate_version) {
        throw InputError(source + ": unsupported surrogate version " + std::to_string(version));
    }
    if (io::fnv1a(body) != stored) throw InputError(source + ": checksum mismatch, file is corrupted");
    const auto h_len = r.get<std::uint64_t>();
    nlohmann::json header;
    try {
        header = nlohmann::json::parse(r.take(h_len));
    } catch (const nlohmann::json::exception& e) {
        throw InputError(source + ": bad header: " + e.what());
    }
    Surrogate s;
    try {
        MlpSpec spec;
        spec.input = header.at("spec").at("input").get<int>();
        for (const auto& l : header.at("spec").at("layers")) {
            spec.layers.push_back({l.at("width").get<int>(), parse_activation(l.at("activation").get<std::string>())});
        }
        if (spec.input != surrogate_inputs) {
            throw InputError(source + ": shape mismatch, network input width " + std::to_string(spec.input) +
                             " but the VIX map takes " + std::to_string(surrogate_inputs));
        }
        spec.validate();
        const auto mean_v = header.at("standardization").at("mean").get<std::vector<double>>();
        const auto scale_v = header.at("standardization").at("scale").get<std::vector<double>>();
        if (mean_v.size() != std::size_t(surrogate_inputs) || scale_v.size() != std::size_t(surrogate_inputs)) {
            throw InputError(source + ": shape mismatch in the standardization block");
        }
        for (int i = 0; i < surrogate_inputs; ++i) {
            if (!(scale_v[i] > 0.0)) throw InputError(source + ": standardization scales must be positive");
            s.inputs.mean[i] = mean_v[i];
            s.inputs.scale[i] = scale_v[i];
        }
        s.target_mean = header.at("target").at("mean").get<double>();
        s.target_scale = header.at("target").at("scale").get<double>();
        s.box = bounds_from_json(header.at("box"));
        if (header.at("scalar").get<std::string>() != "float32") throw InputError(source + ": unsupported scalar type");
        s.spec = spec;
    } catch (const nlohmann::json::exception& e) {
        throw InputError(source + ": bad header: " + e.what());
    }
    s.net = Mlp<float>(s.spec);
    for (std::size_t l = 0; l < s.net.n_layers(); ++l) {
        auto& W = s.net.weights()[l];
        for (Eigen::Index i = 0; i < W.rows(); ++i) {
            for (Eigen::Index j = 0; j < W.cols(); ++j) W(i, j) = r.get<float>();
        }
        auto& b = s.net.biases()[l];
        for (Eigen::Index i = 0; i < b.size(); ++i) b(i) = r.get<float>();
    }
    if (r.pos != body.size()) throw InputError(source + ": trailing bytes after the weight blocks");
    if (!s.net.finite()) throw InputError(source + ": non-finite weights");
    return s;
}

inline void save_surrogate(const std::filesystem::path& path, const Surrogate& s) {
    io::write_text(path, serialize_surrogate(s));
}

inline Surrogate load_surrogate(const std::filesystem::path& path) {
    return deserialize_surrogate(io::read_text(path), path.string());
}

}  // namespace pdv
