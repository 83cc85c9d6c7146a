#pragma once

// Training data for the VIX network: rows of (Theta, R, VIX) built from one
// outer path per sampled configuration and a nested VIX at each observation.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "pdv/error.hpp"
#include "pdv/io/files.hpp"
#include "pdv/kernels/parallel.hpp"
#include "pdv/kernels/rng.hpp"
#include "pdv/mc/nested_vix.hpp"
#include "pdv/model/params.hpp"

namespace pdv {

struct SampleStats {
    std::size_t draws = 0;
    std::size_t accepted = 0;
};

// Uniform draws in the box, redrawn until lambda_{n,0} > lambda_{n,1} and
// |beta_1| lambda_bar_1 <= 10. Configuration i uses stream split(seed, i).
inline std::vector<ModelParams> sample_param_configs(const ParamBounds& bounds, std::size_t n, std::uint64_t seed,
                                                     SampleStats* stats = nullptr,
                                                     std::size_t max_draws_per_config = 1000000) {
    bounds.validate();
    const RngStream master = make_stream(seed);
    std::vector<ModelParams> out;
    out.reserve(n);
    std::size_t draws = 0;
    for (std::size_t i = 0; i < n; ++i) {
        RngStream s = split(master, i);
        for (std::size_t attempt = 0;; ++attempt) {
            if (attempt == max_draws_per_config) {
                throw InputError("sample_param_configs: bounds admit no configuration with ordered rates and "
                                 "|beta_1| lambda_bar_1 <= 10");
            }
            std::array<double, n_params> a{};
            for (std::size_t k = 0; k < n_params; ++k) {
                const auto& iv = bounds.box[k];
                a[k] = iv.lo + iv.width() * next_uniform(s);
            }
            ++draws;
            const ModelParams p = ModelParams::from_array(a);
            if (p.lambda_10 > p.lambda_11 && p.lambda_20 > p.lambda_21 &&
                std::abs(p.beta_1) * lambda_bar(p, 1) <= max_vol_of_vol) {
                out.push_back(p);
                break;
            }
        }
    }
    if (stats) {
        stats->draws = draws;
        stats->accepted = n;
    }
    return out;
}

// Parameter sets near two market fits (the 2021-06-03 SPX surface and the
// 2021-06-02 joint fit), alternating between them: every coordinate is scaled
// by an independent uniform factor in [1 - spread, 1 + spread], clipped to the
// box, and redrawn until the rates are ordered and the vol-of-vol bound holds.
inline std::vector<ModelParams> realistic_configs(std::size_t n, std::uint64_t seed, double spread = 0.1,
                                                  const ParamBounds& bounds = ParamBounds::defaults()) {
    if (!(spread >= 0.0 && spread < 1.0)) throw InputError("realistic_configs: spread must lie in [0, 1)");
    const std::array<ModelParams, 2> centres{reference_params::spx_surface_2021_06_03(),
                                             reference_params::joint_2021_06_02()};
    const RngStream master = make_stream(seed);
    std::vector<ModelParams> out;
    for (std::size_t i = 0; i < n; ++i) {
        RngStream s = split(master, i);
        const auto c = centres[i % 2].to_array();
        for (int attempt = 0;; ++attempt) {
            if (attempt == 100000) throw InputError("realistic_configs: no admissible neighbour found");
            std::array<double, n_params> a{};
            for (std::size_t k = 0; k < n_params; ++k) {
                a[k] = std::clamp(c[k] * (1.0 + spread * (2.0 * next_uniform(s) - 1.0)), bounds.box[k].lo, bounds.box[k].hi);
            }
            const ModelParams p = ModelParams::from_array(a);
            if (p.lambda_10 > p.lambda_11 && p.lambda_20 > p.lambda_21 &&
                std::abs(p.beta_1) * lambda_bar(p, 1) <= max_vol_of_vol) {
                out.push_back(p);
                break;
            }
        }
    }
    return out;
}

inline constexpr std::size_t dataset_columns = n_params + 4 + 1;

inline std::vector<std::string> dataset_header() {
    std::vector<std::string> h;
    for (auto n : param_names) h.emplace_back(n);
    for (const char* r : {"R10", "R11", "R20", "R21"}) h.emplace_back(r);
    h.emplace_back("vix");
    return h;
}

struct Dataset {
    std::vector<double> values;  // row-major, dataset_columns per row
    nlohmann::json meta = nlohmann::json::object();

    std::size_t rows() const { return values.size() / dataset_columns; }
    const double* row(std::size_t i) const { return values.data() + i * dataset_columns; }

    void append(const ModelParams& p, const FactorState& s, double vix) {
        for (double x : p.to_array()) values.push_back(x);
        for (double x : s.to_array()) values.push_back(x);
        values.push_back(vix);
    }

    ModelParams params(std::size_t i) const {
        std::array<double, n_params> a{};
        std::copy(row(i), row(i) + n_params, a.begin());
        return ModelParams::from_array(a);
    }
    FactorState state(std::size_t i) const {
        const double* r = row(i) + n_params;
        return {r[0], r[1], r[2], r[3]};
    }
    double target(std::size_t i) const { return row(i)[dataset_columns - 1]; }

    // Consecutive rows sharing the same Theta columns form one group.
    std::vector<std::size_t> group_starts() const {
        std::vector<std::size_t> starts;
        for (std::size_t i = 0; i < rows(); ++i) {
            if (i == 0 || !std::equal(row(i), row(i) + n_params, row(i - 1))) starts.push_back(i);
        }
        return starts;
    }
};

struct DatasetConfig {
    PanelConfig panel;
    std::size_t outer_paths = 1;  // per configuration
    std::uint64_t seed = 1;
    unsigned threads = 1;
    // Rows whose nested VIX exceeds this many points are discarded; they come
    // from paths that are blowing up and would dominate the RMSE.
    double max_vix = 150.0;
};

struct BuildLog {
    std::size_t configs = 0;
    std::size_t outer_paths = 0;
    std::size_t dropped_outer_paths = 0;
    std::size_t dropped_inner_paths = 0;
    std::size_t rows_above_cap = 0;
    std::size_t rows = 0;
    std::vector<std::string> messages;
};

// Outer path j of configuration i draws from split(split(seed, i), j).
inline Dataset build_dataset(std::span<const ModelParams> configs, const DatasetConfig& cfg, BuildLog* log = nullptr) {
    if (cfg.outer_paths < 1) throw InputError("build_dataset: need at least one outer path per configuration");
    const RngStream master = make_stream(cfg.seed);
    struct ConfigResult {
        std::vector<std::vector<PanelRecord>> paths;
        std::size_t dropped = 0;
        std::size_t dropped_inner = 0;
        std::vector<std::string> messages;
    };
    std::vector<ConfigResult> results(configs.size());
    parallel_for(configs.size(), cfg.threads, [&](std::size_t i) {
        const RngStream cs = split(master, i);
        for (std::size_t j = 0; j < cfg.outer_paths; ++j) {
            PanelConfig pc = cfg.panel;
            pc.seed = split(cs, j).key;
            pc.nested.on_divergence = DivergencePolicy::drop;
            pc.nested.threads = 1;
            try {
                auto panel = vix_panel(configs[i], pc);
                for (const auto& r : panel) results[i].dropped_inner += r.dropped_inner;
                results[i].paths.push_back(std::move(panel));
            } catch (const NumericalError& e) {
                ++results[i].dropped;
                results[i].messages.push_back("config " + std::to_string(i) + " path " + std::to_string(j) +
                                              " dropped: " + e.what());
            }
        }
    });

    Dataset ds;
    BuildLog lg;
    lg.configs = configs.size();
    lg.outer_paths = configs.size() * cfg.outer_paths;
    nlohmann::json t1 = nlohmann::json::array();
    for (std::size_t i = 0; i < configs.size(); ++i) {
        for (const auto& path : results[i].paths) {
            for (const auto& r : path) {
                if (r.vix > cfg.max_vix) {
                    ++lg.rows_above_cap;
                    continue;
                }
                ds.append(configs[i], r.state, r.vix);
            }
        }
        lg.dropped_outer_paths += results[i].dropped;
        lg.dropped_inner_paths += results[i].dropped_inner;
        for (auto& m : results[i].messages) lg.messages.push_back(std::move(m));
        t1.push_back(panel_start(configs[i], cfg.panel.t_end));
    }
    lg.rows = ds.rows();

    const auto& n = cfg.panel.nested;
    ds.meta = {
        {"columns", dataset_header()},
        {"n_obs", cfg.panel.n_obs},
        {"outer_dt", cfg.panel.outer_dt},
        {"t_end", cfg.panel.t_end},
        {"outer_init", to_json(cfg.panel.init)},
        {"outer_paths_per_config", cfg.outer_paths},
        {"nested", {{"n_inner", n.n_inner}, {"delta", n.delta}, {"inner_dt", n.inner_dt}, {"antithetic", n.antithetic}}},
        {"seed", cfg.seed},
        {"t1_rule", "max(1/lambda_10, 1/lambda_20)"},
        {"t1", t1},
        {"configs", lg.configs},
        {"dropped_outer_paths", lg.dropped_outer_paths},
        {"dropped_inner_paths", lg.dropped_inner_paths},
        {"max_vix", cfg.max_vix},
        {"rows_above_cap", lg.rows_above_cap},
        {"rows", lg.rows},
    };
    if (log) *log = std::move(lg);
    return ds;
}

enum class DatasetFormat { csv, binary };

inline constexpr char dataset_magic[8] = {'P', 'D', 'V', 'D', 'A', 'T', 'A', '1'};

// CSV writes the metadata next to the file as <path>.meta.json.
inline void save_dataset(const std::filesystem::path& path, const Dataset& ds, DatasetFormat format) {
    if (format == DatasetFormat::csv) {
        std::string text = io::join(dataset_header()) + "\n";
        for (std::size_t i = 0; i < ds.rows(); ++i) {
            const double* r = ds.row(i);
            for (std::size_t c = 0; c < dataset_columns; ++c) {
                if (c) text += ',';
                text += io::fmt(r[c]);
            }
            text += '\n';
        }
        io::write_text(path, text);
        io::write_text(path.string() + ".meta.json", ds.meta.dump(2) + "\n");
        return;
    }
    io::ByteWriter w;
    w.put_raw(dataset_magic, sizeof dataset_magic);
    const std::string meta = ds.meta.dump();
    w.put<std::uint64_t>(meta.size());
    w.put_raw(meta.data(), meta.size());
    w.put<std::uint64_t>(ds.rows());
    w.put<std::uint64_t>(dataset_columns);
    w.put_raw(ds.values.data(), ds.values.size() * sizeof(double));
    io::write_text(path, w.bytes);
}

inline Dataset load_dataset(const std::filesystem::path& path) {
    const std::string bytes = io::read_text(path);
    Dataset ds;
    if (bytes.size() >= sizeof dataset_magic && std::equal(dataset_magic, dataset_magic + 8, bytes.begin())) {
        io::ByteReader r{bytes, sizeof dataset_magic, path.string()};
        const auto meta_len = r.get<std::uint64_t>();
        try {
            ds.meta = nlohmann::json::parse(r.take(meta_len));
        } catch (const nlohmann::json::exception& e) {
            throw InputError(path.string() + ": bad metadata: " + e.what());
        }
        const auto rows = r.get<std::uint64_t>();
        const auto cols = r.get<std::uint64_t>();
        if (cols != dataset_columns) {
            throw InputError(path.string() + ": expected " + std::to_string(dataset_columns) + " columns, found " +
                             std::to_string(cols));
        }
        ds.values.resize(rows * cols);
        r.get_raw(ds.values.data(), ds.values.size() * sizeof(double));
        return ds;
    }
    const auto table = io::parse_csv(bytes, dataset_header(), path.string());
    ds.values.reserve(table.rows.size() * dataset_columns);
    for (const auto& row : table.rows) {
        for (std::size_t c = 0; c < dataset_columns; ++c) ds.values.push_back(table.number(row, c));
    }
    const auto meta_path = std::filesystem::path(path.string() + ".meta.json");
    if (std::filesystem::exists(meta_path)) {
        try {
            ds.meta = nlohmann::json::parse(io::read_text(meta_path));
        } catch (const nlohmann::json::exception& e) {
            throw InputError(meta_path.string() + ": " + e.what());
        }
    }
    return ds;
}

}  // namespace pdv
