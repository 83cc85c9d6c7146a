#pragma once

// Day-over-day stability of calibrated parameters: parameter series and
// drifts, the two kernels per date for overlay plots, and the mean absolute
// SPX implied-vol error per date on the moneyness window
// 1 - 0.4 sqrt(T) <= K / S0 <= 1 + 0.25 sqrt(T).

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <string>
#include <vector>

#include <json.hpp>

#include "pdv/calibration/loss.hpp"
#include "pdv/error.hpp"
#include "pdv/io/files.hpp"
#include "pdv/model/params.hpp"
#include "pdv/model/volatility.hpp"

namespace pdv {

struct DatedCalibration {
    std::string date;
    ModelParams params;
    FactorState init;
    double spot = 1.0;
    std::vector<SpxCell> cells;
    double loss = 0.0;
    bool failed = false;
    std::string failure;
};

struct KernelGrid {
    std::size_t points = 201;
    double t_max = 0.5;  // years
};

inline bool in_mae_window(double moneyness, double t) {
    const double r = std::sqrt(t);
    return moneyness >= 1.0 - 0.4 * r && moneyness <= 1.0 + 0.25 * r;
}

struct StabilityRow {
    std::string date;
    bool failed = false;
    ModelParams params;
    std::array<double, n_params> drift{};  // vs the previous successful date; NaN on the first
    double mae = std::numeric_limits<double>::quiet_NaN();
    std::size_t mae_cells = 0;
    double loss = 0.0;
    std::vector<double> k1, k2;
};

struct StabilityReport {
    std::vector<double> kernel_times;
    std::vector<StabilityRow> rows;
    double max_beta_drift = 0.0;  // over consecutive successful dates
    std::size_t failed = 0;
};

inline StabilityReport stability_report(const std::vector<DatedCalibration>& days, const KernelGrid& grid = {}) {
    if (days.size() < 2) throw InputError("stability_report: need at least two dated calibrations");
    if (grid.points < 2 || !(grid.t_max > 0.0)) throw InputError("stability_report: bad kernel grid");
    StabilityReport rep;
    for (std::size_t i = 0; i < grid.points; ++i) {
        rep.kernel_times.push_back(grid.t_max * static_cast<double>(i) / static_cast<double>(grid.points - 1));
    }
    const StabilityRow* prev = nullptr;
    for (const auto& d : days) {
        StabilityRow row;
        row.date = d.date;
        row.failed = d.failed;
        row.params = d.params;
        row.loss = d.loss;
        row.drift.fill(std::numeric_limits<double>::quiet_NaN());
        if (d.failed) {
            ++rep.failed;
            rep.rows.push_back(std::move(row));
            continue;
        }
        for (double t : rep.kernel_times) {
            row.k1.push_back(kernel(d.params, 1, t));
            row.k2.push_back(kernel(d.params, 2, t));
        }
        double abs_err = 0.0;
        for (const auto& c : d.cells) {
            if (c.dropped || !in_mae_window(c.strike / d.spot, c.days / 365.0)) continue;
            abs_err += std::abs(c.model_iv - c.market_iv);
            ++row.mae_cells;
        }
        if (row.mae_cells > 0) row.mae = abs_err / static_cast<double>(row.mae_cells);
        rep.rows.push_back(std::move(row));
        StabilityRow& cur = rep.rows.back();
        if (prev != nullptr) {
            const auto a = prev->params.to_array(), b = cur.params.to_array();
            for (std::size_t i = 0; i < n_params; ++i) cur.drift[i] = b[i] - a[i];
            for (std::size_t i = 6; i < n_params; ++i) rep.max_beta_drift = std::max(rep.max_beta_drift, std::abs(cur.drift[i]));
        }
        prev = &cur;
    }
    return rep;
}

// CSV files: parameters and drifts per date, kernel curves, MAE table.
inline std::string stability_params_csv(const StabilityReport& r) {
    std::string out = "date,failed,loss";
    for (auto n : param_names) out += "," + std::string(n);
    for (auto n : param_names) out += ",d_" + std::string(n);
    out += "\n";
    for (const auto& row : r.rows) {
        out += row.date + "," + (row.failed ? "1" : "0") + "," + io::fmt(row.loss);
        for (double v : row.params.to_array()) out += "," + io::fmt(v);
        for (double v : row.drift) out += "," + (std::isnan(v) ? std::string() : io::fmt(v));
        out += "\n";
    }
    return out;
}

inline std::string stability_kernels_csv(const StabilityReport& r) {
    std::string out = "date,t,K1,K2\n";
    for (const auto& row : r.rows) {
        for (std::size_t i = 0; i < row.k1.size(); ++i) {
            out += row.date + "," + io::fmt(r.kernel_times[i]) + "," + io::fmt(row.k1[i]) + "," + io::fmt(row.k2[i]) + "\n";
        }
    }
    return out;
}

inline std::string stability_mae_csv(const StabilityReport& r) {
    std::string out = "date,mae,cells\n";
    for (const auto& row : r.rows) {
        out += row.date + "," + (std::isnan(row.mae) ? std::string() : io::fmt(row.mae)) + "," +
               std::to_string(row.mae_cells) + "\n";
    }
    return out;
}

inline nlohmann::json to_json(const StabilityReport& r) {
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& row : r.rows) {
        nlohmann::json j = {{"date", row.date}, {"failed", row.failed}, {"params", to_json(row.params)}, {"loss", row.loss}};
        j["mae"] = std::isnan(row.mae) ? nlohmann::json() : nlohmann::json(row.mae);
        j["mae_cells"] = row.mae_cells;
        rows.push_back(j);
    }
    return {{"rows", rows}, {"max_beta_drift", r.max_beta_drift}, {"failed", r.failed}};
}

}  // namespace pdv
