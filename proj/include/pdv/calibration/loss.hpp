#pragma once

// Calibration losses.
//
//   l(x, y)  = (x / y - 1)^2
//   L_SPX    = w_SPX * mean_T mean_K l(model IV, market IV)          OTM quotes
//   L_VIX    = w_F   * mean_T l(model future, market future)
//            + w_VIX * mean_T (1/#K_T) sum_K gamma_TK l(model call, market call)
//
// gamma_TK are Black vegas at the market mid IV and market future, normalized
// to sum to one per maturity. VIX options enter through prices, not IVs.

#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "pdv/error.hpp"
#include "pdv/market/chains.hpp"
#include "pdv/pricing/black.hpp"

namespace pdv {

inline double score(double x, double y) {
    if (y == 0.0) throw InputError("score: reference value is zero");
    const double r = x / y - 1.0;
    return r * r;
}

// Cells whose model IV cannot be inverted leave the average and cost this
// many times the largest admissible cell score (1, a 100% IV error) each,
// spread over the number of cells.
inline constexpr double dropped_cell_penalty = 10.0;
inline constexpr double max_cell_score = 1.0;

struct LossWeights {
    double spx = 10.0;
    double vix = 5.0;
    double future = 20.0;

    void validate() const {
        if (!(spx > 0.0) || !(vix > 0.0) || !(future > 0.0)) throw InputError("loss weights must be positive");
    }
};

inline nlohmann::json to_json(const LossWeights& w) { return {{"spx", w.spx}, {"vix", w.vix}, {"future", w.future}}; }

struct VegaWeights {
    std::vector<std::vector<double>> gamma;  // per slice, per quote; 0 for excluded quotes
    std::vector<std::vector<bool>> used;
    std::vector<std::string> warnings;
};

inline VegaWeights vega_weights(const VixChain& chain) {
    VegaWeights w;
    for (const auto& s : chain.slices) {
        std::vector<double> v(s.quotes.size(), 0.0);
        std::vector<bool> used(s.quotes.size(), false);
        double total = 0.0;
        for (std::size_t i = 0; i < s.quotes.size(); ++i) {
            const auto& q = s.quotes[i];
            if (!std::isfinite(q.mid_iv) || !(q.mid_iv > 0.0)) {
                w.warnings.push_back("VIX " + std::to_string(s.days) + "d K=" + io::fmt(q.strike) +
                                     ": no market implied vol; strike excluded from the loss");
                continue;
            }
            v[i] = black_vega(s.future, q.strike, s.maturity(), q.mid_iv);
            used[i] = true;
            total += v[i];
        }
        if (total > 0.0) {
            for (double& x : v) x /= total;
        } else {
            std::fill(used.begin(), used.end(), false);
            if (!s.quotes.empty()) {
                w.warnings.push_back("VIX " + std::to_string(s.days) + "d: all vegas vanish; options excluded");
            }
        }
        w.gamma.push_back(std::move(v));
        w.used.push_back(std::move(used));
    }
    return w;
}

struct SpxCell {
    int days = 0;
    double strike = 0.0;
    OptionKind kind = OptionKind::call;
    double market_iv = 0.0;
    double model_iv = std::numeric_limits<double>::quiet_NaN();
    double model_price = std::numeric_limits<double>::quiet_NaN();
    double model_stderr = std::numeric_limits<double>::quiet_NaN();
    double score = std::numeric_limits<double>::quiet_NaN();
    bool dropped = false;
};

struct SpxLoss {
    double value = 0.0;
    double penalty = 0.0;  // part of `value` due to dropped cells
    std::size_t dropped = 0;
    std::vector<SpxCell> cells;
};

// `model_ivs` runs over the chain's quotes in order; NaN marks a cell whose
// model IV could not be inverted.
inline SpxLoss spx_loss_from_ivs(const OptionChain& market, std::span<const double> model_ivs, double weight) {
    if (model_ivs.size() != market.n_quotes()) throw InputError("spx_loss: one model IV per quote expected");
    SpxLoss out;
    std::size_t k = 0, n_cells = 0, n_slices = 0;
    double sum_slices = 0.0;
    for (const auto& s : market.slices) {
        double acc = 0.0;
        std::size_t kept = 0;
        for (const auto& q : s.quotes) {
            SpxCell c;
            c.days = s.days;
            c.strike = q.strike;
            c.kind = q.kind;
            c.market_iv = q.mid_iv;
            c.model_iv = model_ivs[k++];
            if (std::isfinite(c.model_iv)) {
                c.score = score(c.model_iv, c.market_iv);
                acc += c.score;
                ++kept;
            } else {
                c.dropped = true;
                ++out.dropped;
            }
            ++n_cells;
            out.cells.push_back(c);
        }
        if (kept > 0) {
            sum_slices += acc / static_cast<double>(kept);
            ++n_slices;
        }
    }
    if (n_slices > 0) out.value = weight * sum_slices / static_cast<double>(n_slices);
    if (out.dropped > 0) {
        out.penalty = weight * dropped_cell_penalty * max_cell_score * static_cast<double>(out.dropped) /
                      static_cast<double>(n_cells);
        out.value += out.penalty;
    }
    return out;
}

struct VixCell {
    int days = 0;
    double strike = 0.0;
    double market_price = 0.0;
    double model_price = 0.0;
    double model_iv = std::numeric_limits<double>::quiet_NaN();
    double market_iv = std::numeric_limits<double>::quiet_NaN();
    double gamma = 0.0;
    double score = 0.0;
    bool used = false;
};

struct VixFutureCell {
    int days = 0;
    double market = 0.0;
    double model = 0.0;
    double score = 0.0;
};

struct VixLoss {
    double value = 0.0;
    double future_term = 0.0;
    double option_term = 0.0;
    std::vector<VixFutureCell> futures;
    std::vector<VixCell> cells;
};

// Model futures per slice and model call prices per slice and quote, in the
// chain's order.
inline VixLoss vix_loss_from_prices(const VixChain& market, const VegaWeights& vw,
                                    std::span<const double> model_futures,
                                    std::span<const std::vector<double>> model_calls, const LossWeights& w) {
    const std::size_t nt = market.slices.size();
    if (model_futures.size() != nt || model_calls.size() != nt || vw.gamma.size() != nt) {
        throw InputError("vix_loss: one model future, call list and weight list per maturity expected");
    }
    VixLoss out;
    if (nt == 0) return out;
    double fut = 0.0, opt = 0.0;
    for (std::size_t m = 0; m < nt; ++m) {
        const auto& s = market.slices[m];
        if (model_calls[m].size() != s.quotes.size()) throw InputError("vix_loss: one model call per quote expected");
        VixFutureCell f{s.days, s.future, model_futures[m], score(model_futures[m], s.future)};
        fut += f.score;
        out.futures.push_back(f);
        std::size_t n_used = 0;
        for (bool u : vw.used[m]) n_used += u;
        double acc = 0.0;
        for (std::size_t i = 0; i < s.quotes.size(); ++i) {
            VixCell c;
            c.days = s.days;
            c.strike = s.quotes[i].strike;
            c.market_price = s.quotes[i].mid;
            c.market_iv = s.quotes[i].mid_iv;
            c.model_price = model_calls[m][i];
            c.gamma = vw.gamma[m][i];
            c.used = vw.used[m][i];
            if (c.used) {
                c.score = score(c.model_price, c.market_price);
                acc += c.gamma * c.score;
            }
            out.cells.push_back(c);
        }
        if (n_used > 0) opt += acc / static_cast<double>(n_used);
    }
    out.future_term = w.future * fut / static_cast<double>(nt);
    out.option_term = w.vix * opt / static_cast<double>(nt);
    out.value = out.future_term + out.option_term;
    return out;
}

}  // namespace pdv
