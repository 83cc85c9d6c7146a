#pragma once

// Initial factor values from past daily returns:
//
//   R_{n,p} = sum_{k=1}^{cutoff} lambda_{n,p} exp(-lambda_{n,p} k / 252) (ret_{-k})^n
//
// ret_{-1} is the most recent return. Returns are used as given (simple) or
// converted to log returns.

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "pdv/error.hpp"
#include "pdv/model/params.hpp"

namespace pdv {

enum class ReturnConvention { simple, log };

struct HistoryInit {
    std::size_t cutoff_days = 1000;
    ReturnConvention convention = ReturnConvention::simple;
};

// `returns` is oldest first.
inline FactorState init_factors_from_history(const ModelParams& p, std::span<const double> returns,
                                             const HistoryInit& cfg = {},
                                             std::vector<std::string>* warnings = nullptr) {
    if (returns.empty()) throw InputError("init_factors_from_history: empty return series");
    if (cfg.cutoff_days < 1) throw InputError("init_factors_from_history: cutoff must be >= 1 day");
    std::size_t n = cfg.cutoff_days;
    if (returns.size() < n) {
        if (warnings) {
            warnings->push_back("return history has " + std::to_string(returns.size()) + " days, shorter than the " +
                                std::to_string(cfg.cutoff_days) + "-day cutoff; using all of it");
        }
        n = returns.size();
    }
    auto term = [&](double lambda, int power) {
        double acc = 0.0;
        for (std::size_t k = 1; k <= n; ++k) {
            double r = returns[returns.size() - k];
            if (cfg.convention == ReturnConvention::log) r = std::log1p(r);
            acc += lambda * std::exp(-lambda * static_cast<double>(k) / 252.0) * (power == 1 ? r : r * r);
        }
        return acc;
    };
    return {term(p.lambda_10, 1), term(p.lambda_11, 1), term(p.lambda_20, 2), term(p.lambda_21, 2)};
}

}  // namespace pdv
