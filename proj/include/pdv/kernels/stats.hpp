#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

#include "pdv/error.hpp"

namespace pdv {

// All reductions below run left to right over the input; callers that
// parallelize store per-item values first so the sum order never depends on
// the thread count.

inline double mean(std::span<const double> xs) {
    if (xs.empty()) return 0.0;
    double s = 0.0;
    for (double x : xs) s += x;
    return s / static_cast<double>(xs.size());
}

inline double sample_variance(std::span<const double> xs) {
    if (xs.size() < 2) return 0.0;
    const double m = mean(xs);
    double s = 0.0;
    for (double x : xs) s += (x - m) * (x - m);
    return s / static_cast<double>(xs.size() - 1);
}

inline double standard_error(std::span<const double> xs) {
    if (xs.size() < 2) return 0.0;
    return std::sqrt(sample_variance(xs) / static_cast<double>(xs.size()));
}

struct MeanEstimate {
    double mean = 0.0;
    double stderr_ = 0.0;
};

inline MeanEstimate estimate_mean(std::span<const double> xs) {
    return {mean(xs), standard_error(xs)};
}

// Mean of antithetic samples laid out as (x0, x0', x1, x1', ...). The standard
// error is computed on pair averages, which are the independent draws.
inline MeanEstimate estimate_mean_antithetic(std::span<const double> xs) {
    if (xs.size() % 2 != 0) throw InputError("antithetic sample count must be even");
    std::vector<double> pairs(xs.size() / 2);
    for (std::size_t i = 0; i < pairs.size(); ++i) pairs[i] = 0.5 * (xs[2 * i] + xs[2 * i + 1]);
    return {mean(xs), standard_error(pairs)};
}

// Left Riemann sum of equally spaced samples.
inline double left_riemann(std::span<const double> values, double step) {
    double s = 0.0;
    for (double v : values) s += v;
    return s * step;
}

// sum_{k=1}^{n} ratio^k.
inline double geometric_sum(double ratio, std::size_t n) {
    if (ratio == 1.0) return static_cast<double>(n);
    return ratio * (1.0 - std::pow(ratio, static_cast<double>(n))) / (1.0 - ratio);
}

struct Histogram {
    std::vector<double> edges;
    std::vector<std::size_t> counts;

    std::size_t total() const {
        std::size_t t = 0;
        for (auto c : counts) t += c;
        return t;
    }
};

// Equal-width bins over [lo, hi]; values outside are clamped into the edge
// bins so the counts always add up to the sample count.
inline Histogram make_histogram(std::span<const double> xs, std::size_t n_bins, double lo, double hi) {
    if (n_bins == 0 || !(hi > lo)) throw InputError("histogram needs n_bins > 0 and hi > lo");
    Histogram h;
    h.edges.resize(n_bins + 1);
    for (std::size_t i = 0; i <= n_bins; ++i) {
        h.edges[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n_bins);
    }
    h.counts.assign(n_bins, 0);
    for (double x : xs) {
        double pos = (x - lo) / (hi - lo) * static_cast<double>(n_bins);
        auto bin = static_cast<std::ptrdiff_t>(std::floor(pos));
        bin = std::clamp<std::ptrdiff_t>(bin, 0, static_cast<std::ptrdiff_t>(n_bins) - 1);
        ++h.counts[static_cast<std::size_t>(bin)];
    }
    return h;
}

inline Histogram make_histogram(std::span<const double> xs, std::size_t n_bins) {
    if (xs.empty()) return make_histogram(xs, n_bins, 0.0, 1.0);
    const auto [mn, mx] = std::minmax_element(xs.begin(), xs.end());
    const double lo = *mn;
    const double hi = *mx > *mn ? *mx : *mn + 1.0;
    return make_histogram(xs, n_bins, lo, hi);
}

inline double quantile(std::vector<double> xs, double p) {
    if (xs.empty()) return 0.0;
    std::sort(xs.begin(), xs.end());
    const double pos = p * static_cast<double>(xs.size() - 1);
    const auto i = static_cast<std::size_t>(std::floor(pos));
    const std::size_t j = std::min(i + 1, xs.size() - 1);
    return xs[i] + (pos - static_cast<double>(i)) * (xs[j] - xs[i]);
}

}  // namespace pdv
