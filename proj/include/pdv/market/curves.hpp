#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "pdv/error.hpp"

namespace pdv {

// Right-continuous step function: value[i] applies on [times[i], times[i+1]).
// The first breakpoint is 0 and the last value extends to infinity.
class PiecewiseConstantCurve {
public:
    PiecewiseConstantCurve() : times_{0.0}, values_{0.0} {}

    static PiecewiseConstantCurve flat(double v) { return PiecewiseConstantCurve({0.0}, {v}); }

    PiecewiseConstantCurve(std::vector<double> times, std::vector<double> values)
        : times_(std::move(times)), values_(std::move(values)) {
        if (times_.empty() || times_.size() != values_.size()) {
            throw InputError("curve needs matching, nonempty breakpoint and value lists");
        }
        if (times_.front() != 0.0) throw InputError("curve must start at t = 0");
        for (std::size_t i = 1; i < times_.size(); ++i) {
            if (!(times_[i] > times_[i - 1])) throw InputError("curve breakpoints must be strictly increasing");
        }
        for (double v : values_) {
            if (!std::isfinite(v)) throw InputError("curve values must be finite");
        }
    }

    double value_at(double t) const {
        const auto it = std::upper_bound(times_.begin(), times_.end(), t);
        const auto i = static_cast<std::size_t>(std::max<std::ptrdiff_t>(0, (it - times_.begin()) - 1));
        return values_[i];
    }

    // Integral of the curve over [a, b], a <= b.
    double integral(double a, double b) const {
        if (b <= a) return 0.0;
        double total = 0.0;
        for (std::size_t i = 0; i < times_.size(); ++i) {
            const double lo = std::max(a, times_[i]);
            const double hi = i + 1 < times_.size() ? std::min(b, times_[i + 1]) : b;
            if (hi > lo) total += values_[i] * (hi - lo);
        }
        return total;
    }

    double integral(double t) const { return integral(0.0, t); }

    const std::vector<double>& times() const { return times_; }
    const std::vector<double>& values() const { return values_; }

    friend bool operator==(const PiecewiseConstantCurve&, const PiecewiseConstantCurve&) = default;

private:
    std::vector<double> times_;
    std::vector<double> values_;
};

struct Curves {
    PiecewiseConstantCurve rate;
    PiecewiseConstantCurve dividend;

    double discount(double t) const { return std::exp(-rate.integral(t)); }
    double growth(double t) const { return std::exp(rate.integral(t) - dividend.integral(t)); }
    double forward(double spot, double t) const { return spot * growth(t); }
};

}  // namespace pdv
