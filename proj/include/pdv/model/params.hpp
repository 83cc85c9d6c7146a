#pragma once

// Parameters and state of the four-factor path-dependent volatility model
//
//   sigma = beta_0 + beta_1 R1 + beta_2 sqrt(R2) + beta_12 R1^2 1{R1 > 0},
//   Rn    = (1 - theta_n) R_{n,0} + theta_n R_{n,1},
//
// where R_{n,p} is an exponentially weighted average (rate lambda_{n,p}) of
// past returns (n = 1) or squared returns (n = 2).

#include <array>
#include <cmath>
#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "pdv/error.hpp"

namespace pdv {

inline constexpr std::size_t n_params = 10;

// Canonical order of the parameter vector; every serialization uses it.
inline constexpr std::array<std::string_view, n_params> param_names = {
    "lambda_10", "lambda_11", "theta_1", "lambda_20", "lambda_21",
    "theta_2",   "beta_0",    "beta_1",  "beta_2",    "beta_12"};

struct ModelParams {
    double lambda_10 = 0.0;
    double lambda_11 = 0.0;
    double theta_1 = 0.0;
    double lambda_20 = 0.0;
    double lambda_21 = 0.0;
    double theta_2 = 0.0;
    double beta_0 = 0.0;
    double beta_1 = 0.0;
    double beta_2 = 0.0;
    double beta_12 = 0.0;

    std::array<double, n_params> to_array() const {
        return {lambda_10, lambda_11, theta_1, lambda_20, lambda_21,
                theta_2,   beta_0,    beta_1,  beta_2,    beta_12};
    }

    static ModelParams from_array(const std::array<double, n_params>& a) {
        return {a[0], a[1], a[2], a[3], a[4], a[5], a[6], a[7], a[8], a[9]};
    }

    double lambda(int n, int p) const {
        if (n == 1) return p == 0 ? lambda_10 : lambda_11;
        return p == 0 ? lambda_20 : lambda_21;
    }
    double theta(int n) const { return n == 1 ? theta_1 : theta_2; }

    friend bool operator==(const ModelParams&, const ModelParams&) = default;
};

struct FactorState {
    double r_10 = 0.0;
    double r_11 = 0.0;
    double r_20 = 0.0;
    double r_21 = 0.0;

    std::array<double, 4> to_array() const { return {r_10, r_11, r_20, r_21}; }
    static FactorState from_array(const std::array<double, 4>& a) { return {a[0], a[1], a[2], a[3]}; }

    friend bool operator==(const FactorState&, const FactorState&) = default;
};

inline bool is_valid(const FactorState& s) {
    return std::isfinite(s.r_10) && std::isfinite(s.r_11) && std::isfinite(s.r_20) &&
           std::isfinite(s.r_21) && s.r_20 >= 0.0 && s.r_21 >= 0.0;
}

inline void require_valid(const FactorState& s) {
    if (!is_valid(s)) {
        throw InputError("factor state must be finite with r_20, r_21 >= 0");
    }
}

// Mean-reversion weight of the n-th kernel.
inline double lambda_bar(const ModelParams& p, int n) {
    const double th = p.theta(n);
    return (1.0 - th) * p.lambda(n, 0) + th * p.lambda(n, 1);
}

// Structural invariants of a parameter vector (ordering of the rates, mixing
// weights in [0,1], sign constraints on the betas).
inline std::vector<std::string> structural_violations(const ModelParams& p) {
    std::vector<std::string> out;
    const auto a = p.to_array();
    for (std::size_t i = 0; i < n_params; ++i) {
        if (!std::isfinite(a[i])) out.push_back(std::string(param_names[i]) + " is not finite");
    }
    if (!(p.lambda_10 > p.lambda_11 && p.lambda_11 > 0.0)) out.emplace_back("need lambda_10 > lambda_11 > 0");
    if (!(p.lambda_20 > p.lambda_21 && p.lambda_21 > 0.0)) out.emplace_back("need lambda_20 > lambda_21 > 0");
    if (!(p.theta_1 >= 0.0 && p.theta_1 <= 1.0)) out.emplace_back("theta_1 outside [0,1]");
    if (!(p.theta_2 >= 0.0 && p.theta_2 <= 1.0)) out.emplace_back("theta_2 outside [0,1]");
    if (!(p.beta_1 < 0.0)) out.emplace_back("beta_1 must be negative");
    if (!(p.beta_12 >= 0.0)) out.emplace_back("beta_12 must be nonnegative");
    return out;
}

// Vol-of-vol cap used when sampling training configurations.
inline constexpr double max_vol_of_vol = 10.0;

inline bool is_admissible(const ModelParams& p) {
    return structural_violations(p).empty() && std::abs(p.beta_1) * lambda_bar(p, 1) <= max_vol_of_vol;
}

// Relabels the two exponentials of each kernel so lambda_{n,0} is the larger
// rate. Kernels, factors and sigma are unchanged because the matching state
// components are swapped together with the rates.
inline void canonical_order(ModelParams& p, FactorState& s) {
    if (p.lambda_11 > p.lambda_10) {
        std::swap(p.lambda_10, p.lambda_11);
        std::swap(s.r_10, s.r_11);
        p.theta_1 = 1.0 - p.theta_1;
    }
    if (p.lambda_21 > p.lambda_20) {
        std::swap(p.lambda_20, p.lambda_21);
        std::swap(s.r_20, s.r_21);
        p.theta_2 = 1.0 - p.theta_2;
    }
}

struct Interval {
    double lo = 0.0;
    double hi = 0.0;
    double width() const { return hi - lo; }
    bool contains(double x) const { return x >= lo && x <= hi; }
    friend bool operator==(const Interval&, const Interval&) = default;
};

struct ParamBounds {
    std::array<Interval, n_params> box;

    // Training box of the VIX surrogate. beta_1 < 0 and beta_2 < 1 are open on
    // the right in continuous sampling; here the endpoints are kept closed.
    static ParamBounds defaults() {
        ParamBounds b;
        b.box = {Interval{1.0, 100.0}, Interval{1.0, 100.0}, Interval{0.0, 1.0},
                 Interval{1.0, 100.0}, Interval{1.0, 100.0}, Interval{0.0, 1.0},
                 Interval{0.0, 0.2},   Interval{-0.25, 0.0}, Interval{0.0, 1.0},
                 Interval{0.0, 0.3}};
        return b;
    }

    static ParamBounds point(const ModelParams& p) {
        ParamBounds b;
        const auto a = p.to_array();
        for (std::size_t i = 0; i < n_params; ++i) b.box[i] = {a[i], a[i]};
        return b;
    }

    bool contains(const ModelParams& p) const {
        const auto a = p.to_array();
        for (std::size_t i = 0; i < n_params; ++i) {
            if (!box[i].contains(a[i])) return false;
        }
        return true;
    }

    void validate() const {
        for (std::size_t i = 0; i < n_params; ++i) {
            if (!(box[i].lo <= box[i].hi) || !std::isfinite(box[i].lo) || !std::isfinite(box[i].hi)) {
                throw InputError("invalid bounds for " + std::string(param_names[i]));
            }
        }
    }

    friend bool operator==(const ParamBounds&, const ParamBounds&) = default;
};

// Parameter sets quoted in the literature on this model.
namespace reference_params {

// Smile-calibrated set used for the beta_12 impact study; beta_12 left at 0.
inline ModelParams beta12_study() {
    return {62.11, 32.25, 0.23, 9.57, 3.51, 0.99, 0.026, -0.138, 0.69, 0.0};
}
inline FactorState beta12_study_state() { return {0.2988, 0.2397, 0.016, 0.02}; }

// SPX-surface fit, 2021-06-03.
inline ModelParams spx_surface_2021_06_03() {
    return {34.39, 13.26, 0.501, 95.63, 1.428, 0.448, 0.0493, -0.1999, 0.5479, 0.2285};
}
inline FactorState spx_surface_2021_06_03_state() { return {0.0894, -0.1602, 0.0031, 0.0476}; }

// SPX-surface fit, 2023-10-25.
inline ModelParams spx_surface_2023_10_25() {
    return {53.03, 6.031, 0.685, 12.03, 8.325, 0.2876, 0.0381, -0.1483, 0.7097, 0.1671};
}
inline FactorState spx_surface_2023_10_25_state() { return {-1.2054, -0.2428, 0.0178, 0.0166}; }

// Joint SPX/VIX fits on two consecutive days.
inline ModelParams joint_2021_06_02() {
    return {44.42, 33.19, 0.398, 4.311, 3.254, 0.72, 0.0254, -0.1602, 0.6922, 0.1639};
}
inline FactorState joint_2021_06_02_state() { return {0.2689, 0.2375, 0.0249, 0.02491}; }

inline ModelParams joint_2021_06_03() {
    return {42.78, 31.51, 0.389, 3.694, 3.693, 0.698, 0.0264, -0.1665, 0.6829, 0.1628};
}
inline FactorState joint_2021_06_03_state() { return {0.0669, 0.0916, 0.02197, 0.02725}; }

// Realistic set used to compare network and nested estimator smiles.
inline ModelParams surrogate_check() {
    return {29.0, 20.0, 0.69, 81.0, 66.0, 0.25, 0.11, -0.057, 0.1, 0.256};
}

}  // namespace reference_params

// JSON: flat object keyed by parameter name; bounds map name -> [lo, hi].

inline nlohmann::json to_json(const ModelParams& p) {
    nlohmann::json j = nlohmann::json::object();
    const auto a = p.to_array();
    for (std::size_t i = 0; i < n_params; ++i) j[std::string(param_names[i])] = a[i];
    return j;
}

inline ModelParams params_from_json(const nlohmann::json& j) {
    if (!j.is_object()) throw InputError("model parameters must be a JSON object");
    std::array<double, n_params> a{};
    for (std::size_t i = 0; i < n_params; ++i) {
        const std::string key(param_names[i]);
        if (!j.contains(key) || !j.at(key).is_number()) {
            throw InputError("model parameters: missing or non-numeric field '" + key + "'");
        }
        a[i] = j.at(key).get<double>();
    }
    for (const auto& [key, _] : j.items()) {
        bool known = false;
        for (auto n : param_names) known = known || key == n;
        if (!known) throw InputError("model parameters: unknown field '" + key + "'");
    }
    return ModelParams::from_array(a);
}

inline nlohmann::json to_json(const FactorState& s) {
    return {{"R10", s.r_10}, {"R11", s.r_11}, {"R20", s.r_20}, {"R21", s.r_21}};
}

inline FactorState state_from_json(const nlohmann::json& j) {
    try {
        FactorState s{j.at("R10").get<double>(), j.at("R11").get<double>(), j.at("R20").get<double>(),
                      j.at("R21").get<double>()};
        require_valid(s);
        return s;
    } catch (const nlohmann::json::exception& e) {
        throw InputError(std::string("factor state: ") + e.what());
    }
}

inline nlohmann::json to_json(const ParamBounds& b) {
    nlohmann::json j = nlohmann::json::object();
    for (std::size_t i = 0; i < n_params; ++i) {
        j[std::string(param_names[i])] = {b.box[i].lo, b.box[i].hi};
    }
    return j;
}

inline ParamBounds bounds_from_json(const nlohmann::json& j) {
    if (!j.is_object()) throw InputError("bounds must be a JSON object");
    ParamBounds b;
    for (std::size_t i = 0; i < n_params; ++i) {
        const std::string key(param_names[i]);
        if (!j.contains(key)) throw InputError("bounds: missing '" + key + "'");
        const auto& v = j.at(key);
        if (!v.is_array() || v.size() != 2 || !v[0].is_number() || !v[1].is_number()) {
            throw InputError("bounds: '" + key + "' must be [lo, hi]");
        }
        b.box[i] = {v[0].get<double>(), v[1].get<double>()};
    }
    b.validate();
    return b;
}

}  // namespace pdv
