#pragma once

// Bound-constrained derivative-free minimization.
//
// minimize_trust_region: model-based trust region in the spirit of BOBYQA.
// 2n+1 interpolation points carry a quadratic model whose Hessian changes
// least (Frobenius norm) from one iteration to the next; the step minimizes
// the model over the box intersected with an infinity-norm trust region. The
// radius rho shrinks from rho_begin to rho_end as the model stops producing
// progress. Monte Carlo objectives jump where paths start or stop diverging,
// which can strand the model at a kink, so once rho reaches rho_end the
// search restarts around the best point for as long as restarts pay off.
//
// minimize_nelder_mead: simplex search with projection onto the box, with the
// same soft restarts.

#include <Eigen/Dense>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "pdv/error.hpp"

namespace pdv {

using ObjectiveFn = std::function<double(std::span<const double>)>;

struct OptimizerOptions {
    double rho_begin = 0.1;
    double rho_end = 1e-4;
    std::size_t max_evals = 1000;
    double time_limit = 0.0;  // seconds; 0 disables
    std::size_t max_soft_restarts = 5;
};

struct TracePoint {
    std::size_t eval = 0;
    double f = 0.0;
    double best = 0.0;
};

struct OptimResult {
    std::vector<double> x;
    double f = std::numeric_limits<double>::infinity();
    std::size_t evals = 0;
    bool budget_exhausted = false;
    std::string stop_reason;
    std::vector<TracePoint> trace;
};

namespace detail {

struct BudgetExhausted {};

// Counts evaluations, keeps the best point and the trace, and stops the run
// when the budget runs out.
class CountedObjective {
public:
    CountedObjective(const ObjectiveFn& f, const OptimizerOptions& opt)
        : f_(f), opt_(opt), start_(std::chrono::steady_clock::now()) {}

    double operator()(const Eigen::VectorXd& x) {
        if (res.evals >= opt_.max_evals) throw BudgetExhausted{};
        if (opt_.time_limit > 0.0 &&
            std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count() > opt_.time_limit) {
            throw BudgetExhausted{};
        }
        std::vector<double> xv(x.data(), x.data() + x.size());
        double v = f_(xv);
        if (std::isnan(v)) throw NumericalError("objective returned NaN");
        ++res.evals;
        if (v < res.f) {
            res.f = v;
            res.x = xv;
        }
        res.trace.push_back({res.evals, v, res.f});
        return v;
    }

    OptimResult res;

private:
    const ObjectiveFn& f_;
    OptimizerOptions opt_;
    std::chrono::steady_clock::time_point start_;
};

inline void check_bounds(std::span<const double> x0, std::span<const double> lo, std::span<const double> hi) {
    if (x0.size() != lo.size() || x0.size() != hi.size() || x0.empty()) {
        throw InputError("optimizer: x0 and bounds must have the same nonzero length");
    }
    for (std::size_t i = 0; i < x0.size(); ++i) {
        if (!(lo[i] < hi[i])) throw InputError("optimizer: every lower bound must be below its upper bound");
    }
}

// Quadratic model q(s) = c + g's + s'Hs/2 around the centre, through all
// points, whose Hessian differs least (Frobenius norm) from `h_prev`.
struct Quadratic {
    double c = 0.0;
    Eigen::VectorXd g;
    Eigen::MatrixXd H;
    double value(const Eigen::VectorXd& s) const { return c + g.dot(s) + 0.5 * s.dot(H * s); }
};

inline Quadratic fit_min_frobenius(const std::vector<Eigen::VectorXd>& pts, const std::vector<double>& fv,
                                   const Eigen::VectorXd& centre, double scale, const Eigen::MatrixXd& h_prev) {
    const auto m = static_cast<Eigen::Index>(pts.size());
    const auto n = centre.size();
    Eigen::MatrixXd S(n, m);
    for (Eigen::Index j = 0; j < m; ++j) S.col(j) = (pts[j] - centre) / scale;
    Eigen::MatrixXd K = Eigen::MatrixXd::Zero(m + n + 1, m + n + 1);
    const Eigen::MatrixXd G = S.transpose() * S;
    K.topLeftCorner(m, m) = 0.5 * G.array().square().matrix();
    K.block(0, m, m, 1).setOnes();
    K.block(m, 0, 1, m).setOnes();
    K.block(0, m + 1, m, n) = S.transpose();
    K.block(m + 1, 0, n, m) = S;
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(m + n + 1);
    for (Eigen::Index j = 0; j < m; ++j) {
        const Eigen::VectorXd y = pts[j] - centre;
        rhs(j) = fv[j] - 0.5 * y.dot(h_prev * y);
    }
    const Eigen::VectorXd sol = K.completeOrthogonalDecomposition().solve(rhs);
    Quadratic q;
    q.c = sol(m);
    q.g = sol.segment(m + 1, n) / scale;
    Eigen::MatrixXd H = Eigen::MatrixXd::Zero(n, n);
    for (Eigen::Index j = 0; j < m; ++j) H += sol(j) * S.col(j) * S.col(j).transpose();
    q.H = h_prev + H / (scale * scale);
    return q;
}

// Minimizes the model over the box [lo, hi] (offsets from the centre) by
// projected gradient steps; returns the best step found.
inline Eigen::VectorXd box_model_step(const Quadratic& q, const Eigen::VectorXd& lo, const Eigen::VectorXd& hi) {
    const auto n = q.g.size();
    const double L = std::max(q.H.norm(), 1e-12);
    Eigen::VectorXd s = Eigen::VectorXd::Zero(n);
    Eigen::VectorXd best = s;
    double best_val = q.value(s);
    // A pure gradient step to the box first: this is the answer when the model
    // is linear.
    {
        Eigen::VectorXd c(n);
        for (Eigen::Index i = 0; i < n; ++i) c(i) = q.g(i) > 0.0 ? lo(i) : (q.g(i) < 0.0 ? hi(i) : 0.0);
        const double v = q.value(c);
        if (v < best_val) {
            best_val = v;
            best = c;
        }
    }
    for (int it = 0; it < 500; ++it) {
        const Eigen::VectorXd grad = q.g + q.H * s;
        Eigen::VectorXd next = (s - grad / L).cwiseMax(lo).cwiseMin(hi);
        if ((next - s).lpNorm<Eigen::Infinity>() <= 1e-12 * std::max(1.0, hi.lpNorm<Eigen::Infinity>())) break;
        s = next;
        const double v = q.value(s);
        if (v < best_val) {
            best_val = v;
            best = s;
        }
    }
    return best;
}

}  // namespace detail

inline OptimResult minimize_trust_region(const ObjectiveFn& f, std::span<const double> x0_in,
                                         std::span<const double> lo_in, std::span<const double> hi_in,
                                         const OptimizerOptions& opt = {}) {
    detail::check_bounds(x0_in, lo_in, hi_in);
    const auto n = static_cast<Eigen::Index>(x0_in.size());
    const Eigen::VectorXd lo = Eigen::Map<const Eigen::VectorXd>(lo_in.data(), n);
    const Eigen::VectorXd hi = Eigen::Map<const Eigen::VectorXd>(hi_in.data(), n);
    const Eigen::VectorXd x0 = Eigen::Map<const Eigen::VectorXd>(x0_in.data(), n).cwiseMax(lo).cwiseMin(hi);

    const double rho_start = std::min(opt.rho_begin, 0.5 * (hi - lo).minCoeff());
    const double rho_end = std::min(opt.rho_end, rho_start);

    detail::CountedObjective obj(f, opt);
    std::size_t geometry_cursor = 0;

    // One pass from x0 down to rho_end; returns the best value it saw.
    auto pass = [&](const Eigen::VectorXd& from) {
        double rho = rho_start;
        double delta = rho;
        std::vector<Eigen::VectorXd> pts;
        std::vector<double> fv;
        std::size_t k = 0;  // index of the best point
        pts.push_back(from);
        fv.push_back(obj(from));
        for (Eigen::Index i = 0; i < n; ++i) {
            Eigen::VectorXd a = from, b = from;
            if (from(i) + rho <= hi(i)) {
                a(i) += rho;
                b(i) = from(i) - rho >= lo(i) ? from(i) - rho : from(i) + 2.0 * rho;
            } else {
                a(i) -= rho;
                b(i) -= 2.0 * rho;
            }
            for (const auto& p : {a, b}) {
                pts.push_back(p);
                fv.push_back(obj(p));
            }
        }
        k = static_cast<std::size_t>(std::min_element(fv.begin(), fv.end()) - fv.begin());

        Eigen::MatrixXd hess = Eigen::MatrixXd::Zero(n, n);
        for (;;) {
            const Eigen::VectorXd xk = pts[k];
            const detail::Quadratic q = detail::fit_min_frobenius(pts, fv, xk, rho, hess);
            hess = q.H;
            const Eigen::VectorXd slo = (lo - xk).cwiseMax(Eigen::VectorXd::Constant(n, -delta));
            const Eigen::VectorXd shi = (hi - xk).cwiseMin(Eigen::VectorXd::Constant(n, delta));
            const Eigen::VectorXd s = detail::box_model_step(q, slo, shi);
            const double predicted = q.c - q.value(s);
            const double step = s.lpNorm<Eigen::Infinity>();

            bool improved = false;
            double ratio = -1.0;
            if (step >= 0.5 * rho && predicted > 0.0) {
                const Eigen::VectorXd xn = (xk + s).cwiseMax(lo).cwiseMin(hi);
                const double fn = obj(xn);
                ratio = (fv[k] - fn) / predicted;
                if (ratio < 0.1) {
                    delta = std::max(0.5 * delta, rho);
                } else if (ratio > 0.7 && step > 0.9 * delta) {
                    delta = std::min(2.0 * delta, 10.0 * rho);
                }
                // Replace the point farthest from the better of xk and xn.
                const Eigen::VectorXd centre = fn < fv[k] ? xn : xk;
                std::size_t far = k;
                double far_d = -1.0;
                for (std::size_t j = 0; j < pts.size(); ++j) {
                    if (j == k) continue;
                    const double d = (pts[j] - centre).lpNorm<Eigen::Infinity>();
                    if (d > far_d) {
                        far_d = d;
                        far = j;
                    }
                }
                if (fn < fv[k] || (xn - xk).lpNorm<Eigen::Infinity>() < far_d) {
                    pts[far] = xn;
                    fv[far] = fn;
                }
                if (fn < fv[k]) {
                    k = far;
                    improved = true;
                }
            }
            if (improved && ratio >= 0.1) continue;

            // No useful step: fix the geometry if points have drifted away,
            // otherwise shrink rho.
            std::size_t far = k;
            double far_d = -1.0;
            for (std::size_t j = 0; j < pts.size(); ++j) {
                const double d = (pts[j] - pts[k]).lpNorm<Eigen::Infinity>();
                if (j != k && d > far_d) {
                    far_d = d;
                    far = j;
                }
            }
            if (far_d > 2.0 * rho) {
                const auto i = static_cast<Eigen::Index>(geometry_cursor++ % static_cast<std::size_t>(n));
                Eigen::VectorXd p = pts[k];
                const double sgn = (geometry_cursor / static_cast<std::size_t>(n)) % 2 == 0 ? 1.0 : -1.0;
                p(i) += sgn * rho;
                if (p(i) > hi(i) || p(i) < lo(i)) p(i) = pts[k](i) - sgn * rho;
                p = p.cwiseMax(lo).cwiseMin(hi);
                pts[far] = p;
                fv[far] = obj(p);
                if (fv[far] < fv[k]) k = far;
                continue;
            }
            if (improved) continue;
            if (rho <= rho_end) break;
            rho = std::max(rho_end, 0.1 * rho);
            delta = std::max(0.5 * delta, rho);
        }
        return fv[k];
    };

    try {
        double best = pass(x0);
        obj.res.stop_reason = "trust region radius reached rho_end";
        for (std::size_t r = 0; r < opt.max_soft_restarts; ++r) {
            const double again = pass(Eigen::Map<const Eigen::VectorXd>(obj.res.x.data(), n));
            if (!(again < best - 1e-12 * std::max(1.0, std::abs(best)))) break;
            best = again;
        }
    } catch (const detail::BudgetExhausted&) {
        obj.res.budget_exhausted = true;
        obj.res.stop_reason = "evaluation or time budget exhausted";
    }
    return obj.res;
}

inline OptimResult minimize_nelder_mead(const ObjectiveFn& f, std::span<const double> x0_in,
                                        std::span<const double> lo_in, std::span<const double> hi_in,
                                        const OptimizerOptions& opt = {}) {
    detail::check_bounds(x0_in, lo_in, hi_in);
    const auto n = static_cast<Eigen::Index>(x0_in.size());
    const Eigen::VectorXd lo = Eigen::Map<const Eigen::VectorXd>(lo_in.data(), n);
    const Eigen::VectorXd hi = Eigen::Map<const Eigen::VectorXd>(hi_in.data(), n);
    auto project = [&](const Eigen::VectorXd& x) -> Eigen::VectorXd { return x.cwiseMax(lo).cwiseMin(hi); };

    detail::CountedObjective obj(f, opt);
    // One simplex run from x0 down to rho_end; returns the best value seen.
    auto pass = [&](const Eigen::VectorXd& x0) {
        std::vector<Eigen::VectorXd> simplex;
        std::vector<double> fv;
        simplex.push_back(x0);
        for (Eigen::Index i = 0; i < n; ++i) {
            Eigen::VectorXd p = x0;
            const double step = opt.rho_begin * (hi(i) - lo(i));
            p(i) = x0(i) + step <= hi(i) ? x0(i) + step : x0(i) - step;
            simplex.push_back(project(p));
        }
        for (const auto& p : simplex) fv.push_back(obj(p));

        std::vector<std::size_t> order(simplex.size());
        for (;;) {
            std::iota(order.begin(), order.end(), std::size_t{0});
            std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return fv[a] < fv[b]; });
            const std::size_t best = order.front(), worst = order.back(), second = order[order.size() - 2];
            double size = 0.0;
            for (const auto& p : simplex) size = std::max(size, ((p - simplex[best]).array() / (hi - lo).array()).abs().maxCoeff());
            if (size <= opt.rho_end) return fv[best];
            Eigen::VectorXd centroid = Eigen::VectorXd::Zero(n);
            for (std::size_t j = 0; j < simplex.size(); ++j) {
                if (j != worst) centroid += simplex[j];
            }
            centroid /= static_cast<double>(n);
            const Eigen::VectorXd xr = project(centroid + (centroid - simplex[worst]));
            const double fr = obj(xr);
            if (fr < fv[best]) {
                const Eigen::VectorXd xe = project(centroid + 2.0 * (centroid - simplex[worst]));
                const double fe = obj(xe);
                if (fe < fr) {
                    simplex[worst] = xe;
                    fv[worst] = fe;
                } else {
                    simplex[worst] = xr;
                    fv[worst] = fr;
                }
                continue;
            }
            if (fr < fv[second]) {
                simplex[worst] = xr;
                fv[worst] = fr;
                continue;
            }
            const bool outside = fr < fv[worst];
            const Eigen::VectorXd xc = outside ? project(centroid + 0.5 * (xr - centroid))
                                               : project(centroid + 0.5 * (simplex[worst] - centroid));
            const double fc = obj(xc);
            if (fc < (outside ? fr : fv[worst])) {
                simplex[worst] = xc;
                fv[worst] = fc;
                continue;
            }
            for (std::size_t j = 0; j < simplex.size(); ++j) {
                if (j == best) continue;
                simplex[j] = project(simplex[best] + 0.5 * (simplex[j] - simplex[best]));
                fv[j] = obj(simplex[j]);
            }
        }
    };

    try {
        double best = pass(project(Eigen::Map<const Eigen::VectorXd>(x0_in.data(), n)));
        obj.res.stop_reason = "simplex size reached rho_end";
        // A collapsed simplex is often not a minimum in higher dimensions:
        // rebuild it around the best point while that keeps paying off.
        for (std::size_t r = 0; r < opt.max_soft_restarts; ++r) {
            const double again = pass(Eigen::Map<const Eigen::VectorXd>(obj.res.x.data(), n));
            if (!(again < best - 1e-12 * std::max(1.0, std::abs(best)))) break;
            best = again;
        }
    } catch (const detail::BudgetExhausted&) {
        obj.res.budget_exhausted = true;
        obj.res.stop_reason = "evaluation or time budget exhausted";
    }
    return obj.res;
}

}  // namespace pdv
