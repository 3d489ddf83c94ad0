#pragma once

// Characteristic tracing of the time-scaled field c0 = c / <c, grad T0>.
// Integration runs in the T0 clock directly, so forward curves satisfy
// T0(xi(t,s)) = t by construction; a Newton projection onto the current
// level set removes the residual drift whenever it exceeds a tenth of the
// time tolerance.

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "moc2d/errors.hpp"
#include "moc2d/fields.hpp"
#include "moc2d/geometry.hpp"
#include "moc2d/vec2.hpp"

namespace moc2d {

enum class IntegratorMethod { Rk4Fixed, Rk45Adaptive };

struct IntegratorConfig {
    IntegratorMethod method = IntegratorMethod::Rk4Fixed;
    double dt = 1e-3;        // base step in T0 units
    double time_tol = 1e-6;  // tau_time: |T0(xi(t)) - t| tolerance
    double eps_stop = kDefaultStopCollar;
    long max_steps = 2000000;
    double rk45_tol = 1e-10;  // local error target for the adaptive method
    double fd_delta = 1e-4;   // finite-difference step for det D xi
};

struct CharSample {
    double t;  // clock value: T0 for forward curves, backward time for backward
    Vec2 p;
};

enum class TraceDirection { Forward, Backward };

/// A traced characteristic with its boundary anchor.
struct CharCurve {
    std::vector<CharSample> samples;
    TraceDirection direction = TraceDirection::Forward;
    double anchor_s = 0.0;  // boundary parameter (forward curves)
    Vec2 anchor_x{};        // interior seed (backward curves)

    const Vec2& end() const { return samples.back().p; }
    double end_time() const { return samples.back().t; }

    double arc_length() const {
        double len = 0.0;
        for (size_t i = 1; i < samples.size(); ++i) {
            len += distance(samples[i - 1].p, samples[i].p);
        }
        return len;
    }

    void write_csv(std::ostream& os) const {
        CsvWriter csv(os);
        csv.header({"t", "x", "y"});
        for (const auto& s : samples) csv.cell(s.t).cell(s.p.x).cell(s.p.y).end_row();
    }
};

namespace detail {

struct Tracer {
    const TimeFunction& tf;
    const std::function<Vec2(Vec2)>& c;
    const IntegratorConfig& cfg;
    double sign;  // +1 forward, -1 backward

    // Targets are gated at 1 - eps_stop, but RK stages overshoot the last
    // level slightly; evaluations get a quarter-collar halo.
    double eval_collar() const { return 0.25 * cfg.eps_stop; }

    Vec2 velocity(Vec2 p) const {
        Vec2 cx, g;
        try {
            cx = c(p);
            g = grad_transformed_time(tf, p, eval_collar());
        } catch (const DomainMembershipError& e) {
            throw GeometryInconsistencyError(std::string("characteristic left the domain: ") +
                                             e.what());
        }
        const double denom = dot(cx, g);
        if (!(denom > 0.0)) {
            throw CausalityViolationError("nonpositive <c, grad T0> along characteristic");
        }
        return cx * (sign / denom);
    }

    Vec2 rk4_step(Vec2 p, double h) const {
        const Vec2 k1 = velocity(p);
        const Vec2 k2 = velocity(p + k1 * (h / 2));
        const Vec2 k3 = velocity(p + k2 * (h / 2));
        const Vec2 k4 = velocity(p + k3 * h);
        return p + (k1 + 2.0 * k2 + 2.0 * k3 + k4) * (h / 6.0);
    }

    // Cash-Karp embedded pair; returns the 5th-order step and error estimate.
    Vec2 rk45_step(Vec2 p, double h, double& err) const {
        const Vec2 k1 = velocity(p);
        const Vec2 k2 = velocity(p + h * (0.2 * k1));
        const Vec2 k3 = velocity(p + h * (0.075 * k1 + 0.225 * k2));
        const Vec2 k4 = velocity(p + h * (0.3 * k1 - 0.9 * k2 + 1.2 * k3));
        const Vec2 k5 =
            velocity(p + h * ((-11.0 / 54) * k1 + 2.5 * k2 - (70.0 / 27) * k3 + (35.0 / 27) * k4));
        const Vec2 k6 = velocity(p + h * ((1631.0 / 55296) * k1 + (175.0 / 512) * k2 +
                                          (575.0 / 13824) * k3 + (44275.0 / 110592) * k4 +
                                          (253.0 / 4096) * k5));
        const Vec2 y5 = p + h * ((37.0 / 378) * k1 + (250.0 / 621) * k3 + (125.0 / 594) * k4 +
                                 (512.0 / 1771) * k6);
        const Vec2 y4 = p + h * ((2825.0 / 27648) * k1 + (18575.0 / 48384) * k3 +
                                 (13525.0 / 55296) * k4 + (277.0 / 14336) * k5 + 0.25 * k6);
        err = (y5 - y4).norm();
        return y5;
    }

    /// Newton projection of p onto the level set {T0 = target}. Grid-sampled
    /// time functions have kinked interpolants, so steps are damped whenever
    /// they fail to make progress.
    Vec2 project_to_level(Vec2 p, double target) const {
        double drift = transformed_time(tf, p) - target;
        for (int it = 0; it < 10 && std::abs(drift) > cfg.time_tol / 10.0; ++it) {
            const Vec2 g = grad_transformed_time(tf, p, eval_collar());
            const double g2 = g.norm_sq();
            if (!(g2 > 0.0)) break;
            double step_scale = 1.0;
            // Interpolated surfaces have near-flat plateaus; cap the Newton
            // step at a few nodes so a tiny gradient cannot fling the point.
            if (tf.grid_spacing > 0.0) {
                const double len = std::abs(drift) / std::sqrt(g2);
                const double cap = 4.0 * tf.grid_spacing;
                if (len > cap) step_scale = cap / len;
            }
            for (int damp = 0; damp < 4; ++damp) {
                const Vec2 cand = p + g * (step_scale * (-drift) / g2);
                const double cand_drift = transformed_time(tf, cand) - target;
                if (std::abs(cand_drift) < std::abs(drift)) {
                    p = cand;
                    drift = cand_drift;
                    break;
                }
                step_scale *= 0.5;
            }
        }
        return p;
    }

    /// Enforce |T0(p) - target| <= time_tol, projecting only when drift
    /// exceeds a tenth of the tolerance so clean integrators run untouched.
    Vec2 enforce_clock(Vec2 p, double target) const {
        double drift = transformed_time(tf, p) - target;
        if (std::abs(drift) > cfg.time_tol / 10.0) {
            p = project_to_level(p, target);
            drift = transformed_time(tf, p) - target;
        }
        if (std::abs(drift) > cfg.time_tol) {
            throw IntegrationFailureError("clock drift " + std::to_string(drift) +
                                          " exceeds the time tolerance after projection");
        }
        return p;
    }
};

}  // namespace detail

/// Forward characteristic from gamma(s): xi' = c0 o xi, xi(0) = gamma(s),
/// traced to t_max <= 1 - eps_stop. Samples carry T0 values as times.
inline CharCurve trace_forward(const DomainSpec& dom, const LinearTransportField& c, double s,
                               double t_max, const IntegratorConfig& cfg) {
    if (t_max > 1.0 - cfg.eps_stop + 1e-15) {
        throw StopSetProximityError("t_max = " + std::to_string(t_max) +
                                    " reaches into the stop collar");
    }
    detail::Tracer tracer{dom.time, c.eval, cfg, +1.0};
    CharCurve curve;
    curve.direction = TraceDirection::Forward;
    curve.anchor_s = s;
    Vec2 p = dom.boundary.param(s);
    curve.samples.push_back({0.0, p});
    double t = 0.0;
    long steps = 0;
    if (cfg.method == IntegratorMethod::Rk4Fixed) {
        while (t < t_max - 1e-15) {
            const double h = std::min(cfg.dt, t_max - t);
            p = tracer.rk4_step(p, h);
            t += h;
            p = tracer.enforce_clock(p, t);
            curve.samples.push_back({t, p});
            if (++steps > cfg.max_steps) {
                throw IntegrationFailureError("forward trace exceeded the step budget");
            }
        }
    } else {
        double h = cfg.dt;
        while (t < t_max - 1e-15) {
            h = std::min(h, t_max - t);
            double err = 0.0;
            const Vec2 cand = tracer.rk45_step(p, h, err);
            const double tol = cfg.rk45_tol * std::max(1.0, h / cfg.dt);
            if (err <= tol || h <= 1e-12) {
                t += h;
                p = tracer.enforce_clock(cand, t);
                curve.samples.push_back({t, p});
                const double grow = err > 0 ? 0.9 * std::pow(tol / err, 0.2) : 2.0;
                h *= std::clamp(grow, 0.2, 2.0);
            } else {
                h *= std::max(0.2, 0.9 * std::pow(tol / err, 0.25));
            }
            if (++steps > cfg.max_steps) {
                throw IntegrationFailureError("adaptive forward trace exceeded the step budget");
            }
        }
    }
    return curve;
}

/// Backward characteristic from x: eta' = -c0 o eta, eta(0) = x, traced for
/// backward time T0(x) and then projected onto the boundary. Sample times are
/// backward time tau, so T0(eta(tau)) = T0(x) - tau.
inline CharCurve trace_backward(const DomainSpec& dom, const LinearTransportField& c, Vec2 x,
                                const IntegratorConfig& cfg) {
    const double total = transformed_time(dom.time, x);
    if (total > 1.0 - cfg.eps_stop + 1e-15) {
        throw StopSetProximityError("backward trace seeded inside the stop collar");
    }
    CharCurve curve;
    curve.direction = TraceDirection::Backward;
    curve.anchor_x = x;
    curve.samples.push_back({0.0, x});
    if (total <= cfg.time_tol) return curve;  // already on the boundary

    detail::Tracer tracer{dom.time, c.eval, cfg, -1.0};
    Vec2 p = x;
    double tau = 0.0;
    long steps = 0;
    if (cfg.method == IntegratorMethod::Rk4Fixed) {
        while (tau < total - 1e-15) {
            const double h = std::min(cfg.dt, total - tau);
            p = tracer.rk4_step(p, h);
            tau += h;
            p = tracer.enforce_clock(p, total - tau);
            curve.samples.push_back({tau, p});
            if (++steps > cfg.max_steps) {
                throw IntegrationFailureError("backward trace exceeded the step budget");
            }
        }
    } else {
        double h = cfg.dt;
        while (tau < total - 1e-15) {
            h = std::min(h, total - tau);
            double err = 0.0;
            const Vec2 cand = tracer.rk45_step(p, h, err);
            const double tol = cfg.rk45_tol * std::max(1.0, h / cfg.dt);
            if (err <= tol || h <= 1e-12) {
                tau += h;
                p = tracer.enforce_clock(cand, total - tau);
                curve.samples.push_back({tau, p});
                const double grow = err > 0 ? 0.9 * std::pow(tol / err, 0.2) : 2.0;
                h *= std::clamp(grow, 0.2, 2.0);
            } else {
                h *= std::max(0.2, 0.9 * std::pow(tol / err, 0.25));
            }
            if (++steps > cfg.max_steps) {
                throw IntegrationFailureError("adaptive backward trace exceeded the step budget");
            }
        }
    }
    // Land exactly on the start level T0 = 0.
    curve.samples.back().p = tracer.project_to_level(curve.samples.back().p, 0.0);
    return curve;
}

/// Parameter of the closest boundary point to p. p must lie within max_dist
/// of the boundary; the match is refined to machine precision.
inline double boundary_parameter_of(const BoundaryCurve& curve, Vec2 p, double max_dist) {
    double s_best;
    if (curve.project) {
        s_best = curve.wrap(curve.project(p));
    } else {
        const int n = 1024;
        const double len = curve.period();
        double d_best = std::numeric_limits<double>::infinity();
        s_best = curve.period_begin;
        for (int k = 0; k < n; ++k) {
            const double s = curve.period_begin + len * k / n;
            const double d = (curve.param(s) - p).norm_sq();
            if (d < d_best) {
                d_best = d;
                s_best = s;
            }
        }
        // Golden-section refinement on the squared distance around the best
        // coarse sample.
        double a = s_best - len / n, b = s_best + len / n;
        const double gr = 0.5 * (std::sqrt(5.0) - 1.0);
        double x1 = b - gr * (b - a), x2 = a + gr * (b - a);
        double f1 = (curve.param(x1) - p).norm_sq();
        double f2 = (curve.param(x2) - p).norm_sq();
        for (int it = 0; it < 80 && (b - a) > 1e-15 * len; ++it) {
            if (f1 < f2) {
                b = x2;
                x2 = x1;
                f2 = f1;
                x1 = b - gr * (b - a);
                f1 = (curve.param(x1) - p).norm_sq();
            } else {
                a = x1;
                x1 = x2;
                f1 = f2;
                x2 = a + gr * (b - a);
                f2 = (curve.param(x2) - p).norm_sq();
            }
        }
        s_best = curve.wrap(0.5 * (a + b));
    }
    const double dist = (curve.param(s_best) - p).norm();
    if (dist > max_dist) {
        throw GeometryInconsistencyError("point is " + std::to_string(dist) +
                                         " away from the boundary (allowed " +
                                         std::to_string(max_dist) + ")");
    }
    return s_best;
}

/// Signed determinant of D xi(t,s) by central finite differences of the
/// forward flow (one-sided in t at the ends of the admissible range).
inline double jacobian_determinant_signed(const DomainSpec& dom, const LinearTransportField& c,
                                          double t, double s, const IntegratorConfig& cfg) {
    const double d = cfg.fd_delta;
    const double t_hi = std::min(t + d, 1.0 - cfg.eps_stop);
    const double t_lo = std::max(t - d, 0.0);
    const Vec2 xt_hi = trace_forward(dom, c, s, t_hi, cfg).end();
    const Vec2 xt_lo = trace_forward(dom, c, s, t_lo, cfg).end();
    const Vec2 dxi_dt = (xt_hi - xt_lo) / (t_hi - t_lo);
    const Vec2 xs_hi = trace_forward(dom, c, s + d, t, cfg).end();
    const Vec2 xs_lo = trace_forward(dom, c, s - d, t, cfg).end();
    const Vec2 dxi_ds = (xs_hi - xs_lo) / (2.0 * d);
    return cross(dxi_dt, dxi_ds);
}

/// |det D xi(t,s)|; throws when the estimate is not strictly positive, which
/// signals crossing characteristics (beta or regularity violation).
inline double jacobian_determinant(const DomainSpec& dom, const LinearTransportField& c,
                                   double t, double s, const IntegratorConfig& cfg) {
    const double det = jacobian_determinant_signed(dom, c, t, s, cfg);
    const double mag = std::abs(det);
    if (!(mag > 1e-14)) {
        throw CharacteristicCrossingError("vanishing characteristic Jacobian at t = " +
                                          std::to_string(t) + ", s = " + std::to_string(s));
    }
    return mag;
}

}  // namespace moc2d
