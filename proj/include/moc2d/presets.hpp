#pragma once

// Built-in analytic domains, fields, and problem bundles. The disk admits
// closed forms for every downstream oracle; the ellipse exercises the
// single-arc stop set; the causal tilt family is the concrete functionally
// causal field used by the contraction and uniqueness experiments.

#include <algorithm>
#include <cmath>
#include <memory>
#include <numbers>
#include <random>
#include <vector>

#include "moc2d/fields.hpp"
#include "moc2d/geometry.hpp"
#include "moc2d/grid_field.hpp"
#include "moc2d/quasilinear.hpp"

namespace moc2d {

inline double uniform01(std::mt19937_64& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

// ---------------------------------------------------------------------------
// Domains
// ---------------------------------------------------------------------------

/// Unit disk with T(x) = 1 - |x|^2 and the origin as stop point.
/// Closed forms: T0 = 1 - |x|^(2/q), |grad T0| = (2/q) |x|^(2/q - 1),
/// m0 = 2/q attained on the boundary (q >= 2).
inline DomainSpec make_unit_disk(double q = 4.0) {
    DomainSpec dom;
    dom.boundary.param = [](double s) { return Vec2{std::cos(s), std::sin(s)}; };
    dom.boundary.derivative = [](double s) { return Vec2{-std::sin(s), std::cos(s)}; };
    dom.boundary.period_begin = 0.0;
    dom.boundary.period_end = 2.0 * std::numbers::pi;
    dom.boundary.project = [](Vec2 p) {
        const double a = std::atan2(p.y, p.x);
        return a < 0 ? a + 2.0 * std::numbers::pi : a;
    };
    dom.time.eval = [](Vec2 p) { return 1.0 - p.norm_sq(); };
    dom.time.grad = [](Vec2 p) { return Vec2{-2.0 * p.x, -2.0 * p.y}; };
    dom.time.q = q;
    dom.time.stop_set = StopSet::isolated({0.0, 0.0});
    dom.box_lo = {-1.0, -1.0};
    dom.box_hi = {1.0, 1.0};
    dom.inside = [](Vec2 p) { return p.norm_sq() < 1.0; };
    dom.area = std::numbers::pi;
    return dom;
}

/// Ellipse x^2/a^2 + y^2/b^2 < 1 with the focal segment as stop arc. In
/// elliptic coordinates cosh(mu) = (d1 + d2) / (2 c_f) with foci at
/// (+-c_f, 0); T = 1 - mu/mu_max vanishes on the boundary and equals one
/// exactly on the segment [-c_f, c_f] x {0}.
inline DomainSpec make_ellipse_segment(double a = 1.5, double b = 1.0, double q = 2.0) {
    const double cf = std::sqrt(a * a - b * b);
    const double mu_max = std::acosh(a / cf);
    const Vec2 f1{-cf, 0.0}, f2{cf, 0.0};
    auto mu_of = [cf, f1, f2](Vec2 p) {
        const double sum = distance(p, f1) + distance(p, f2);
        return std::acosh(std::max(1.0, sum / (2.0 * cf)));
    };
    DomainSpec dom;
    dom.boundary.param = [a, b](double s) { return Vec2{a * std::cos(s), b * std::sin(s)}; };
    dom.boundary.derivative = [a, b](double s) {
        return Vec2{-a * std::sin(s), b * std::cos(s)};
    };
    dom.boundary.period_begin = 0.0;
    dom.boundary.period_end = 2.0 * std::numbers::pi;
    dom.time.eval = [mu_of, mu_max](Vec2 p) { return 1.0 - mu_of(p) / mu_max; };
    dom.time.grad = [cf, f1, f2, mu_of, mu_max](Vec2 p) {
        const double d1 = std::max(distance(p, f1), 1e-15);
        const double d2 = std::max(distance(p, f2), 1e-15);
        const Vec2 num = (p - f1) / d1 + (p - f2) / d2;
        const double sh = std::sinh(std::max(mu_of(p), 1e-15));
        return num * (-1.0 / (2.0 * cf * sh * mu_max));
    };
    dom.time.q = q;
    {
        std::vector<Vec2> arc, normals;
        const int n = 33;
        for (int k = 0; k < n; ++k) {
            arc.push_back({-cf + 2.0 * cf * k / (n - 1), 0.0});
            normals.push_back({0.0, 1.0});
        }
        dom.time.stop_set = StopSet::single_arc(std::move(arc), std::move(normals));
    }
    dom.box_lo = {-a, -b};
    dom.box_hi = {a, b};
    dom.inside = [a, f1, f2](Vec2 p) { return distance(p, f1) + distance(p, f2) < 2.0 * a; };
    dom.area = std::numbers::pi * a * b;
    return dom;
}

// ---------------------------------------------------------------------------
// Linear fields and boundary data
// ---------------------------------------------------------------------------

/// c = N: transport straight along the time gradient (beta = 1).
inline LinearTransportField make_normal_field_transport(const DomainSpec& dom) {
    const TimeFunction tf = dom.time;
    return {[tf](Vec2 p) { return normal_field(tf, p); }, 1.0};
}

/// c = N rotated by a fixed angle; beta = cos(angle).
inline LinearTransportField make_rotated_field(const DomainSpec& dom, double angle) {
    const TimeFunction tf = dom.time;
    return {[tf, angle](Vec2 p) { return rotate(normal_field(tf, p), angle); },
            std::cos(angle)};
}

/// Constant direction field; violates the causality condition on any closed
/// curve around the stop set. Used to exercise the audit failure path.
inline LinearTransportField make_constant_direction_field(Vec2 dir, double claimed_beta) {
    const Vec2 u = dir.normalized();
    return {[u](Vec2) { return u; }, claimed_beta};
}

inline BoundaryData make_cosine_boundary_data() {
    // TV of cos over one period is 4.
    return {[](double s) { return std::cos(s); }, 1.0, 4.0};
}

inline BoundaryData make_zero_boundary_data() {
    return {[](double) { return 0.0; }, 0.0, 0.0};
}

inline BoundaryData make_constant_boundary_data(double k) {
    return {[k](double) { return k; }, std::abs(k), 0.0};
}

/// Piecewise-constant boundary data with midpoint values at the two jump
/// parameters (BV representatives are defined up to measure zero).
inline BoundaryData make_step_boundary_data(double s_lo, double s_hi, double inside_value,
                                            double outside_value) {
    const double mid = 0.5 * (inside_value + outside_value);
    auto eval = [=](double s) {
        if (s == s_lo || s == s_hi) return mid;
        return (s > s_lo && s < s_hi) ? inside_value : outside_value;
    };
    const double m4 = std::max(std::abs(inside_value), std::abs(outside_value));
    const double m5 = 2.0 * std::abs(inside_value - outside_value);
    return {eval, m4, m5};
}

inline LinearRhs make_constant_rhs(double value) {
    return {[value](Vec2) { return value; }, std::abs(value), 0.0};
}

// ---------------------------------------------------------------------------
// The causal tilt family
// ---------------------------------------------------------------------------

/// c[v](x) = (N(x) + eps * s * N(x)^perp) / sqrt(1 + eps^2 s^2) with
/// s = tanh(gain * integral of v over the past of x). The tilt keeps
/// <c[v], N> = 1/sqrt(1 + eps^2 s^2) >= 1/sqrt(1 + eps^2) analytically, the
/// past integral makes the field exactly functionally causal, and
/// |c[v]-c[w]| <= eps (1 + eps) gain ||v-w||_L1 gives the declared L1.
struct CausalTiltParams {
    double eps = 0.1;
    double gain = 0.25;
};

namespace detail {

/// Past-integral accumulator over a fixed grid layout: cells sorted by T0
/// once, prefix sums per frozen argument. The mask convention matches
/// mask_past exactly (interior cells with t0 < lambda), so the causality
/// audit sums identical terms in identical order and reports exactly zero.
struct PastIntegral {
    GridLayout layout;
    ScalarGridField t0;
    std::vector<long> order;      // interior cells sorted by (t0, index)
    std::vector<double> sorted_t0;

    explicit PastIntegral(const DomainSpec& dom, const GridLayout& lay, double eps_stop)
        : layout(lay), t0(make_t0_field(dom, lay, eps_stop)) {
        for (long idx = 0; idx < lay.cell_count(); ++idx) {
            if (t0.mask(idx) == CellMask::Interior) order.push_back(idx);
        }
        std::stable_sort(order.begin(), order.end(), [&](long a, long b) {
            return t0.value(a) < t0.value(b);
        });
        sorted_t0.reserve(order.size());
        for (long idx : order) sorted_t0.push_back(t0.value(idx));
    }

    /// Prefix sums of v * cell_area in the sorted order; prefix[k] is the
    /// integral over the k earliest cells.
    std::vector<double> prefix(const ScalarGridField& v) const {
        if (!(v.layout() == layout)) {
            throw GeometryInconsistencyError("functional argument layout differs from the "
                                             "field's construction layout");
        }
        std::vector<double> p(order.size() + 1, 0.0);
        const double area = layout.cell_area();
        for (size_t k = 0; k < order.size(); ++k) {
            p[k + 1] = p[k] + v.value(order[k]) * area;
        }
        return p;
    }

    double lookup(const std::vector<double>& prefix_sums, double lambda) const {
        const size_t k = static_cast<size_t>(
            std::lower_bound(sorted_t0.begin(), sorted_t0.end(), lambda) - sorted_t0.begin());
        return prefix_sums[k];
    }
};

}  // namespace detail

inline FunctionalTransportField make_causal_tilt_field(const DomainSpec& dom,
                                                       const GridLayout& layout,
                                                       CausalTiltParams params = {},
                                                       double eps_stop = kDefaultStopCollar) {
    auto past = std::make_shared<detail::PastIntegral>(dom, layout, eps_stop);
    const TimeFunction tf = dom.time;
    const double eps = params.eps, gain = params.gain;
    FunctionalTransportField field;
    field.beta = 1.0 / std::sqrt(1.0 + eps * eps);
    field.lipschitz_l1 = eps * (1.0 + eps) * gain;
    field.dx_l1_bound = 2.0 * std::numbers::pi * (1.0 + 2.0 * eps);
    field.causal = true;
    field.freeze = [past, tf, eps, gain, beta = field.beta](const ScalarGridField& v) {
        auto prefix = std::make_shared<const std::vector<double>>(past->prefix(v));
        auto eval = [past, prefix, tf, eps, gain](Vec2 x) {
            const double lambda = transformed_time(tf, x);
            const double sq = std::tanh(gain * past->lookup(*prefix, lambda));
            const Vec2 n = normal_field(tf, x);
            const double scale = 1.0 / std::sqrt(1.0 + eps * eps * sq * sq);
            return (n + n.perp() * (eps * sq)) * scale;
        };
        return LinearTransportField{eval, beta};
    };
    field.eval = [field](const ScalarGridField& v, Vec2 x) { return field.freeze(v).eval(x); };
    return field;
}

/// Deliberately acausal variant: the squashed integral runs over the whole
/// domain instead of the past, so the causality audit flags it.
inline FunctionalTransportField make_acausal_tilt_field(const DomainSpec& dom,
                                                        const GridLayout& layout,
                                                        CausalTiltParams params = {},
                                                        double eps_stop = kDefaultStopCollar) {
    auto past = std::make_shared<detail::PastIntegral>(dom, layout, eps_stop);
    const TimeFunction tf = dom.time;
    const double eps = params.eps, gain = params.gain;
    FunctionalTransportField field;
    field.beta = 1.0 / std::sqrt(1.0 + eps * eps);
    field.lipschitz_l1 = eps * (1.0 + eps) * gain;
    field.causal = false;
    field.freeze = [past, tf, eps, gain, beta = field.beta](const ScalarGridField& v) {
        auto prefix = std::make_shared<const std::vector<double>>(past->prefix(v));
        auto eval = [past, prefix, tf, eps, gain](Vec2 x) {
            const double sq = std::tanh(gain * prefix->back());  // reads the future
            const Vec2 n = normal_field(tf, x);
            const double scale = 1.0 / std::sqrt(1.0 + eps * eps * sq * sq);
            return (n + n.perp() * (eps * sq)) * scale;
        };
        return LinearTransportField{eval, beta};
    };
    field.eval = [field](const ScalarGridField& v, Vec2 x) { return field.freeze(v).eval(x); };
    return field;
}

/// Causal right-hand side: f[v](x) = m2 * tanh(gain * past integral of v).
inline FunctionalRhs make_causal_rhs(const DomainSpec& dom, const GridLayout& layout,
                                     double m2, double gain,
                                     double eps_stop = kDefaultStopCollar) {
    auto past = std::make_shared<detail::PastIntegral>(dom, layout, eps_stop);
    const TimeFunction tf = dom.time;
    FunctionalRhs rhs;
    rhs.sup_bound = m2;
    rhs.grad_sup_bound = 10.0 * m2 * gain;  // declared metadata, not estimated
    rhs.lipschitz_l1 = m2 * gain;
    rhs.causal = true;
    rhs.freeze = [past, tf, m2, gain, rhs](const ScalarGridField& v) {
        auto prefix = std::make_shared<const std::vector<double>>(past->prefix(v));
        auto eval = [past, prefix, tf, m2, gain](Vec2 x) {
            const double lambda = transformed_time(tf, x);
            return m2 * std::tanh(gain * past->lookup(*prefix, lambda));
        };
        return LinearRhs{eval, m2, rhs.grad_sup_bound};
    };
    rhs.eval = [rhs](const ScalarGridField& v, Vec2 x) { return rhs.freeze(v).eval(x); };
    return rhs;
}

// ---------------------------------------------------------------------------
// Problem bundles
// ---------------------------------------------------------------------------

/// Disk, radial field, f = 0, cosine boundary data. The solution is the
/// angular pull-back: u(x) = cos(angle(x)).
inline TransportProblem make_disk_radial_f0_problem(double q = 4.0) {
    TransportProblem prob;
    prob.name = "disk-radial-f0";
    prob.domain = make_unit_disk(q);
    prob.c = FunctionalTransportField::from_linear(make_normal_field_transport(prob.domain));
    prob.f = FunctionalRhs::zero();
    prob.u0 = make_cosine_boundary_data();
    prob.bounds = {2.0 * std::numbers::pi, 0.0, 0.0, 1.0, 4.0, 1.0,
                   2.0 / q,                std::numbers::pi, 0.0, 2.0 * std::numbers::pi};
    return prob;
}

/// Disk, radial field, f = 1, zero boundary data. Closed form u = 1 - |x|.
inline TransportProblem make_disk_radial_f1_problem(double q = 4.0) {
    TransportProblem prob;
    prob.name = "disk-radial-f1";
    prob.domain = make_unit_disk(q);
    prob.c = FunctionalTransportField::from_linear(make_normal_field_transport(prob.domain));
    prob.f = FunctionalRhs::from_linear(make_constant_rhs(1.0));
    prob.u0 = make_zero_boundary_data();
    prob.bounds = {2.0 * std::numbers::pi, 1.0, 0.0, 0.0, 0.0, 1.0,
                   2.0 / q,                std::numbers::pi, 0.0, 2.0 * std::numbers::pi};
    return prob;
}

/// Disk with the causal tilt field, f = 0, cosine boundary data.
inline TransportProblem make_disk_causal_problem(const GridLayout& layout, double q = 4.0,
                                                 CausalTiltParams params = {},
                                                 double eps_stop = kDefaultStopCollar) {
    TransportProblem prob;
    prob.name = "disk-causal";
    prob.domain = make_unit_disk(q);
    prob.c = make_causal_tilt_field(prob.domain, layout, params, eps_stop);
    prob.f = FunctionalRhs::zero();
    prob.u0 = make_cosine_boundary_data();
    prob.bounds = {prob.c.dx_l1_bound, 0.0, 0.0, 1.0, 4.0, prob.c.beta,
                   2.0 / q,            std::numbers::pi, 0.0, 2.0 * std::numbers::pi};
    return prob;
}

/// Acausal twin of the causal problem; the solver's audit must refuse it.
inline TransportProblem make_disk_acausal_problem(const GridLayout& layout, double q = 4.0,
                                                  CausalTiltParams params = {},
                                                  double eps_stop = kDefaultStopCollar) {
    TransportProblem prob = make_disk_causal_problem(layout, q, params, eps_stop);
    prob.name = "disk-acausal";
    prob.c = make_acausal_tilt_field(prob.domain, layout, params, eps_stop);
    return prob;
}

/// Disk with a constant-direction field; fails the beta-causality audit.
inline TransportProblem make_disk_beta_violation_problem() {
    TransportProblem prob;
    prob.name = "disk-beta-violation";
    prob.domain = make_unit_disk(4.0);
    prob.c = FunctionalTransportField::from_linear(
        make_constant_direction_field({1.0, 0.0}, 0.5));
    prob.f = FunctionalRhs::zero();
    prob.u0 = make_cosine_boundary_data();
    prob.bounds = {0.0, 0.0, 0.0, 1.0, 4.0, 0.5, 0.5, std::numbers::pi, 0.0, 0.0};
    return prob;
}

/// Ellipse with the focal-segment stop set, normal transport, f = 0.
inline TransportProblem make_ellipse_problem(double a = 1.5, double b = 1.0, double q = 2.0) {
    TransportProblem prob;
    prob.name = "ellipse-segment";
    prob.domain = make_ellipse_segment(a, b, q);
    prob.c = FunctionalTransportField::from_linear(make_normal_field_transport(prob.domain));
    prob.f = FunctionalRhs::zero();
    prob.u0 = make_cosine_boundary_data();
    const double cf = std::sqrt(a * a - b * b);
    const double m0 = m0_estimate(prob.domain.time, prob.domain, 96, 96);
    prob.bounds = {4.0 * std::numbers::pi, 0.0, 0.0, 1.0, 4.0, 1.0,
                   m0,                     prob.domain.area, 2.0 * cf, 4.0 * std::numbers::pi};
    return prob;
}

/// Seeded field with values uniform in [-amplitude, amplitude] on interior
/// cells; used as random member of the invariant ball in experiments.
inline ScalarGridField make_random_field(const ScalarGridField& mask_source, double amplitude,
                                         uint64_t seed) {
    ScalarGridField f = make_like(mask_source);
    std::mt19937_64 rng(seed);
    for (long idx = 0; idx < f.layout().cell_count(); ++idx) {
        const double r = amplitude * (2.0 * uniform01(rng) - 1.0);
        if (f.mask(idx) == CellMask::Interior) f.set_value(idx, r);
    }
    return f;
}

}  // namespace moc2d
