#pragma once

// Transport fields and right-hand sides, linear and functional-causal, with
// their time-scaled versions and the requirement audits (unit speed,
// beta-causality, functional causality, Lipschitz estimation).

#include <cmath>
#include <functional>
#include <memory>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "moc2d/csv.hpp"
#include "moc2d/errors.hpp"
#include "moc2d/geometry.hpp"
#include "moc2d/grid_field.hpp"
#include "moc2d/vec2.hpp"

namespace moc2d {

/// Unit-speed transport field with a declared causality bound beta:
/// beta <= <c(x), N(x)> <= 1 is claimed on the closure minus the stop set.
struct LinearTransportField {
    std::function<Vec2(Vec2)> eval;
    double beta = 1.0;
};

/// Scalar right-hand side with declared sup and gradient-sup bounds.
struct LinearRhs {
    std::function<double(Vec2)> eval;
    double sup_bound = 0.0;       // M2
    double grad_sup_bound = 0.0;  // M3
};

/// Boundary data as the pull-back along a fixed parametrization, with the
/// declared sup bound M4 and total-variation bound M5.
struct BoundaryData {
    std::function<double(double)> eval;
    double sup_bound = 0.0;  // M4
    double tv_bound = 0.0;   // M5
};

/// Transport field whose value at x may depend on the functional argument v,
/// but only through the past of x when `causal` is set. The declared
/// lipschitz_l1 bounds ||c[v]-c[w]||_inf <= L1 ||v-w||_L1.
struct FunctionalTransportField {
    std::function<Vec2(const ScalarGridField&, Vec2)> eval;
    /// Freeze the functional argument; implementations may precompute
    /// per-snapshot caches here. Defaults to wrapping `eval`.
    std::function<LinearTransportField(const ScalarGridField&)> freeze;
    double beta = 1.0;
    double lipschitz_l1 = 0.0;  // L1
    double dx_l1_bound = 0.0;   // M1, declared metadata
    bool causal = true;

    LinearTransportField frozen(const ScalarGridField& v) const {
        if (freeze) return freeze(v);
        auto snapshot = std::make_shared<ScalarGridField>(v);
        auto ev = eval;
        return LinearTransportField{[snapshot, ev](Vec2 x) { return ev(*snapshot, x); }, beta};
    }

    static FunctionalTransportField from_linear(LinearTransportField c) {
        FunctionalTransportField f;
        auto base = c.eval;
        f.eval = [base](const ScalarGridField&, Vec2 x) { return base(x); };
        f.freeze = [base, beta = c.beta](const ScalarGridField&) {
            return LinearTransportField{base, beta};
        };
        f.beta = c.beta;
        f.lipschitz_l1 = 0.0;
        f.causal = true;
        return f;
    }
};

/// Functional right-hand side; same conventions as the field.
struct FunctionalRhs {
    std::function<double(const ScalarGridField&, Vec2)> eval;
    std::function<LinearRhs(const ScalarGridField&)> freeze;
    double sup_bound = 0.0;     // M2
    double grad_sup_bound = 0.0;  // M3
    double lipschitz_l1 = 0.0;  // L2
    bool causal = true;

    LinearRhs frozen(const ScalarGridField& v) const {
        if (freeze) return freeze(v);
        auto snapshot = std::make_shared<ScalarGridField>(v);
        auto ev = eval;
        return LinearRhs{[snapshot, ev](Vec2 x) { return ev(*snapshot, x); }, sup_bound,
                         grad_sup_bound};
    }

    static FunctionalRhs from_linear(LinearRhs f) {
        FunctionalRhs g;
        auto base = f.eval;
        g.eval = [base](const ScalarGridField&, Vec2 x) { return base(x); };
        g.freeze = [f](const ScalarGridField&) { return f; };
        g.sup_bound = f.sup_bound;
        g.grad_sup_bound = f.grad_sup_bound;
        g.lipschitz_l1 = 0.0;
        g.causal = true;
        return g;
    }

    static FunctionalRhs zero() {
        return from_linear(LinearRhs{[](Vec2) { return 0.0; }, 0.0, 0.0});
    }
};

/// Scaled pair (c0, f0) = (c, f) / <c, grad T0> at one point. The
/// denominator is the clock-rate of the characteristic; it must be positive
/// or the causality condition is broken.
struct ScaledCoefficients {
    Vec2 c0;
    double f0 = 0.0;
    double denom = 0.0;  // <c(x), grad T0(x)>
};

inline ScaledCoefficients scale_by_time(const std::function<Vec2(Vec2)>& c,
                                        const std::function<double(Vec2)>& f,
                                        const TimeFunction& tf, Vec2 x,
                                        double eps_stop = kDefaultStopCollar) {
    const Vec2 cx = c(x);
    const Vec2 g = grad_transformed_time(tf, x, eps_stop);
    const double denom = dot(cx, g);
    if (!(denom > 0.0)) {
        throw CausalityViolationError("nonpositive <c, grad T0> = " + std::to_string(denom) +
                                      " at (" + std::to_string(x.x) + ", " +
                                      std::to_string(x.y) + ")");
    }
    ScaledCoefficients out;
    out.c0 = cx / denom;
    out.f0 = f ? f(x) / denom : 0.0;
    out.denom = denom;
    return out;
}

inline ScaledCoefficients scale_by_time(const LinearTransportField& c, const LinearRhs& f,
                                        const TimeFunction& tf, Vec2 x,
                                        double eps_stop = kDefaultStopCollar) {
    return scale_by_time(c.eval, f.eval, tf, x, eps_stop);
}

// ---------------------------------------------------------------------------
// Audits
// ---------------------------------------------------------------------------

struct CausalityAuditReport {
    double min_dot = 0.0;
    double max_dot = 0.0;
    double max_speed_error = 0.0;  // max | |c|-1 |
    struct Violation {
        Vec2 point;
        double dot;
    };
    std::vector<Violation> violations;
    long samples = 0;

    bool pass() const { return violations.empty() && max_speed_error <= 1e-9; }

    void write_csv(std::ostream& os) const {
        CsvWriter csv(os);
        csv.header({"x", "y", "dot", "violation"});
        for (const auto& v : violations) {
            csv.cell(v.point.x).cell(v.point.y).cell(v.dot).cell(1).end_row();
        }
    }
};

/// Samples beta <= <c(x), N(x)> <= 1 over the domain (off the stop collar).
/// Report-only: violations are listed, nothing throws.
inline CausalityAuditReport audit_causality_condition(const LinearTransportField& c,
                                                      const TimeFunction& tf,
                                                      const DomainSpec& dom, int n = 128,
                                                      double eps_stop = kDefaultStopCollar) {
    CausalityAuditReport rep;
    rep.min_dot = std::numeric_limits<double>::infinity();
    rep.max_dot = -std::numeric_limits<double>::infinity();
    const double tau = 1e-9;
    const double dx = (dom.box_hi.x - dom.box_lo.x) / n;
    const double dy = (dom.box_hi.y - dom.box_lo.y) / n;
    auto probe = [&](Vec2 p) {
        const Vec2 cx = c.eval(p);
        rep.max_speed_error = std::max(rep.max_speed_error, std::abs(cx.norm() - 1.0));
        const double d = dot(cx, normal_field(tf, p));
        rep.min_dot = std::min(rep.min_dot, d);
        rep.max_dot = std::max(rep.max_dot, d);
        if (d < c.beta - tau || d > 1.0 + tau) rep.violations.push_back({p, d});
        ++rep.samples;
    };
    for (int j = 0; j < n; ++j) {
        for (int i = 0; i < n; ++i) {
            const Vec2 p{dom.box_lo.x + (i + 0.5) * dx, dom.box_lo.y + (j + 0.5) * dy};
            if (!dom.inside(p)) continue;
            if (transformed_time(tf, p) > 1.0 - eps_stop) continue;
            probe(p);
        }
    }
    for (int k = 0; k < 2 * n; ++k) {
        const double s = dom.boundary.period_begin + dom.boundary.period() * (k + 0.5) / (2 * n);
        probe(dom.boundary.param(s));
    }
    return rep;
}

struct FunctionalCausalityReport {
    double max_discrepancy = 0.0;
    struct Probe {
        Vec2 point;
        double discrepancy;
    };
    std::vector<Probe> probes;

    bool exactly_causal() const { return max_discrepancy == 0.0; }
    bool pass(double tol = 1e-12) const { return max_discrepancy <= tol; }

    void write_csv(std::ostream& os) const {
        CsvWriter csv(os);
        csv.header({"x", "y", "discrepancy"});
        for (const auto& p : probes) {
            csv.cell(p.point.x).cell(p.point.y).cell(p.discrepancy).end_row();
        }
    }
};

/// Compares F(v, x) against F(v restricted to the past of x, x) at each
/// probe. Honest causal operators report exactly zero.
inline FunctionalCausalityReport audit_functional_causality(
    const FunctionalTransportField& F, const ScalarGridField& v,
    const std::vector<Vec2>& probes, const TimeFunction& tf, const ScalarGridField& t0) {
    FunctionalCausalityReport rep;
    for (const Vec2& x : probes) {
        const double lam = transformed_time(tf, x);
        const ScalarGridField masked = mask_past(v, lam, t0);
        const Vec2 a = F.eval(v, x);
        const Vec2 b = F.eval(masked, x);
        const double d = (a - b).norm();
        rep.probes.push_back({x, d});
        rep.max_discrepancy = std::max(rep.max_discrepancy, d);
    }
    return rep;
}

inline FunctionalCausalityReport audit_functional_causality(
    const FunctionalRhs& F, const ScalarGridField& v, const std::vector<Vec2>& probes,
    const TimeFunction& tf, const ScalarGridField& t0) {
    FunctionalCausalityReport rep;
    for (const Vec2& x : probes) {
        const double lam = transformed_time(tf, x);
        const ScalarGridField masked = mask_past(v, lam, t0);
        const double d = std::abs(F.eval(v, x) - F.eval(masked, x));
        rep.probes.push_back({x, d});
        rep.max_discrepancy = std::max(rep.max_discrepancy, d);
    }
    return rep;
}

// ---------------------------------------------------------------------------
// Lipschitz estimation
// ---------------------------------------------------------------------------

/// Lower bound on the L1 Lipschitz constant of v -> F[v]: the max over the
/// supplied pairs of ||F[v]-F[w]||_inf(probes) / ||v-w||_L1.
inline double estimate_lipschitz(const FunctionalTransportField& F,
                                 const std::vector<std::pair<ScalarGridField, ScalarGridField>>& pairs,
                                 const std::vector<Vec2>& probes) {
    if (pairs.empty()) throw DegeneratePairError("estimate_lipschitz: no pairs");
    double best = 0.0;
    for (const auto& [v, w] : pairs) {
        const double den = l1_distance(v, w);
        if (!(den > 0.0)) throw DegeneratePairError("estimate_lipschitz: ||v-w|| = 0");
        double num = 0.0;
        const LinearTransportField fv = F.frozen(v);
        const LinearTransportField fw = F.frozen(w);
        for (const Vec2& x : probes) num = std::max(num, (fv.eval(x) - fw.eval(x)).norm());
        best = std::max(best, num / den);
    }
    return best;
}

inline double estimate_lipschitz(const FunctionalRhs& F,
                                 const std::vector<std::pair<ScalarGridField, ScalarGridField>>& pairs,
                                 const std::vector<Vec2>& probes) {
    if (pairs.empty()) throw DegeneratePairError("estimate_lipschitz: no pairs");
    double best = 0.0;
    for (const auto& [v, w] : pairs) {
        const double den = l1_distance(v, w);
        if (!(den > 0.0)) throw DegeneratePairError("estimate_lipschitz: ||v-w|| = 0");
        double num = 0.0;
        const LinearRhs fv = F.frozen(v);
        const LinearRhs fw = F.frozen(w);
        for (const Vec2& x : probes) num = std::max(num, std::abs(fv.eval(x) - fw.eval(x)));
        best = std::max(best, num / den);
    }
    return best;
}

}  // namespace moc2d
