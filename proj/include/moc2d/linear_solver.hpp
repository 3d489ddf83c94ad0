#pragma once

// The linear solution operator: u(x) = u0(eta(T0(x),x)) + integral of f0
// along the backward characteristic. Grid evaluation is embarrassingly
// parallel over cells; stop-collar cells are filled afterwards by constant
// extension along the transport direction.

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "moc2d/characteristics.hpp"
#include "moc2d/errors.hpp"
#include "moc2d/fields.hpp"
#include "moc2d/geometry.hpp"
#include "moc2d/grid_field.hpp"
#include "moc2d/parallel.hpp"
#include "moc2d/vec2.hpp"

namespace moc2d {

struct SelfMapBoundInputs {
    double M1 = 0.0;  // L1 bound on |D_x c[v]|
    double M2 = 0.0;  // sup |f[v]|
    double M3 = 0.0;  // sup |grad_x f[v]|
    double M4 = 0.0;  // sup boundary data
    double M5 = 0.0;  // TV of boundary data
    double beta = 1.0;
    double m0 = 1.0;
    double area = 0.0;      // Lebesgue measure of the domain
    double sigma_h1 = 0.0;  // H^1 measure of the stop set
    double dn_l1 = 0.0;     // L1 norm of |DN|
};

struct SelfMapBounds {
    double m_star = 0.0;       // L1 radius of the invariant ball
    double m_star_star = 0.0;  // TV radius of the invariant ball
};

/// Plug-in evaluation of the invariant-ball radii:
///   M*  = (M4 + M2/(beta m0)) Area
///   M** = 2 (M4 + M2/(beta m0)) H1(Sigma) + M5/(beta m0)
///         + (M2/beta + M3/(beta^2 m0)) Area + M2/(beta^3 m0) (M1 + ||DN||_L1)
inline SelfMapBounds compute_self_map_bounds(const SelfMapBoundInputs& in) {
    if (!(in.beta > 0.0) || in.beta > 1.0) {
        throw InvalidBoundsError("beta must lie in (0, 1]");
    }
    if (!(in.m0 > 0.0) || !(in.area > 0.0)) {
        throw InvalidBoundsError("m0 and the domain area must be positive");
    }
    for (double v : {in.M1, in.M2, in.M3, in.M4, in.M5, in.sigma_h1, in.dn_l1}) {
        if (v < 0.0 || !std::isfinite(v)) throw InvalidBoundsError("negative bound input");
    }
    const double bm = in.beta * in.m0;
    SelfMapBounds out;
    out.m_star = (in.M4 + in.M2 / bm) * in.area;
    out.m_star_star = 2.0 * (in.M4 + in.M2 / bm) * in.sigma_h1 + in.M5 / bm +
                      (in.M2 / in.beta + in.M3 / (in.beta * in.beta * in.m0)) * in.area +
                      in.M2 / (in.beta * in.beta * in.beta * in.m0) * (in.M1 + in.dn_l1);
    return out;
}

struct FieldNorms {
    double l1 = 0.0;
    double linf = 0.0;
    double tv = 0.0;
};

inline FieldNorms field_norms(const ScalarGridField& u) {
    return {u.l1_norm(), u.linf_norm(), u.tv_estimate()};
}

/// Solution value at a single point: backward-trace to the boundary, look up
/// the boundary datum, and add the trapezoid quadrature of f0 over the
/// tracer's own samples. An empty rhs (no eval) is treated as f = 0.
inline double solve_at_point(const DomainSpec& dom, const LinearTransportField& c,
                             const LinearRhs& f, const BoundaryData& u0, Vec2 x,
                             const IntegratorConfig& cfg) {
    const CharCurve curve = trace_backward(dom, c, x, cfg);
    const double s = boundary_parameter_of(dom.boundary, curve.end(), dom.boundary_tol());
    double value = u0.eval(s);
    if (f.eval) {
        // Samples may drift a hair past the collar boundary; allow the same
        // quarter-collar halo the tracer uses.
        const double collar = 0.25 * cfg.eps_stop;
        const auto& smp = curve.samples;
        double f0_prev = scale_by_time(c.eval, f.eval, dom.time, smp.front().p, collar).f0;
        for (size_t k = 1; k < smp.size(); ++k) {
            const double f0_k =
                scale_by_time(c.eval, f.eval, dom.time, smp[k].p, collar).f0;
            value += 0.5 * (smp[k].t - smp[k - 1].t) * (f0_prev + f0_k);
            f0_prev = f0_k;
        }
    }
    return value;
}

/// Constant extension into the stop collar: each collar cell walks against
/// the transport direction until it leaves the collar and copies the value
/// of the nearest interior cell there. Cells are processed in row-major
/// order after zeroing, so the fill is deterministic.
inline void fill_stop_collar(ScalarGridField& u, const ScalarGridField& t0,
                             const DomainSpec& dom, const std::function<Vec2(Vec2)>& c_dir,
                             double eps_stop, const BoundaryData* u0_fallback = nullptr) {
    const GridLayout& layout = u.layout();
    for (long idx = 0; idx < layout.cell_count(); ++idx) {
        if (t0.mask(idx) == CellMask::StopCollar) u.set_value(idx, 0.0);
    }
    auto nearest_interior_value = [&](Vec2 p, bool& found) -> double {
        // Expanding ring search around the containing cell.
        const int ci = std::clamp(static_cast<int>((p.x - layout.lo.x) / layout.dx()), 0,
                                  layout.nx - 1);
        const int cj = std::clamp(static_cast<int>((p.y - layout.lo.y) / layout.dy()), 0,
                                  layout.ny - 1);
        for (int r = 0; r < std::max(layout.nx, layout.ny); ++r) {
            double best = 0.0, best_d = std::numeric_limits<double>::infinity();
            for (int j = cj - r; j <= cj + r; ++j) {
                for (int i = ci - r; i <= ci + r; ++i) {
                    if (i < 0 || j < 0 || i >= layout.nx || j >= layout.ny) continue;
                    if (std::max(std::abs(i - ci), std::abs(j - cj)) != r) continue;
                    const long k = layout.index(i, j);
                    if (t0.mask(k) != CellMask::Interior) continue;
                    const double d = (layout.center(i, j) - p).norm_sq();
                    if (d < best_d) {
                        best_d = d;
                        best = u.value(k);
                    }
                }
            }
            if (best_d < std::numeric_limits<double>::infinity()) {
                found = true;
                return best;
            }
        }
        found = false;
        return 0.0;
    };
    const double step = 0.5 * std::min(layout.dx(), layout.dy());
    for (long idx = 0; idx < layout.cell_count(); ++idx) {
        if (t0.mask(idx) != CellMask::StopCollar) continue;
        Vec2 p = layout.center(idx);
        bool escaped = false;
        for (int k = 0; k < 64; ++k) {
            Vec2 dir;
            try {
                dir = c_dir(p);
            } catch (const Error&) {
                try {
                    dir = dom.time.grad(p);
                } catch (...) {
                    break;
                }
            }
            const double n = dir.norm();
            if (!(n > 1e-14)) break;
            p -= dir * (step / n);
            double t0v;
            try {
                t0v = transformed_time(dom.time, p);
            } catch (const Error&) {
                break;
            }
            if (t0v <= 1.0 - eps_stop) {
                escaped = true;
                break;
            }
        }
        bool found = false;
        const double v = nearest_interior_value(escaped ? p : layout.center(idx), found);
        if (found) {
            u.set_value(idx, v);
        } else if (u0_fallback) {
            // Degenerate hole with no interior cells at all: use the datum of
            // the nearest boundary point.
            try {
                const double s = boundary_parameter_of(dom.boundary, layout.center(idx),
                                                       dom.diameter());
                u.set_value(idx, u0_fallback->eval(s));
            } catch (const Error&) {
                // leave the zero fill
            }
        }
    }
}

/// Grid solve of the frozen linear problem. Interior cells are independent
/// point solves; the stop collar is filled by constant extension.
inline ScalarGridField solve_linear(const DomainSpec& dom, const LinearTransportField& c,
                                    const LinearRhs& f, const BoundaryData& u0,
                                    const GridLayout& grid, const IntegratorConfig& cfg,
                                    int threads = 0, const ScalarGridField* t0_cache = nullptr) {
    ScalarGridField t0_local;
    if (!t0_cache) {
        t0_local = make_t0_field(dom, grid, cfg.eps_stop);
        t0_cache = &t0_local;
    }
    ScalarGridField u = make_like(*t0_cache);
    parallel_for(0, grid.cell_count(), threads, [&](long idx) {
        if (u.mask(idx) != CellMask::Interior) return;
        u.set_value(idx, solve_at_point(dom, c, f, u0, grid.center(idx), cfg));
    });
    fill_stop_collar(u, *t0_cache, dom, c.eval, cfg.eps_stop, &u0);
    return u;
}

/// Solution in characteristic variables: v(t,s) = u0(gamma(s)) + running
/// quadrature of f0 along the forward curve through gamma(s).
struct CharLattice {
    std::vector<double> t_values;
    std::vector<double> s_values;
    std::vector<double> values;   // row-major [ti * ns + si]
    std::vector<Vec2> positions;  // xi(t, s) at the lattice nodes

    double value(size_t ti, size_t si) const { return values[ti * s_values.size() + si]; }
    Vec2 position(size_t ti, size_t si) const { return positions[ti * s_values.size() + si]; }
};

inline CharLattice solve_in_characteristic_coordinates(
    const DomainSpec& dom, const LinearTransportField& c, const LinearRhs& f,
    const BoundaryData& u0, std::vector<double> t_values, std::vector<double> s_values,
    const IntegratorConfig& cfg) {
    for (double t : t_values) {
        if (t > 1.0 - cfg.eps_stop + 1e-15) {
            throw StopSetProximityError("characteristic lattice reaches into the stop collar");
        }
    }
    std::sort(t_values.begin(), t_values.end());
    CharLattice lat;
    lat.t_values = t_values;
    lat.s_values = s_values;
    lat.values.assign(t_values.size() * s_values.size(), 0.0);
    lat.positions.assign(t_values.size() * s_values.size(), Vec2{});

    detail::Tracer tracer{dom.time, c.eval, cfg, +1.0};
    for (size_t si = 0; si < s_values.size(); ++si) {
        const double s = s_values[si];
        Vec2 p = dom.boundary.param(s);
        double t = 0.0;
        double integral = 0.0;
        double f0_prev =
            f.eval ? scale_by_time(c.eval, f.eval, dom.time, p, cfg.eps_stop).f0 : 0.0;
        const double base = u0.eval(s);
        for (size_t ti = 0; ti < t_values.size(); ++ti) {
            const double target = t_values[ti];
            while (t < target - 1e-15) {
                const double h = std::min(cfg.dt, target - t);
                p = tracer.rk4_step(p, h);
                t += h;
                p = tracer.enforce_clock(p, t);
                if (f.eval) {
                    const double f0 =
                        scale_by_time(c.eval, f.eval, dom.time, p, cfg.eps_stop).f0;
                    integral += 0.5 * h * (f0_prev + f0);
                    f0_prev = f0;
                }
            }
            lat.values[ti * s_values.size() + si] = base + integral;
            lat.positions[ti * s_values.size() + si] = p;
        }
    }
    return lat;
}

}  // namespace moc2d
