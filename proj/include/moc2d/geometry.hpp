#pragma once

// Domains, boundary parametrizations, time functions and stop sets, the
// transformed time and its gradient, and the induced past-ordering of the
// domain. Everything here is immutable after construction and safe to
// evaluate concurrently.

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <deque>
#include <functional>
#include <istream>
#include <limits>
#include <ostream>
#include <string>
#include <vector>

#include "moc2d/errors.hpp"
#include "moc2d/vec2.hpp"

namespace moc2d {

/// Default stop-set collar in transformed-time units: evaluations that need
/// the transformed gradient refuse points with T0 > 1 - kDefaultStopCollar.
inline constexpr double kDefaultStopCollar = 1e-3;

/// Slack in T units for membership checks; tolerates boundary overshoot of
/// integrator stage points. Values in [-tol, 0) clamp to 0.
inline constexpr double kMembershipTol = 1e-4;

/// Closed regular parametrization of a C1 boundary over one period.
struct BoundaryCurve {
    std::function<Vec2(double)> param;
    std::function<Vec2(double)> derivative;
    double period_begin = 0.0;
    double period_end = 1.0;
    /// Optional closest-parameter query; used instead of the generic
    /// scan-and-refine search when set (e.g. polylines).
    std::function<double(Vec2)> project;

    double period() const { return period_end - period_begin; }

    double wrap(double s) const {
        const double len = period();
        double r = std::fmod(s - period_begin, len);
        if (r < 0) r += len;
        return period_begin + r;
    }
};

/// Interior outflow set: the maximal level of the time function.
struct StopSet {
    enum class Kind { IsolatedPoint, SingleArc };

    Kind kind = Kind::IsolatedPoint;
    Vec2 point{};
    std::vector<Vec2> arc;          // simple polyline when kind == SingleArc
    std::vector<Vec2> arc_normals;  // unit normal per polyline vertex

    static StopSet isolated(Vec2 p) {
        StopSet s;
        s.kind = Kind::IsolatedPoint;
        s.point = p;
        return s;
    }

    static StopSet single_arc(std::vector<Vec2> polyline, std::vector<Vec2> normals) {
        StopSet s;
        s.kind = Kind::SingleArc;
        s.arc = std::move(polyline);
        s.arc_normals = std::move(normals);
        return s;
    }

    /// One-dimensional Hausdorff measure: 0 for a point, length of the
    /// polyline for an arc.
    double h1_length() const {
        if (kind == Kind::IsolatedPoint) return 0.0;
        double len = 0.0;
        for (size_t i = 1; i < arc.size(); ++i) len += distance(arc[i - 1], arc[i]);
        return len;
    }

    double distance_to(Vec2 x) const {
        if (kind == Kind::IsolatedPoint) return distance(x, point);
        double best = std::numeric_limits<double>::infinity();
        for (size_t i = 1; i < arc.size(); ++i) {
            const Vec2 a = arc[i - 1], b = arc[i];
            const Vec2 ab = b - a;
            const double len2 = ab.norm_sq();
            double t = len2 > 0 ? dot(x - a, ab) / len2 : 0.0;
            t = std::clamp(t, 0.0, 1.0);
            best = std::min(best, distance(x, a + ab * t));
        }
        return best;
    }
};

enum class TimeRepresentation { Analytic, GridSampled };

/// Global Lyapunov function of the transport field: zero on the boundary,
/// one exactly on the stop set, strictly increasing in between. q bounds the
/// vanishing order of 1 - T at the stop set and is supplied by the caller.
struct TimeFunction {
    std::function<double(Vec2)> eval;
    std::function<Vec2(Vec2)> grad;
    double q = 4.0;
    StopSet stop_set;
    TimeRepresentation representation = TimeRepresentation::Analytic;
    double grid_spacing = 0.0;  // h_g when grid-sampled
    /// How far past T = 0 an evaluation may overshoot before it counts as
    /// leaving the domain. Raster domains widen this to a pixel-scale value.
    double membership_tol = kMembershipTol;
};

/// Open, bounded, simply connected domain with its time function.
struct DomainSpec {
    BoundaryCurve boundary;
    TimeFunction time;
    Vec2 box_lo{};
    Vec2 box_hi{};
    std::function<bool(Vec2)> inside;
    double area = 0.0;  // Lebesgue measure of the domain
    /// Raster domains land traces within a pixel of the polygon; this widens
    /// the boundary-membership tolerance accordingly. Zero for analytic domains.
    double boundary_snap = 0.0;

    double diameter() const { return (box_hi - box_lo).norm(); }

    /// Tolerance for "lies on the boundary" checks.
    double boundary_tol() const { return std::max(1e-6 * diameter(), boundary_snap); }
};

namespace detail {

inline double checked_time(const TimeFunction& tf, Vec2 x) {
    const double t = tf.eval(x);
    if (!(t >= -tf.membership_tol) || t > 1.0 + tf.membership_tol) {
        throw DomainMembershipError("point (" + std::to_string(x.x) + ", " +
                                    std::to_string(x.y) +
                                    ") is outside the domain (T = " + std::to_string(t) + ")");
    }
    return std::clamp(t, 0.0, 1.0);
}

}  // namespace detail

/// T0(x) = 1 - (1 - T(x))^(1/q). Shares level sets with T and relabels them
/// so unit-speed-in-T0 characteristics exist.
inline double transformed_time(const TimeFunction& tf, Vec2 x) {
    const double t = detail::checked_time(tf, x);
    return 1.0 - std::pow(1.0 - t, 1.0 / tf.q);
}

/// grad T0(x) = (1/q) (1 - T(x))^(1/q - 1) grad T(x). Refuses the stop-set
/// collar where the factor blows up.
inline Vec2 grad_transformed_time(const TimeFunction& tf, Vec2 x,
                                  double eps_stop = kDefaultStopCollar) {
    const double t = detail::checked_time(tf, x);
    const double t0 = 1.0 - std::pow(1.0 - t, 1.0 / tf.q);
    if (t0 > 1.0 - eps_stop) {
        throw StopSetProximityError("grad T0 requested at T0 = " + std::to_string(t0) +
                                    " inside the stop collar");
    }
    const double factor = (1.0 / tf.q) * std::pow(1.0 - t, 1.0 / tf.q - 1.0);
    return tf.grad(x) * factor;
}

/// Unit field of interior normals to the time levels, N = grad T / |grad T|,
/// pointing toward increasing T.
inline Vec2 normal_field(const TimeFunction& tf, Vec2 x) {
    const Vec2 g = tf.grad(x);
    const double n = g.norm();
    if (!(n > 1e-14)) {
        throw StopSetProximityError("normal field undefined: |grad T| vanishes at (" +
                                    std::to_string(x.x) + ", " + std::to_string(x.y) + ")");
    }
    return g / n;
}

/// Lower bound m0 on |grad T0| away from the stop collar, estimated over an
/// nx x ny sample grid of the bounding box plus boundary samples.
inline double m0_estimate(const TimeFunction& tf, const DomainSpec& dom, int nx = 128,
                          int ny = 128, double eps_stop = kDefaultStopCollar) {
    double m0 = std::numeric_limits<double>::infinity();
    const double dx = (dom.box_hi.x - dom.box_lo.x) / nx;
    const double dy = (dom.box_hi.y - dom.box_lo.y) / ny;
    long samples = 0;
    for (int j = 0; j < ny; ++j) {
        for (int i = 0; i < nx; ++i) {
            const Vec2 p{dom.box_lo.x + (i + 0.5) * dx, dom.box_lo.y + (j + 0.5) * dy};
            if (!dom.inside(p)) continue;
            if (transformed_time(tf, p) > 1.0 - eps_stop) continue;
            m0 = std::min(m0, grad_transformed_time(tf, p, eps_stop).norm());
            ++samples;
        }
    }
    // The infimum may be attained on the closure; include boundary samples.
    const int nb = std::max(nx, ny) * 2;
    for (int k = 0; k < nb; ++k) {
        const double s =
            dom.boundary.period_begin + dom.boundary.period() * (k + 0.5) / nb;
        m0 = std::min(m0, grad_transformed_time(tf, dom.boundary.param(s), eps_stop).norm());
        ++samples;
    }
    if (samples == 0 || !(m0 > 0.0)) {
        throw TimeFunctionInvalidError("m0 estimate is not strictly positive");
    }
    return m0;
}

/// Membership in the past of level lambda: T0(x) < lambda and x interior.
/// Boundary and exterior points return false; never throws.
inline bool past_membership(const TimeFunction& tf, double lambda, Vec2 x) {
    double t;
    try {
        t = tf.eval(x);
    } catch (...) {
        return false;
    }
    if (!(t > 0.0)) return false;  // exterior (T < 0), boundary (T = 0), or NaN
    if (t >= 1.0) return false;    // on the stop set
    const double t0 = 1.0 - std::pow(1.0 - t, 1.0 / tf.q);
    return t0 < lambda;
}

// ---------------------------------------------------------------------------
// Grid-sampled time functions
// ---------------------------------------------------------------------------

namespace detail {

inline void put_u32_le(std::ostream& os, uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16),
                          static_cast<unsigned char>(v >> 24)};
    os.write(reinterpret_cast<const char*>(b), 4);
}

inline uint32_t get_u32_le(std::istream& is) {
    unsigned char b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
           (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
}

inline void put_f64_le(std::ostream& os, double v) {
    const uint64_t u = std::bit_cast<uint64_t>(v);
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(u >> (8 * i));
    os.write(reinterpret_cast<const char*>(b), 8);
}

inline double get_f64_le(std::istream& is) {
    unsigned char b[8];
    is.read(reinterpret_cast<char*>(b), 8);
    uint64_t u = 0;
    for (int i = 0; i < 8; ++i) u |= static_cast<uint64_t>(b[i]) << (8 * i);
    return std::bit_cast<double>(u);
}

}  // namespace detail

/// Time function sampled at node centers of a regular grid. Exterior nodes
/// hold NaN. Binary layout (little-endian):
///   bytes 0..7   magic "MOC2DTF1"
///   u32 width, u32 height
///   f64 lo.x, lo.y, hi.x, hi.y, q
///   f64 values[width*height], row-major, NaN marks exterior nodes
struct GridTimeFunction {
    int width = 0;
    int height = 0;
    Vec2 lo{};
    Vec2 hi{};
    double q = 4.0;
    std::vector<double> values;

    double dx() const { return (hi.x - lo.x) / width; }
    double dy() const { return (hi.y - lo.y) / height; }
    Vec2 node_center(int i, int j) const {
        return {lo.x + (i + 0.5) * dx(), lo.y + (j + 0.5) * dy()};
    }
    double at(int i, int j) const { return values[static_cast<size_t>(j) * width + i]; }
    double& at(int i, int j) { return values[static_cast<size_t>(j) * width + i]; }

    /// Bilinear interpolation through node centers; coordinates are clamped
    /// to the node hull. NaN if any participating node is exterior.
    double sample(Vec2 p) const {
        const double gx = std::clamp((p.x - lo.x) / dx() - 0.5, 0.0, width - 1.0);
        const double gy = std::clamp((p.y - lo.y) / dy() - 0.5, 0.0, height - 1.0);
        const int i0 = std::min(static_cast<int>(gx), width - 2 >= 0 ? width - 2 : 0);
        const int j0 = std::min(static_cast<int>(gy), height - 2 >= 0 ? height - 2 : 0);
        const int i1 = std::min(i0 + 1, width - 1);
        const int j1 = std::min(j0 + 1, height - 1);
        const double u = gx - i0, v = gy - j0;
        const double v00 = at(i0, j0), v10 = at(i1, j0), v01 = at(i0, j1), v11 = at(i1, j1);
        return (1 - u) * (1 - v) * v00 + u * (1 - v) * v10 + (1 - u) * v * v01 + u * v * v11;
    }

    /// Central differences of the interpolated surface, step = half a node.
    Vec2 sample_grad(Vec2 p) const {
        const double hx = 0.5 * dx(), hy = 0.5 * dy();
        return {(sample({p.x + hx, p.y}) - sample({p.x - hx, p.y})) / (2 * hx),
                (sample({p.x, p.y + hy}) - sample({p.x, p.y - hy})) / (2 * hy)};
    }

    TimeFunction to_time_function(StopSet stop) const {
        TimeFunction tf;
        const GridTimeFunction self = *this;  // value capture: immutable snapshot
        tf.eval = [self](Vec2 p) { return self.sample(p); };
        tf.grad = [self](Vec2 p) { return self.sample_grad(p); };
        tf.q = q;
        tf.stop_set = std::move(stop);
        tf.representation = TimeRepresentation::GridSampled;
        tf.grid_spacing = std::min(dx(), dy());
        return tf;
    }

    void save(std::ostream& os) const {
        os.write("MOC2DTF1", 8);
        detail::put_u32_le(os, static_cast<uint32_t>(width));
        detail::put_u32_le(os, static_cast<uint32_t>(height));
        detail::put_f64_le(os, lo.x);
        detail::put_f64_le(os, lo.y);
        detail::put_f64_le(os, hi.x);
        detail::put_f64_le(os, hi.y);
        detail::put_f64_le(os, q);
        for (double v : values) detail::put_f64_le(os, v);
        if (!os) throw IoError("failed to write grid time function");
    }

    static GridTimeFunction load(std::istream& is) {
        char magic[8];
        is.read(magic, 8);
        if (!is || std::memcmp(magic, "MOC2DTF1", 8) != 0) {
            throw IoError("bad magic in grid time function stream");
        }
        GridTimeFunction g;
        g.width = static_cast<int>(detail::get_u32_le(is));
        g.height = static_cast<int>(detail::get_u32_le(is));
        g.lo.x = detail::get_f64_le(is);
        g.lo.y = detail::get_f64_le(is);
        g.hi.x = detail::get_f64_le(is);
        g.hi.y = detail::get_f64_le(is);
        g.q = detail::get_f64_le(is);
        if (g.width <= 0 || g.height <= 0 || g.width > (1 << 20) || g.height > (1 << 20)) {
            throw IoError("implausible grid time function dimensions");
        }
        g.values.resize(static_cast<size_t>(g.width) * g.height);
        for (double& v : g.values) v = detail::get_f64_le(is);
        if (!is) throw IoError("truncated grid time function stream");
        return g;
    }
};

/// Sample an analytic time function onto a grid (utility for tests and the
/// file format round trip).
inline GridTimeFunction sample_time_function(const TimeFunction& tf, const DomainSpec& dom,
                                             int width, int height) {
    GridTimeFunction g;
    g.width = width;
    g.height = height;
    g.lo = dom.box_lo;
    g.hi = dom.box_hi;
    g.q = tf.q;
    g.values.assign(static_cast<size_t>(width) * height,
                    std::numeric_limits<double>::quiet_NaN());
    for (int j = 0; j < height; ++j) {
        for (int i = 0; i < width; ++i) {
            const Vec2 p = g.node_center(i, j);
            if (dom.inside(p)) g.at(i, j) = tf.eval(p);
        }
    }
    return g;
}

// ---------------------------------------------------------------------------
// Structural validation
// ---------------------------------------------------------------------------

struct TimeValidationReport {
    bool ok = true;
    std::vector<std::string> issues;
    double boundary_max_abs = 0.0;  // max |T| over boundary samples
    double min_grad_norm = 0.0;     // min |grad T| off the collar
    double t_min = 0.0, t_max = 0.0;

    void fail(std::string msg) {
        ok = false;
        issues.push_back(std::move(msg));
    }
};

/// Checks the structural requirements of a time function on a sample grid:
/// range, zero boundary trace, unit stop level, nonvanishing gradient off
/// the collar, and connectedness of upper level sets.
inline TimeValidationReport validate_time_function(const TimeFunction& tf,
                                                   const DomainSpec& dom, int n = 128,
                                                   double eps_stop = kDefaultStopCollar) {
    TimeValidationReport rep;
    const double dx = (dom.box_hi.x - dom.box_lo.x) / n;
    const double dy = (dom.box_hi.y - dom.box_lo.y) / n;

    rep.t_min = std::numeric_limits<double>::infinity();
    rep.t_max = -std::numeric_limits<double>::infinity();
    rep.min_grad_norm = std::numeric_limits<double>::infinity();
    std::vector<char> interior(static_cast<size_t>(n) * n, 0);
    std::vector<double> tval(static_cast<size_t>(n) * n, 0.0);
    for (int j = 0; j < n; ++j) {
        for (int i = 0; i < n; ++i) {
            const Vec2 p{dom.box_lo.x + (i + 0.5) * dx, dom.box_lo.y + (j + 0.5) * dy};
            if (!dom.inside(p)) continue;
            const double t = tf.eval(p);
            interior[static_cast<size_t>(j) * n + i] = 1;
            tval[static_cast<size_t>(j) * n + i] = t;
            rep.t_min = std::min(rep.t_min, t);
            rep.t_max = std::max(rep.t_max, t);
            const double t0 = 1.0 - std::pow(1.0 - std::clamp(t, 0.0, 1.0), 1.0 / tf.q);
            if (t0 <= 1.0 - eps_stop) {
                rep.min_grad_norm = std::min(rep.min_grad_norm, tf.grad(p).norm());
            }
        }
    }
    if (rep.t_min < -tf.membership_tol || rep.t_max > 1.0 + kMembershipTol) {
        rep.fail("T leaves [0,1] on interior samples");
    }

    const double tau_bd = dom.boundary_tol();
    for (int k = 0; k < 4 * n; ++k) {
        const double s = dom.boundary.period_begin + dom.boundary.period() * (k + 0.5) / (4 * n);
        rep.boundary_max_abs =
            std::max(rep.boundary_max_abs, std::abs(tf.eval(dom.boundary.param(s))));
    }
    if (rep.boundary_max_abs > tau_bd) rep.fail("T does not vanish on the boundary");

    if (tf.stop_set.kind == StopSet::Kind::IsolatedPoint) {
        if (std::abs(tf.eval(tf.stop_set.point) - 1.0) > 1e-9) {
            rep.fail("T != 1 on the stop point");
        }
        if (!dom.inside(tf.stop_set.point)) rep.fail("stop point not interior");
    } else {
        for (const Vec2& v : tf.stop_set.arc) {
            if (std::abs(tf.eval(v) - 1.0) > 1e-9) rep.fail("T != 1 on the stop arc");
            if (!dom.inside(v)) rep.fail("stop arc leaves the open domain");
        }
    }

    if (!(rep.min_grad_norm > 0.0)) rep.fail("grad T vanishes away from the stop set");

    // Upper level sets must be connected: flood fill at a few levels.
    for (double lambda : {0.2, 0.5, 0.8}) {
        std::vector<char> marked(static_cast<size_t>(n) * n, 0);
        long count = 0;
        long seed = -1;
        for (long idx = 0; idx < static_cast<long>(marked.size()); ++idx) {
            if (interior[idx] && tval[idx] >= lambda) {
                marked[idx] = 1;
                ++count;
                if (seed < 0) seed = idx;
            }
        }
        if (count == 0) continue;
        std::deque<long> queue{seed};
        std::vector<char> seen(marked.size(), 0);
        seen[seed] = 1;
        long reached = 1;
        while (!queue.empty()) {
            const long idx = queue.front();
            queue.pop_front();
            const long i = idx % n, j = idx / n;
            const long nbrs[4] = {idx - 1, idx + 1, idx - n, idx + n};
            const bool valid[4] = {i > 0, i < n - 1, j > 0, j < n - 1};
            for (int k = 0; k < 4; ++k) {
                if (!valid[k]) continue;
                const long m = nbrs[k];
                if (marked[m] && !seen[m]) {
                    seen[m] = 1;
                    ++reached;
                    queue.push_back(m);
                }
            }
        }
        if (reached != count) {
            rep.fail("upper level set at lambda = " + std::to_string(lambda) +
                     " is disconnected");
        }
    }
    return rep;
}

}  // namespace moc2d
