#pragma once

// Transport-based image inpainting: a time function is built from the
// distance transform of the damaged region, a functionally causal tangent
// field is estimated from the structure tensor of the already-known
// composite, and the damaged pixels are filled by the quasi-linear solver
// with f = 0. Pixel (i, j) of the image maps to the domain point
// (i + 0.5, height - j - 0.5), so domain y runs upward.

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <memory>
#include <numbers>
#include <vector>

#include "moc2d/errors.hpp"
#include "moc2d/fields.hpp"
#include "moc2d/geometry.hpp"
#include "moc2d/grid_field.hpp"
#include "moc2d/pgm.hpp"
#include "moc2d/quasilinear.hpp"

namespace moc2d {

/// Per-pixel damage classification; 0 in the source PGM means damaged.
struct InpaintMask {
    int width = 0;
    int height = 0;
    std::vector<uint8_t> damaged;  // 1 = damaged, row-major, top to bottom

    bool is_damaged(int i, int j) const {
        return i >= 0 && j >= 0 && i < width && j < height &&
               damaged[static_cast<size_t>(j) * width + i] != 0;
    }

    static InpaintMask from_image(const GrayImage& img, double threshold = 0.5) {
        InpaintMask m;
        m.width = img.width;
        m.height = img.height;
        m.damaged.resize(img.pixels.size());
        for (size_t k = 0; k < img.pixels.size(); ++k) {
            m.damaged[k] = img.pixels[k] < threshold ? 1 : 0;
        }
        return m;
    }

    long damaged_count() const {
        long n = 0;
        for (uint8_t d : damaged) n += d;
        return n;
    }

    /// Damaged set must be nonempty, 4-connected, off the image border, and
    /// must not enclose known pixels (simple connectivity).
    void validate() const {
        const long n = damaged_count();
        if (n == 0) throw MaskInvalidError("mask has no damaged pixels");
        for (int i = 0; i < width; ++i) {
            if (is_damaged(i, 0) || is_damaged(i, height - 1)) {
                throw MaskInvalidError("damaged region touches the image border");
            }
        }
        for (int j = 0; j < height; ++j) {
            if (is_damaged(0, j) || is_damaged(width - 1, j)) {
                throw MaskInvalidError("damaged region touches the image border");
            }
        }
        // Flood fill the damaged set from its first pixel.
        std::vector<char> seen(damaged.size(), 0);
        long seed = -1;
        for (long k = 0; k < static_cast<long>(damaged.size()); ++k) {
            if (damaged[k]) {
                seed = k;
                break;
            }
        }
        std::vector<long> stack{seed};
        seen[seed] = 1;
        long reached = 1;
        while (!stack.empty()) {
            const long k = stack.back();
            stack.pop_back();
            const int i = static_cast<int>(k % width), j = static_cast<int>(k / width);
            const int ni[4] = {i - 1, i + 1, i, i};
            const int nj[4] = {j, j, j - 1, j + 1};
            for (int t = 0; t < 4; ++t) {
                if (!is_damaged(ni[t], nj[t])) continue;
                const long m = static_cast<long>(nj[t]) * width + ni[t];
                if (!seen[m]) {
                    seen[m] = 1;
                    ++reached;
                    stack.push_back(m);
                }
            }
        }
        if (reached != n) throw MaskInvalidError("damaged region is disconnected");
        // Known pixels must form one component too (no enclosed islands).
        std::vector<char> kseen(damaged.size(), 0);
        std::vector<long> kstack{0};  // corner is known (border check above)
        kseen[0] = 1;
        long kreached = 1;
        while (!kstack.empty()) {
            const long k = kstack.back();
            kstack.pop_back();
            const int i = static_cast<int>(k % width), j = static_cast<int>(k / width);
            const int ni[4] = {i - 1, i + 1, i, i};
            const int nj[4] = {j, j, j - 1, j + 1};
            for (int t = 0; t < 4; ++t) {
                if (ni[t] < 0 || nj[t] < 0 || ni[t] >= width || nj[t] >= height) continue;
                if (is_damaged(ni[t], nj[t])) continue;
                const long m = static_cast<long>(nj[t]) * width + ni[t];
                if (!kseen[m]) {
                    kseen[m] = 1;
                    ++kreached;
                    kstack.push_back(m);
                }
            }
        }
        if (kreached != static_cast<long>(damaged.size()) - n) {
            throw MaskInvalidError("damaged region encloses known pixels");
        }
    }
};

namespace detail {

/// 1D squared-distance transform (lower envelope of parabolas).
inline void edt_pass(const std::vector<double>& f, std::vector<double>& d) {
    const int n = static_cast<int>(f.size());
    std::vector<int> v(static_cast<size_t>(n));
    std::vector<double> z(static_cast<size_t>(n) + 1);
    int k = 0;
    v[0] = 0;
    z[0] = -std::numeric_limits<double>::infinity();
    z[1] = std::numeric_limits<double>::infinity();
    for (int q = 1; q < n; ++q) {
        double s;
        while (true) {
            const int p = v[static_cast<size_t>(k)];
            s = ((f[q] + q * q) - (f[p] + p * p)) / (2.0 * q - 2.0 * p);
            if (s <= z[static_cast<size_t>(k)]) {
                --k;
            } else {
                break;
            }
        }
        ++k;
        v[static_cast<size_t>(k)] = q;
        z[static_cast<size_t>(k)] = s;
        z[static_cast<size_t>(k) + 1] = std::numeric_limits<double>::infinity();
    }
    k = 0;
    for (int q = 0; q < n; ++q) {
        while (z[static_cast<size_t>(k) + 1] < q) ++k;
        const int p = v[static_cast<size_t>(k)];
        d[static_cast<size_t>(q)] = (q - p) * static_cast<double>(q - p) + f[p];
    }
}

/// Exact Euclidean distance (in pixels) to the nearest pixel where `source`
/// is set; source pixels get distance zero.
inline std::vector<double> distance_to_set(int w, int h,
                                           const std::function<bool(int, int)>& source) {
    const double inf = 1e18;
    std::vector<double> sq(static_cast<size_t>(w) * h);
    for (int j = 0; j < h; ++j) {
        for (int i = 0; i < w; ++i) {
            sq[static_cast<size_t>(j) * w + i] = source(i, j) ? 0.0 : inf;
        }
    }
    std::vector<double> col(static_cast<size_t>(h)), cold(static_cast<size_t>(h));
    for (int i = 0; i < w; ++i) {
        for (int j = 0; j < h; ++j) col[static_cast<size_t>(j)] = sq[static_cast<size_t>(j) * w + i];
        edt_pass(col, cold);
        for (int j = 0; j < h; ++j) sq[static_cast<size_t>(j) * w + i] = cold[static_cast<size_t>(j)];
    }
    std::vector<double> row(static_cast<size_t>(w)), rowd(static_cast<size_t>(w));
    for (int j = 0; j < h; ++j) {
        for (int i = 0; i < w; ++i) row[static_cast<size_t>(i)] = sq[static_cast<size_t>(j) * w + i];
        edt_pass(row, rowd);
        for (int i = 0; i < w; ++i) sq[static_cast<size_t>(j) * w + i] = rowd[static_cast<size_t>(i)];
    }
    for (double& v : sq) v = std::sqrt(v);
    return sq;
}

/// Distance to the known set (positive inside the hole).
inline std::vector<double> distance_to_known(const InpaintMask& mask) {
    return distance_to_set(mask.width, mask.height,
                           [&mask](int i, int j) { return !mask.is_damaged(i, j); });
}

inline void gaussian_smooth(std::vector<double>& a, int w, int h, double sigma) {
    if (sigma <= 0.0) return;
    const int r = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
    std::vector<double> kernel(static_cast<size_t>(2 * r + 1));
    double sum = 0.0;
    for (int k = -r; k <= r; ++k) {
        kernel[static_cast<size_t>(k + r)] = std::exp(-0.5 * k * k / (sigma * sigma));
        sum += kernel[static_cast<size_t>(k + r)];
    }
    for (double& v : kernel) v /= sum;
    std::vector<double> tmp(a.size());
    for (int j = 0; j < h; ++j) {
        for (int i = 0; i < w; ++i) {
            double acc = 0.0;
            for (int k = -r; k <= r; ++k) {
                const int ii = std::clamp(i + k, 0, w - 1);
                acc += kernel[static_cast<size_t>(k + r)] * a[static_cast<size_t>(j) * w + ii];
            }
            tmp[static_cast<size_t>(j) * w + i] = acc;
        }
    }
    for (int j = 0; j < h; ++j) {
        for (int i = 0; i < w; ++i) {
            double acc = 0.0;
            for (int k = -r; k <= r; ++k) {
                const int jj = std::clamp(j + k, 0, h - 1);
                acc += kernel[static_cast<size_t>(k + r)] * tmp[static_cast<size_t>(jj) * w + i];
            }
            a[static_cast<size_t>(j) * w + i] = acc;
        }
    }
}

/// Closed CCW polygon around the damaged set along pixel edges, in domain
/// coordinates. Damaged interior stays on the left of each directed edge.
inline std::vector<Vec2> trace_hole_polygon(const InpaintMask& mask) {
    const int w = mask.width, h = mask.height;
    auto damaged_dom = [&](int i, int jd) { return mask.is_damaged(i, h - 1 - jd); };
    struct EdgeRef {
        int to;      // corner key
        Vec2 dir;    // unit direction
        bool used = false;
    };
    const int cw = w + 1;
    std::multimap<int, EdgeRef> edges;
    auto key = [cw](int ci, int cj) { return cj * cw + ci; };
    for (int jd = 0; jd < h; ++jd) {
        for (int i = 0; i < w; ++i) {
            if (!damaged_dom(i, jd)) continue;
            if (!damaged_dom(i, jd - 1)) {
                edges.insert({key(i, jd), {key(i + 1, jd), {1, 0}}});
            }
            if (!damaged_dom(i + 1, jd)) {
                edges.insert({key(i + 1, jd), {key(i + 1, jd + 1), {0, 1}}});
            }
            if (!damaged_dom(i, jd + 1)) {
                edges.insert({key(i + 1, jd + 1), {key(i, jd + 1), {-1, 0}}});
            }
            if (!damaged_dom(i - 1, jd)) {
                edges.insert({key(i, jd + 1), {key(i, jd), {0, -1}}});
            }
        }
    }
    if (edges.empty()) throw MaskInvalidError("no boundary edges found");
    const int start = edges.begin()->first;
    auto corner_of = [cw](int k) { return Vec2{static_cast<double>(k % cw), static_cast<double>(k / cw)}; };
    std::vector<Vec2> poly;
    poly.push_back(corner_of(start));
    int current = start;
    Vec2 incoming{1, 0};
    size_t consumed = 0;
    while (true) {
        auto [lo, hi] = edges.equal_range(current);
        // Prefer the sharpest left turn so pinch corners stay on this loop.
        EdgeRef* pick = nullptr;
        double best_rank = -10.0;
        for (auto it = lo; it != hi; ++it) {
            if (it->second.used) continue;
            const Vec2 d = it->second.dir;
            const double rank = cross(incoming, d) * 2.0 + dot(incoming, d);
            if (rank > best_rank) {
                best_rank = rank;
                pick = &it->second;
            }
        }
        if (!pick) throw MaskInvalidError("boundary walk stalled; mask is not simple");
        pick->used = true;
        ++consumed;
        current = pick->to;
        incoming = pick->dir;
        if (current == start) break;
        poly.push_back(corner_of(current));
        if (consumed > edges.size()) throw MaskInvalidError("boundary walk did not close");
    }
    if (consumed != edges.size()) {
        throw MaskInvalidError("damaged boundary is not a single closed loop");
    }
    return poly;
}

inline BoundaryCurve polygon_boundary_curve(std::vector<Vec2> poly) {
    auto verts = std::make_shared<const std::vector<Vec2>>(std::move(poly));
    const double m = static_cast<double>(verts->size());
    BoundaryCurve curve;
    curve.period_begin = 0.0;
    curve.period_end = m;  // unit-length edges: parameter is arc length
    curve.param = [verts, m](double s) {
        double r = std::fmod(s, m);
        if (r < 0) r += m;
        const size_t k = std::min(static_cast<size_t>(r), verts->size() - 1);
        const double t = r - static_cast<double>(k);
        const Vec2 a = (*verts)[k];
        const Vec2 b = (*verts)[(k + 1) % verts->size()];
        return a + (b - a) * t;
    };
    curve.derivative = [verts, m](double s) {
        double r = std::fmod(s, m);
        if (r < 0) r += m;
        const size_t k = std::min(static_cast<size_t>(r), verts->size() - 1);
        const Vec2 a = (*verts)[k];
        const Vec2 b = (*verts)[(k + 1) % verts->size()];
        return b - a;
    };
    curve.project = [verts](Vec2 p) {
        double best_d = std::numeric_limits<double>::infinity();
        double best_s = 0.0;
        for (size_t k = 0; k < verts->size(); ++k) {
            const Vec2 a = (*verts)[k];
            const Vec2 b = (*verts)[(k + 1) % verts->size()];
            const Vec2 ab = b - a;
            const double t = std::clamp(dot(p - a, ab) / ab.norm_sq(), 0.0, 1.0);
            const double d = (p - (a + ab * t)).norm_sq();
            if (d < best_d) {
                best_d = d;
                best_s = static_cast<double>(k) + t;
            }
        }
        return best_s;
    };
    return curve;
}

/// Bilinear sample of the image restricted to known pixels (weights of
/// damaged pixels are dropped and the rest renormalized).
inline double sample_known(const GrayImage& img, const InpaintMask& mask, Vec2 p) {
    const double gx = std::clamp(p.x - 0.5, 0.0, img.width - 1.0);
    const double gy = std::clamp(img.height - 0.5 - p.y, 0.0, img.height - 1.0);
    const int i0 = std::min(static_cast<int>(gx), img.width - 2 >= 0 ? img.width - 2 : 0);
    const int j0 = std::min(static_cast<int>(gy), img.height - 2 >= 0 ? img.height - 2 : 0);
    const double u = gx - i0, v = gy - j0;
    const double wts[4] = {(1 - u) * (1 - v), u * (1 - v), (1 - u) * v, u * v};
    const int is[4] = {i0, i0 + 1, i0, i0 + 1};
    const int js[4] = {j0, j0, j0 + 1, j0 + 1};
    double acc = 0.0, wsum = 0.0;
    for (int k = 0; k < 4; ++k) {
        if (mask.is_damaged(is[k], js[k])) continue;
        acc += wts[k] * img.at(is[k], js[k]);
        wsum += wts[k];
    }
    if (wsum > 1e-12) return acc / wsum;
    // All four corners damaged: expanding search for the nearest known pixel.
    const int ci = std::clamp(static_cast<int>(std::lround(gx)), 0, img.width - 1);
    const int cj = std::clamp(static_cast<int>(std::lround(gy)), 0, img.height - 1);
    for (int r = 1; r < std::max(img.width, img.height); ++r) {
        double best = 0.0, best_d = std::numeric_limits<double>::infinity();
        for (int j = cj - r; j <= cj + r; ++j) {
            for (int i = ci - r; i <= ci + r; ++i) {
                if (i < 0 || j < 0 || i >= img.width || j >= img.height) continue;
                if (std::max(std::abs(i - ci), std::abs(j - cj)) != r) continue;
                if (mask.is_damaged(i, j)) continue;
                const double d = (i - gx) * (i - gx) + (j - gy) * (j - gy);
                if (d < best_d) {
                    best_d = d;
                    best = img.at(i, j);
                }
            }
        }
        if (best_d < std::numeric_limits<double>::infinity()) return best;
    }
    return 0.0;
}

}  // namespace detail

/// Raster domain derived from a mask: grid time function, boundary polygon,
/// and the solve layout over the damaged bounding box.
struct RasterDomain {
    GridTimeFunction time_grid;
    DomainSpec domain;
    GridLayout hole_layout;
    InpaintMask mask;
};

/// Build a time function from the damaged-region mask: smoothed distance
/// transform to the known set, normalized to [0,1]; the stop set is the
/// ridge maximum. q is supplied by the caller (default 4).
inline RasterDomain time_from_mask(const InpaintMask& mask, double sigma = 2.0, double q = 4.0) {
    mask.validate();
    const int w = mask.width, h = mask.height;
    // Signed distance: positive depth inside the hole, negative outside, so
    // the interpolated field has a usable gradient across the hole boundary.
    std::vector<double> dist = detail::distance_to_known(mask);
    double inradius = 0.0;
    for (double v : dist) inradius = std::max(inradius, v);
    {
        const std::vector<double> outside = detail::distance_to_set(
            w, h, [&mask](int i, int j) { return mask.is_damaged(i, j); });
        for (size_t k = 0; k < dist.size(); ++k) dist[k] -= outside[k];
    }
    const std::vector<double> raw = dist;
    // The smoothing scale must not flatten a narrow hole entirely.
    detail::gaussian_smooth(dist, w, h, std::min(sigma, 0.5 * inradius));
    {
        double smoothed_max = 0.0;
        for (int j = 0; j < h; ++j) {
            for (int i = 0; i < w; ++i) {
                if (mask.is_damaged(i, j)) {
                    smoothed_max = std::max(smoothed_max, dist[static_cast<size_t>(j) * w + i]);
                }
            }
        }
        if (!(smoothed_max > 0.0)) dist = raw;
    }
    double dmax = 0.0;
    int arg_i = 0, arg_j = 0;
    for (int j = 0; j < h; ++j) {
        for (int i = 0; i < w; ++i) {
            if (!mask.is_damaged(i, j)) continue;
            const double v = dist[static_cast<size_t>(j) * w + i];
            if (v > dmax) {
                dmax = v;
                arg_i = i;
                arg_j = j;
            }
        }
    }
    if (!(dmax > 0.0)) throw MaskInvalidError("distance transform vanished on the hole");

    RasterDomain rd;
    rd.mask = mask;
    rd.time_grid.width = w;
    rd.time_grid.height = h;
    rd.time_grid.lo = {0.0, 0.0};
    rd.time_grid.hi = {static_cast<double>(w), static_cast<double>(h)};
    rd.time_grid.q = q;
    rd.time_grid.values.resize(static_cast<size_t>(w) * h);
    // Image rows run top to bottom; grid rows run bottom to top. Smoothing
    // can push corner pixels of the hole below zero; damaged nodes are
    // snapped to a tiny positive time so every hole pixel stays solvable.
    for (int j = 0; j < h; ++j) {
        for (int i = 0; i < w; ++i) {
            double v = dist[static_cast<size_t>(h - 1 - j) * w + i] / dmax;
            if (mask.is_damaged(i, h - 1 - j)) v = std::max(v, 1e-9);
            rd.time_grid.at(i, j) = v;
        }
    }

    const StopSet stop = StopSet::isolated({arg_i + 0.5, h - arg_j - 0.5});
    rd.domain.time = rd.time_grid.to_time_function(stop);
    // Tolerate excursions of about a pixel past the zero level.
    rd.domain.time.membership_tol = std::min(0.5, 0.02 + 2.0 / dmax);
    rd.domain.boundary = detail::polygon_boundary_curve(detail::trace_hole_polygon(mask));

    int lo_i = w, lo_j = h, hi_i = -1, hi_j = -1;  // bbox in domain rows
    for (int jd = 0; jd < h; ++jd) {
        for (int i = 0; i < w; ++i) {
            if (!mask.is_damaged(i, h - 1 - jd)) continue;
            lo_i = std::min(lo_i, i);
            hi_i = std::max(hi_i, i);
            lo_j = std::min(lo_j, jd);
            hi_j = std::max(hi_j, jd);
        }
    }
    rd.domain.box_lo = {static_cast<double>(lo_i), static_cast<double>(lo_j)};
    rd.domain.box_hi = {static_cast<double>(hi_i + 1), static_cast<double>(hi_j + 1)};
    auto mask_copy = std::make_shared<const InpaintMask>(mask);
    rd.domain.inside = [mask_copy, h](Vec2 p) {
        const int i = static_cast<int>(std::floor(p.x));
        const int jd = static_cast<int>(std::floor(p.y));
        return mask_copy->is_damaged(i, h - 1 - jd);
    };
    rd.domain.area = static_cast<double>(mask.damaged_count());
    rd.domain.boundary_snap = 2.0;  // traces land within a pixel of the polygon
    rd.hole_layout = {rd.domain.box_lo, rd.domain.box_hi, hi_i - lo_i + 1, hi_j - lo_j + 1};
    return rd;
}

/// Boundary data pulled from the known image along the hole polygon.
inline BoundaryData make_image_boundary_data(const GrayImage& img, const InpaintMask& mask,
                                             const BoundaryCurve& curve) {
    auto image = std::make_shared<const GrayImage>(img);
    auto m = std::make_shared<const InpaintMask>(mask);
    BoundaryData data;
    data.eval = [image, m, curve](double s) {
        return detail::sample_known(*image, *m, curve.param(s));
    };
    data.sup_bound = 1.0;
    double tv = 0.0;
    const int n = static_cast<int>(4 * curve.period());
    double prev = data.eval(curve.period_begin);
    for (int k = 1; k <= n; ++k) {
        const double cur = data.eval(curve.period_begin + curve.period() * k / n);
        tv += std::abs(cur - prev);
        prev = cur;
    }
    data.tv_bound = tv;
    return data;
}

/// Level-line tangent field from the structure tensor of the composite
/// image (known pixels plus already-determined past pixels of v). Exactly
/// functionally causal: the accumulation reads v only where T0 < T0(x).
/// Where the tensor carries no orientation the field falls back to N, and
/// the tangent is blended just enough toward N to keep <c, N> >= beta_floor.
inline FunctionalTransportField make_causal_tangent_field(const RasterDomain& rd,
                                                          const GrayImage& img, double rho,
                                                          double beta_floor,
                                                          double eps_stop = kDefaultStopCollar) {
    auto image = std::make_shared<const GrayImage>(img);
    auto mask = std::make_shared<const InpaintMask>(rd.mask);
    auto t0 = std::make_shared<const ScalarGridField>(
        make_t0_field(rd.domain, rd.hole_layout, eps_stop));
    const TimeFunction tf = rd.domain.time;
    const GridLayout layout = rd.hole_layout;
    const int h = rd.mask.height;
    const int radius = std::max(1, static_cast<int>(std::ceil(2.0 * rho)));

    FunctionalTransportField field;
    field.beta = beta_floor;
    field.lipschitz_l1 = 1.0;  // declared metadata; audited empirically, not proven
    field.causal = true;
    field.freeze = [image, mask, t0, tf, layout, h, radius, rho, beta_floor,
                    declared_beta = field.beta](const ScalarGridField& v) {
        if (!(v.layout() == layout)) {
            throw GeometryInconsistencyError("tangent field argument layout mismatch");
        }
        auto snapshot = std::make_shared<const ScalarGridField>(v);
        auto eval = [image, mask, t0, tf, layout, h, radius, rho, beta_floor,
                     snapshot](Vec2 x) -> Vec2 {
            const double lambda = transformed_time(tf, x);
            const Vec2 n = normal_field(tf, x);
            // Availability: known pixels always; damaged pixels only when
            // their cell lies strictly in the past of x.
            auto available = [&](int i, int jd) -> bool {
                if (i < 0 || jd < 0 || i >= mask->width || jd >= h) return false;
                if (!mask->is_damaged(i, h - 1 - jd)) return true;
                const int ci = i - static_cast<int>(layout.lo.x);
                const int cj = jd - static_cast<int>(layout.lo.y);
                if (ci < 0 || cj < 0 || ci >= layout.nx || cj >= layout.ny) return false;
                const long idx = layout.index(ci, cj);
                return t0->mask(idx) == CellMask::Interior && t0->value(idx) < lambda;
            };
            auto value_at = [&](int i, int jd) -> double {
                if (!mask->is_damaged(i, h - 1 - jd)) return image->at(i, h - 1 - jd);
                const int ci = i - static_cast<int>(layout.lo.x);
                const int cj = jd - static_cast<int>(layout.lo.y);
                return snapshot->value(layout.index(ci, cj));
            };
            const int pi = static_cast<int>(std::floor(x.x));
            const int pj = static_cast<int>(std::floor(x.y));
            double jaa = 0.0, jab = 0.0, jbb = 0.0;
            for (int dj = -radius; dj <= radius; ++dj) {
                for (int di = -radius; di <= radius; ++di) {
                    const int i = pi + di, jd = pj + dj;
                    if (!available(i, jd) || !available(i - 1, jd) || !available(i + 1, jd) ||
                        !available(i, jd - 1) || !available(i, jd + 1)) {
                        continue;
                    }
                    const double gx = 0.5 * (value_at(i + 1, jd) - value_at(i - 1, jd));
                    const double gy = 0.5 * (value_at(i, jd + 1) - value_at(i, jd - 1));
                    const double wgt = std::exp(-0.5 * (di * di + dj * dj) / (rho * rho));
                    jaa += wgt * gx * gx;
                    jab += wgt * gx * gy;
                    jbb += wgt * gy * gy;
                }
            }
            const double tr = jaa + jbb;
            if (!(tr > 1e-12)) return n;  // no orientation information
            const double half_gap = std::hypot(0.5 * (jaa - jbb), jab);
            const double lam_min = 0.5 * tr - half_gap;
            if (half_gap <= 1e-9 * tr) return n;  // isotropic tensor
            // Minor eigenvector: the level-line tangent.
            Vec2 t{jab, lam_min - jaa};
            if (t.norm_sq() < 1e-30) t = Vec2{lam_min - jbb, jab};
            if (t.norm_sq() < 1e-30) return n;
            t = t.normalized();
            if (dot(t, n) < 0.0) t = -t;
            const double d = dot(t, n);
            if (d >= beta_floor) return t;
            const double e = dot(t, n.perp());
            const double sgn = e >= 0.0 ? 1.0 : -1.0;
            return n * beta_floor + n.perp() * (sgn * std::sqrt(1.0 - beta_floor * beta_floor));
        };
        return LinearTransportField{eval, declared_beta};
    };
    field.eval = [field](const ScalarGridField& v, Vec2 x) { return field.freeze(v).eval(x); };
    return field;
}

struct InpaintConfig {
    double q = 4.0;
    double sigma = 2.0;       // smoothing of the distance transform (px)
    double rho = 3.0;         // structure-tensor radius (px)
    double beta_floor = 0.1;
    double stripe_h = 0.05;   // stripe thickness in T0 units
    double tol = 1e-6;        // per-stripe L1 tolerance
    double dt = 1e-3;
    double time_tol = 1e-3;   // clock tolerance; raster time functions are kinked
    IntegratorMethod method = IntegratorMethod::Rk4Fixed;
    double eps_stop = kDefaultStopCollar;
    int threads = 0;
    int max_iters = 60;
};

struct InpaintResult {
    GrayImage image;
    SolveDiagnostics diagnostics;
    RasterDomain raster;
};

/// Fill the damaged pixels by the quasi-linear transport solve with f = 0.
/// Known pixels are returned untouched; damaged values are clamped to [0,1].
inline InpaintResult inpaint(const GrayImage& img, const InpaintMask& mask,
                             const InpaintConfig& cfg = {}) {
    if (img.width != mask.width || img.height != mask.height) {
        throw MaskInvalidError("image and mask dimensions differ");
    }
    RasterDomain rd = time_from_mask(mask, cfg.sigma, cfg.q);

    TransportProblem prob;
    prob.name = "inpaint";
    prob.domain = rd.domain;
    prob.c = make_causal_tangent_field(rd, img, cfg.rho, cfg.beta_floor, cfg.eps_stop);
    prob.f = FunctionalRhs::zero();
    prob.u0 = make_image_boundary_data(img, mask, rd.domain.boundary);
    prob.bounds = {0.0, 0.0, 0.0, prob.u0.sup_bound, prob.u0.tv_bound, cfg.beta_floor,
                   0.1,  rd.domain.area, 0.0, 0.0};

    IntegratorConfig integ;
    integ.method = cfg.method;
    integ.dt = cfg.dt;
    integ.eps_stop = cfg.eps_stop;
    integ.time_tol = cfg.time_tol;
    StripePlan plan;
    plan.lambda_max = 1.0 - cfg.eps_stop;
    plan.h = cfg.stripe_h;
    plan.validate();

    QuasilinearResult solved;
    try {
        solved = solve_quasilinear(prob, rd.hole_layout, plan, cfg.tol, integ, cfg.threads,
                                   cfg.max_iters);
    } catch (const Error& e) {
        throw IntegrationFailureError(std::string("inpainting solve failed over hole [") +
                                      std::to_string(static_cast<int>(rd.domain.box_lo.x)) +
                                      "," +
                                      std::to_string(static_cast<int>(rd.domain.box_lo.y)) +
                                      "]-[" +
                                      std::to_string(static_cast<int>(rd.domain.box_hi.x)) +
                                      "," +
                                      std::to_string(static_cast<int>(rd.domain.box_hi.y)) +
                                      "]: " + e.what());
    }

    InpaintResult out;
    out.image = img;
    const int h = mask.height;
    for (int jd = 0; jd < rd.hole_layout.ny; ++jd) {
        for (int i = 0; i < rd.hole_layout.nx; ++i) {
            const int img_i = i + static_cast<int>(rd.hole_layout.lo.x);
            const int img_j = h - 1 - (jd + static_cast<int>(rd.hole_layout.lo.y));
            if (!mask.is_damaged(img_i, img_j)) continue;
            const double v = solved.u.value(rd.hole_layout.index(i, jd));
            out.image.at(img_i, img_j) = std::clamp(v, 0.0, 1.0);
        }
    }
    out.diagnostics = std::move(solved.diagnostics);
    out.raster = std::move(rd);
    return out;
}

// ---------------------------------------------------------------------------
// Test cards
// ---------------------------------------------------------------------------

/// Vertical sinusoidal stripe card: value depends on the column only.
inline GrayImage make_stripe_card(int width, int height, double period, double amplitude = 0.35) {
    GrayImage img;
    img.width = width;
    img.height = height;
    img.pixels.resize(static_cast<size_t>(width) * height);
    for (int j = 0; j < height; ++j) {
        for (int i = 0; i < width; ++i) {
            img.at(i, j) = 0.5 + amplitude * std::sin(2.0 * std::numbers::pi * i / period);
        }
    }
    return img;
}

/// Linear ramp along the (dx, dy) direction, normalized to [0,1].
inline GrayImage make_ramp_card(int width, int height, double dx, double dy) {
    GrayImage img;
    img.width = width;
    img.height = height;
    img.pixels.resize(static_cast<size_t>(width) * height);
    const double span = std::abs(dx) * width + std::abs(dy) * height;
    for (int j = 0; j < height; ++j) {
        for (int i = 0; i < width; ++i) {
            const double t = (dx * i + dy * (height - 1 - j)) / span;
            img.at(i, j) = std::clamp(0.5 + t, 0.0, 1.0);
        }
    }
    return img;
}

/// Mask with a centered hole_size x hole_size damaged square.
inline InpaintMask make_centered_hole_mask(int width, int height, int hole_size) {
    InpaintMask m;
    m.width = width;
    m.height = height;
    m.damaged.assign(static_cast<size_t>(width) * height, 0);
    const int i0 = (width - hole_size) / 2, j0 = (height - hole_size) / 2;
    for (int j = j0; j < j0 + hole_size; ++j) {
        for (int i = i0; i < i0 + hole_size; ++i) {
            m.damaged[static_cast<size_t>(j) * width + i] = 1;
        }
    }
    return m;
}

inline GrayImage mask_to_image(const InpaintMask& m) {
    GrayImage img;
    img.width = m.width;
    img.height = m.height;
    img.pixels.resize(m.damaged.size());
    for (size_t k = 0; k < m.damaged.size(); ++k) img.pixels[k] = m.damaged[k] ? 0.0 : 1.0;
    return img;
}

}  // namespace moc2d
