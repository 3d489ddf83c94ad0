#pragma once

// Masked regular-grid scalar fields: the concrete stand-in for BV elements.
// Norms are masked Riemann sums over interior cells, so they are exactly
// reproducible for a fixed layout.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <limits>
#include <string>
#include <vector>

#include "moc2d/errors.hpp"
#include "moc2d/geometry.hpp"
#include "moc2d/vec2.hpp"

namespace moc2d {

enum class CellMask : uint8_t { Exterior = 0, Interior = 1, StopCollar = 2 };

/// Cell-centered layout of a rectangular grid.
struct GridLayout {
    Vec2 lo{};
    Vec2 hi{};
    int nx = 0;
    int ny = 0;

    double dx() const { return (hi.x - lo.x) / nx; }
    double dy() const { return (hi.y - lo.y) / ny; }
    double cell_area() const { return dx() * dy(); }
    long cell_count() const { return static_cast<long>(nx) * ny; }
    long index(int i, int j) const { return static_cast<long>(j) * nx + i; }
    Vec2 center(int i, int j) const {
        return {lo.x + (i + 0.5) * dx(), lo.y + (j + 0.5) * dy()};
    }
    Vec2 center(long idx) const {
        return center(static_cast<int>(idx % nx), static_cast<int>(idx / nx));
    }

    bool operator==(const GridLayout& o) const {
        return lo.x == o.lo.x && lo.y == o.lo.y && hi.x == o.hi.x && hi.y == o.hi.y &&
               nx == o.nx && ny == o.ny;
    }
};

/// Scalar samples at cell centers with a per-cell domain mask.
class ScalarGridField {
public:
    ScalarGridField() = default;

    ScalarGridField(GridLayout layout, double fill = 0.0)
        : layout_(layout),
          values_(static_cast<size_t>(layout.cell_count()), fill),
          mask_(static_cast<size_t>(layout.cell_count()), CellMask::Interior) {}

    ScalarGridField(GridLayout layout, std::vector<double> values, std::vector<CellMask> mask)
        : layout_(layout), values_(std::move(values)), mask_(std::move(mask)) {}

    const GridLayout& layout() const { return layout_; }
    int nx() const { return layout_.nx; }
    int ny() const { return layout_.ny; }
    double cell_area() const { return layout_.cell_area(); }

    double value(long idx) const { return values_[static_cast<size_t>(idx)]; }
    double value(int i, int j) const { return values_[static_cast<size_t>(layout_.index(i, j))]; }
    void set_value(long idx, double v) { values_[static_cast<size_t>(idx)] = v; }
    CellMask mask(long idx) const { return mask_[static_cast<size_t>(idx)]; }
    CellMask mask(int i, int j) const { return mask_[static_cast<size_t>(layout_.index(i, j))]; }
    void set_mask(long idx, CellMask m) { mask_[static_cast<size_t>(idx)] = m; }
    bool interior(long idx) const { return mask_[static_cast<size_t>(idx)] == CellMask::Interior; }

    const std::vector<double>& values() const { return values_; }
    std::vector<double>& values() { return values_; }
    const std::vector<CellMask>& masks() const { return mask_; }

    /// Sum of |v| * cell_area over interior cells.
    double l1_norm() const {
        double sum = 0.0;
        for (size_t k = 0; k < values_.size(); ++k) {
            if (mask_[k] == CellMask::Interior) sum += std::abs(values_[k]);
        }
        return sum * layout_.cell_area();
    }

    double linf_norm() const {
        double m = 0.0;
        for (size_t k = 0; k < values_.size(); ++k) {
            if (mask_[k] == CellMask::Interior) m = std::max(m, std::abs(values_[k]));
        }
        return m;
    }

    /// Total-variation estimate: forward-difference gradient magnitudes
    /// summed with the cell area, using only differences between interior
    /// cells.
    double tv_estimate() const {
        double sum = 0.0;
        const double dx = layout_.dx(), dy = layout_.dy();
        for (int j = 0; j < layout_.ny; ++j) {
            for (int i = 0; i < layout_.nx; ++i) {
                const long idx = layout_.index(i, j);
                if (!interior(idx)) continue;
                double gx = 0.0, gy = 0.0;
                if (i + 1 < layout_.nx && interior(layout_.index(i + 1, j))) {
                    gx = (value(i + 1, j) - value(i, j)) / dx;
                }
                if (j + 1 < layout_.ny && interior(layout_.index(i, j + 1))) {
                    gy = (value(i, j + 1) - value(i, j)) / dy;
                }
                sum += std::hypot(gx, gy);
            }
        }
        return sum * layout_.cell_area();
    }

    /// Bilinear interpolation through cell centers; clamped at the hull.
    /// Mask-agnostic: exterior cells participate with their stored values.
    double sample_bilinear(Vec2 p) const {
        const double gx = std::clamp((p.x - layout_.lo.x) / layout_.dx() - 0.5, 0.0,
                                     layout_.nx - 1.0);
        const double gy = std::clamp((p.y - layout_.lo.y) / layout_.dy() - 0.5, 0.0,
                                     layout_.ny - 1.0);
        const int i0 = std::min(static_cast<int>(gx), std::max(layout_.nx - 2, 0));
        const int j0 = std::min(static_cast<int>(gy), std::max(layout_.ny - 2, 0));
        const int i1 = std::min(i0 + 1, layout_.nx - 1);
        const int j1 = std::min(j0 + 1, layout_.ny - 1);
        const double u = gx - i0, v = gy - j0;
        return (1 - u) * (1 - v) * value(i0, j0) + u * (1 - v) * value(i1, j0) +
               (1 - u) * v * value(i0, j1) + u * v * value(i1, j1);
    }

    void save(std::ostream& os) const {
        os.write("MOC2DGF1", 8);
        detail::put_u32_le(os, static_cast<uint32_t>(layout_.nx));
        detail::put_u32_le(os, static_cast<uint32_t>(layout_.ny));
        detail::put_f64_le(os, layout_.lo.x);
        detail::put_f64_le(os, layout_.lo.y);
        detail::put_f64_le(os, layout_.hi.x);
        detail::put_f64_le(os, layout_.hi.y);
        detail::put_f64_le(os, 0.0);  // reserved slot, mirrors the time-function header
        for (double v : values_) detail::put_f64_le(os, v);
        os.write(reinterpret_cast<const char*>(mask_.data()),
                 static_cast<std::streamsize>(mask_.size()));
        if (!os) throw IoError("failed to write grid field");
    }

    static ScalarGridField load(std::istream& is) {
        char magic[8];
        is.read(magic, 8);
        if (!is || std::memcmp(magic, "MOC2DGF1", 8) != 0) {
            throw IoError("bad magic in grid field stream");
        }
        GridLayout layout;
        layout.nx = static_cast<int>(detail::get_u32_le(is));
        layout.ny = static_cast<int>(detail::get_u32_le(is));
        layout.lo.x = detail::get_f64_le(is);
        layout.lo.y = detail::get_f64_le(is);
        layout.hi.x = detail::get_f64_le(is);
        layout.hi.y = detail::get_f64_le(is);
        (void)detail::get_f64_le(is);
        if (layout.nx <= 0 || layout.ny <= 0 || layout.cell_count() > (1L << 26)) {
            throw IoError("implausible grid field dimensions");
        }
        std::vector<double> values(static_cast<size_t>(layout.cell_count()));
        for (double& v : values) v = detail::get_f64_le(is);
        std::vector<CellMask> mask(values.size());
        is.read(reinterpret_cast<char*>(mask.data()),
                static_cast<std::streamsize>(mask.size()));
        if (!is) throw IoError("truncated grid field stream");
        return ScalarGridField(layout, std::move(values), std::move(mask));
    }

    /// 8-bit PGM render: interior values affinely mapped to 0..255,
    /// non-interior cells black.
    void save_pgm(std::ostream& os) const {
        double vmin = std::numeric_limits<double>::infinity();
        double vmax = -std::numeric_limits<double>::infinity();
        for (size_t k = 0; k < values_.size(); ++k) {
            if (mask_[k] != CellMask::Interior) continue;
            vmin = std::min(vmin, values_[k]);
            vmax = std::max(vmax, values_[k]);
        }
        if (!(vmin <= vmax)) vmin = vmax = 0.0;
        const double span = vmax > vmin ? vmax - vmin : 1.0;
        os << "P5\n" << layout_.nx << " " << layout_.ny << "\n255\n";
        // PGM rows run top to bottom; grid rows run bottom to top.
        for (int j = layout_.ny - 1; j >= 0; --j) {
            for (int i = 0; i < layout_.nx; ++i) {
                const long idx = layout_.index(i, j);
                unsigned char byte = 0;
                if (interior(idx)) {
                    const double t = (value(idx) - vmin) / span;
                    byte = static_cast<unsigned char>(std::lround(255.0 * std::clamp(t, 0.0, 1.0)));
                }
                os.put(static_cast<char>(byte));
            }
        }
        if (!os) throw IoError("failed to write PGM render");
    }

private:
    GridLayout layout_;
    std::vector<double> values_;
    std::vector<CellMask> mask_;
};

/// T0 sampled at cell centers. Mask: Exterior outside the domain, StopCollar
/// where T0 > 1 - eps_stop, Interior otherwise. Exterior values are NaN.
inline ScalarGridField make_t0_field(const DomainSpec& dom, const GridLayout& layout,
                                     double eps_stop = kDefaultStopCollar) {
    ScalarGridField f(layout, std::numeric_limits<double>::quiet_NaN());
    for (long idx = 0; idx < layout.cell_count(); ++idx) {
        const Vec2 p = layout.center(idx);
        if (!dom.inside(p)) {
            f.set_mask(idx, CellMask::Exterior);
            continue;
        }
        double t0;
        try {
            t0 = transformed_time(dom.time, p);
        } catch (const DomainMembershipError&) {
            f.set_mask(idx, CellMask::Exterior);
            continue;
        }
        f.set_value(idx, t0);
        f.set_mask(idx, t0 > 1.0 - eps_stop ? CellMask::StopCollar : CellMask::Interior);
    }
    return f;
}

/// Zero field sharing the mask of a reference field (typically a t0 field).
inline ScalarGridField make_like(const ScalarGridField& ref, double fill = 0.0) {
    ScalarGridField f(ref.layout(), fill);
    for (long idx = 0; idx < ref.layout().cell_count(); ++idx) f.set_mask(idx, ref.mask(idx));
    return f;
}

/// v restricted to the past of level lambda: values kept exactly on interior
/// cells with t0 < lambda, zeroed elsewhere. Idempotent by construction.
inline ScalarGridField mask_past(const ScalarGridField& v, double lambda,
                                 const ScalarGridField& t0) {
    if (!(v.layout() == t0.layout())) {
        throw GeometryInconsistencyError("mask_past: field and t0 layouts differ");
    }
    ScalarGridField out = v;
    for (long idx = 0; idx < v.layout().cell_count(); ++idx) {
        const bool keep = t0.mask(idx) == CellMask::Interior && t0.value(idx) < lambda;
        if (!keep) out.set_value(idx, 0.0);
    }
    return out;
}

/// L1 norm restricted to interior cells with t0 < lambda.
inline double l1_norm_on_past(const ScalarGridField& v, double lambda,
                              const ScalarGridField& t0) {
    if (!(v.layout() == t0.layout())) {
        throw GeometryInconsistencyError("l1_norm_on_past: layouts differ");
    }
    double sum = 0.0;
    for (long idx = 0; idx < v.layout().cell_count(); ++idx) {
        if (t0.mask(idx) == CellMask::Interior && t0.value(idx) < lambda) {
            sum += std::abs(v.value(idx));
        }
    }
    return sum * v.cell_area();
}

/// L1 distance over interior cells (optionally restricted to the past).
inline double l1_distance(const ScalarGridField& a, const ScalarGridField& b) {
    if (!(a.layout() == b.layout())) {
        throw GeometryInconsistencyError("l1_distance: layouts differ");
    }
    double sum = 0.0;
    for (long idx = 0; idx < a.layout().cell_count(); ++idx) {
        if (a.mask(idx) == CellMask::Interior) sum += std::abs(a.value(idx) - b.value(idx));
    }
    return sum * a.cell_area();
}

inline double l1_distance_on_past(const ScalarGridField& a, const ScalarGridField& b,
                                  double lambda, const ScalarGridField& t0) {
    double sum = 0.0;
    for (long idx = 0; idx < a.layout().cell_count(); ++idx) {
        if (t0.mask(idx) == CellMask::Interior && t0.value(idx) < lambda) {
            sum += std::abs(a.value(idx) - b.value(idx));
        }
    }
    return sum * a.cell_area();
}

}  // namespace moc2d
