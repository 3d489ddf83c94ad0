#pragma once

// Fixed-point solution of the quasi-linear problem by causality-exploiting
// stripe marching: the domain is swept in T0-slabs, and on each slab the
// frozen-coefficient linear operator is Picard-iterated. Functional
// causality makes earlier slabs final, so the iteration on a slab of
// thickness h contracts with factor h * kappa once h < 1/kappa.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "moc2d/csv.hpp"
#include "moc2d/errors.hpp"
#include "moc2d/fields.hpp"
#include "moc2d/grid_field.hpp"
#include "moc2d/linear_solver.hpp"
#include "moc2d/parallel.hpp"

namespace moc2d {

/// A quasi-linear Dirichlet problem bundle with its declared constants.
struct TransportProblem {
    std::string name;
    DomainSpec domain;
    FunctionalTransportField c;
    FunctionalRhs f;
    BoundaryData u0;
    SelfMapBoundInputs bounds;  // declared M1..M5, beta, m0, area, H1, ||DN||

    SelfMapBounds self_map_bounds() const { return compute_self_map_bounds(bounds); }
};

/// Decomposition of [0, lambda_max) into stripes of thickness h plus a final
/// partial stripe.
struct StripePlan {
    double lambda_max = 1.0 - kDefaultStopCollar;
    double h = 0.1;
    bool used_fallback_h = false;

    int full_stripes() const { return static_cast<int>(std::floor(lambda_max / h + 1e-12)); }
    double final_thickness() const { return lambda_max - full_stripes() * h; }
    int stripe_count() const { return full_stripes() + (final_thickness() > 1e-12 ? 1 : 0); }
    double stripe_lo(int l) const { return l * h; }
    double stripe_hi(int l) const { return std::min((l + 1) * h, lambda_max); }

    void validate() const {
        if (!(h > 0.0) || !(lambda_max > 0.0) || lambda_max >= 1.0) {
            throw InvalidBoundsError("stripe plan requires h > 0 and lambda_max in (0, 1)");
        }
    }

    /// Size stripes from a contraction estimate: h just below 1/kappa,
    /// falling back to h_min (with a flag) when kappa is too pessimistic.
    static StripePlan make(double lambda_max, double kappa_estimate, double h_min = 0.05,
                           double h_max = 0.2) {
        StripePlan plan;
        plan.lambda_max = lambda_max;
        if (kappa_estimate <= 0.0) {
            plan.h = h_max;
        } else {
            const double h_contract = 0.9 / kappa_estimate;
            plan.h = std::clamp(h_contract, h_min, h_max);
            plan.used_fallback_h = h_contract < h_min;
        }
        plan.h = std::min(plan.h, lambda_max);
        plan.validate();
        return plan;
    }
};

/// Plug-in contraction constants:
///   C_lambda = K_lambda / (beta m0 k_lambda),
///   kappa_lambda = C_lambda (L2 Area + L1 M**).
struct ContractionConstants {
    double lambda = 0.0;
    double k_lambda = 0.0;
    double K_lambda = 0.0;
    double C_lambda = 0.0;
    double kappa_lambda = 0.0;
    double beta = 1.0, m0 = 1.0, L1 = 0.0, L2 = 0.0, m_star_star = 0.0, area = 0.0;
};

inline ContractionConstants compute_contraction_constants(std::span<const double> det_samples,
                                                          double beta, double m0, double L1,
                                                          double L2, double m_star_star,
                                                          double area, double lambda) {
    if (det_samples.empty()) throw InvalidBoundsError("no determinant samples");
    if (!(lambda > 0.0) || lambda >= 1.0) throw InvalidBoundsError("lambda must be in (0,1)");
    ContractionConstants cc;
    cc.lambda = lambda;
    cc.k_lambda = std::numeric_limits<double>::infinity();
    cc.K_lambda = 0.0;
    for (double d : det_samples) {
        if (!(d > 0.0)) {
            throw CharacteristicCrossingError("nonpositive determinant sample " +
                                              std::to_string(d));
        }
        cc.k_lambda = std::min(cc.k_lambda, d);
        cc.K_lambda = std::max(cc.K_lambda, d);
    }
    cc.beta = beta;
    cc.m0 = m0;
    cc.L1 = L1;
    cc.L2 = L2;
    cc.m_star_star = m_star_star;
    cc.area = area;
    cc.C_lambda = cc.K_lambda / (beta * m0 * cc.k_lambda);
    cc.kappa_lambda = cc.C_lambda * (L2 * area + L1 * m_star_star);
    return cc;
}

struct StripeDiagnostics {
    int stripe = 0;
    double lo = 0.0, hi = 0.0;
    long cells = 0;
    int iterations = 0;
    double final_update = 0.0;
    double contraction_ratio = 0.0;  // last measured update ratio, 0 if single pass
};

struct SolveDiagnostics {
    struct IterationRecord {
        int stripe;
        int iteration;
        double update;
        double ratio;  // update_k / update_{k-1}, 0 for the first iteration
    };
    std::vector<IterationRecord> iterations;
    std::vector<StripeDiagnostics> stripes;
    long total_iterations = 0;
    double kappa_plugin = 0.0;
    double wall_seconds = 0.0;  // never serialized: reports must be reproducible

    void write_csv(std::ostream& os) const {
        CsvWriter csv(os);
        csv.header({"stripe", "iteration", "update", "ratio"});
        for (const auto& r : iterations) {
            csv.cell(r.stripe).cell(r.iteration).cell(r.update).cell(r.ratio).end_row();
        }
    }
};

struct QuasilinearResult {
    ScalarGridField u;
    SolveDiagnostics diagnostics;
};

namespace detail {

/// One frozen-coefficient sweep over the given cells; returns the L1 update
/// against the current values and commits the new ones.
inline double picard_sweep(ScalarGridField& u, const std::vector<long>& cells,
                           const TransportProblem& prob, const ScalarGridField& v,
                           const IntegratorConfig& cfg, int threads) {
    const LinearTransportField c_frozen = prob.c.frozen(v);
    const LinearRhs f_frozen = prob.f.frozen(v);
    std::vector<double> fresh(cells.size(), 0.0);
    parallel_for(0, static_cast<long>(cells.size()), threads, [&](long k) {
        fresh[static_cast<size_t>(k)] = solve_at_point(
            prob.domain, c_frozen, f_frozen, prob.u0, u.layout().center(cells[k]), cfg);
    });
    double update = 0.0;
    for (size_t k = 0; k < cells.size(); ++k) {
        update += std::abs(fresh[k] - u.value(cells[k]));
        u.set_value(cells[k], fresh[k]);
    }
    return update * u.cell_area();
}

/// Predictor for a stripe: walk each cell against the transport direction
/// into the already-converged region and copy the value found there.
inline void extend_from_past(ScalarGridField& u, const std::vector<long>& cells, double lo,
                             const TransportProblem& prob, const ScalarGridField& t0,
                             const IntegratorConfig& cfg) {
    if (lo <= 0.0) return;  // first stripe: boundary data is the natural guess
    const LinearTransportField dir = prob.c.frozen(u);
    const double step = 0.5 * std::min(u.layout().dx(), u.layout().dy());
    for (long idx : cells) {
        Vec2 p = u.layout().center(idx);
        try {
            for (int k = 0; k < 128; ++k) {
                p -= dir.eval(p).normalized() * step;
                if (transformed_time(prob.domain.time, p) < lo) {
                    u.set_value(idx, u.sample_bilinear(p));
                    break;
                }
            }
        } catch (const Error&) {
            // keep the existing value when the walk leaves the domain
        }
    }
    (void)t0;
    (void)cfg;
}

}  // namespace detail

/// Stripe-marching fixed-point solve. Stripes are processed in causal order;
/// within a stripe the frozen-coefficient operator is iterated until the L1
/// update over the stripe drops below tol. Coefficients that declare zero
/// Lipschitz constants make every stripe exact after one sweep, reproducing
/// the linear solver bit for bit.
///
/// When initial_guess is given it seeds the functional argument everywhere
/// (the predictor is skipped); otherwise the iterate starts at zero and each
/// stripe is seeded by constant extension from the previous one.
inline QuasilinearResult solve_quasilinear(const TransportProblem& prob, const GridLayout& grid,
                                           const StripePlan& plan, double tol,
                                           const IntegratorConfig& cfg, int threads = 0,
                                           int max_iters_per_stripe = 60,
                                           const std::optional<ScalarGridField>& initial_guess =
                                               std::nullopt) {
    plan.validate();
    if (!(tol > 0.0)) throw InvalidBoundsError("tolerance must be positive");
    const auto start = std::chrono::steady_clock::now();
    const ScalarGridField t0 = make_t0_field(prob.domain, grid, cfg.eps_stop);
    ScalarGridField u = make_like(t0);
    const bool use_predictor = !initial_guess.has_value();
    if (initial_guess) {
        if (!(initial_guess->layout() == grid)) {
            throw GeometryInconsistencyError("initial guess layout differs from the solve grid");
        }
        for (long idx = 0; idx < grid.cell_count(); ++idx) {
            if (u.mask(idx) == CellMask::Interior) u.set_value(idx, initial_guess->value(idx));
        }
    }
    const bool coefficients_frozen = prob.c.lipschitz_l1 == 0.0 && prob.f.lipschitz_l1 == 0.0;

    SolveDiagnostics diag;
    for (int l = 0; l < plan.stripe_count(); ++l) {
        const double lo = plan.stripe_lo(l);
        const double hi = plan.stripe_hi(l);
        const bool last = l == plan.stripe_count() - 1;
        std::vector<long> cells;
        for (long idx = 0; idx < grid.cell_count(); ++idx) {
            if (t0.mask(idx) != CellMask::Interior) continue;
            const double t = t0.value(idx);
            if (t >= lo && (t < hi || (last && t <= hi))) cells.push_back(idx);
        }
        StripeDiagnostics sd;
        sd.stripe = l;
        sd.lo = lo;
        sd.hi = hi;
        sd.cells = static_cast<long>(cells.size());
        if (cells.empty()) {
            diag.stripes.push_back(sd);
            continue;
        }
        if (use_predictor) detail::extend_from_past(u, cells, lo, prob, t0, cfg);

        double prev_update = 0.0;
        for (int it = 1;; ++it) {
            const ScalarGridField v = u;  // frozen functional argument
            const double update = detail::picard_sweep(u, cells, prob, v, cfg, threads);
            const double ratio = it > 1 && prev_update > 0.0 ? update / prev_update : 0.0;
            diag.iterations.push_back({l, it, update, ratio});
            ++diag.total_iterations;
            sd.iterations = it;
            sd.final_update = update;
            if (ratio > 0.0) sd.contraction_ratio = ratio;
            prev_update = update;
            if (coefficients_frozen || update <= tol) break;
            if (it >= max_iters_per_stripe) {
                throw ContractionFailureError(
                    "stripe " + std::to_string(l) + " did not converge: update " +
                    std::to_string(update) + ", last ratio " + std::to_string(ratio));
            }
        }
        diag.stripes.push_back(sd);
    }
    fill_stop_collar(u, t0, prob.domain, prob.c.frozen(u).eval, cfg.eps_stop, &prob.u0);
    diag.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return {std::move(u), std::move(diag)};
}

/// Whole-domain Picard iteration (no stripes); cross-check for the march.
/// Causality makes the first l stripes exact after l sweeps, so this
/// converges in at most stripe-count + 1 sweeps for exactly causal
/// coefficients.
inline QuasilinearResult global_picard_solve(const TransportProblem& prob,
                                             const GridLayout& grid, double lambda_max,
                                             double tol, const IntegratorConfig& cfg,
                                             int threads = 0, int max_iters = 200,
                                             const std::optional<ScalarGridField>&
                                                 initial_guess = std::nullopt) {
    if (!(tol > 0.0)) throw InvalidBoundsError("tolerance must be positive");
    const auto start = std::chrono::steady_clock::now();
    const ScalarGridField t0 = make_t0_field(prob.domain, grid, cfg.eps_stop);
    ScalarGridField u = make_like(t0);
    if (initial_guess) {
        for (long idx = 0; idx < grid.cell_count(); ++idx) {
            if (u.mask(idx) == CellMask::Interior) u.set_value(idx, initial_guess->value(idx));
        }
    }
    std::vector<long> cells;
    for (long idx = 0; idx < grid.cell_count(); ++idx) {
        if (t0.mask(idx) == CellMask::Interior && t0.value(idx) <= lambda_max) {
            cells.push_back(idx);
        }
    }
    const bool coefficients_frozen = prob.c.lipschitz_l1 == 0.0 && prob.f.lipschitz_l1 == 0.0;
    SolveDiagnostics diag;
    double prev_update = 0.0;
    for (int it = 1;; ++it) {
        const ScalarGridField v = u;
        const double update = detail::picard_sweep(u, cells, prob, v, cfg, threads);
        const double ratio = it > 1 && prev_update > 0.0 ? update / prev_update : 0.0;
        diag.iterations.push_back({0, it, update, ratio});
        ++diag.total_iterations;
        prev_update = update;
        if (coefficients_frozen || update <= tol) break;
        if (it >= max_iters) {
            throw ContractionFailureError("global Picard iteration did not converge");
        }
    }
    fill_stop_collar(u, t0, prob.domain, prob.c.frozen(u).eval, cfg.eps_stop, &prob.u0);
    diag.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return {std::move(u), std::move(diag)};
}

/// Measured L1 Lipschitz ratio of the solution operator on the past of
/// lambda: ||U[v1]-U[v2]||_L1 / ||v1-v2||_L1, both restricted to T0 < lambda.
inline double measure_operator_lipschitz(const TransportProblem& prob,
                                         const ScalarGridField& v1, const ScalarGridField& v2,
                                         double lambda, const GridLayout& grid,
                                         const IntegratorConfig& cfg, int threads = 0) {
    const ScalarGridField t0 = make_t0_field(prob.domain, grid, cfg.eps_stop);
    const double den = l1_distance_on_past(v1, v2, lambda, t0);
    if (!(den > 0.0)) throw DegeneratePairError("v1 and v2 coincide on the past of lambda");
    std::vector<long> cells;
    for (long idx = 0; idx < grid.cell_count(); ++idx) {
        if (t0.mask(idx) == CellMask::Interior && t0.value(idx) < lambda) cells.push_back(idx);
    }
    ScalarGridField u1 = make_like(t0), u2 = make_like(t0);
    const LinearTransportField c1 = prob.c.frozen(v1), c2 = prob.c.frozen(v2);
    const LinearRhs f1 = prob.f.frozen(v1), f2 = prob.f.frozen(v2);
    parallel_for(0, static_cast<long>(cells.size()), threads, [&](long k) {
        const Vec2 x = grid.center(cells[k]);
        u1.set_value(cells[k], solve_at_point(prob.domain, c1, f1, prob.u0, x, cfg));
        u2.set_value(cells[k], solve_at_point(prob.domain, c2, f2, prob.u0, x, cfg));
    });
    return l1_distance_on_past(u1, u2, lambda, t0) / den;
}

}  // namespace moc2d
