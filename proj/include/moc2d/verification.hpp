#pragma once

// Desk-scale experiment drivers for the solver's guarantees: manufactured
// solutions, determinant bounds, contraction, uniqueness, and continuous
// dependence. Every report is a pure function of (problem, seed, config);
// wall time is kept out of the serialized output.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numbers>
#include <ostream>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "moc2d/characteristics.hpp"
#include "moc2d/csv.hpp"
#include "moc2d/fields.hpp"
#include "moc2d/grid_field.hpp"
#include "moc2d/linear_solver.hpp"
#include "moc2d/parallel.hpp"
#include "moc2d/presets.hpp"
#include "moc2d/quasilinear.hpp"

namespace moc2d {

struct CheckResult {
    std::string name;
    double value = 0.0;
    double threshold = 0.0;
    bool pass = false;
};

struct ExperimentReport {
    std::string name;
    std::vector<std::pair<std::string, double>> scalars;
    std::vector<CheckResult> checks;
    double wall_seconds = 0.0;  // excluded from CSV

    void scalar(std::string key, double v) { scalars.emplace_back(std::move(key), v); }
    void check(std::string key, double v, double threshold, bool pass) {
        checks.push_back({std::move(key), v, threshold, pass});
    }
    bool all_pass() const {
        for (const auto& c : checks) {
            if (!c.pass) return false;
        }
        return true;
    }

    void write_csv(std::ostream& os) const {
        CsvWriter csv(os);
        csv.header({"kind", "name", "value", "threshold", "pass"});
        for (const auto& [k, v] : scalars) {
            csv.cell(std::string("scalar")).cell(k).cell(v).cell(std::string()).cell(std::string()).end_row();
        }
        for (const auto& c : checks) {
            csv.cell(std::string("check")).cell(c.name).cell(c.value).cell(c.threshold).cell(c.pass ? 1 : 0).end_row();
        }
    }

    void write_summary(std::ostream& os) const {
        os << "== " << name << " ==\n";
        for (const auto& [k, v] : scalars) os << "  " << k << " = " << format_double(v) << "\n";
        for (const auto& c : checks) {
            os << "  [" << (c.pass ? "PASS" : "FAIL") << "] " << c.name << " = "
               << format_double(c.value) << " (threshold " << format_double(c.threshold)
               << ")\n";
        }
    }
};

/// Deterministic interior probe points away from the stop collar.
inline std::vector<Vec2> sample_interior_points(const DomainSpec& dom, int n, uint64_t seed,
                                                double eps_stop = kDefaultStopCollar,
                                                double lambda_max = 0.95) {
    std::mt19937_64 rng(seed);
    std::vector<Vec2> pts;
    pts.reserve(static_cast<size_t>(n));
    long guard = 0;
    while (static_cast<int>(pts.size()) < n && ++guard < 100000L * n) {
        const Vec2 p{dom.box_lo.x + (dom.box_hi.x - dom.box_lo.x) * uniform01(rng),
                     dom.box_lo.y + (dom.box_hi.y - dom.box_lo.y) * uniform01(rng)};
        if (!dom.inside(p)) continue;
        const double t0 = transformed_time(dom.time, p);
        if (t0 > std::min(lambda_max, 1.0 - eps_stop)) continue;
        pts.push_back(p);
    }
    if (static_cast<int>(pts.size()) < n) {
        throw GeometryInconsistencyError("probe sampling starved; domain nearly empty?");
    }
    return pts;
}

// ---------------------------------------------------------------------------
// Perturbations (continuous-dependence experiments)
// ---------------------------------------------------------------------------

/// Sup-norm perturbation magnitudes for boundary data, right-hand side, and
/// transport field. The field perturbation is a pointwise rotation, so unit
/// speed is preserved exactly and only the declared beta shrinks.
struct PerturbationSpec {
    double delta_u0 = 0.0;
    double delta_f = 0.0;
    double delta_c = 0.0;
    uint64_t seed = 0;
};

inline TransportProblem apply_perturbation(const TransportProblem& prob,
                                           const PerturbationSpec& spec) {
    std::mt19937_64 rng(spec.seed);
    const double two_pi = 2.0 * std::numbers::pi;
    const double ph1 = two_pi * uniform01(rng);
    const double ph2 = two_pi * uniform01(rng);
    const double ph3 = two_pi * uniform01(rng);
    const double ph4 = two_pi * uniform01(rng);
    const double ph5 = two_pi * uniform01(rng);
    const double diam = prob.domain.diameter();
    const double ax = two_pi / diam * (1.0 + uniform01(rng));
    const double by = two_pi / diam * (1.0 + uniform01(rng));

    TransportProblem out = prob;
    out.name = prob.name + "-perturbed";

    // Boundary data: two-wave sine profile along the period (TV = 8 per unit
    // amplitude).
    {
        const double sb = prob.domain.boundary.period_begin;
        const double freq = 2.0 * two_pi / prob.domain.boundary.period();
        const double d = spec.delta_u0;
        auto base = prob.u0.eval;
        out.u0.eval = [base, d, freq, sb, ph1](double s) {
            return base(s) + d * std::sin(freq * (s - sb) + ph1);
        };
        out.u0.sup_bound = prob.u0.sup_bound + d;
        out.u0.tv_bound = prob.u0.tv_bound + 8.0 * d;
        out.bounds.M4 += d;
        out.bounds.M5 += 8.0 * d;
    }

    // Right-hand side: additive smooth bump, |psi| <= 1.
    {
        const double d = spec.delta_f;
        auto psi = [ax, by, ph2, ph3](Vec2 x) {
            return std::cos(ax * x.x + ph2) * std::cos(by * x.y + ph3);
        };
        const FunctionalRhs inner = prob.f;
        out.f.sup_bound = prob.f.sup_bound + d;
        out.f.grad_sup_bound = prob.f.grad_sup_bound + d * std::hypot(ax, by);
        out.f.lipschitz_l1 = prob.f.lipschitz_l1;
        out.f.causal = prob.f.causal;
        out.f.freeze = [inner, psi, d, m2 = out.f.sup_bound,
                        m3 = out.f.grad_sup_bound](const ScalarGridField& v) {
            const LinearRhs base = inner.frozen(v);
            auto be = base.eval;
            return LinearRhs{[be, psi, d](Vec2 x) { return (be ? be(x) : 0.0) + d * psi(x); },
                             m2, m3};
        };
        out.f.eval = [f = out.f](const ScalarGridField& v, Vec2 x) { return f.freeze(v).eval(x); };
        out.bounds.M2 = out.f.sup_bound;
        out.bounds.M3 = out.f.grad_sup_bound;
    }

    // Transport field: pointwise rotation by delta_c * chi(x), |chi| <= 1.
    {
        const double d = spec.delta_c;
        auto chi = [ax, by, ph4, ph5](Vec2 x) {
            return std::sin(ax * x.x + ph4) * std::sin(by * x.y + ph5);
        };
        const FunctionalTransportField inner = prob.c;
        const double beta_new = std::cos(std::acos(std::min(1.0, prob.c.beta)) + d);
        out.c.beta = beta_new;
        out.c.lipschitz_l1 = prob.c.lipschitz_l1;
        out.c.dx_l1_bound = prob.c.dx_l1_bound;
        out.c.causal = prob.c.causal;
        out.c.freeze = [inner, chi, d, beta_new](const ScalarGridField& v) {
            const LinearTransportField base = inner.frozen(v);
            auto be = base.eval;
            return LinearTransportField{
                [be, chi, d](Vec2 x) { return rotate(be(x), d * chi(x)); }, beta_new};
        };
        out.c.eval = [c = out.c](const ScalarGridField& v, Vec2 x) { return c.freeze(v).eval(x); };
        out.bounds.beta = beta_new;
    }
    return out;
}

/// Probe-set estimate of ||c - c_tilde||_0 = sup_v ||c[v] - c_tilde[v]||_inf.
inline double estimate_field_distance(const FunctionalTransportField& c1,
                                      const FunctionalTransportField& c2,
                                      const std::vector<ScalarGridField>& vs,
                                      const std::vector<Vec2>& xs) {
    double best = 0.0;
    for (const auto& v : vs) {
        const LinearTransportField a = c1.frozen(v), b = c2.frozen(v);
        for (const Vec2& x : xs) best = std::max(best, (a.eval(x) - b.eval(x)).norm());
    }
    return best;
}

inline double estimate_rhs_distance(const FunctionalRhs& f1, const FunctionalRhs& f2,
                                    const std::vector<ScalarGridField>& vs,
                                    const std::vector<Vec2>& xs) {
    double best = 0.0;
    for (const auto& v : vs) {
        const LinearRhs a = f1.frozen(v), b = f2.frozen(v);
        for (const Vec2& x : xs) {
            const double av = a.eval ? a.eval(x) : 0.0;
            const double bv = b.eval ? b.eval(x) : 0.0;
            best = std::max(best, std::abs(av - bv));
        }
    }
    return best;
}

/// L1 boundary distance of two data sets w.r.t. arc length.
inline double boundary_l1_distance(const BoundaryData& a, const BoundaryData& b,
                                   const BoundaryCurve& curve, int n = 2048) {
    double sum = 0.0;
    const double len = curve.period();
    for (int k = 0; k < n; ++k) {
        const double s = curve.period_begin + len * (k + 0.5) / n;
        sum += std::abs(a.eval(s) - b.eval(s)) * curve.derivative(s).norm();
    }
    return sum * len / n;
}

// ---------------------------------------------------------------------------
// Experiments
// ---------------------------------------------------------------------------

struct ManufacturedRung {
    int grid = 64;
    double dt = 8e-3;
};

/// Manufactured-solution refinement study: f = <c, grad g>, u0 = g on the
/// boundary, so the exact solution is g. Error is L1 over the past of
/// lambda; grid and step refine together.
inline ExperimentReport run_manufactured(const DomainSpec& dom, const LinearTransportField& c,
                                         const std::function<double(Vec2)>& g,
                                         const std::function<Vec2(Vec2)>& grad_g,
                                         const std::vector<ManufacturedRung>& rungs,
                                         double lambda, const IntegratorConfig& cfg_base,
                                         int threads = 0, double min_order = 1.0) {
    const auto t_start = std::chrono::steady_clock::now();
    ExperimentReport rep;
    rep.name = "manufactured";
    const LinearRhs f{[&c, grad_g](Vec2 x) { return dot(c.eval(x), grad_g(x)); }, 0.0, 0.0};
    const BoundaryData u0{[&dom, g](double s) { return g(dom.boundary.param(s)); }, 0.0, 0.0};

    std::vector<double> errors;
    for (const auto& rung : rungs) {
        IntegratorConfig cfg = cfg_base;
        cfg.dt = rung.dt;
        const GridLayout grid{dom.box_lo, dom.box_hi, rung.grid, rung.grid};
        const ScalarGridField t0 = make_t0_field(dom, grid, cfg.eps_stop);
        const ScalarGridField u = solve_linear(dom, c, f, u0, grid, cfg, threads, &t0);
        double err = 0.0;
        for (long idx = 0; idx < grid.cell_count(); ++idx) {
            if (t0.mask(idx) == CellMask::Interior && t0.value(idx) < lambda) {
                err += std::abs(u.value(idx) - g(grid.center(idx)));
            }
        }
        err *= grid.cell_area();
        errors.push_back(err);
        rep.scalar("l1_error_" + std::to_string(rung.grid), err);
    }
    for (size_t i = 0; i + 1 < errors.size(); ++i) {
        const double order =
            std::log2(std::max(errors[i], 1e-300) / std::max(errors[i + 1], 1e-300));
        rep.check("order_" + std::to_string(rungs[i].grid) + "_" +
                      std::to_string(rungs[i + 1].grid),
                  order, min_order, order >= min_order);
    }
    if (errors.size() >= 2) {
        rep.check("finest_error_below_coarsest", errors.back(), errors.front(),
                  errors.back() <= errors.front());
    }
    rep.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
    return rep;
}

/// Jacobian-determinant bounds k_lambda, K_lambda over a (t,s) lattice per
/// lambda, with positivity and monotonicity assertions.
inline ExperimentReport run_det_bounds(const DomainSpec& dom, const LinearTransportField& c,
                                       std::vector<double> lambdas, int nt, int ns,
                                       const IntegratorConfig& cfg, int threads = 0) {
    const auto t_start = std::chrono::steady_clock::now();
    ExperimentReport rep;
    rep.name = "det-bounds";
    std::sort(lambdas.begin(), lambdas.end());
    std::vector<double> k_values, big_k_values;
    for (double lambda : lambdas) {
        std::vector<double> dets(static_cast<size_t>(nt) * ns, 0.0);
        parallel_for(0, static_cast<long>(dets.size()), threads, [&](long m) {
            const int ti = static_cast<int>(m / ns);
            const int si = static_cast<int>(m % ns);
            const double t = lambda * ti / (nt - 1);
            const double s = dom.boundary.period_begin +
                             dom.boundary.period() * (si + 0.5) / ns;
            dets[static_cast<size_t>(m)] = jacobian_determinant_signed(dom, c, t, s, cfg);
        });
        bool positive_orientation = dets[0] > 0.0;
        bool consistent = true;
        double kmin = std::numeric_limits<double>::infinity(), kmax = 0.0;
        for (double d : dets) {
            if ((d > 0.0) != positive_orientation || d == 0.0) consistent = false;
            const double mag = std::abs(d);
            kmin = std::min(kmin, mag);
            kmax = std::max(kmax, mag);
        }
        const std::string tag = format_double(lambda);
        rep.scalar("k_" + tag, kmin);
        rep.scalar("K_" + tag, kmax);
        rep.check("positivity_" + tag, consistent && kmin > 0.0 ? 1.0 : 0.0, 1.0,
                  consistent && kmin > 0.0);
        k_values.push_back(kmin);
        big_k_values.push_back(kmax);
    }
    for (size_t i = 0; i + 1 < lambdas.size(); ++i) {
        rep.check("k_monotone_decreasing_" + std::to_string(i),
                  k_values[i + 1] - k_values[i], 1e-9, k_values[i + 1] <= k_values[i] + 1e-9);
        rep.check("K_monotone_increasing_" + std::to_string(i),
                  big_k_values[i + 1] - big_k_values[i], -1e-9,
                  big_k_values[i + 1] >= big_k_values[i] - 1e-9);
    }
    rep.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
    return rep;
}

/// Fixed-point uniqueness: distinct initial guesses must land within
/// 10 * tol of each other in L1 over the solved region.
inline ExperimentReport run_uniqueness(const TransportProblem& prob, const GridLayout& grid,
                                       const StripePlan& plan, double tol,
                                       const IntegratorConfig& cfg,
                                       const std::vector<ScalarGridField>& guesses,
                                       int threads = 0) {
    const auto t_start = std::chrono::steady_clock::now();
    ExperimentReport rep;
    rep.name = "uniqueness";
    if (guesses.size() < 2) throw InvalidBoundsError("uniqueness needs at least two guesses");
    const ScalarGridField t0 = make_t0_field(prob.domain, grid, cfg.eps_stop);
    std::vector<ScalarGridField> solutions;
    for (size_t i = 0; i < guesses.size(); ++i) {
        QuasilinearResult r =
            solve_quasilinear(prob, grid, plan, tol, cfg, threads, 60, guesses[i]);
        rep.scalar("iterations_guess_" + std::to_string(i),
                   static_cast<double>(r.diagnostics.total_iterations));
        solutions.push_back(std::move(r.u));
    }
    double max_pair = 0.0;
    for (size_t i = 0; i < solutions.size(); ++i) {
        for (size_t j = i + 1; j < solutions.size(); ++j) {
            const double d =
                l1_distance_on_past(solutions[i], solutions[j], plan.lambda_max, t0);
            rep.scalar("distance_" + std::to_string(i) + "_" + std::to_string(j), d);
            max_pair = std::max(max_pair, d);
        }
    }
    rep.check("pairwise_l1_within_10tol", max_pair, 10.0 * tol, max_pair <= 10.0 * tol);
    rep.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
    return rep;
}

/// Continuous dependence: solve under a perturbation ladder delta, delta/2,
/// delta/4 (plus exactly zero), assert the measured L1 differences shrink,
/// and replay the stripe error recursion with plug-in constants.
inline ExperimentReport run_continuous_dependence(const TransportProblem& prob,
                                                  const GridLayout& grid,
                                                  const StripePlan& plan, double tol,
                                                  const IntegratorConfig& cfg, double delta0,
                                                  int rungs, double lambda, uint64_t seed,
                                                  int threads = 0,
                                                  double halving_factor = 1.6) {
    const auto t_start = std::chrono::steady_clock::now();
    ExperimentReport rep;
    rep.name = "continuous-dependence";
    const ScalarGridField t0 = make_t0_field(prob.domain, grid, cfg.eps_stop);
    const QuasilinearResult base = solve_quasilinear(prob, grid, plan, tol, cfg, threads);

    // Probe sets for the ||.||_0 estimates.
    const SelfMapBounds smb = prob.self_map_bounds();
    std::vector<ScalarGridField> probe_vs;
    probe_vs.push_back(make_like(t0, 0.0));
    probe_vs.push_back(make_like(t0, prob.bounds.M4));
    for (int k = 0; k < 3; ++k) {
        probe_vs.push_back(make_random_field(t0, prob.bounds.M4, seed + 100 + k));
    }
    const std::vector<Vec2> probe_xs = sample_interior_points(prob.domain, 64, seed + 7);

    std::vector<double> deltas;
    for (int k = 0; k < rungs; ++k) deltas.push_back(delta0 / std::pow(2.0, k));
    std::vector<double> diffs;
    ScalarGridField first_pert = base.u;  // overwritten by the first rung
    double first_delta_measured = 0.0;
    for (size_t k = 0; k < deltas.size(); ++k) {
        const double d = deltas[k];
        const TransportProblem pert =
            apply_perturbation(prob, {d, d, d, seed});
        const CausalityAuditReport audit = audit_causality_condition(
            pert.c.frozen(probe_vs[0]), pert.domain.time, pert.domain, 48, cfg.eps_stop);
        rep.check("perturbed_audit_pass_" + format_double(d), audit.pass() ? 1.0 : 0.0, 1.0,
                  audit.pass());
        const QuasilinearResult tilde = solve_quasilinear(pert, grid, plan, tol, cfg, threads);
        const double diff = l1_distance_on_past(base.u, tilde.u, lambda, t0);
        rep.scalar("diff_delta_" + format_double(d), diff);
        diffs.push_back(diff);
        if (k == 0) {
            first_pert = tilde.u;
            first_delta_measured =
                boundary_l1_distance(prob.u0, pert.u0, prob.domain.boundary) +
                prob.domain.area * estimate_rhs_distance(prob.f, pert.f, probe_vs, probe_xs) +
                smb.m_star_star *
                    estimate_field_distance(prob.c, pert.c, probe_vs, probe_xs);
            rep.scalar("delta_measured", first_delta_measured);
        }
    }
    for (size_t k = 0; k + 1 < diffs.size(); ++k) {
        rep.check("strictly_decreasing_" + std::to_string(k), diffs[k + 1], diffs[k],
                  diffs[k + 1] < diffs[k]);
        const double ratio = diffs[k + 1] > 0 ? diffs[k] / diffs[k + 1]
                                              : std::numeric_limits<double>::infinity();
        rep.check("halving_factor_" + std::to_string(k), ratio, halving_factor,
                  ratio >= halving_factor);
    }
    // delta = 0 must reproduce the base run exactly.
    {
        const TransportProblem pert = apply_perturbation(prob, {0.0, 0.0, 0.0, seed});
        const QuasilinearResult tilde = solve_quasilinear(pert, grid, plan, tol, cfg, threads);
        const double diff = l1_distance_on_past(base.u, tilde.u, lambda, t0);
        rep.check("zero_delta_exact", diff, 0.0, diff == 0.0);
    }

    // Stripe error recursion replay with plug-in constants at the largest
    // delta: (1 - h kappa) e_{l+1} <= delta_hat + lambda kappa e_l. The
    // plug-in kappa explodes as lambda -> 1 (k_lambda -> 0), so the replay
    // runs on a moderate level where h kappa < 1 holds.
    {
        const double lam_replay = std::min(0.5, lambda);
        std::vector<double> dets;
        const LinearTransportField frozen = prob.c.frozen(probe_vs[0]);
        const int nt = 8, ns = 16;
        dets.resize(static_cast<size_t>(nt) * ns);
        parallel_for(0, static_cast<long>(dets.size()), threads, [&](long m) {
            const int ti = static_cast<int>(m / ns);
            const int si = static_cast<int>(m % ns);
            const double t = lam_replay * ti / (nt - 1);
            const double s = prob.domain.boundary.period_begin +
                             prob.domain.boundary.period() * (si + 0.5) / ns;
            dets[static_cast<size_t>(m)] =
                jacobian_determinant(prob.domain, frozen, t, s, cfg);
        });
        const ContractionConstants cc = compute_contraction_constants(
            dets, prob.bounds.beta, prob.bounds.m0, prob.c.lipschitz_l1, prob.f.lipschitz_l1,
            smb.m_star_star, prob.bounds.area, lam_replay);
        rep.scalar("kappa_plugin", cc.kappa_lambda);
        rep.scalar("C_plugin", cc.C_lambda);
        const double h = plan.h;
        const double hk = h * cc.kappa_lambda;
        const double delta_hat = lam_replay * cc.C_lambda * first_delta_measured;
        if (hk < 1.0) {
            bool recursion_ok = true;
            double worst_slack = std::numeric_limits<double>::infinity();
            const int L = static_cast<int>(std::floor(lam_replay / h));
            for (int l = 0; l + 1 <= L; ++l) {
                const double e_l = l1_distance_on_past(base.u, first_pert, l * h, t0);
                const double e_next = l1_distance_on_past(base.u, first_pert,
                                                          std::min((l + 1) * h, lam_replay), t0);
                const double lhs = (1.0 - hk) * e_next;
                const double rhs = delta_hat + lam_replay * cc.kappa_lambda * e_l;
                worst_slack = std::min(worst_slack, rhs - lhs);
                if (lhs > rhs) recursion_ok = false;
            }
            rep.check("error_recursion_replay", worst_slack, 0.0, recursion_ok);
            const double alpha = lam_replay * cc.kappa_lambda / (1.0 - hk);
            rep.scalar("alpha", alpha);
            if (alpha < 1.0 && first_delta_measured > 0.0) {
                const double geom = (1.0 - std::pow(alpha, L + 1)) / (1.0 - alpha) *
                                    (lam_replay * cc.C_lambda / (1.0 - hk));
                rep.check("geometric_constant_bound", diffs[0],
                          geom * first_delta_measured, diffs[0] <= geom * first_delta_measured);
            }
        }
    }
    rep.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
    return rep;
}

}  // namespace moc2d
