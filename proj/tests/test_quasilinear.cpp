#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstring>
#include <numbers>
#include <vector>

#include "moc2d/quasilinear.hpp"
#include "moc2d/presets.hpp"
#include "moc2d/verification.hpp"

using namespace moc2d;
using Catch::Approx;

namespace {
constexpr double kPi = std::numbers::pi;

std::vector<double> radial_det_samples(const DomainSpec& dom, const LinearTransportField& c,
                                       double lambda, const IntegratorConfig& cfg) {
    std::vector<double> dets;
    for (int ti = 0; ti <= 6; ++ti) {
        for (int si = 0; si < 8; ++si) {
            dets.push_back(jacobian_determinant(dom, c, lambda * ti / 6.0,
                                                2.0 * kPi * si / 8.0, cfg));
        }
    }
    return dets;
}
}  // namespace

TEST_CASE("contraction constants from determinant samples") {
    const DomainSpec dom = make_unit_disk(4.0);
    const LinearTransportField c = make_normal_field_transport(dom);
    const IntegratorConfig cfg;

    SECTION("radial disk plug-in at lambda = 0.5") {
        const auto dets = radial_det_samples(dom, c, 0.5, cfg);
        const ContractionConstants cc =
            compute_contraction_constants(dets, 1.0, 0.5, 0.0, 0.0, 8.0, kPi, 0.5);
        CHECK(cc.k_lambda == Approx(0.25).epsilon(0.01));
        CHECK(cc.K_lambda == Approx(2.0).epsilon(0.01));
        CHECK(cc.C_lambda == Approx(16.0).epsilon(0.02));
        CHECK(cc.kappa_lambda == 0.0);  // L1 = L2 = 0 kills both terms
    }
    SECTION("kappa is monotone in lambda") {
        const auto d25 = radial_det_samples(dom, c, 0.25, cfg);
        const auto d50 = radial_det_samples(dom, c, 0.5, cfg);
        const ContractionConstants c25 =
            compute_contraction_constants(d25, 1.0, 0.5, 0.1, 0.1, 8.0, kPi, 0.25);
        const ContractionConstants c50 =
            compute_contraction_constants(d50, 1.0, 0.5, 0.1, 0.1, 8.0, kPi, 0.5);
        CHECK(c25.kappa_lambda <= c50.kappa_lambda);
        CHECK(c25.k_lambda >= c50.k_lambda);
        CHECK(c25.K_lambda <= c50.K_lambda);
    }
    SECTION("nonpositive samples are rejected") {
        CHECK_THROWS_AS(
            compute_contraction_constants(std::vector<double>{1.0, -0.5}, 1.0, 0.5, 0.0, 0.0,
                                          8.0, kPi, 0.5),
            CharacteristicCrossingError);
    }
}

TEST_CASE("stripe plans") {
    StripePlan plan = StripePlan::make(0.9, 6.0);
    CHECK(plan.h <= 1.0 / 6.0);
    CHECK(plan.stripe_count() >= 6);
    CHECK(plan.stripe_lo(0) == 0.0);
    CHECK(plan.stripe_hi(plan.stripe_count() - 1) == Approx(0.9));

    // Pessimistic kappa falls back to h_min with the flag set.
    StripePlan fb = StripePlan::make(0.9, 1000.0);
    CHECK(fb.used_fallback_h);
    CHECK(fb.h == Approx(0.05));

    StripePlan bad;
    bad.h = -1.0;
    CHECK_THROWS_AS(bad.validate(), InvalidBoundsError);
}

TEST_CASE("linear reduction: frozen coefficients reproduce solve_linear bitwise") {
    const TransportProblem prob = make_disk_radial_f1_problem(4.0);
    const GridLayout grid{prob.domain.box_lo, prob.domain.box_hi, 64, 64};
    const IntegratorConfig cfg;
    const ScalarGridField zero(grid);
    const ScalarGridField ulin = solve_linear(prob.domain, prob.c.frozen(zero),
                                              prob.f.frozen(zero), prob.u0, grid, cfg, 2);
    StripePlan plan;
    plan.lambda_max = 0.999;
    plan.h = 0.15;
    const QuasilinearResult r = solve_quasilinear(prob, grid, plan, 1e-9, cfg, 2);
    for (long idx = 0; idx < grid.cell_count(); ++idx) {
        CHECK(std::memcmp(&ulin.values()[static_cast<size_t>(idx)],
                          &r.u.values()[static_cast<size_t>(idx)], sizeof(double)) == 0);
    }
    for (const auto& sd : r.diagnostics.stripes) {
        if (sd.cells > 0) CHECK(sd.iterations == 1);
    }
}

TEST_CASE("quasi-linear solve on the causal tilt problem") {
    const DomainSpec dom = make_unit_disk(4.0);
    const GridLayout grid{dom.box_lo, dom.box_hi, 64, 64};
    const TransportProblem prob = make_disk_causal_problem(grid, 4.0, {0.1, 0.25});
    const IntegratorConfig cfg;
    StripePlan plan;
    plan.lambda_max = 0.999;
    plan.h = 0.12;
    const double tol = 1e-8 * prob.self_map_bounds().m_star;
    const ScalarGridField t0 = make_t0_field(dom, grid, cfg.eps_stop);

    SECTION("distinct initial guesses meet within 10 tol") {
        const QuasilinearResult a =
            solve_quasilinear(prob, grid, plan, tol, cfg, 2, 60, make_like(t0, 0.0));
        const QuasilinearResult b = solve_quasilinear(prob, grid, plan, tol, cfg, 2, 60,
                                                      make_like(t0, prob.bounds.M4));
        CHECK(l1_distance_on_past(a.u, b.u, plan.lambda_max, t0) <= 10.0 * tol);
        CHECK(a.diagnostics.total_iterations >= 2);
    }
    SECTION("per-stripe contraction ratio stays below h kappa + 0.05") {
        const auto dets = radial_det_samples(dom, prob.c.frozen(make_like(t0, 0.0)),
                                             plan.lambda_max, cfg);
        const ContractionConstants cc = compute_contraction_constants(
            dets, prob.bounds.beta, prob.bounds.m0, prob.c.lipschitz_l1, prob.f.lipschitz_l1,
            prob.self_map_bounds().m_star_star, prob.bounds.area, plan.lambda_max);
        const QuasilinearResult r = solve_quasilinear(prob, grid, plan, tol, cfg, 2);
        for (const auto& sd : r.diagnostics.stripes) {
            if (sd.contraction_ratio > 0.0) {
                CHECK(sd.contraction_ratio <= plan.h * cc.kappa_lambda + 0.05);
            }
        }
    }
    SECTION("stripe-freeze soundness: future perturbations never reach a stripe") {
        // Values of U on the first stripe depend only on the past; editing v
        // above the stripe's upper level must leave the sweep bitwise equal.
        const double level = 0.3;
        ScalarGridField v1 = make_random_field(t0, 0.5, 31);
        ScalarGridField v2 = v1;
        for (long idx = 0; idx < grid.cell_count(); ++idx) {
            if (t0.mask(idx) == CellMask::Interior && t0.value(idx) >= level) {
                v2.set_value(idx, v2.value(idx) + 3.0);
            }
        }
        const LinearTransportField c1 = prob.c.frozen(v1);
        const LinearTransportField c2 = prob.c.frozen(v2);
        for (long idx = 0; idx < grid.cell_count(); ++idx) {
            if (t0.mask(idx) != CellMask::Interior || t0.value(idx) >= level) continue;
            const Vec2 x = grid.center(idx);
            const double a = solve_at_point(prob.domain, c1, LinearRhs{}, prob.u0, x, cfg);
            const double b = solve_at_point(prob.domain, c2, LinearRhs{}, prob.u0, x, cfg);
            CHECK(a == b);
        }
    }
}

TEST_CASE("operator Lipschitz measurements") {
    const DomainSpec dom = make_unit_disk(4.0);
    const GridLayout grid{dom.box_lo, dom.box_hi, 64, 64};
    const IntegratorConfig cfg;
    const ScalarGridField t0 = make_t0_field(dom, grid, cfg.eps_stop);
    const ScalarGridField v1 = make_like(t0, 0.0);
    const ScalarGridField v2 = make_like(t0, 1.0);

    SECTION("v-independent coefficients give ratio zero") {
        const TransportProblem lin = make_disk_radial_f0_problem(4.0);
        CHECK(measure_operator_lipschitz(lin, v1, v2, 0.5, grid, cfg, 2) == 0.0);
    }
    SECTION("causal field: contractive and monotone in lambda") {
        const TransportProblem prob = make_disk_causal_problem(grid, 4.0, {0.1, 0.25});
        const double r50 = measure_operator_lipschitz(prob, v1, v2, 0.5, grid, cfg, 2);
        const double r25 = measure_operator_lipschitz(prob, v1, v2, 0.25, grid, cfg, 2);
        CHECK(r50 < 1.0);
        CHECK(r50 > 0.0);
        CHECK(r25 <= r50 + 1e-3);
    }
    SECTION("identical arguments are rejected") {
        const TransportProblem prob = make_disk_causal_problem(grid, 4.0, {0.1, 0.25});
        CHECK_THROWS_AS(measure_operator_lipschitz(prob, v1, v1, 0.5, grid, cfg, 2),
                        DegeneratePairError);
    }
}

TEST_CASE("global Picard iteration cross-checks the stripe march") {
    const DomainSpec dom = make_unit_disk(4.0);
    const GridLayout grid{dom.box_lo, dom.box_hi, 48, 48};
    const IntegratorConfig cfg;

    SECTION("v-independent coefficients converge in one sweep") {
        const TransportProblem lin = make_disk_radial_f0_problem(4.0);
        const QuasilinearResult r = global_picard_solve(lin, grid, 0.999, 1e-9, cfg, 2);
        CHECK(r.diagnostics.total_iterations == 1);
    }
    SECTION("agreement with the stripe march on the causal problem") {
        const TransportProblem prob = make_disk_causal_problem(grid, 4.0, {0.1, 0.25});
        const double tol = 1e-8 * prob.self_map_bounds().m_star;
        StripePlan plan;
        plan.lambda_max = 0.999;
        plan.h = 0.12;
        const QuasilinearResult striped = solve_quasilinear(prob, grid, plan, tol, cfg, 2);
        const QuasilinearResult global = global_picard_solve(prob, grid, 0.999, tol, cfg, 2);
        const ScalarGridField t0 = make_t0_field(dom, grid, cfg.eps_stop);
        CHECK(l1_distance_on_past(striped.u, global.u, 0.999, t0) <= 10.0 * tol);
        // Causality propagates the exact solution one stripe per sweep.
        CHECK(global.diagnostics.total_iterations <= plan.stripe_count() + 1);
    }
}

TEST_CASE("diagnostics CSV layout") {
    const DomainSpec dom = make_unit_disk(4.0);
    const GridLayout grid{dom.box_lo, dom.box_hi, 32, 32};
    const TransportProblem prob = make_disk_causal_problem(grid, 4.0, {0.1, 0.25});
    StripePlan plan;
    plan.lambda_max = 0.9;
    plan.h = 0.3;
    const IntegratorConfig cfg;
    const QuasilinearResult r = solve_quasilinear(prob, grid, plan, 1e-6, cfg, 2);
    std::stringstream os;
    r.diagnostics.write_csv(os);
    const std::string s = os.str();
    CHECK(s.rfind("stripe,iteration,update,ratio\n", 0) == 0);
    long rows = std::count(s.begin(), s.end(), '\n') - 1;
    CHECK(rows == r.diagnostics.total_iterations);
}

TEST_CASE("non-contracting stripes raise with the measured ratio") {
    const DomainSpec dom = make_unit_disk(4.0);
    const GridLayout grid{dom.box_lo, dom.box_hi, 32, 32};
    const TransportProblem prob = make_disk_causal_problem(grid, 4.0, {0.1, 0.25});
    StripePlan plan;
    plan.lambda_max = 0.9;
    plan.h = 0.45;
    const IntegratorConfig cfg;
    // Absurdly tight tolerance with a tiny iteration budget must fail loudly.
    CHECK_THROWS_AS(solve_quasilinear(prob, grid, plan, 1e-300, cfg, 2, 2),
                    ContractionFailureError);
}
