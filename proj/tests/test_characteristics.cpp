#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

#include "moc2d/characteristics.hpp"
#include "moc2d/presets.hpp"

using namespace moc2d;
using Catch::Approx;

namespace {

constexpr double kPi = std::numbers::pi;

// Radial disk closed form for q = 4: xi(t, s) = (1 - t)^2 gamma(s).
Vec2 radial_closed_form(double t, double s) {
    const double r = (1.0 - t) * (1.0 - t);
    return {r * std::cos(s), r * std::sin(s)};
}

}  // namespace

TEST_CASE("forward characteristics match the radial closed form") {
    const DomainSpec dom = make_unit_disk(4.0);
    const LinearTransportField c = make_normal_field_transport(dom);
    const IntegratorConfig cfg;

    SECTION("t = 0 returns the seed") {
        const CharCurve cur = trace_forward(dom, c, 1.3, 0.0, cfg);
        CHECK(cur.samples.size() == 1);
        CHECK((cur.end() - dom.boundary.param(1.3)).norm() == 0.0);
    }
    SECTION("endpoints at several (t, s)") {
        for (const auto& [t, s] : std::vector<std::pair<double, double>>{
                 {0.5, 0.0}, {0.9, kPi / 2}, {0.3, 2.0}, {0.75, 4.5}}) {
            const CharCurve cur = trace_forward(dom, c, s, t, cfg);
            CHECK((cur.end() - radial_closed_form(t, s)).norm() <= 1e-8);
        }
    }
    SECTION("time consistency along the whole curve") {
        const CharCurve cur = trace_forward(dom, c, 0.7, 1.0 - cfg.eps_stop, cfg);
        double drift = 0.0;
        for (const auto& smp : cur.samples) {
            drift = std::max(drift, std::abs(transformed_time(dom.time, smp.p) - smp.t));
        }
        CHECK(drift <= cfg.time_tol);
    }
    SECTION("arc length stays below t/(m0 beta) + slack") {
        const CharCurve cur = trace_forward(dom, c, 0.2, 0.9, cfg);
        // m0 = 0.5, beta = 1: bound 1.8 for t = 0.9 (exact arc length is
        // 1 - (1-t)^2 = 0.99).
        CHECK(cur.arc_length() <= 0.9 / 0.5 + 1e-6);
        CHECK(cur.arc_length() == Approx(0.99).epsilon(1e-6));
    }
    SECTION("collar is refused") {
        CHECK_THROWS_AS(trace_forward(dom, c, 0.0, 0.9999, cfg), StopSetProximityError);
    }
}

TEST_CASE("backward characteristics") {
    const DomainSpec dom = make_unit_disk(4.0);
    const LinearTransportField c = make_normal_field_transport(dom);
    const IntegratorConfig cfg;

    SECTION("terminal boundary point and duration") {
        const CharCurve cur = trace_backward(dom, c, {0.25, 0.0}, cfg);
        CHECK(cur.end_time() == Approx(0.5).margin(1e-12));
        CHECK((cur.end() - Vec2{1.0, 0.0}).norm() <= 1e-8);
    }
    SECTION("vertical radius") {
        // r = 0.04 = (1 - 0.8)^2: T0 = 0.8, terminal (0, 1).
        const CharCurve cur = trace_backward(dom, c, {0.0, 0.04}, cfg);
        CHECK(cur.end_time() == Approx(0.8).margin(1e-12));
        CHECK((cur.end() - Vec2{0.0, 1.0}).norm() <= 1e-7);
    }
    SECTION("boundary seed gives a zero-length curve") {
        const CharCurve cur = trace_backward(dom, c, {1.0, 0.0}, cfg);
        CHECK(cur.samples.size() == 1);
        CHECK(cur.end_time() == 0.0);
        CHECK((cur.end() - Vec2{1.0, 0.0}).norm() == 0.0);
    }
    SECTION("collar seed is refused") {
        CHECK_THROWS_AS(trace_backward(dom, c, {1e-8, 0.0}, cfg), StopSetProximityError);
    }
}

TEST_CASE("forward-backward round trip") {
    const DomainSpec dom = make_unit_disk(4.0);
    const LinearTransportField c = make_rotated_field(dom, 0.25);
    const IntegratorConfig cfg;
    std::mt19937_64 rng(13);
    for (int k = 0; k < 10; ++k) {
        const double s = 2.0 * kPi * uniform01(rng);
        const double t = 0.1 + 0.8 * uniform01(rng);
        const Vec2 x = trace_forward(dom, c, s, t, cfg).end();
        CHECK(std::abs(transformed_time(dom.time, x) - t) <= cfg.time_tol);
        const CharCurve back = trace_backward(dom, c, x, cfg);
        const double s_hit = boundary_parameter_of(dom.boundary, back.end(), 1e-5);
        const Vec2 seed = dom.boundary.param(s);
        CHECK((dom.boundary.param(s_hit) - seed).norm() <= 1e-6);
    }
}

TEST_CASE("boundary parameter recovery") {
    const DomainSpec dom = make_unit_disk(4.0);
    SECTION("closed-form projection") {
        CHECK(boundary_parameter_of(dom.boundary, {1.0, 0.0}, 1e-6) == Approx(0.0).margin(1e-12));
        CHECK(boundary_parameter_of(dom.boundary, {0.0, 1.0}, 1e-6) ==
              Approx(kPi / 2).margin(1e-12));
        CHECK(boundary_parameter_of(dom.boundary, {std::cos(1.0), std::sin(1.0)}, 1e-6) ==
              Approx(1.0).margin(1e-9));
    }
    SECTION("generic scan-and-refine without the override") {
        BoundaryCurve generic = dom.boundary;
        generic.project = nullptr;
        CHECK(boundary_parameter_of(generic, {std::cos(1.0), std::sin(1.0)}, 1e-6) ==
              Approx(1.0).margin(1e-9));
        CHECK(boundary_parameter_of(generic, {1.0, 0.0}, 1e-6) == Approx(0.0).margin(1e-9));
    }
    SECTION("far points are rejected") {
        CHECK_THROWS_AS(boundary_parameter_of(dom.boundary, {0.5, 0.0}, 1e-6),
                        GeometryInconsistencyError);
    }
}

TEST_CASE("Jacobian determinant of the characteristic chart") {
    const DomainSpec dom = make_unit_disk(4.0);
    const LinearTransportField c = make_normal_field_transport(dom);
    const IntegratorConfig cfg;

    // |det D xi| = 2 (1 - t)^3 for the radial closed form.
    CHECK(jacobian_determinant(dom, c, 0.0, 0.3, cfg) == Approx(2.0).epsilon(2e-4));
    CHECK(jacobian_determinant(dom, c, 0.5, 1.0, cfg) == Approx(0.25).epsilon(1e-6));
    CHECK(jacobian_determinant(dom, c, 0.25, 2.0, cfg) ==
          Approx(2.0 * std::pow(0.75, 3)).epsilon(1e-6));

    SECTION("positivity over a lattice, k and K via min/max") {
        double kmin = 1e300, kmax = 0.0;
        for (int ti = 0; ti <= 8; ++ti) {
            for (int si = 0; si < 8; ++si) {
                const double det =
                    jacobian_determinant(dom, c, 0.5 * ti / 8.0, 2.0 * kPi * si / 8.0, cfg);
                CHECK(det > 0.0);
                kmin = std::min(kmin, det);
                kmax = std::max(kmax, det);
            }
        }
        CHECK(kmin == Approx(0.25).epsilon(0.02));
        CHECK(kmax == Approx(2.0).epsilon(0.02));
    }
}

TEST_CASE("RK4 order check: halving dt cuts the endpoint error by >= 8") {
    const DomainSpec dom = make_unit_disk(4.0);
    const LinearTransportField c = make_normal_field_transport(dom);
    auto endpoint_error = [&](double dt) {
        IntegratorConfig cfg;
        cfg.dt = dt;
        cfg.time_tol = 1.0;  // projector off: this measures the raw RK4 order
        const Vec2 e = trace_forward(dom, c, 0.0, 0.5, cfg).end();
        return (e - radial_closed_form(0.5, 0.0)).norm();
    };
    const double e1 = endpoint_error(4e-2);
    const double e2 = endpoint_error(2e-2);
    CHECK(e1 / e2 >= 8.0);
    CHECK(endpoint_error(1e-3) <= 1e-8);
}

TEST_CASE("adaptive RK45 matches the closed form") {
    const DomainSpec dom = make_unit_disk(4.0);
    const LinearTransportField c = make_normal_field_transport(dom);
    IntegratorConfig cfg;
    cfg.method = IntegratorMethod::Rk45Adaptive;
    const CharCurve cur = trace_forward(dom, c, 0.0, 0.5, cfg);
    CHECK((cur.end() - radial_closed_form(0.5, 0.0)).norm() <= 1e-7);
    const CharCurve back = trace_backward(dom, c, {0.25, 0.0}, cfg);
    CHECK((back.end() - Vec2{1.0, 0.0}).norm() <= 1e-6);
}

TEST_CASE("curves export CSV") {
    const DomainSpec dom = make_unit_disk(4.0);
    const LinearTransportField c = make_normal_field_transport(dom);
    IntegratorConfig cfg;
    cfg.dt = 0.05;
    const CharCurve cur = trace_forward(dom, c, 0.0, 0.2, cfg);
    std::stringstream os;
    cur.write_csv(os);
    CHECK(os.str().rfind("t,x,y\n0,1,0\n", 0) == 0);
}

TEST_CASE("characteristics on the ellipse with a segment stop set") {
    const DomainSpec dom = make_ellipse_segment(1.5, 1.0, 2.0);
    const LinearTransportField c = make_normal_field_transport(dom);
    const IntegratorConfig cfg;
    // Time consistency and boundary return on a domain without closed forms.
    const CharCurve cur = trace_forward(dom, c, 0.8, 0.9, cfg);
    double drift = 0.0;
    for (const auto& smp : cur.samples) {
        drift = std::max(drift, std::abs(transformed_time(dom.time, smp.p) - smp.t));
    }
    CHECK(drift <= cfg.time_tol);
    const CharCurve back = trace_backward(dom, c, cur.end(), cfg);
    CHECK((back.end() - dom.boundary.param(0.8)).norm() <= 1e-5);
}
