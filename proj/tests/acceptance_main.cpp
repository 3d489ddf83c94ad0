// Acceptance suite: runs every acceptance criterion at its stated tolerance
// and prints one PASS/FAIL line per criterion. Criteria 1-11 write their CSV
// and image artifacts under <out>/run1; criterion 12 repeats the whole batch
// into <out>/run2 and demands byte-identical artifacts. Exit code 0 iff all
// criteria pass.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include "moc2d/characteristics.hpp"
#include "moc2d/fields.hpp"
#include "moc2d/geometry.hpp"
#include "moc2d/grid_field.hpp"
#include "moc2d/inpainting.hpp"
#include "moc2d/linear_solver.hpp"
#include "moc2d/presets.hpp"
#include "moc2d/quasilinear.hpp"
#include "moc2d/verification.hpp"

namespace fs = std::filesystem;
using namespace moc2d;
using Clock = std::chrono::steady_clock;

namespace {

constexpr double kPi = std::numbers::pi;
constexpr uint64_t kSeed = 20240817;

double seconds_since(Clock::time_point start) {
    return std::chrono::duration<double>(Clock::now() - start).count();
}

struct CriterionResult {
    int id;
    std::string name;
    bool pass;
    std::string detail;
};

std::vector<CriterionResult> g_results;

void record(int id, const std::string& name, bool pass, const std::string& detail) {
    g_results.push_back({id, name, pass, detail});
}

std::string fmt(double v) { return format_double(v); }

void write_text(const fs::path& p, const std::string& text) {
    std::ofstream os(p, std::ios::binary);
    os << text;
}

// --------------------------------------------------------------------------
// Criteria 1-11. Each returns pass/fail and writes artifacts into dir.
// --------------------------------------------------------------------------

struct BatchOutcome {
    std::map<std::string, std::pair<bool, std::string>> criteria;  // name -> (pass, detail)
};

BatchOutcome run_batch(const fs::path& dir) {
    BatchOutcome out;
    fs::create_directories(dir);
    const DomainSpec disk = make_unit_disk(4.0);
    const LinearTransportField radial = make_normal_field_transport(disk);
    IntegratorConfig cfg;  // RK4, dt = 1e-3, eps_stop = 1e-3

    // ---- 1: time consistency --------------------------------------------
    {
        const auto t_start = Clock::now();
        double max_drift = 0.0;
        std::stringstream csv;
        CsvWriter w(csv);
        w.header({"s", "max_drift"});
        for (int k = 0; k < 64; ++k) {
            const double s = 2.0 * kPi * k / 64.0;
            const CharCurve cur = trace_forward(disk, radial, s, 1.0 - cfg.eps_stop, cfg);
            double drift = 0.0;
            // Sample the curve at a 100-point time lattice (and in fact at
            // every recorded step, a superset).
            for (const auto& smp : cur.samples) {
                drift = std::max(drift, std::abs(transformed_time(disk.time, smp.p) - smp.t));
            }
            max_drift = std::max(max_drift, drift);
            w.cell(s).cell(drift).end_row();
        }
        const double elapsed = seconds_since(t_start);
        write_text(dir / "c01_time_consistency.csv", csv.str());
        const bool pass = max_drift <= 1e-6 && elapsed < 5.0;
        out.criteria["1 time-consistency"] = {
            pass, "max drift " + fmt(max_drift) + ", " + fmt(elapsed) + " s"};
    }

    // ---- 2: characteristic closed form ----------------------------------
    {
        auto endpoint_error = [&](double dt) {
            IntegratorConfig c2 = cfg;
            c2.dt = dt;
            double worst = 0.0;
            for (const double s : {0.0, kPi / 2, 2.5}) {
                const Vec2 gamma = disk.boundary.param(s);
                const Vec2 want = gamma * 0.25;  // (1 - 0.5)^2 gamma(s)
                const Vec2 got = trace_forward(disk, radial, s, 0.5, c2).end();
                worst = std::max(worst, (got - want).norm());
            }
            return worst;
        };
        const double e_base = endpoint_error(1e-3);
        const double e_half = endpoint_error(5e-4);
        const double ratio = e_base / e_half;
        std::stringstream csv;
        CsvWriter w(csv);
        w.header({"dt", "endpoint_error"});
        w.cell(1e-3).cell(e_base).end_row();
        w.cell(5e-4).cell(e_half).end_row();
        write_text(dir / "c02_closed_form.csv", csv.str());
        const bool pass = e_base <= 1e-8 && ratio >= 8.0;
        out.criteria["2 characteristic-closed-form"] = {
            pass, "error " + fmt(e_base) + ", halving ratio " + fmt(ratio)};
    }

    // ---- 3: linear solver exactness + manufactured order ----------------
    {
        const auto t_start = Clock::now();
        const double point_err = std::abs(
            solve_at_point(disk, radial, make_constant_rhs(1.0), make_zero_boundary_data(),
                           {0.25, 0.0}, cfg) -
            0.75);
        auto g = [](Vec2 p) { return std::sin(2.0 * p.x) * std::cos(p.y) + 0.5 * p.x; };
        auto grad_g = [](Vec2 p) {
            return Vec2{2.0 * std::cos(2.0 * p.x) * std::cos(p.y) + 0.5,
                        -std::sin(2.0 * p.x) * std::sin(p.y)};
        };
        const ExperimentReport rep = run_manufactured(
            disk, radial, g, grad_g, {{64, 8e-3}, {128, 4e-3}, {256, 2e-3}}, 0.9, cfg, 0);
        {
            std::stringstream csv;
            rep.write_csv(csv);
            write_text(dir / "c03_manufactured.csv", csv.str());
        }
        const double elapsed = seconds_since(t_start);
        const bool pass = point_err <= 1e-6 && rep.all_pass() && elapsed < 60.0;
        double worst_order = 1e9;
        for (const auto& c : rep.checks) {
            if (c.name.rfind("order_", 0) == 0) worst_order = std::min(worst_order, c.value);
        }
        out.criteria["3 linear-solver-exactness"] = {
            pass, "|u-0.75| = " + fmt(point_err) + ", min order " + fmt(worst_order) + ", " +
                      fmt(elapsed) + " s"};
    }

    // ---- 4: determinant bounds ------------------------------------------
    {
        const ExperimentReport rep =
            run_det_bounds(disk, radial, {0.25, 0.5}, 10, 16, cfg, 0);
        {
            std::stringstream csv;
            rep.write_csv(csv);
            write_text(dir / "c04_det_bounds.csv", csv.str());
        }
        double k05 = 0.0, big_k05 = 0.0;
        for (const auto& [name, v] : rep.scalars) {
            if (name == "k_0.5") k05 = v;
            if (name == "K_0.5") big_k05 = v;
        }
        const bool two_pct =
            std::abs(k05 - 0.25) <= 0.02 * 0.25 && std::abs(big_k05 - 2.0) <= 0.02 * 2.0;
        const bool pass = two_pct && rep.all_pass();
        out.criteria["4 determinant-bounds"] = {
            pass, "k = " + fmt(k05) + " (want 0.25), K = " + fmt(big_k05) + " (want 2)"};
    }

    // ---- 5: self-map bound arithmetic ------------------------------------
    {
        SelfMapBoundInputs in;
        in.M4 = 1.0;
        in.M2 = 1.0;
        in.beta = 1.0;
        in.m0 = 0.5;
        in.area = kPi;
        const SelfMapBounds b = compute_self_map_bounds(in);
        const double err = std::abs(b.m_star - 3.0 * kPi);
        const bool pass = err <= 1e-12;
        std::stringstream csv;
        CsvWriter w(csv);
        w.header({"quantity", "value"});
        w.cell(std::string("m_star")).cell(b.m_star).end_row();
        w.cell(std::string("m_star_star")).cell(b.m_star_star).end_row();
        write_text(dir / "c05_self_map.csv", csv.str());
        out.criteria["5 self-map-bounds"] = {pass, "|M* - 3pi| = " + fmt(err)};
    }

    // ---- 6: contraction ---------------------------------------------------
    {
        const GridLayout grid{disk.box_lo, disk.box_hi, 96, 96};
        const TransportProblem prob = make_disk_causal_problem(grid, 4.0, {0.1, 0.25});
        const ScalarGridField t0 = make_t0_field(disk, grid, cfg.eps_stop);
        const ScalarGridField v1 = make_like(t0, 0.0);
        const ScalarGridField v2 = make_like(t0, prob.bounds.M4);
        const double r50 = measure_operator_lipschitz(prob, v1, v2, 0.5, grid, cfg, 0);
        const double r25 = measure_operator_lipschitz(prob, v1, v2, 0.25, grid, cfg, 0);
        // Plug-in kappa at lambda = 0.5 from determinant samples.
        std::vector<double> dets;
        const LinearTransportField frozen = prob.c.frozen(v1);
        for (int ti = 0; ti <= 7; ++ti) {
            for (int si = 0; si < 12; ++si) {
                dets.push_back(jacobian_determinant(disk, frozen, 0.5 * ti / 7.0,
                                                    2.0 * kPi * si / 12.0, cfg));
            }
        }
        const ContractionConstants cc = compute_contraction_constants(
            dets, prob.bounds.beta, prob.bounds.m0, prob.c.lipschitz_l1, prob.f.lipschitz_l1,
            prob.self_map_bounds().m_star_star, prob.bounds.area, 0.5);
        std::stringstream csv;
        CsvWriter w(csv);
        w.header({"quantity", "value"});
        w.cell(std::string("ratio_lambda_0.5")).cell(r50).end_row();
        w.cell(std::string("ratio_lambda_0.25")).cell(r25).end_row();
        w.cell(std::string("kappa_plugin_0.5")).cell(cc.kappa_lambda).end_row();
        write_text(dir / "c06_contraction.csv", csv.str());
        const bool pass =
            r50 < 1.0 && r50 <= 0.5 * cc.kappa_lambda * 1.10 && r25 <= r50 + 1e-3;
        out.criteria["6 contraction"] = {
            pass, "ratio(0.5) = " + fmt(r50) + ", ratio(0.25) = " + fmt(r25) +
                      ", lambda*kappa = " + fmt(0.5 * cc.kappa_lambda)};
    }

    // ---- 7: uniqueness -----------------------------------------------------
    {
        const GridLayout grid{disk.box_lo, disk.box_hi, 128, 128};
        const TransportProblem prob = make_disk_causal_problem(grid, 4.0, {0.1, 0.25});
        const double tol = 1e-8 * prob.self_map_bounds().m_star;
        StripePlan plan = StripePlan::make(1.0 - cfg.eps_stop, 0.0);
        plan.h = 0.12;
        const ScalarGridField t0 = make_t0_field(disk, grid, cfg.eps_stop);
        std::vector<ScalarGridField> guesses;
        guesses.push_back(make_like(t0, 0.0));
        guesses.push_back(make_like(t0, prob.bounds.M4));
        guesses.push_back(make_random_field(t0, prob.bounds.M4, kSeed));
        std::vector<ScalarGridField> sols;
        double worst_solve_seconds = 0.0;
        for (const auto& guess : guesses) {
            const auto t_start = Clock::now();
            sols.push_back(solve_quasilinear(prob, grid, plan, tol, cfg, 0, 60, guess).u);
            worst_solve_seconds = std::max(worst_solve_seconds, seconds_since(t_start));
        }
        double max_pair = 0.0;
        std::stringstream csv;
        CsvWriter w(csv);
        w.header({"pair", "l1_distance"});
        for (size_t i = 0; i < sols.size(); ++i) {
            for (size_t j = i + 1; j < sols.size(); ++j) {
                const double d =
                    l1_distance_on_past(sols[i], sols[j], plan.lambda_max, t0);
                max_pair = std::max(max_pair, d);
                w.cell(std::to_string(i) + "-" + std::to_string(j)).cell(d).end_row();
            }
        }
        write_text(dir / "c07_uniqueness.csv", csv.str());
        const bool pass = max_pair <= 10.0 * tol && worst_solve_seconds < 120.0;
        out.criteria["7 uniqueness"] = {
            pass, "max pairwise " + fmt(max_pair) + " vs 10 tol = " + fmt(10.0 * tol) + ", " +
                      fmt(worst_solve_seconds) + " s/solve"};
    }

    // ---- 8: linear reduction ----------------------------------------------
    {
        const TransportProblem prob = make_disk_radial_f1_problem(4.0);
        const GridLayout grid{disk.box_lo, disk.box_hi, 64, 64};
        const ScalarGridField zero(grid);
        const ScalarGridField ulin = solve_linear(prob.domain, prob.c.frozen(zero),
                                                  prob.f.frozen(zero), prob.u0, grid, cfg, 0);
        StripePlan plan;
        plan.lambda_max = 1.0 - cfg.eps_stop;
        plan.h = 0.15;
        const QuasilinearResult r = solve_quasilinear(prob, grid, plan, 1e-9, cfg, 0);
        bool identical = true;
        for (long idx = 0; idx < grid.cell_count(); ++idx) {
            if (std::memcmp(&ulin.values()[static_cast<size_t>(idx)],
                            &r.u.values()[static_cast<size_t>(idx)], sizeof(double)) != 0) {
                identical = false;
                break;
            }
        }
        bool single_iteration = true;
        for (const auto& sd : r.diagnostics.stripes) {
            if (sd.cells > 0 && sd.iterations != 1) single_iteration = false;
        }
        {
            std::ofstream os(dir / "c08_reduction.fld", std::ios::binary);
            r.u.save(os);
        }
        const bool pass = identical && single_iteration;
        out.criteria["8 linear-reduction"] = {
            pass, std::string("bit-identical = ") + (identical ? "yes" : "no") +
                      ", one sweep per stripe = " + (single_iteration ? "yes" : "no")};
    }

    // ---- 9: continuous dependence ------------------------------------------
    {
        const GridLayout grid{disk.box_lo, disk.box_hi, 64, 64};
        const TransportProblem prob = make_disk_causal_problem(grid, 4.0, {0.1, 0.25});
        const double tol = 1e-8 * prob.self_map_bounds().m_star;
        StripePlan plan;
        plan.lambda_max = 1.0 - cfg.eps_stop;
        plan.h = 0.12;
        const ExperimentReport rep = run_continuous_dependence(prob, grid, plan, tol, cfg,
                                                               0.05, 3, 0.9, kSeed, 0);
        {
            std::stringstream csv;
            rep.write_csv(csv);
            write_text(dir / "c09_dependence.csv", csv.str());
        }
        bool ladder_ok = true;
        double worst_factor = 1e300;
        for (const auto& c : rep.checks) {
            if (c.name.rfind("strictly_decreasing", 0) == 0 ||
                c.name.rfind("halving_factor", 0) == 0 || c.name == "zero_delta_exact") {
                ladder_ok = ladder_ok && c.pass;
            }
            if (c.name.rfind("halving_factor", 0) == 0) {
                worst_factor = std::min(worst_factor, c.value);
            }
        }
        out.criteria["9 continuous-dependence"] = {
            ladder_ok, "min halving factor " + fmt(worst_factor)};
    }

    // ---- 10: causality audits ----------------------------------------------
    {
        const GridLayout grid{disk.box_lo, disk.box_hi, 64, 64};
        const ScalarGridField t0 = make_t0_field(disk, grid, cfg.eps_stop);
        const ScalarGridField v = make_random_field(t0, 1.0, kSeed + 1);
        const std::vector<Vec2> probes = sample_interior_points(disk, 100, kSeed + 2);

        const FunctionalTransportField tilt = make_causal_tilt_field(disk, grid, {0.1, 0.25});
        const auto rep_tilt = audit_functional_causality(tilt, v, probes, disk.time, t0);

        const FunctionalTransportField acausal =
            make_acausal_tilt_field(disk, grid, {0.1, 0.25});
        const auto rep_acausal = audit_functional_causality(acausal, v, probes, disk.time, t0);

        // Inpainting tangent field on the stripe card.
        const GrayImage card = make_stripe_card(96, 96, 16.0, 0.35);
        const InpaintMask mask = make_centered_hole_mask(96, 96, 20);
        const RasterDomain rd = time_from_mask(mask, 2.0, 4.0);
        const FunctionalTransportField tangent = make_causal_tangent_field(rd, card, 3.0, 0.1);
        const ScalarGridField rt0 = make_t0_field(rd.domain, rd.hole_layout, cfg.eps_stop);
        const ScalarGridField rv = make_random_field(rt0, 1.0, kSeed + 3);
        const std::vector<Vec2> rprobes =
            sample_interior_points(rd.domain, 100, kSeed + 4, cfg.eps_stop, 0.95);
        const auto rep_tangent =
            audit_functional_causality(tangent, rv, rprobes, rd.domain.time, rt0);

        std::stringstream csv;
        CsvWriter w(csv);
        w.header({"field", "max_discrepancy"});
        w.cell(std::string("causal_tilt")).cell(rep_tilt.max_discrepancy).end_row();
        w.cell(std::string("inpaint_tangent")).cell(rep_tangent.max_discrepancy).end_row();
        w.cell(std::string("acausal_tilt")).cell(rep_acausal.max_discrepancy).end_row();
        write_text(dir / "c10_causality.csv", csv.str());

        const bool pass = rep_tilt.max_discrepancy == 0.0 &&
                          rep_tangent.max_discrepancy == 0.0 &&
                          rep_acausal.max_discrepancy > 0.0;
        out.criteria["10 causality-audits"] = {
            pass, "tilt " + fmt(rep_tilt.max_discrepancy) + ", tangent " +
                      fmt(rep_tangent.max_discrepancy) + ", acausal " +
                      fmt(rep_acausal.max_discrepancy)};
    }

    // ---- 11: inpainting ------------------------------------------------------
    {
        const auto t_start = Clock::now();
        const GrayImage card = make_stripe_card(256, 256, 16.0, 0.35);
        const InpaintMask mask = make_centered_hole_mask(256, 256, 32);
        InpaintConfig icfg;
        const InpaintResult res = inpaint(card, mask, icfg);
        const double elapsed = seconds_since(t_start);
        double mae = 0.0;
        long n = 0;
        bool known_identical = true;
        for (int j = 0; j < 256; ++j) {
            for (int i = 0; i < 256; ++i) {
                if (mask.is_damaged(i, j)) {
                    mae += std::abs(res.image.at(i, j) - card.at(i, j));
                    ++n;
                } else if (res.image.at(i, j) != card.at(i, j)) {
                    known_identical = false;
                }
            }
        }
        mae /= static_cast<double>(n);
        {
            std::ofstream os(dir / "c11_inpainted.pgm", std::ios::binary);
            write_pgm(os, res.image);
        }
        const bool pass = mae <= 0.05 && known_identical && elapsed < 60.0;
        out.criteria["11 inpainting"] = {
            pass, "hole MAE " + fmt(mae) + ", known pixels " +
                      (known_identical ? "identical" : "CHANGED") + ", " + fmt(elapsed) + " s"};
    }

    return out;
}

bool compare_trees(const fs::path& a, const fs::path& b, std::string& detail) {
    std::vector<fs::path> files;
    for (const auto& e : fs::recursive_directory_iterator(a)) {
        if (e.is_regular_file()) files.push_back(fs::relative(e.path(), a));
    }
    std::sort(files.begin(), files.end());
    for (const auto& rel : files) {
        std::ifstream fa(a / rel, std::ios::binary), fb(b / rel, std::ios::binary);
        if (!fb) {
            detail = "missing " + rel.string() + " in rerun";
            return false;
        }
        std::stringstream sa, sb;
        sa << fa.rdbuf();
        sb << fb.rdbuf();
        if (sa.str() != sb.str()) {
            detail = "artifact " + rel.string() + " differs between runs";
            return false;
        }
    }
    detail = std::to_string(files.size()) + " artifacts byte-identical";
    return true;
}

}  // namespace

int main(int argc, char** argv) {
    const fs::path out = argc > 1 ? fs::path(argv[1]) : fs::path("acceptance_out");
    fs::remove_all(out);
    const BatchOutcome run1 = run_batch(out / "run1");
    for (const auto& [name, result] : run1.criteria) {
        record(std::atoi(name.c_str()), name, result.first, result.second);
    }

    // Criterion 12: rerun criteria 1-11 and compare artifacts byte for byte.
    {
        const BatchOutcome run2 = run_batch(out / "run2");
        (void)run2;
        std::string detail;
        const bool identical = compare_trees(out / "run1", out / "run2", detail);
        record(12, "12 determinism", identical, detail);
    }

    std::sort(g_results.begin(), g_results.end(),
              [](const CriterionResult& x, const CriterionResult& y) { return x.id < y.id; });
    bool all = true;
    for (const auto& r : g_results) {
        std::printf("%s criterion %s: %s\n", r.pass ? "PASS" : "FAIL", r.name.c_str(),
                    r.detail.c_str());
        all = all && r.pass;
    }
    std::printf("%s\n", all ? "ALL CRITERIA PASSED" : "SOME CRITERIA FAILED");
    return all ? 0 : 1;
}
