// Command-line front end: linear and quasi-linear solves on the built-in
// presets, the verification suites, and PGM inpainting. Exit codes:
//   0 success, 1 configuration error, 2 audit failure, 3 solver failure,
//   4 failed verification assertion.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "moc2d/characteristics.hpp"
#include "moc2d/fields.hpp"
#include "moc2d/geometry.hpp"
#include "moc2d/grid_field.hpp"
#include "moc2d/inpainting.hpp"
#include "moc2d/linear_solver.hpp"
#include "moc2d/pgm.hpp"
#include "moc2d/presets.hpp"
#include "moc2d/quasilinear.hpp"
#include "moc2d/verification.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 1;
constexpr int kExitAudit = 2;
constexpr int kExitSolver = 3;
constexpr int kExitVerify = 4;

struct RunConfig {
    std::string preset = "disk-radial-f0";
    int grid = 128;
    double dt = 1e-3;
    std::string integrator = "rk4";
    double eps_stop = moc2d::kDefaultStopCollar;
    double stripe_h = 0.0;    // 0: size from the plug-in kappa
    double lambda_max = 1.0 - moc2d::kDefaultStopCollar;
    double tol = -1.0;        // -1: 1e-8 * M_star
    unsigned long long seed = 1234;
    int threads = 0;
    std::string out_dir = "out";
    double q = 4.0;
    double tilt_eps = 0.1;
    double tilt_gain = 0.25;
    // inpainting
    double sigma = 2.0;
    double rho = 3.0;
    double beta_floor = 0.1;
    double inpaint_tol = 1e-6;
    double inpaint_stripe_h = 0.05;
};

void apply_json(RunConfig& rc, const json& j) {
    auto num = [&](const char* key, double& slot) {
        if (j.contains(key)) {
            if (!j[key].is_number()) throw moc2d::ConfigError(std::string(key) + " must be numeric");
            slot = j[key].get<double>();
        }
    };
    if (j.contains("preset")) rc.preset = j["preset"].get<std::string>();
    if (j.contains("grid")) rc.grid = j["grid"].get<int>();
    num("dt", rc.dt);
    if (j.contains("integrator")) rc.integrator = j["integrator"].get<std::string>();
    num("eps_stop", rc.eps_stop);
    num("stripe_h", rc.stripe_h);
    num("lambda_max", rc.lambda_max);
    num("tol", rc.tol);
    if (j.contains("seed")) rc.seed = j["seed"].get<unsigned long long>();
    if (j.contains("threads")) rc.threads = j["threads"].get<int>();
    if (j.contains("out")) rc.out_dir = j["out"].get<std::string>();
    num("q", rc.q);
    num("eps", rc.tilt_eps);
    num("gain", rc.tilt_gain);
    num("sigma", rc.sigma);
    num("rho", rc.rho);
    num("beta_floor", rc.beta_floor);
    num("inpaint_tol", rc.inpaint_tol);
    num("inpaint_stripe_h", rc.inpaint_stripe_h);
}

void load_config_file(RunConfig& rc, const std::string& path) {
    std::ifstream is(path);
    if (!is) throw moc2d::ConfigError("config file not found: " + path);
    json j;
    try {
        is >> j;
    } catch (const std::exception& e) {
        throw moc2d::ConfigError("config parse error in " + path + ": " + e.what());
    }
    apply_json(rc, j);
}

void validate_config(const RunConfig& rc) {
    if (rc.grid < 8 || rc.grid > 4096) throw moc2d::ConfigError("grid must be in [8, 4096]");
    if (!(rc.dt > 0.0) || rc.dt > 0.1) throw moc2d::ConfigError("dt must be in (0, 0.1]");
    if (rc.integrator != "rk4" && rc.integrator != "rk45") {
        throw moc2d::ConfigError("integrator must be rk4 or rk45");
    }
    if (!(rc.eps_stop > 0.0) || rc.eps_stop >= 0.1) {
        throw moc2d::ConfigError("eps_stop must be in (0, 0.1)");
    }
    if (rc.tol != -1.0 && !(rc.tol > 0.0)) {
        throw moc2d::ConfigError("tol must be positive (or -1 for automatic)");
    }
    if (rc.stripe_h < 0.0) throw moc2d::ConfigError("stripe_h must be nonnegative");
    if (!(rc.lambda_max > 0.0) || rc.lambda_max >= 1.0) {
        throw moc2d::ConfigError("lambda_max must be in (0, 1)");
    }
    if (rc.threads < 0) throw moc2d::ConfigError("threads must be nonnegative");
}

moc2d::IntegratorConfig integrator_config(const RunConfig& rc) {
    moc2d::IntegratorConfig cfg;
    cfg.method = rc.integrator == "rk45" ? moc2d::IntegratorMethod::Rk45Adaptive
                                         : moc2d::IntegratorMethod::Rk4Fixed;
    cfg.dt = rc.dt;
    cfg.eps_stop = rc.eps_stop;
    return cfg;
}

moc2d::TransportProblem build_problem(const RunConfig& rc, const moc2d::GridLayout& layout) {
    using namespace moc2d;
    if (rc.preset == "disk-radial-f0") return make_disk_radial_f0_problem(rc.q);
    if (rc.preset == "disk-radial-f1") return make_disk_radial_f1_problem(rc.q);
    if (rc.preset == "disk-causal-eps0.1") {
        return make_disk_causal_problem(layout, rc.q, {0.1, rc.tilt_gain}, rc.eps_stop);
    }
    if (rc.preset == "disk-causal") {
        return make_disk_causal_problem(layout, rc.q, {rc.tilt_eps, rc.tilt_gain}, rc.eps_stop);
    }
    if (rc.preset == "disk-acausal") {
        return make_disk_acausal_problem(layout, rc.q, {rc.tilt_eps, rc.tilt_gain}, rc.eps_stop);
    }
    if (rc.preset == "disk-beta-violation") return make_disk_beta_violation_problem();
    if (rc.preset == "ellipse-segment") return make_ellipse_problem(1.5, 1.0, 2.0);
    throw moc2d::ConfigError("unknown preset: " + rc.preset);
}

moc2d::GridLayout layout_for(const moc2d::DomainSpec& dom, int n) {
    return {dom.box_lo, dom.box_hi, n, n};
}

/// Causality audits shared by the solve commands. Writes audit.csv and
/// returns false when the problem must be refused.
bool run_audits(const moc2d::TransportProblem& prob, const RunConfig& rc,
                const moc2d::GridLayout& layout, const moc2d::IntegratorConfig& cfg,
                const fs::path& out) {
    using namespace moc2d;
    const ScalarGridField zero(layout);
    const auto beta_audit =
        audit_causality_condition(prob.c.frozen(zero), prob.domain.time, prob.domain, 96,
                                  cfg.eps_stop);
    {
        std::ofstream os(out / "audit.csv", std::ios::binary);
        beta_audit.write_csv(os);
    }
    bool causal_ok = true;
    if (prob.c.lipschitz_l1 > 0.0 || !prob.c.causal) {
        const ScalarGridField t0 = make_t0_field(prob.domain, layout, cfg.eps_stop);
        ScalarGridField v = make_random_field(t0, std::max(prob.bounds.M4, 1.0), rc.seed);
        const auto probes = sample_interior_points(prob.domain, 100, rc.seed + 1, cfg.eps_stop);
        const auto rep = audit_functional_causality(prob.c, v, probes, prob.domain.time, t0);
        std::ofstream os(out / "causality_audit.csv", std::ios::binary);
        rep.write_csv(os);
        causal_ok = rep.exactly_causal();
    }
    if (!beta_audit.pass()) {
        std::cerr << "audit failure: <c,N> range [" << beta_audit.min_dot << ", "
                  << beta_audit.max_dot << "], " << beta_audit.violations.size()
                  << " violations (see audit.csv)\n";
        return false;
    }
    if (!causal_ok) {
        std::cerr << "audit failure: field is not functionally causal "
                     "(see causality_audit.csv)\n";
        return false;
    }
    return true;
}

void write_solution(const moc2d::ScalarGridField& u, const fs::path& out) {
    {
        std::ofstream os(out / "solution.fld", std::ios::binary);
        u.save(os);
    }
    {
        std::ofstream os(out / "solution.pgm", std::ios::binary);
        u.save_pgm(os);
    }
    const moc2d::FieldNorms n = moc2d::field_norms(u);
    std::ofstream os(out / "norms.csv", std::ios::binary);
    moc2d::CsvWriter csv(os);
    csv.header({"norm", "value"});
    csv.cell(std::string("l1")).cell(n.l1).end_row();
    csv.cell(std::string("linf")).cell(n.linf).end_row();
    csv.cell(std::string("tv")).cell(n.tv).end_row();
}

double auto_tolerance(const moc2d::TransportProblem& prob, const RunConfig& rc) {
    return rc.tol > 0.0 ? rc.tol : 1e-8 * prob.self_map_bounds().m_star;
}

moc2d::StripePlan make_plan(const moc2d::TransportProblem& prob, const RunConfig& rc,
                            const moc2d::IntegratorConfig& cfg, int threads) {
    using namespace moc2d;
    StripePlan plan;
    if (rc.stripe_h > 0.0) {
        plan.lambda_max = rc.lambda_max;
        plan.h = rc.stripe_h;
        plan.validate();
        return plan;
    }
    // Size from the plug-in contraction constant at lambda_max.
    const GridLayout layout = layout_for(prob.domain, rc.grid);
    const ScalarGridField zero(layout);
    const LinearTransportField frozen = prob.c.frozen(zero);
    std::vector<double> dets(8 * 12);
    moc2d::parallel_for(0, static_cast<long>(dets.size()), threads, [&](long m) {
        const int ti = static_cast<int>(m / 12), si = static_cast<int>(m % 12);
        const double t = rc.lambda_max * ti / 7.0;
        const double s = prob.domain.boundary.period_begin +
                         prob.domain.boundary.period() * (si + 0.5) / 12.0;
        dets[static_cast<size_t>(m)] = jacobian_determinant(prob.domain, frozen, t, s, cfg);
    });
    const SelfMapBounds smb = prob.self_map_bounds();
    const ContractionConstants cc = compute_contraction_constants(
        dets, prob.bounds.beta, prob.bounds.m0, prob.c.lipschitz_l1, prob.f.lipschitz_l1,
        smb.m_star_star, prob.bounds.area, rc.lambda_max);
    StripePlan sized = StripePlan::make(rc.lambda_max, cc.kappa_lambda);
    if (sized.used_fallback_h) {
        std::cerr << "note: plug-in kappa = " << cc.kappa_lambda
                  << " forces h below h_min; falling back to h = " << sized.h
                  << " and iterating to tolerance\n";
    }
    return sized;
}

int cmd_solve_linear(const RunConfig& rc) {
    using namespace moc2d;
    validate_config(rc);
    const fs::path out(rc.out_dir);
    fs::create_directories(out);
    const IntegratorConfig cfg = integrator_config(rc);
    const GridLayout layout = layout_for(build_problem(rc, {}).domain, rc.grid);
    const TransportProblem prob = build_problem(rc, layout);
    if (!run_audits(prob, rc, layout, cfg, out)) return kExitAudit;
    try {
        const ScalarGridField zero(layout);
        const ScalarGridField u =
            solve_linear(prob.domain, prob.c.frozen(zero), prob.f.frozen(zero), prob.u0,
                         layout, cfg, rc.threads);
        write_solution(u, out);
    } catch (const Error& e) {
        std::cerr << "solver failure: " << e.what() << "\n";
        return kExitSolver;
    }
    return kExitOk;
}

int cmd_solve_quasilinear(const RunConfig& rc) {
    using namespace moc2d;
    validate_config(rc);
    const fs::path out(rc.out_dir);
    fs::create_directories(out);
    const IntegratorConfig cfg = integrator_config(rc);
    const GridLayout layout = layout_for(build_problem(rc, {}).domain, rc.grid);
    const TransportProblem prob = build_problem(rc, layout);
    if (!run_audits(prob, rc, layout, cfg, out)) return kExitAudit;
    try {
        const StripePlan plan = make_plan(prob, rc, cfg, rc.threads);
        const double tol = auto_tolerance(prob, rc);
        const QuasilinearResult r =
            solve_quasilinear(prob, layout, plan, tol, cfg, rc.threads);
        write_solution(r.u, out);
        std::ofstream os(out / "diagnostics.csv", std::ios::binary);
        r.diagnostics.write_csv(os);
    } catch (const Error& e) {
        std::cerr << "solver failure: " << e.what() << "\n";
        return kExitSolver;
    }
    return kExitOk;
}

int cmd_verify(const std::string& suite, const RunConfig& rc) {
    using namespace moc2d;
    validate_config(rc);
    const fs::path out(rc.out_dir);
    fs::create_directories(out);
    const IntegratorConfig cfg = integrator_config(rc);
    std::vector<ExperimentReport> reports;

    const bool all = suite == "all";
    if (!all && suite != "manufactured" && suite != "det-bounds" && suite != "uniqueness" &&
        suite != "continuous-dependence") {
        throw ConfigError("unknown suite: " + suite);
    }

    if (all || suite == "manufactured") {
        const DomainSpec dom = make_unit_disk(rc.q);
        const LinearTransportField c = make_normal_field_transport(dom);
        auto g = [](Vec2 p) { return std::sin(2.0 * p.x) * std::cos(p.y) + 0.5 * p.x; };
        auto grad_g = [](Vec2 p) {
            return Vec2{2.0 * std::cos(2.0 * p.x) * std::cos(p.y) + 0.5,
                        -std::sin(2.0 * p.x) * std::sin(p.y)};
        };
        reports.push_back(run_manufactured(dom, c, g, grad_g,
                                           {{64, 8e-3}, {128, 4e-3}, {256, 2e-3}}, 0.9, cfg,
                                           rc.threads));
    }
    if (all || suite == "det-bounds") {
        const DomainSpec dom = make_unit_disk(rc.q);
        reports.push_back(run_det_bounds(dom, make_normal_field_transport(dom),
                                         {0.25, 0.5, 0.75}, 12, 16, cfg, rc.threads));
    }
    if (all || suite == "uniqueness") {
        const GridLayout layout = layout_for(make_unit_disk(rc.q), rc.grid);
        const TransportProblem prob =
            make_disk_causal_problem(layout, rc.q, {rc.tilt_eps, rc.tilt_gain}, rc.eps_stop);
        const double tol = auto_tolerance(prob, rc);
        const StripePlan plan = make_plan(prob, rc, cfg, rc.threads);
        const ScalarGridField t0 = make_t0_field(prob.domain, layout, cfg.eps_stop);
        std::vector<ScalarGridField> guesses;
        guesses.push_back(make_like(t0, 0.0));
        guesses.push_back(make_like(t0, prob.bounds.M4));
        guesses.push_back(make_random_field(t0, prob.bounds.M4, rc.seed));
        reports.push_back(run_uniqueness(prob, layout, plan, tol, cfg, guesses, rc.threads));
    }
    if (all || suite == "continuous-dependence") {
        const GridLayout layout = layout_for(make_unit_disk(rc.q), rc.grid);
        const TransportProblem prob =
            make_disk_causal_problem(layout, rc.q, {rc.tilt_eps, rc.tilt_gain}, rc.eps_stop);
        const double tol = auto_tolerance(prob, rc);
        const StripePlan plan = make_plan(prob, rc, cfg, rc.threads);
        reports.push_back(run_continuous_dependence(prob, layout, plan, tol, cfg, 0.05, 3,
                                                    0.9, rc.seed, rc.threads));
    }

    bool ok = true;
    std::ofstream summary(out / "summary.txt");
    for (const auto& rep : reports) {
        std::ofstream os(out / (rep.name + ".csv"), std::ios::binary);
        rep.write_csv(os);
        rep.write_summary(summary);
        rep.write_summary(std::cout);
        ok = ok && rep.all_pass();
    }
    return ok ? kExitOk : kExitVerify;
}

int cmd_inpaint(const std::string& image_path, const std::string& mask_path,
                const std::string& output_path, const RunConfig& rc, bool write_diag) {
    using namespace moc2d;
    GrayImage img, mask_img;
    {
        std::ifstream is(image_path, std::ios::binary);
        if (!is) throw ConfigError("cannot open image: " + image_path);
        img = read_pgm(is);
    }
    {
        std::ifstream is(mask_path, std::ios::binary);
        if (!is) throw ConfigError("cannot open mask: " + mask_path);
        mask_img = read_pgm(is);
    }
    const InpaintMask mask = InpaintMask::from_image(mask_img);
    try {
        mask.validate();
    } catch (const MaskInvalidError& e) {
        std::cerr << "mask rejected: " << e.what() << "\n";
        return kExitAudit;
    }
    InpaintConfig icfg;
    icfg.q = rc.q;
    icfg.sigma = rc.sigma;
    icfg.rho = rc.rho;
    icfg.beta_floor = rc.beta_floor;
    icfg.stripe_h = rc.inpaint_stripe_h;
    icfg.tol = rc.inpaint_tol;
    icfg.dt = rc.dt;
    icfg.method = rc.integrator == "rk45" ? IntegratorMethod::Rk45Adaptive
                                          : IntegratorMethod::Rk4Fixed;
    icfg.eps_stop = rc.eps_stop;
    icfg.threads = rc.threads;
    try {
        const InpaintResult res = inpaint(img, mask, icfg);
        std::ofstream os(output_path, std::ios::binary);
        if (!os) throw ConfigError("cannot open output: " + output_path);
        write_pgm(os, res.image);
        if (write_diag) {
            const fs::path out(rc.out_dir);
            fs::create_directories(out);
            std::ofstream ds(out / "inpaint_diagnostics.csv", std::ios::binary);
            res.diagnostics.write_csv(ds);
        }
    } catch (const Error& e) {
        std::cerr << "inpainting failure: " << e.what() << "\n";
        return kExitSolver;
    }
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Characteristic transport solver for hyperbolic Dirichlet problems "
                 "with interior outflow"};
    app.require_subcommand(1);

    RunConfig rc;
    std::string config_path;
    std::string suite = "all";
    std::string image_path, mask_path, output_path = "inpainted.pgm";
    bool write_diag = false;

    auto add_common = [&](CLI::App* cmd) {
        cmd->add_option("--config", config_path, "JSON config file")->capture_default_str();
        cmd->add_option("--preset", rc.preset, "problem preset name")->capture_default_str();
        cmd->add_option("--grid", rc.grid, "grid resolution per axis")->capture_default_str();
        cmd->add_option("--dt", rc.dt, "integrator step in T0 units")->capture_default_str();
        cmd->add_option("--integrator", rc.integrator, "rk4 | rk45")->capture_default_str();
        cmd->add_option("--out", rc.out_dir, "output directory")->capture_default_str();
        cmd->add_option("--seed", rc.seed, "random seed")->capture_default_str();
        cmd->add_option("--threads", rc.threads, "worker threads (0 = auto)")
            ->capture_default_str();
        cmd->add_option("--tol", rc.tol, "solver tolerance (-1 = 1e-8 * M_star)")
            ->capture_default_str();
        cmd->add_option("--stripe-h", rc.stripe_h, "stripe thickness (0 = auto)")
            ->capture_default_str();
        cmd->add_option("--lambda-max", rc.lambda_max, "solve up to this T0 level")
            ->capture_default_str();
        cmd->add_option("--q", rc.q, "time-function blow-up exponent")->capture_default_str();
    };

    CLI::App* lin = app.add_subcommand("solve-linear", "solve the frozen linear problem");
    add_common(lin);
    CLI::App* quasi =
        app.add_subcommand("solve-quasilinear", "stripe-marching fixed-point solve");
    add_common(quasi);
    CLI::App* verify = app.add_subcommand("verify", "run verification suites");
    add_common(verify);
    verify->add_option("suite", suite,
                       "manufactured | det-bounds | uniqueness | continuous-dependence | all")
        ->capture_default_str();
    CLI::App* inp = app.add_subcommand("inpaint", "transport-based PGM inpainting");
    add_common(inp);
    inp->add_option("image", image_path, "input PGM (P5)")->required();
    inp->add_option("mask", mask_path, "mask PGM (0 = damaged, 255 = known)")->required();
    inp->add_option("--output", output_path, "output PGM path")->capture_default_str();
    inp->add_option("--rho", rc.rho, "structure-tensor radius (px)")->capture_default_str();
    inp->add_option("--sigma", rc.sigma, "distance smoothing (px)")->capture_default_str();
    inp->add_option("--beta-floor", rc.beta_floor, "minimum <c, N>")->capture_default_str();
    inp->add_option("--inpaint-tol", rc.inpaint_tol, "stripe L1 tolerance")
        ->capture_default_str();
    inp->add_flag("--diagnostics", write_diag, "write stripe diagnostics CSV");

    CLI11_PARSE(app, argc, argv);

    try {
        if (!config_path.empty()) load_config_file(rc, config_path);
        if (lin->parsed()) return cmd_solve_linear(rc);
        if (quasi->parsed()) return cmd_solve_quasilinear(rc);
        if (verify->parsed()) return cmd_verify(suite, rc);
        if (inp->parsed()) return cmd_inpaint(image_path, mask_path, output_path, rc, write_diag);
    } catch (const moc2d::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const moc2d::IoError& e) {
        std::cerr << "input error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const moc2d::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitSolver;
    }
    return kExitConfig;
}
