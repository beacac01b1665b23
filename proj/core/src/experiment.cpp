#include "rjump/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <ostream>
#include <stdexcept>

#include "rjump/control.hpp"
#include "rjump/errors.hpp"
#include "rjump/lattice.hpp"
#include "rjump/model.hpp"
#include "rjump/riccati.hpp"
#include "rjump/simulator.hpp"

namespace rjump {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

void add_check(RunReport& rep, std::string name, bool pass, double measured, double tolerance,
               std::string detail = {}) {
    rep.checks.push_back(
        {std::move(name), pass, measured, tolerance, std::move(detail)});
}

void add_info(RunReport& rep, std::string name, double measured, std::string detail = {}) {
    rep.checks.push_back({std::move(name), true, measured, kNaN, std::move(detail)});
}

// Allowance for the O(dt) weak error of the Euler scheme (and for control
// discretization); added on top of the 3-sigma Monte Carlo band so that
// noise-free scenarios, where the standard error is zero, still have a
// nonzero budget.
double bias_allowance(double dt, double scale) { return 2.0 * dt * (1.0 + std::abs(scale)); }

SimConfig config_for(const Scenario& sc, const ExperimentOptions& opt) {
    SimConfig cfg;
    cfg.dt = sc.dt;
    cfg.n_paths = sc.paths;
    cfg.seed = sc.seed;
    cfg.x0 = sc.x0;
    cfg.t0 = 0.0;
    if (opt.dump_paths) cfg.record_paths = std::min<long>(sc.paths, 200);
    return cfg;
}

std::ofstream open_artifact(const ExperimentOptions& opt, const std::string& file) {
    std::filesystem::create_directories(opt.out_dir);
    const std::string path = opt.out_dir + "/" + file;
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write artifact " + path);
    return out;
}

void require_deterministic(const Scenario& sc, const std::string& subcommand) {
    if (sc.coeffs.path_dependent())
        throw ScenarioError(sc.name + ": path-dependent coefficients ('" +
                            sc.coeffs.path_dependent_symbols().front() +
                            "') need the lattice subcommand, not '" + subcommand + "'");
}

double max_K_norm(const RiccatiGrid& grid) {
    double mx = 0.0;
    for (const Matrix& k : grid.K) mx = std::max(mx, k.norm());
    return mx;
}

RiccatiGrid solve_with_checks(const Scenario& sc, RunReport& rep,
                              const ExperimentOptions& opt, bool emit_grid) {
    RiccatiGrid grid = solve_riccati_ide(sc.coeffs, sc.riccati_steps);
    for (const std::string& w : grid.warnings) rep.warnings.push_back("riccati: " + w);

    const double scale = 1.0 + max_K_norm(grid);
    const double residual = riccati_residual(grid, sc.coeffs);
    add_check(rep, "riccati residual", residual <= 1e-6 * scale, residual, 1e-6 * scale,
              std::to_string(grid.steps()) + " steps");

    const double min_h =
        *std::min_element(grid.min_hessian_eig.begin(), grid.min_hessian_eig.end());
    add_check(rep, "control hessian floor", min_h > 0.0, min_h, 0.0,
              "min eigenvalue over grid nodes");

    double min_k = std::numeric_limits<double>::infinity();
    for (const Matrix& k : grid.K) min_k = std::min(min_k, min_eigenvalue(k));
    add_check(rep, "K PSD on grid", min_k >= -1e-9 * scale, min_k, -1e-9 * scale);

    const double term = (grid.K.back() - sc.coeffs.M).norm();
    add_check(rep, "terminal condition", term == 0.0, term, 0.0, "|K(T) - M|");

    if (emit_grid && !opt.out_dir.empty()) {
        auto out = open_artifact(opt, "grid.csv");
        write_grid_csv(grid, out);
    }
    return grid;
}

void run_solve_riccati(const Scenario& sc, RunReport& rep, const ExperimentOptions& opt) {
    require_deterministic(sc, rep.subcommand);
    solve_with_checks(sc, rep, opt, true);
}

void run_simulate(const Scenario& sc, RunReport& rep, const ExperimentOptions& opt) {
    require_deterministic(sc, rep.subcommand);
    const CoefficientSet& c = sc.coeffs;
    SimConfig cfg = config_for(sc, opt);

    Policy zero = [](double, const Vector&, Vector& u) { u.setZero(); };
    PathBundle bundle = simulate_paths(c, zero, cfg);
    for (const std::string& w : bundle.warnings) rep.warnings.push_back("simulate: " + w);

    const CostEstimate cost = evaluate_cost(bundle);
    add_info(rep, "open-loop cost", cost.mean,
             "std error " + format_double(cost.std_error) + ", " +
                 std::to_string(cost.n_paths) + " paths");

    std::vector<double> jumps(bundle.jump_count.begin(), bundle.jump_count.end());
    const CostEstimate jrate = estimate_mean(jumps);
    const double expected_jumps = c.marks.total() * (c.horizon - cfg.t0);
    if (c.marks.empty()) {
        add_check(rep, "jump count", jrate.mean == 0.0, jrate.mean, 0.0, "no marks");
    } else {
        const double tol = 3.0 * jrate.std_error;
        add_check(rep, "jump count vs rate", std::abs(jrate.mean - expected_jumps) <= tol,
                  std::abs(jrate.mean - expected_jumps), tol,
                  "expected " + format_double(expected_jumps));
    }

    if (c.n == 1 && c.m == 1) {
        const MomentPair oracle = moment_oracle(c, 0.0, c.horizon, sc.x0(0));
        const CostEstimate m1 = terminal_moment(bundle, 1);
        const CostEstimate m2 = terminal_moment(bundle, 2);
        const double tol1 = 3.0 * m1.std_error + bias_allowance(cfg.dt, oracle.first_moment);
        add_check(rep, "terminal mean vs oracle",
                  std::abs(m1.mean - oracle.first_moment) <= tol1,
                  std::abs(m1.mean - oracle.first_moment), tol1,
                  "oracle " + format_double(oracle.first_moment) + ", sample " +
                      format_double(m1.mean));
        const double tol2 = 3.0 * m2.std_error + bias_allowance(cfg.dt, oracle.second_moment);
        add_check(rep, "terminal second moment vs oracle",
                  std::abs(m2.mean - oracle.second_moment) <= tol2,
                  std::abs(m2.mean - oracle.second_moment), tol2,
                  "oracle " + format_double(oracle.second_moment) + ", sample " +
                      format_double(m2.mean));
    }

    if (!opt.out_dir.empty() && opt.dump_paths) {
        auto out = open_artifact(opt, "paths.csv");
        write_paths_csv(out, bundle, c);
    }
}

void run_verify(const Scenario& sc, RunReport& rep, const ExperimentOptions& opt) {
    require_deterministic(sc, rep.subcommand);
    const CoefficientSet& c = sc.coeffs;
    RiccatiGrid grid = solve_with_checks(sc, rep, opt, true);
    FeedbackLaw law = synthesize_feedback(grid, c);
    SimConfig cfg = config_for(sc, opt);

    PathBundle bundle = simulate_closed_loop(c, law, cfg);
    for (const std::string& w : bundle.warnings) rep.warnings.push_back("simulate: " + w);
    const CostEstimate cost = evaluate_cost(bundle);
    const double v = law.value(cfg.t0, sc.x0);
    add_info(rep, "value formula", v, "<K(0) x0, x0>");
    add_info(rep, "closed-loop cost", cost.mean,
             "std error " + format_double(cost.std_error) + ", " +
                 std::to_string(cost.n_paths) + " paths");
    const double tol_v = 3.0 * cost.std_error + bias_allowance(cfg.dt, v);
    add_check(rep, "value identity", std::abs(cost.mean - v) <= tol_v,
              std::abs(cost.mean - v), tol_v, "closed-loop cost vs formula");

    const OptimalityGap at_opt = optimality_gap(c, law, law.policy(), cfg);
    add_check(rep, "gap at optimum (predicted)", at_opt.predicted.mean == 0.0,
              at_opt.predicted.mean, 0.0, "exact zero by construction");
    const double tol_d = 3.0 * at_opt.direct.std_error + bias_allowance(cfg.dt, v);
    add_check(rep, "gap at optimum (direct)", std::abs(at_opt.direct.mean) <= tol_d,
              std::abs(at_opt.direct.mean), tol_d);

    Policy perturbed = [base = law.policy()](double t, const Vector& x, Vector& u) {
        base(t, x, u);
        u.array() += 0.1;
    };
    const OptimalityGap gap = optimality_gap(c, law, perturbed, cfg);
    add_info(rep, "perturbed gap (direct)", gap.direct.mean,
             "std error " + format_double(gap.direct.std_error));
    add_info(rep, "perturbed gap (predicted)", gap.predicted.mean,
             "std error " + format_double(gap.predicted.std_error));
    const double tol_dom = 3.0 * gap.direct.std_error + bias_allowance(cfg.dt, v);
    add_check(rep, "gap dominance", gap.direct.mean >= -tol_dom, gap.direct.mean, -tol_dom,
              "cost of perturbed policy is no better");
    const double tol_gap = 3.0 * (gap.direct.std_error + gap.predicted.std_error) +
                           bias_allowance(cfg.dt, std::abs(v) + gap.predicted.mean);
    add_check(rep, "gap consistency", std::abs(gap.direct.mean - gap.predicted.mean) <= tol_gap,
              std::abs(gap.direct.mean - gap.predicted.mean), tol_gap,
              "direct vs completion-of-squares prediction");

    if (!opt.out_dir.empty() && opt.dump_paths) {
        auto out = open_artifact(opt, "paths.csv");
        write_paths_csv(out, bundle, c);
    }
}

void run_lattice(const Scenario& sc, RunReport& rep, const ExperimentOptions& opt) {
    const CoefficientSet& c = sc.coeffs;
    LatticeSpec lspec;
    lspec.nt = sc.nt;
    LatticeTree tree = build_tree(c, lspec);
    for (const std::string& w : tree.warnings) rep.warnings.push_back("lattice: " + w);
    backward_induction(tree, c);
    doob_decompose(tree, c);

    add_info(rep, "tree nodes", static_cast<double>(tree.total_nodes()),
             tree.collapsed ? "collapsed chain" : "explicit tree");
    add_info(rep, "root value", tree.node_value(0, 0, sc.x0), "<K(0) x0, x0> at the root");

    double max_k_norm = 0.0;
    for (int k = 0; k <= tree.nt; ++k)
        for (long i = 0; i < tree.level_size[static_cast<std::size_t>(k)]; ++i)
            max_k_norm = std::max(max_k_norm, tree.K_at(k, i).norm());
    const double scale = 1.0 + max_k_norm;

    double max_proj = 0.0;
    for (int k = 0; k < tree.nt; ++k)
        for (long i = 0; i < tree.level_size[static_cast<std::size_t>(k)]; ++i)
            max_proj = std::max(max_proj, tree.proj_residual_at(k, i));
    const double tol_proj = tree.d == 0 ? 1e-12 * scale : 10.0 * tree.dt * scale;
    add_check(rep, "projection residual", max_proj <= tol_proj, max_proj, tol_proj,
              tree.d == 0 ? "exact representation when d = 0" : "O(dt) representation defect");

    const ResidualStats gres = generator_residual(tree, c);
    add_check(rep, "generator residual finite", std::isfinite(gres.max_residual),
              gres.max_residual, kNaN,
              "mean " + format_double(gres.mean_residual) + " over " +
                  std::to_string(gres.nodes) + " nodes");

    if (!tree.path_dependent) {
        double max_l = 0.0, max_r = 0.0;
        for (int k = 0; k < tree.nt; ++k)
            for (long i = 0; i < tree.level_size[static_cast<std::size_t>(k)]; ++i) {
                for (int j = 0; j < tree.d; ++j)
                    max_l = std::max(max_l, tree.L_at(k, i, j).norm());
                for (int e = 0; e < tree.num_marks; ++e)
                    max_r = std::max(max_r, tree.R_at(k, i, e).norm());
            }
        add_check(rep, "deterministic L vanishes", max_l <= 1e-12 * scale, max_l, 1e-12 * scale);
        add_check(rep, "deterministic R vanishes", max_r <= 1e-12 * scale, max_r, 1e-12 * scale);
    }

    const StructureReport sr = check_structure(tree, c);
    add_check(rep, "floor: control hessian", sr.min_hessian_eig >= -1e-9, sr.min_hessian_eig,
              -1e-9);
    add_check(rep, "floor: K", sr.min_K_eig >= -1e-9, sr.min_K_eig, -1e-9);
    add_check(rep, "floor: K + R", sr.min_K_plus_R_eig >= -1e-9, sr.min_K_plus_R_eig, -1e-9);
    add_check(rep, "floor: jump quadratic", sr.min_jump_quad_eig >= -1e-9, sr.min_jump_quad_eig,
              -1e-9);
    add_check(rep, "sum |L|^2 dt finite", std::isfinite(sr.sum_L_sq), sr.sum_L_sq, kNaN);
    add_check(rep, "sum nu |R|^2 dt finite", std::isfinite(sr.sum_R_sq), sr.sum_R_sq, kNaN);

    if (!tree.collapsed) {
        const MartingaleReport mr = submartingale_check(tree, c, sc.x0, optimal_node_policy(tree));
        const double tol_m = 1e-10 * (1.0 + std::abs(tree.node_value(0, 0, sc.x0)));
        add_check(rep, "optimal policy margin", mr.max_abs_margin <= tol_m, mr.max_abs_margin,
                  tol_m, "cost-plus-value process is a martingale at the optimum");
    }

    if (tree.m == 1 &&
        std::pow(17.0 * tree.n_branch, tree.nt) <= 1e7) {
        std::vector<double> grid;
        for (int i = 0; i <= 16; ++i) grid.push_back(-2.0 + 0.25 * i);
        const double bf = brute_force_value(tree, c, sc.x0, grid);
        const double root = tree.node_value(0, 0, sc.x0);
        const double diff = bf - root;
        const double tol_lo = -1e-9 * (1.0 + std::abs(root));
        const double tol_hi = 0.1 * (1.0 + std::abs(root));
        add_check(rep, "brute force dominates root", diff >= tol_lo && diff <= tol_hi, diff,
                  tol_hi, "restricted control grid pays at most O(step^2) extra");
    }

    if (!opt.out_dir.empty()) {
        auto out = open_artifact(opt, "tree.csv");
        write_tree_csv(out, tree, opt.max_tree_rows);
    }
}

void run_compare(const Scenario& sc, RunReport& rep, const ExperimentOptions& opt) {
    require_deterministic(sc, rep.subcommand);
    const CoefficientSet& c = sc.coeffs;
    RiccatiGrid grid = solve_riccati_ide(c, sc.riccati_steps);
    for (const std::string& w : grid.warnings) rep.warnings.push_back("riccati: " + w);
    const Matrix k_ref = grid.K.front();
    const double scale = 1.0 + k_ref.norm();
    add_info(rep, "riccati K(0) norm", k_ref.norm(),
             std::to_string(grid.steps()) + " solver steps");

    double err_prev = 0.0;
    for (int round = 0; round < 2; ++round) {
        LatticeSpec lspec;
        lspec.nt = round == 0 ? sc.nt : 2 * sc.nt;
        LatticeTree tree = build_tree(c, lspec);
        backward_induction(tree, c);
        const double err = (Matrix(tree.K_at(0, 0)) - k_ref).norm();
        if (round == 0) {
            const double tol = 5.0 * tree.dt * scale;
            add_check(rep, "lattice root error", err <= tol, err, tol,
                      "nt = " + std::to_string(lspec.nt));
            err_prev = err;
        } else {
            const double tol = 0.75 * err_prev + 1e-12 * scale;
            add_check(rep, "root error shrinks", err <= tol, err, tol,
                      "nt = " + std::to_string(lspec.nt) + " vs " + std::to_string(sc.nt));
        }
    }

    if (!opt.out_dir.empty()) {
        auto out = open_artifact(opt, "grid.csv");
        write_grid_csv(grid, out);
    }
}

std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char ch : s) {
        if (ch == '"') out += "\"\"";
        else out.push_back(ch);
    }
    out += "\"";
    return out;
}

}  // namespace

bool RunReport::all_pass() const {
    return std::all_of(checks.begin(), checks.end(),
                       [](const CheckOutcome& c) { return c.pass; });
}

RunReport run_experiment(const Scenario& sc, const std::string& subcommand,
                         const ExperimentOptions& opt) {
    RunReport rep;
    rep.scenario = sc.name;
    rep.content_hash = sc.content_hash;
    rep.subcommand = subcommand;

    const auto start = std::chrono::steady_clock::now();
    if (subcommand == "solve-riccati")
        run_solve_riccati(sc, rep, opt);
    else if (subcommand == "simulate")
        run_simulate(sc, rep, opt);
    else if (subcommand == "verify")
        run_verify(sc, rep, opt);
    else if (subcommand == "lattice")
        run_lattice(sc, rep, opt);
    else if (subcommand == "compare")
        run_compare(sc, rep, opt);
    else
        throw ScenarioError("unknown subcommand '" + subcommand +
                            "' (want solve-riccati, simulate, verify, lattice or compare)");
    rep.elapsed_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

    if (!opt.out_dir.empty()) {
        auto out = open_artifact(opt, "report.csv");
        write_report_csv(out, rep);
    }
    return rep;
}

void write_report_csv(std::ostream& out, const RunReport& rep) {
    out << "scenario,hash,subcommand,check,pass,measured,tolerance,detail\n";
    for (const CheckOutcome& c : rep.checks) {
        out << csv_field(rep.scenario) << ',' << rep.content_hash << ','
            << rep.subcommand << ',' << csv_field(c.name) << ','
            << (c.pass ? "1" : "0") << ',' << format_double(c.measured) << ','
            << format_double(c.tolerance) << ',' << csv_field(c.detail) << '\n';
    }
}

void print_report(std::ostream& out, const RunReport& rep) {
    out << rep.scenario << " (" << rep.content_hash.substr(0, 12) << ") " << rep.subcommand
        << "\n";
    for (const CheckOutcome& c : rep.checks) {
        out << (c.pass ? "  [PASS] " : "  [FAIL] ") << c.name << ": " << format_double(c.measured);
        if (std::isfinite(c.tolerance)) out << " (tolerance " << format_double(c.tolerance) << ")";
        if (!c.detail.empty()) out << " -- " << c.detail;
        out << "\n";
    }
    for (const std::string& w : rep.warnings) out << "  [WARN] " << w << "\n";
    out << "  " << (rep.all_pass() ? "all checks passed" : "CHECKS FAILED") << " in "
        << format_double(rep.elapsed_seconds) << " s\n";
}

}  // namespace rjump
