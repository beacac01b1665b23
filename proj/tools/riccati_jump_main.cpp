// riccati-jump: command line front end for the stochastic LQ toolkit.
// Subcommands map one-to-one onto run_experiment; see --help per subcommand.
// Exit codes: 0 all checks passed, 1 a check failed or a solver aborted,
// 2 bad input (unreadable or invalid scenario, bad flags).

#include <cstdint>
#include <iostream>
#include <stdexcept>
#include <string>

#include "CLI11.hpp"
#include "rjump/errors.hpp"
#include "rjump/experiment.hpp"
#include "rjump/scenario.hpp"

namespace {

struct Args {
    std::string scenario_path;
    std::string out_dir;
    bool dump_paths = false;
    std::uint64_t seed = 0;
    long paths = 0;
    double dt = 0.0;
    int nt = 0;
    int riccati_steps = 0;
    long max_tree_rows = 20000;
};

void add_common_options(CLI::App* sub, Args& a) {
    sub->add_option("--scenario", a.scenario_path, "scenario file to load")
        ->required()
        ->check(CLI::ExistingFile);
    sub->add_option("--out", a.out_dir, "directory for CSV artifacts (created on demand)");
    sub->add_option("--seed", a.seed, "override the scenario RNG seed");
    sub->add_option("--paths", a.paths, "override the Monte Carlo path count")
        ->check(CLI::PositiveNumber);
    sub->add_option("--dt", a.dt, "override the simulation step")->check(CLI::PositiveNumber);
    sub->add_option("--nt", a.nt, "override the lattice step count")
        ->check(CLI::PositiveNumber);
    sub->add_option("--riccati-steps", a.riccati_steps, "override the backward solver steps")
        ->check(CLI::PositiveNumber);
    sub->add_flag("--dump-paths", a.dump_paths, "also write paths.csv (simulate / verify)");
    sub->add_option("--max-tree-rows", a.max_tree_rows, "row cap for tree.csv")
        ->check(CLI::PositiveNumber);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{
        "Stochastic linear-quadratic control with Brownian and jump noise:\n"
        "backward Riccati solver, jump-diffusion Monte Carlo, and a\n"
        "discrete-filtration lattice with martingale decomposition."};
    app.require_subcommand(1);

    Args a;
    for (const auto& [name, desc] :
         {std::pair<const char*, const char*>{"solve-riccati",
                                              "solve the backward equation, check residual and "
                                              "positivity, write grid.csv"},
          {"simulate", "open-loop Monte Carlo against the exact moment oracle"},
          {"verify",
           "synthesize the feedback law, compare closed-loop cost with the value "
           "formula, measure optimality gaps"},
          {"lattice",
           "build the outcome tree, run backward induction and the martingale "
           "decomposition, check residuals and positivity floors"},
          {"compare", "lattice root value matrix against the Riccati solution"}}) {
        add_common_options(app.add_subcommand(name, desc), a);
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    CLI::App* sub = app.get_subcommands().front();
    try {
        rjump::Scenario sc = rjump::parse_scenario(a.scenario_path);
        if (sub->count("--seed") > 0) sc.seed = a.seed;
        if (sub->count("--paths") > 0) sc.paths = a.paths;
        if (sub->count("--dt") > 0) sc.dt = a.dt;
        if (sub->count("--nt") > 0) sc.nt = a.nt;
        if (sub->count("--riccati-steps") > 0) sc.riccati_steps = a.riccati_steps;

        rjump::ExperimentOptions opt;
        opt.out_dir = a.out_dir;
        opt.dump_paths = a.dump_paths;
        opt.max_tree_rows = a.max_tree_rows;

        rjump::RunReport rep = rjump::run_experiment(sc, sub->get_name(), opt);
        rjump::print_report(std::cout, rep);
        return rep.all_pass() ? 0 : 1;
    } catch (const rjump::ScenarioError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
