#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "rjump/scenario.hpp"

namespace rjump {

// One named check with its measured value and the bound it was held to.
// Informational rows carry tolerance = NaN and always pass.
struct CheckOutcome {
    std::string name;
    bool pass = false;
    double measured = 0.0;
    double tolerance = 0.0;
    std::string detail;
};

struct RunReport {
    std::string scenario;
    std::string content_hash;  // git-style blob hash of the scenario file
    std::string subcommand;
    std::vector<CheckOutcome> checks;
    std::vector<std::string> warnings;
    // Stdout only; write_report_csv skips it so reruns stay byte-identical.
    double elapsed_seconds = 0.0;

    bool all_pass() const;
};

struct ExperimentOptions {
    std::string out_dir;       // artifact directory, created on demand; empty
                               // writes no files
    bool dump_paths = false;   // also write paths.csv (simulate / verify)
    long max_tree_rows = 20000;
};

// Runs one subcommand against a parsed scenario:
//   solve-riccati  backward solve, residual and positivity checks, grid.csv
//   simulate       open-loop (u = 0) Monte Carlo vs the moment oracle
//   verify         feedback synthesis, closed-loop cost vs <K(0)x0, x0>,
//                  optimality gaps at the optimum and under a perturbation
//   lattice        tree build, induction, decomposition, residual and
//                  structure checks, tree.csv
//   compare        lattice root K against the Riccati K(0) at nt and 2 nt
// Throws ScenarioError for an unknown subcommand or a scenario the
// subcommand cannot run (path-dependent coefficients anywhere but lattice);
// module errors propagate with their own messages.
RunReport run_experiment(const Scenario& sc, const std::string& subcommand,
                         const ExperimentOptions& opt = {});

// CSV: scenario,hash,subcommand,check,pass,measured,tolerance,detail.
void write_report_csv(std::ostream& out, const RunReport& rep);

// Human-readable listing: one [PASS]/[FAIL] line per check, warnings, timing.
void print_report(std::ostream& out, const RunReport& rep);

}  // namespace rjump
