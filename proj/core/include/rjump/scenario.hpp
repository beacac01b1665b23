#pragma once

#include <cstdint>
#include <string>

#include "rjump/coefficients.hpp"
#include "rjump/numeric.hpp"

namespace rjump {

// A fully validated model instance loaded from a plain-text file, plus the
// solver and simulation settings the experiments use. The raw file text is
// kept so reports can carry a stable content hash.
//
// File format: one `key = value` per line, `#` starts a comment, blank lines
// ignored. Scalars are plain tokens, vectors look like `[1, 0.5]`, matrices
// are row lists `[[1, 0], [0, 2]]`. The system coefficients A, B, C.i, D.i,
// Q, N accept three forms:
//   A = [[0]]                                          constant
//   A = poly [[0]] [[1]]                               A(t) = A0 + A1 t + ...
//   Q = switch sign-of-first-brownian-step [[1]] [[4]] path functional
// (catalog: sign-of-first-brownian-step, after-first-jump; the two matrices
// are the primary/secondary values). Marks are declared with
//   mark.<id>.weight = 2
//   mark.<id>.E = [[ -0.5 ]]
//   mark.<id>.F = [[ 0 ]]
// and keep their file order. Required keys: name, n, m, d, T, delta, A, B,
// Q, N, M, and C.i / D.i for i = 1..d. Optional: x0 (default: all-ones),
// bound, dt, paths, seed, nt, riccati_steps.
struct Scenario {
    std::string name;
    CoefficientSet coeffs;
    Vector x0;

    // Experiment settings (overridable from the command line).
    double dt = 1e-2;          // simulation step
    long paths = 4000;         // Monte Carlo sample size
    std::uint64_t seed = 1;    // RNG seed
    int nt = 8;                // lattice time steps
    int riccati_steps = 400;   // backward solver steps

    std::string source_text;   // exact file contents
    std::string content_hash;  // git-style blob hash of source_text
};

// SHA-1 of "blob <size>\0<content>", hex encoded; matches `git hash-object`.
std::string git_blob_hash(const std::string& content);

// Parses and validates. Throws ScenarioError naming the line and field for
// format problems, and a summary naming the first offending symbol when the
// model violates the standing assumptions (Q/M not PSD, N below delta,
// coefficients out of bounds). Path-functional entries are validated per
// variant.
Scenario parse_scenario(const std::string& path);

// Same, from an in-memory string; `origin` labels error messages and is used
// as a fallback name.
Scenario parse_scenario_text(const std::string& text, const std::string& origin = "<string>");

}  // namespace rjump
