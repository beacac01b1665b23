#pragma once

#include <stdexcept>
#include <string>

namespace rjump {

/// Shape of a supplied matrix or vector disagrees with (n, m, d) or the mark
/// space. The message names the offending symbol, e.g. "C[2]" or "F[e1]".
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Coefficient data is unusable for the requested operation: non-finite
/// entries, a path-dependent entry passed to a deterministic solver, a mark
/// mismatch, and similar.
class CoefficientError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// The control Hessian (the control-weighting operator N + sum_i Di' K Di +
/// sum_e Fe' (K + R(e)) Fe nu_e, or its one-step discrete analogue) is not
/// positive definite. Detected by failure of a Cholesky factorization; exact
/// singularity is reported as this error rather than falling back to a
/// pseudoinverse.
class NonPositiveControlHessian : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A state or value iterate became NaN or infinite.
class NonFiniteState : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A structural invariant (e.g. positive semidefiniteness of a value matrix
/// beyond the round-off floor) failed during a solve.
class SolverFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A lattice budget was exceeded: node count over the hard cap, or a
/// brute-force control enumeration too large to run.
class LatticeOverflow : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Scenario file could not be parsed or failed validation on load. The
/// message carries the file, line, and offending field or mark.
class ScenarioError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace rjump
