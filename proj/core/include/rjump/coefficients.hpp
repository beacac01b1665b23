#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "rjump/mark_measure.hpp"
#include "rjump/numeric.hpp"

namespace rjump {

/// One lattice step outcome: the Brownian sign vector packed into a bit mask
/// (bit i set means s_i = +1) and the jump result (-1 for "no jump", else the
/// mark index).
struct LatticeOutcome {
  std::uint32_t sign_mask = 0;
  int jump = -1;
};

/// Closed catalog of path functionals a coefficient may follow on the
/// lattice. Each entry switches between two fixed matrices based on a
/// predictable feature of the outcome history:
///   - SignOfFirstBrownianStep: "primary" until the first step resolves, then
///     primary if s_1 = +1 on step 0, otherwise secondary.
///   - AfterFirstJump: primary until a jump has occurred on some earlier
///     step, secondary afterwards.
/// Both are predictable: the value on [t_k, t_{k+1}) depends only on outcomes
/// of steps 0..k-1.
enum class PathSwitchKind { SignOfFirstBrownianStep, AfterFirstJump };

struct PathFunctional {
  PathSwitchKind kind;
  Matrix primary;
  Matrix secondary;

  static constexpr int num_variants = 2;
  int root_variant() const { return 0; }
  /// Variant of a node given its parent's variant and the branch outcome that
  /// led to it; step_index is the parent's step.
  int step_variant(int parent_variant, int step_index, const LatticeOutcome& outcome) const;
  const Matrix& value(int variant) const { return variant == 0 ? primary : secondary; }
};

const char* to_string(PathSwitchKind kind);
std::optional<PathSwitchKind> path_switch_from_string(const std::string& name);

/// A single named coefficient: either a deterministic time map or a
/// path-functional form. Deterministic solvers reject sets containing any
/// path-functional entry; the lattice consumes both.
class Coefficient {
 public:
  using TimeMap = std::function<Matrix(double)>;

  Coefficient() = default;
  static Coefficient constant(Matrix value);
  /// sum_k coeffs[k] * t^k
  static Coefficient polynomial(std::vector<Matrix> powers);
  static Coefficient map(TimeMap fn);
  static Coefficient path_switch(PathSwitchKind kind, Matrix primary, Matrix secondary);

  bool valid() const { return static_cast<bool>(time_map_) || path_.has_value(); }
  bool path_dependent() const { return path_.has_value(); }
  const PathFunctional& path() const { return *path_; }

  /// Deterministic value at t; throws CoefficientError if path dependent.
  Matrix at(double t) const;
  /// Value for a given path-functional variant (or the deterministic value,
  /// which ignores the variant).
  Matrix at(double t, int variant) const;

 private:
  TimeMap time_map_;
  std::optional<PathFunctional> path_;
};

/// Plain matrix snapshot of every coefficient at one (t, history-variant)
/// point. Self-contained: carries the mark weights so the integral terms can
/// be evaluated without reaching back into the owning set.
struct CoefficientSlice {
  Matrix A, B, Q, N;
  std::vector<Matrix> C, D;  // d entries
  std::vector<Matrix> E, F;  // one entry per mark
  std::vector<double> nu;    // mark weights, aligned with E/F
  int n = 0, m = 0, d = 0;

  int num_marks() const { return static_cast<int>(nu.size()); }
  double nu_total() const;
};

/// The full model data: dimensions, coefficient maps, terminal weight, cost
/// floors and bounds, and the horizon.
struct CoefficientSet {
  int n = 0, m = 0, d = 0;
  Coefficient A, B, Q, N;
  std::vector<Coefficient> C, D;  // d entries
  std::vector<Coefficient> E, F;  // one per mark
  Matrix M;                       // terminal weight, n x n symmetric PSD
  MarkMeasure marks;
  double delta = 0.0;    // floor for N(t)
  double bound = 100.0;  // uniform coefficient bound
  double horizon = 0.0;  // T

  bool path_dependent() const;
  /// Symbols ("A", "C[1]", "E[e0]", ...) carrying a path-functional form.
  std::vector<std::string> path_dependent_symbols() const;

  /// Deterministic snapshot at t; throws CoefficientError if any entry is
  /// path dependent, DimensionError if a map returns a wrong shape.
  CoefficientSlice slice(double t) const;

  /// Snapshot at t with path-functional entries resolved: coefficients that
  /// switch on the first Brownian sign take `sign_variant`, those that switch
  /// on the first jump take `jump_variant`. Deterministic entries ignore the
  /// variants, so this generalizes slice(t).
  CoefficientSlice slice(double t, int sign_variant, int jump_variant) const;

  /// Shape and basic validity checks (dims positive, maps present, M shape).
  /// Throws DimensionError / CoefficientError naming the symbol.
  void check_shape() const;
};

/// One point of the solution triple of the backward equation: the value
/// matrix K, the Brownian martingale loadings L^i, and the jump loadings
/// R(e) per mark.
struct TriplePoint {
  Matrix K;
  std::vector<Matrix> L;
  std::vector<Matrix> R;

  /// Shape and symmetry checks (relative tolerance 1e-10); throws
  /// DimensionError naming the offending member.
  void validate(int n, int d, std::size_t num_marks, double sym_tol = 1e-10) const;
};

}  // namespace rjump
