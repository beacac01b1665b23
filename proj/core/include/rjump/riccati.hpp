#pragma once

#include <iosfwd>
#include <memory>
#include <string>
#include <vector>

#include "rjump/coefficients.hpp"

namespace rjump {

struct StepStats {
  int accepted = 0;
  int rejected = 0;  // always 0: fixed-step integration, kept for reporting
  double max_local_error = 0.0;  // Richardson estimate, diagnostics only
};

/// Backward solution of dK/dt = -G(t, K, 0, 0), K(T) = M on a uniform grid.
struct RiccatiGrid {
  std::vector<double> times;            // ascending, t0 = 0, last = T
  std::vector<Matrix> K;                // aligned with times; K.back() = M exactly
  std::vector<double> min_hessian_eig;  // smallest eigenvalue of the control Hessian at each node
  StepStats stats;
  std::vector<std::string> warnings;    // e.g. Hessian eigenvalue dipping below delta/2

  int steps() const { return static_cast<int>(times.size()) - 1; }
};

/// Classic fourth-order fixed-step backward integration with every stage
/// symmetrized. Coefficients are sampled at stage times, so they should be
/// piecewise continuous; the claimed order further assumes smoothness.
/// Rejects path-dependent coefficient sets and aborts (SolverFailure) if a
/// node leaves the PSD cone beyond the -1e-9 * (1 + |K|) round-off floor.
RiccatiGrid solve_riccati_ide(const CoefficientSet& coeffs, int nt);

/// Max over grid nodes of the integral-form defect
///   | K(t_i) - M - integral_{t_i}^{T} G(s, K(s), 0, 0) ds |_F
/// with the integral evaluated by a fourth-order composite quadrature on the
/// stored nodes, so the defect shrinks at the integrator's order.
double riccati_residual(const RiccatiGrid& grid, const CoefficientSet& coeffs);

/// Entrywise monotone piecewise-cubic interpolant (Fritsch-Carlson slopes):
/// exact at the nodes, no overshoot between monotone samples, symmetric
/// output. Build once, evaluate many times.
class KInterpolant {
 public:
  explicit KInterpolant(const RiccatiGrid& grid);
  /// Throws std::out_of_range outside [times.front(), times.back()].
  Matrix operator()(double t) const;

 private:
  std::vector<double> times_;
  std::vector<Matrix> values_;
  std::vector<Matrix> slopes_;
};

/// Convenience one-shot interpolation (constructs the interpolant internally).
Matrix interpolate_K(const RiccatiGrid& grid, double t);

/// CSV export with columns t, vech(K), min_hessian_eig. Doubles are written
/// in shortest round-trip form, so read_grid_csv restores bit-identical data.
void write_grid_csv(const RiccatiGrid& grid, std::ostream& out);
RiccatiGrid read_grid_csv(std::istream& in);

}  // namespace rjump
