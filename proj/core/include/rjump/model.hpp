#pragma once

#include <string>
#include <vector>

#include "rjump/coefficients.hpp"

namespace rjump {

/// Operators of the backward Riccati system, written against a coefficient
/// slice (plain matrices at one evaluation point). The set-level overloads
/// below validate shapes and snapshot the set at t first.
///
/// control_hessian: N + sum_i Di' K Di + sum_e Fe' (K + R(e)) Fe nu_e.
/// This is the quadratic weight the optimal control inverts; Definition of a
/// solution requires it to stay positive definite.
Matrix control_hessian(const CoefficientSlice& s, const Matrix& K, const std::vector<Matrix>& R);

/// control_cross: K B + sum_i Li Di + sum_i Ci' K Di
///                + sum_e [Ee' K Fe + (I + Ee') R(e) Fe] nu_e.
/// The n x m coupling between state and control in the one-step objective;
/// the feedback gain is -hessian^{-1} cross'.
Matrix control_cross(const CoefficientSlice& s, const Matrix& K, const std::vector<Matrix>& L,
                     const std::vector<Matrix>& R);

/// riccati_generator: the drift of the backward Riccati equation,
///   A'K + KA + sum_i (Li Ci + Ci' Li + Ci' K Ci)
///   + sum_e [R(e) Ee + Ee' R(e) + Ee' (K + R(e)) Ee] nu_e
///   + Q - cross hessian^{-1} cross'.
/// Throws NonPositiveControlHessian when the Cholesky factorization of the
/// hessian fails. Result is symmetrized; if asymmetry_out is non-null it
/// receives the relative asymmetry before symmetrization.
Matrix riccati_generator(const CoefficientSlice& s, const Matrix& K, const std::vector<Matrix>& L,
                         const std::vector<Matrix>& R, double* asymmetry_out = nullptr);

/// The one-step objective whose minimizer over u is the optimal control:
/// quadratic Hamiltonian term plus running cost,
///   2<Kx, Ax+Bu> + sum_i [2<Li x, Ci x + Di u> + <K(Ci x + Di u), Ci x + Di u>]
///   + sum_e nu_e [2<R(e) x, Ee x + Fe u> + <(K+R(e))(Ee x + Fe u), Ee x + Fe u>]
///   + <Qx, x> + <Nu, u>.
double control_objective(const CoefficientSlice& s, const Vector& x, const Vector& u,
                         const Matrix& K, const std::vector<Matrix>& L,
                         const std::vector<Matrix>& R);

/// Cholesky factorization of a (symmetrized) control Hessian. Throws
/// NonPositiveControlHessian, tagging the message with `where` (a time or a
/// tree-node address), when the matrix is not positive definite.
Eigen::LLT<Matrix> factor_hessian(const Matrix& hessian, const std::string& where);

struct MinimizerResult {
  Vector u;
  double value = 0.0;
};

/// u* = -hessian^{-1} cross' x and the objective value there. The value is
/// exactly control_objective(s, x, u*, ...); no other control does better.
MinimizerResult pointwise_minimizer(const CoefficientSlice& s, const Vector& x, const Matrix& K,
                                    const std::vector<Matrix>& L, const std::vector<Matrix>& R);

/// <Q(t) x, x> + <N(t) u, u>; nonnegative under the standing assumptions.
double running_cost(const CoefficientSlice& s, const Vector& x, const Vector& u);

/// Set-level overloads: validate dimensions and t in [0, T], snapshot, forward.
Matrix control_hessian(const CoefficientSet& c, double t, const Matrix& K,
                       const std::vector<Matrix>& R);
Matrix control_cross(const CoefficientSet& c, double t, const Matrix& K,
                     const std::vector<Matrix>& L, const std::vector<Matrix>& R);
Matrix riccati_generator(const CoefficientSet& c, double t, const Matrix& K,
                         const std::vector<Matrix>& L, const std::vector<Matrix>& R,
                         double* asymmetry_out = nullptr);
MinimizerResult pointwise_minimizer(const CoefficientSet& c, double t, const Vector& x,
                                    const Matrix& K, const std::vector<Matrix>& L,
                                    const std::vector<Matrix>& R);
double running_cost(const CoefficientSet& c, double t, const Vector& x, const Vector& u);

struct ValidationIssue {
  double t = 0.0;
  std::string symbol;
  std::string message;
};

struct ValidationReport {
  std::vector<ValidationIssue> issues;
  bool ok() const { return issues.empty(); }
  std::string summary() const;
};

/// Samples every coefficient on the grid and reports assumption violations:
/// "Q not PSD", "M not PSD", "N below delta", symmetry failures, entries
/// beyond the uniform bound, non-finite values. Empty report means pass.
ValidationReport validate_assumptions(const CoefficientSet& c, const std::vector<double>& grid);

/// Same, on a uniform grid of the given size over [0, T].
ValidationReport validate_assumptions(const CoefficientSet& c, int grid_points = 41);

}  // namespace rjump
