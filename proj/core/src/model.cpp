#include "rjump/model.hpp"

#include <Eigen/Cholesky>
#include <cmath>

#include "rjump/errors.hpp"

namespace rjump {

namespace {

void check_triple_shapes(const CoefficientSlice& s, const Matrix& K, const std::vector<Matrix>* L,
                         const std::vector<Matrix>& R) {
  if (K.rows() != s.n || K.cols() != s.n)
    throw DimensionError("K: expected " + std::to_string(s.n) + "x" + std::to_string(s.n) +
                         ", got " + std::to_string(K.rows()) + "x" + std::to_string(K.cols()));
  if (L && static_cast<int>(L->size()) != s.d)
    throw DimensionError("L: expected " + std::to_string(s.d) + " entries, got " +
                         std::to_string(L->size()));
  if (L)
    for (const Matrix& Li : *L)
      if (Li.rows() != s.n || Li.cols() != s.n) throw DimensionError("L: entries must be n x n");
  if (static_cast<int>(R.size()) != s.num_marks())
    throw DimensionError("R: expected " + std::to_string(s.num_marks()) + " entries, got " +
                         std::to_string(R.size()));
  for (const Matrix& Re : R)
    if (Re.rows() != s.n || Re.cols() != s.n) throw DimensionError("R: entries must be n x n");
}

}  // namespace

Eigen::LLT<Matrix> factor_hessian(const Matrix& hessian, const std::string& where) {
  Eigen::LLT<Matrix> llt(symmetrized(hessian));
  if (llt.info() != Eigen::Success)
    throw NonPositiveControlHessian("control Hessian is not positive definite" +
                                    (where.empty() ? "" : " at " + where));
  return llt;
}

Matrix control_hessian(const CoefficientSlice& s, const Matrix& K, const std::vector<Matrix>& R) {
  check_triple_shapes(s, K, nullptr, R);
  Matrix H = s.N;
  for (int i = 0; i < s.d; ++i) H.noalias() += s.D[i].transpose() * K * s.D[i];
  for (int e = 0; e < s.num_marks(); ++e)
    H.noalias() += s.nu[e] * (s.F[e].transpose() * (K + R[e]) * s.F[e]);
  return symmetrized(H);
}

Matrix control_cross(const CoefficientSlice& s, const Matrix& K, const std::vector<Matrix>& L,
                     const std::vector<Matrix>& R) {
  check_triple_shapes(s, K, &L, R);
  Matrix Mx = K * s.B;
  for (int i = 0; i < s.d; ++i) {
    Mx.noalias() += L[i] * s.D[i];
    Mx.noalias() += s.C[i].transpose() * K * s.D[i];
  }
  const Matrix I = Matrix::Identity(s.n, s.n);
  for (int e = 0; e < s.num_marks(); ++e) {
    Mx.noalias() += s.nu[e] * (s.E[e].transpose() * K * s.F[e]);
    Mx.noalias() += s.nu[e] * ((I + s.E[e].transpose()) * R[e] * s.F[e]);
  }
  return Mx;
}

Matrix riccati_generator(const CoefficientSlice& s, const Matrix& K, const std::vector<Matrix>& L,
                         const std::vector<Matrix>& R, double* asymmetry_out) {
  check_triple_shapes(s, K, &L, R);
  Matrix G = s.A.transpose() * K + K * s.A + s.Q;
  for (int i = 0; i < s.d; ++i) {
    G.noalias() += L[i] * s.C[i];
    G.noalias() += s.C[i].transpose() * L[i];
    G.noalias() += s.C[i].transpose() * K * s.C[i];
  }
  for (int e = 0; e < s.num_marks(); ++e) {
    G.noalias() += s.nu[e] * (R[e] * s.E[e]);
    G.noalias() += s.nu[e] * (s.E[e].transpose() * R[e]);
    G.noalias() += s.nu[e] * (s.E[e].transpose() * (K + R[e]) * s.E[e]);
  }
  const Matrix cross = control_cross(s, K, L, R);
  const auto llt = factor_hessian(control_hessian(s, K, R), "");
  G.noalias() -= cross * llt.solve(cross.transpose());
  if (asymmetry_out) *asymmetry_out = relative_asymmetry(G);
  return symmetrized(G);
}

double control_objective(const CoefficientSlice& s, const Vector& x, const Vector& u,
                         const Matrix& K, const std::vector<Matrix>& L,
                         const std::vector<Matrix>& R) {
  check_triple_shapes(s, K, &L, R);
  if (x.size() != s.n) throw DimensionError("x: expected length " + std::to_string(s.n));
  if (u.size() != s.m) throw DimensionError("u: expected length " + std::to_string(s.m));
  double value = 2.0 * (K * x).dot(s.A * x + s.B * u);
  for (int i = 0; i < s.d; ++i) {
    const Vector diff = s.C[i] * x + s.D[i] * u;
    value += 2.0 * (L[i] * x).dot(diff) + diff.dot(K * diff);
  }
  for (int e = 0; e < s.num_marks(); ++e) {
    const Vector jump = s.E[e] * x + s.F[e] * u;
    value += s.nu[e] * (2.0 * (R[e] * x).dot(jump) + jump.dot((K + R[e]) * jump));
  }
  return value + running_cost(s, x, u);
}

MinimizerResult pointwise_minimizer(const CoefficientSlice& s, const Vector& x, const Matrix& K,
                                    const std::vector<Matrix>& L, const std::vector<Matrix>& R) {
  check_triple_shapes(s, K, &L, R);
  if (x.size() != s.n) throw DimensionError("x: expected length " + std::to_string(s.n));
  const auto llt = factor_hessian(control_hessian(s, K, R), "");
  const Matrix cross = control_cross(s, K, L, R);
  MinimizerResult out;
  out.u = -llt.solve(cross.transpose() * x);
  out.value = control_objective(s, x, out.u, K, L, R);
  return out;
}

double running_cost(const CoefficientSlice& s, const Vector& x, const Vector& u) {
  if (x.size() != s.n) throw DimensionError("x: expected length " + std::to_string(s.n));
  if (u.size() != s.m) throw DimensionError("u: expected length " + std::to_string(s.m));
  return x.dot(s.Q * x) + u.dot(s.N * u);
}

namespace {

double checked_time(const CoefficientSet& c, double t) {
  if (t < 0.0 || t > c.horizon)
    throw CoefficientError("t=" + format_double(t) + " outside [0, " + format_double(c.horizon) + "]");
  return t;
}

}  // namespace

Matrix control_hessian(const CoefficientSet& c, double t, const Matrix& K,
                       const std::vector<Matrix>& R) {
  return control_hessian(c.slice(checked_time(c, t)), K, R);
}

Matrix control_cross(const CoefficientSet& c, double t, const Matrix& K,
                     const std::vector<Matrix>& L, const std::vector<Matrix>& R) {
  return control_cross(c.slice(checked_time(c, t)), K, L, R);
}

Matrix riccati_generator(const CoefficientSet& c, double t, const Matrix& K,
                         const std::vector<Matrix>& L, const std::vector<Matrix>& R,
                         double* asymmetry_out) {
  return riccati_generator(c.slice(checked_time(c, t)), K, L, R, asymmetry_out);
}

MinimizerResult pointwise_minimizer(const CoefficientSet& c, double t, const Vector& x,
                                    const Matrix& K, const std::vector<Matrix>& L,
                                    const std::vector<Matrix>& R) {
  return pointwise_minimizer(c.slice(checked_time(c, t)), x, K, L, R);
}

double running_cost(const CoefficientSet& c, double t, const Vector& x, const Vector& u) {
  return running_cost(c.slice(checked_time(c, t)), x, u);
}

std::string ValidationReport::summary() const {
  if (issues.empty()) return "pass";
  std::string out;
  for (const auto& issue : issues) {
    if (!out.empty()) out += "; ";
    out += issue.symbol + " at t=" + format_double(issue.t) + ": " + issue.message;
  }
  return out;
}

ValidationReport validate_assumptions(const CoefficientSet& c, const std::vector<double>& grid) {
  ValidationReport report;
  auto add = [&report](double t, const std::string& symbol, const std::string& message) {
    report.issues.push_back({t, symbol, message});
  };
  try {
    c.check_shape();
  } catch (const std::exception& ex) {
    add(0.0, "shape", ex.what());
    return report;
  }

  const double psd_floor = -1e-9 * (1.0 + c.M.cwiseAbs().maxCoeff());
  if (relative_asymmetry(c.M) > 1e-10)
    add(0.0, "M", "not symmetric");
  else if (min_eigenvalue(c.M) < psd_floor)
    add(0.0, "M", "M not PSD");

  for (double t : grid) {
    CoefficientSlice s;
    try {
      s = c.slice(t);
    } catch (const std::exception& ex) {
      add(t, "slice", ex.what());
      continue;
    }
    auto check_bound = [&](const Matrix& x, const std::string& symbol) {
      if (!x.allFinite()) {
        add(t, symbol, "non-finite entries");
        return;
      }
      const double mx = x.size() ? x.cwiseAbs().maxCoeff() : 0.0;
      if (mx > c.bound)
        add(t, symbol, "entry magnitude " + format_double(mx) + " exceeds bound " +
                           format_double(c.bound));
    };
    check_bound(s.A, "A");
    check_bound(s.B, "B");
    check_bound(s.Q, "Q");
    check_bound(s.N, "N");
    for (int i = 0; i < s.d; ++i) {
      check_bound(s.C[i], "C[" + std::to_string(i + 1) + "]");
      check_bound(s.D[i], "D[" + std::to_string(i + 1) + "]");
    }
    for (int e = 0; e < s.num_marks(); ++e) {
      check_bound(s.E[e], "E[" + c.marks.mark(e) + "]");
      check_bound(s.F[e], "F[" + c.marks.mark(e) + "]");
    }
    if (relative_asymmetry(s.Q) > 1e-10)
      add(t, "Q", "not symmetric");
    else if (min_eigenvalue(s.Q) < -1e-9 * (1.0 + s.Q.cwiseAbs().maxCoeff()))
      add(t, "Q", "Q not PSD");
    if (relative_asymmetry(s.N) > 1e-10)
      add(t, "N", "not symmetric");
    else if (min_eigenvalue(s.N) < c.delta - 1e-12 * (1.0 + c.delta))
      add(t, "N", "N below delta");
  }
  return report;
}

ValidationReport validate_assumptions(const CoefficientSet& c, int grid_points) {
  std::vector<double> grid;
  const int count = grid_points < 2 ? 2 : grid_points;
  grid.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i)
    grid.push_back(c.horizon * static_cast<double>(i) / static_cast<double>(count - 1));
  return validate_assumptions(c, grid);
}

}  // namespace rjump
