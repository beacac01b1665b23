#include "rjump/coefficients.hpp"

#include <cmath>
#include <utility>

#include "rjump/errors.hpp"

namespace rjump {

int PathFunctional::step_variant(int parent_variant, int step_index,
                                 const LatticeOutcome& outcome) const {
  switch (kind) {
    case PathSwitchKind::SignOfFirstBrownianStep:
      if (step_index == 0) return (outcome.sign_mask & 1u) ? 0 : 1;
      return parent_variant;
    case PathSwitchKind::AfterFirstJump:
      return (parent_variant == 1 || outcome.jump >= 0) ? 1 : 0;
  }
  return parent_variant;
}

const char* to_string(PathSwitchKind kind) {
  switch (kind) {
    case PathSwitchKind::SignOfFirstBrownianStep:
      return "sign-of-first-brownian-step";
    case PathSwitchKind::AfterFirstJump:
      return "after-first-jump";
  }
  return "?";
}

std::optional<PathSwitchKind> path_switch_from_string(const std::string& name) {
  if (name == "sign-of-first-brownian-step") return PathSwitchKind::SignOfFirstBrownianStep;
  if (name == "after-first-jump") return PathSwitchKind::AfterFirstJump;
  return std::nullopt;
}

Coefficient Coefficient::constant(Matrix value) {
  Coefficient c;
  c.time_map_ = [v = std::move(value)](double) { return v; };
  return c;
}

Coefficient Coefficient::polynomial(std::vector<Matrix> powers) {
  if (powers.empty()) throw CoefficientError("polynomial coefficient needs at least one term");
  Coefficient c;
  c.time_map_ = [p = std::move(powers)](double t) {
    Matrix acc = p.back();
    for (auto it = p.rbegin() + 1; it != p.rend(); ++it) acc = *it + t * acc;  // Horner
    return acc;
  };
  return c;
}

Coefficient Coefficient::map(TimeMap fn) {
  Coefficient c;
  c.time_map_ = std::move(fn);
  return c;
}

Coefficient Coefficient::path_switch(PathSwitchKind kind, Matrix primary, Matrix secondary) {
  if (primary.rows() != secondary.rows() || primary.cols() != secondary.cols())
    throw DimensionError("path functional: primary and secondary shapes differ");
  Coefficient c;
  c.path_ = PathFunctional{kind, std::move(primary), std::move(secondary)};
  return c;
}

Matrix Coefficient::at(double t) const {
  if (path_.has_value())
    throw CoefficientError("path-dependent coefficient used where a deterministic value is required");
  if (!time_map_) throw CoefficientError("coefficient has no value set");
  return time_map_(t);
}

Matrix Coefficient::at(double t, int variant) const {
  if (path_.has_value()) return path_->value(variant);
  if (!time_map_) throw CoefficientError("coefficient has no value set");
  return time_map_(t);
}

double CoefficientSlice::nu_total() const {
  double acc = 0.0;
  for (double w : nu) acc += w;
  return acc;
}

bool CoefficientSet::path_dependent() const { return !path_dependent_symbols().empty(); }

std::vector<std::string> CoefficientSet::path_dependent_symbols() const {
  std::vector<std::string> out;
  auto probe = [&out](const Coefficient& c, const std::string& name) {
    if (c.valid() && c.path_dependent()) out.push_back(name);
  };
  probe(A, "A");
  probe(B, "B");
  probe(Q, "Q");
  probe(N, "N");
  for (std::size_t i = 0; i < C.size(); ++i) probe(C[i], "C[" + std::to_string(i + 1) + "]");
  for (std::size_t i = 0; i < D.size(); ++i) probe(D[i], "D[" + std::to_string(i + 1) + "]");
  for (std::size_t k = 0; k < E.size(); ++k) probe(E[k], "E[" + marks.mark(k) + "]");
  for (std::size_t k = 0; k < F.size(); ++k) probe(F[k], "F[" + marks.mark(k) + "]");
  return out;
}

namespace {

Matrix checked(Matrix value, int rows, int cols, const std::string& symbol) {
  if (value.rows() != rows || value.cols() != cols)
    throw DimensionError(symbol + ": expected " + std::to_string(rows) + "x" + std::to_string(cols) +
                         ", got " + std::to_string(value.rows()) + "x" + std::to_string(value.cols()));
  if (!value.allFinite()) throw CoefficientError(symbol + ": non-finite entries");
  return value;
}

}  // namespace

CoefficientSlice CoefficientSet::slice(double t) const {
  if (path_dependent()) {
    check_shape();
    auto symbols = path_dependent_symbols();
    throw CoefficientError("coefficient set has path-dependent entries (first: " + symbols.front() +
                           "); only the lattice accepts path functionals");
  }
  return slice(t, 0, 0);
}

CoefficientSlice CoefficientSet::slice(double t, int sign_variant, int jump_variant) const {
  check_shape();
  auto value = [&](const Coefficient& c) {
    if (!c.path_dependent()) return c.at(t);
    const int v = c.path().kind == PathSwitchKind::SignOfFirstBrownianStep ? sign_variant
                                                                           : jump_variant;
    return c.at(t, v);
  };
  CoefficientSlice s;
  s.n = n;
  s.m = m;
  s.d = d;
  s.A = checked(value(A), n, n, "A");
  s.B = checked(value(B), n, m, "B");
  s.Q = checked(value(Q), n, n, "Q");
  s.N = checked(value(N), m, m, "N");
  s.C.reserve(C.size());
  s.D.reserve(D.size());
  for (std::size_t i = 0; i < C.size(); ++i)
    s.C.push_back(checked(value(C[i]), n, n, "C[" + std::to_string(i + 1) + "]"));
  for (std::size_t i = 0; i < D.size(); ++i)
    s.D.push_back(checked(value(D[i]), n, m, "D[" + std::to_string(i + 1) + "]"));
  s.E.reserve(E.size());
  s.F.reserve(F.size());
  for (std::size_t k = 0; k < E.size(); ++k)
    s.E.push_back(checked(value(E[k]), n, n, "E[" + marks.mark(k) + "]"));
  for (std::size_t k = 0; k < F.size(); ++k)
    s.F.push_back(checked(value(F[k]), n, m, "F[" + marks.mark(k) + "]"));
  s.nu = marks.weights();
  return s;
}

void CoefficientSet::check_shape() const {
  if (n <= 0 || m <= 0 || d < 0)
    throw DimensionError("dimensions: need n >= 1, m >= 1, d >= 0, got n=" + std::to_string(n) +
                         " m=" + std::to_string(m) + " d=" + std::to_string(d));
  if (!(horizon > 0.0)) throw CoefficientError("horizon: T must be positive");
  if (!(delta > 0.0)) throw CoefficientError("delta: must be positive");
  auto need = [](const Coefficient& c, const std::string& symbol) {
    if (!c.valid()) throw CoefficientError(symbol + ": coefficient not set");
  };
  need(A, "A");
  need(B, "B");
  need(Q, "Q");
  need(N, "N");
  if (static_cast<int>(C.size()) != d || static_cast<int>(D.size()) != d)
    throw DimensionError("C/D: expected " + std::to_string(d) + " Brownian entries, got C=" +
                         std::to_string(C.size()) + " D=" + std::to_string(D.size()));
  for (std::size_t i = 0; i < C.size(); ++i) need(C[i], "C[" + std::to_string(i + 1) + "]");
  for (std::size_t i = 0; i < D.size(); ++i) need(D[i], "D[" + std::to_string(i + 1) + "]");
  if (E.size() != marks.size() || F.size() != marks.size())
    throw DimensionError("E/F: expected one entry per mark (" + std::to_string(marks.size()) +
                         "), got E=" + std::to_string(E.size()) + " F=" + std::to_string(F.size()));
  for (std::size_t k = 0; k < E.size(); ++k) need(E[k], "E[" + marks.mark(k) + "]");
  for (std::size_t k = 0; k < F.size(); ++k) need(F[k], "F[" + marks.mark(k) + "]");
  if (M.rows() != n || M.cols() != n)
    throw DimensionError("M: expected " + std::to_string(n) + "x" + std::to_string(n) + ", got " +
                         std::to_string(M.rows()) + "x" + std::to_string(M.cols()));
  marks.validate();
}

void TriplePoint::validate(int n, int d, std::size_t num_marks, double sym_tol) const {
  auto check = [&](const Matrix& x, const std::string& name) {
    if (x.rows() != n || x.cols() != n)
      throw DimensionError(name + ": expected " + std::to_string(n) + "x" + std::to_string(n));
    if (relative_asymmetry(x) > sym_tol)
      throw DimensionError(name + ": asymmetry " + format_double(relative_asymmetry(x)) +
                           " exceeds tolerance " + format_double(sym_tol));
  };
  check(K, "K");
  if (static_cast<int>(L.size()) != d)
    throw DimensionError("L: expected " + std::to_string(d) + " entries");
  if (R.size() != num_marks) throw DimensionError("R: expected one entry per mark");
  for (std::size_t i = 0; i < L.size(); ++i) check(L[i], "L[" + std::to_string(i + 1) + "]");
  for (std::size_t k = 0; k < R.size(); ++k) check(R[k], "R[" + std::to_string(k) + "]");
}

}  // namespace rjump
