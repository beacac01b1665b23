#include "rjump/riccati.hpp"

#include <cmath>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include "rjump/errors.hpp"
#include "rjump/model.hpp"

namespace rjump {

namespace {

// Drift of the backward solve: f(t, K) = -G(t, K, 0, 0).
Matrix backward_drift(const CoefficientSet& coeffs, double t, const Matrix& K,
                      const std::vector<Matrix>& empty_L, const std::vector<Matrix>& empty_R) {
  return -riccati_generator(coeffs.slice(t), K, empty_L, empty_R);
}

Matrix rk4_step(const CoefficientSet& coeffs, double t, const Matrix& K, double h,
                const std::vector<Matrix>& eL, const std::vector<Matrix>& eR) {
  const Matrix k1 = backward_drift(coeffs, t, K, eL, eR);
  const Matrix k2 = backward_drift(coeffs, t + 0.5 * h, symmetrized(K + 0.5 * h * k1), eL, eR);
  const Matrix k3 = backward_drift(coeffs, t + 0.5 * h, symmetrized(K + 0.5 * h * k2), eL, eR);
  const Matrix k4 = backward_drift(coeffs, t + h, symmetrized(K + h * k3), eL, eR);
  return symmetrized(K + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4));
}

}  // namespace

RiccatiGrid solve_riccati_ide(const CoefficientSet& coeffs, int nt) {
  coeffs.check_shape();
  if (nt < 1) throw CoefficientError("solve_riccati_ide: Nt must be >= 1");
  if (coeffs.path_dependent())
    throw CoefficientError("solve_riccati_ide: path-dependent coefficients (first: " +
                           coeffs.path_dependent_symbols().front() +
                           "); the deterministic solver requires time maps");
  const auto report = validate_assumptions(coeffs);
  if (!report.ok())
    throw CoefficientError("solve_riccati_ide: assumptions fail: " + report.summary());

  const double T = coeffs.horizon;
  const double h = -T / static_cast<double>(nt);  // backward step
  const std::vector<Matrix> eL(static_cast<std::size_t>(coeffs.d),
                               Matrix::Zero(coeffs.n, coeffs.n));
  const std::vector<Matrix> eR(coeffs.marks.size(), Matrix::Zero(coeffs.n, coeffs.n));

  RiccatiGrid grid;
  grid.times.resize(static_cast<std::size_t>(nt) + 1);
  grid.K.resize(static_cast<std::size_t>(nt) + 1);
  grid.min_hessian_eig.resize(static_cast<std::size_t>(nt) + 1);
  for (int i = 0; i <= nt; ++i)
    grid.times[static_cast<std::size_t>(i)] = T * static_cast<double>(i) / static_cast<double>(nt);
  grid.K.back() = symmetrized(coeffs.M);

  for (int i = nt; i-- > 0;) {
    const double t = grid.times[static_cast<std::size_t>(i) + 1];
    const Matrix& K = grid.K[static_cast<std::size_t>(i) + 1];
    Matrix next = rk4_step(coeffs, t, K, h, eL, eR);
    if (!next.allFinite())
      throw NonFiniteState("solve_riccati_ide: non-finite K at t=" +
                           format_double(grid.times[static_cast<std::size_t>(i)]));
    // Richardson diagnostic: full step vs two half steps, every few nodes.
    if (i % 16 == 0) {
      const Matrix half = rk4_step(coeffs, t + 0.5 * h, rk4_step(coeffs, t, K, 0.5 * h, eL, eR),
                                   0.5 * h, eL, eR);
      const double est = (next - half).cwiseAbs().maxCoeff() / 15.0;
      if (est > grid.stats.max_local_error) grid.stats.max_local_error = est;
    }
    grid.K[static_cast<std::size_t>(i)] = std::move(next);
    ++grid.stats.accepted;
  }

  for (std::size_t i = 0; i < grid.K.size(); ++i) {
    const Matrix& K = grid.K[i];
    const double floor = -1e-9 * (1.0 + K.cwiseAbs().maxCoeff());
    const double lam = min_eigenvalue(K);
    if (lam < floor)
      throw SolverFailure("solve_riccati_ide: K not PSD at t=" + format_double(grid.times[i]) +
                          " (min eigenvalue " + format_double(lam) + ", floor " +
                          format_double(floor) + ")");
    const std::vector<Matrix> zeroR(coeffs.marks.size(), Matrix::Zero(coeffs.n, coeffs.n));
    grid.min_hessian_eig[i] =
        min_eigenvalue(control_hessian(coeffs.slice(grid.times[i]), K, zeroR));
    if (grid.min_hessian_eig[i] < 0.5 * coeffs.delta)
      grid.warnings.push_back("control Hessian eigenvalue " +
                              format_double(grid.min_hessian_eig[i]) + " below delta/2 at t=" +
                              format_double(grid.times[i]));
  }
  return grid;
}

double riccati_residual(const RiccatiGrid& grid, const CoefficientSet& coeffs) {
  const int nt = grid.steps();
  if (nt < 1) throw CoefficientError("riccati_residual: grid has no steps");
  const std::vector<Matrix> eL(static_cast<std::size_t>(coeffs.d),
                               Matrix::Zero(coeffs.n, coeffs.n));
  const std::vector<Matrix> eR(coeffs.marks.size(), Matrix::Zero(coeffs.n, coeffs.n));
  std::vector<Matrix> g(static_cast<std::size_t>(nt) + 1);
  for (int i = 0; i <= nt; ++i)
    g[static_cast<std::size_t>(i)] =
        riccati_generator(coeffs.slice(grid.times[static_cast<std::size_t>(i)]),
                          grid.K[static_cast<std::size_t>(i)], eL, eR);

  // Per-interval integrals of the cubic through four neighbouring nodes
  // (uniform grid): interior weights (-1, 13, 13, -1)/24, one-sided stencils
  // at the ends. Local error O(h^5), so the cumulative integral keeps the
  // integrator's fourth order. Falls back to trapezoid when nt < 3.
  const double h = grid.times[1] - grid.times[0];
  std::vector<Matrix> interval(static_cast<std::size_t>(nt));
  if (nt < 3) {
    for (int j = 0; j < nt; ++j)
      interval[static_cast<std::size_t>(j)] =
          0.5 * h * (g[static_cast<std::size_t>(j)] + g[static_cast<std::size_t>(j) + 1]);
  } else {
    for (int j = 0; j < nt; ++j) {
      const auto ju = static_cast<std::size_t>(j);
      if (j == 0)
        interval[ju] = (h / 24.0) * (9.0 * g[0] + 19.0 * g[1] - 5.0 * g[2] + g[3]);
      else if (j == nt - 1)
        interval[ju] = (h / 24.0) * (g[ju - 2] - 5.0 * g[ju - 1] + 19.0 * g[ju] + 9.0 * g[ju + 1]);
      else
        interval[ju] = (h / 24.0) * (-g[ju - 1] + 13.0 * g[ju] + 13.0 * g[ju + 1] - g[ju + 2]);
    }
  }

  double max_residual = 0.0;
  Matrix tail = Matrix::Zero(grid.K[0].rows(), grid.K[0].cols());
  // Walk backwards accumulating integral_{t_i}^{T} G ds.
  for (int i = nt; i >= 0; --i) {
    if (i < nt) tail += interval[static_cast<std::size_t>(i)];
    const Matrix defect = grid.K[static_cast<std::size_t>(i)] - grid.K.back() - tail;
    max_residual = std::max(max_residual, defect.norm());
  }
  return max_residual;
}

namespace {

// Fritsch-Carlson slopes for one scalar channel on a shared grid.
std::vector<double> monotone_slopes(const std::vector<double>& t, const std::vector<double>& y) {
  const std::size_t n = t.size();
  std::vector<double> slope(n, 0.0);
  if (n == 1) return slope;
  std::vector<double> h(n - 1), sec(n - 1);
  for (std::size_t i = 0; i + 1 < n; ++i) {
    h[i] = t[i + 1] - t[i];
    sec[i] = (y[i + 1] - y[i]) / h[i];
  }
  if (n == 2) {
    slope[0] = slope[1] = sec[0];
    return slope;
  }
  for (std::size_t i = 1; i + 1 < n; ++i) {
    if (sec[i - 1] == 0.0 || sec[i] == 0.0 || (sec[i - 1] > 0.0) != (sec[i] > 0.0)) {
      slope[i] = 0.0;
    } else {
      const double w1 = 2.0 * h[i] + h[i - 1];
      const double w2 = h[i] + 2.0 * h[i - 1];
      slope[i] = (w1 + w2) / (w1 / sec[i - 1] + w2 / sec[i]);
    }
  }
  auto endpoint = [](double h0, double h1, double s0, double s1) {
    double m = ((2.0 * h0 + h1) * s0 - h0 * s1) / (h0 + h1);
    if (m * s0 <= 0.0)
      m = 0.0;
    else if (s0 * s1 <= 0.0 && std::abs(m) > 3.0 * std::abs(s0))
      m = 3.0 * s0;
    return m;
  };
  slope[0] = endpoint(h[0], h[1], sec[0], sec[1]);
  slope[n - 1] = endpoint(h[n - 2], h[n - 3], sec[n - 2], sec[n - 3]);
  return slope;
}

}  // namespace

KInterpolant::KInterpolant(const RiccatiGrid& grid) : times_(grid.times), values_(grid.K) {
  if (times_.size() < 2) throw CoefficientError("KInterpolant: need at least two nodes");
  const Eigen::Index n = values_.front().rows();
  slopes_.assign(times_.size(), Matrix::Zero(n, n));
  std::vector<double> channel(times_.size());
  for (Eigen::Index r = 0; r < n; ++r)
    for (Eigen::Index c = 0; c <= r; ++c) {
      for (std::size_t i = 0; i < times_.size(); ++i) channel[i] = values_[i](r, c);
      const auto ms = monotone_slopes(times_, channel);
      for (std::size_t i = 0; i < times_.size(); ++i) {
        slopes_[i](r, c) = ms[i];
        slopes_[i](c, r) = ms[i];
      }
    }
}

Matrix KInterpolant::operator()(double t) const {
  if (t < times_.front() || t > times_.back())
    throw std::out_of_range("interpolate_K: t=" + format_double(t) + " outside [" +
                            format_double(times_.front()) + ", " + format_double(times_.back()) +
                            "]");
  // Locate the interval; exact node hits return the stored value.
  const auto it = std::lower_bound(times_.begin(), times_.end(), t);
  if (it != times_.end() && *it == t)
    return values_[static_cast<std::size_t>(it - times_.begin())];
  const std::size_t j = static_cast<std::size_t>(it - times_.begin()) - 1;
  const double h = times_[j + 1] - times_[j];
  const double s = (t - times_[j]) / h;
  const double h00 = (1.0 + 2.0 * s) * (1.0 - s) * (1.0 - s);
  const double h10 = s * (1.0 - s) * (1.0 - s);
  const double h01 = s * s * (3.0 - 2.0 * s);
  const double h11 = s * s * (s - 1.0);
  return symmetrized(h00 * values_[j] + h * h10 * slopes_[j] + h01 * values_[j + 1] +
                     h * h11 * slopes_[j + 1]);
}

Matrix interpolate_K(const RiccatiGrid& grid, double t) { return KInterpolant(grid)(t); }

void write_grid_csv(const RiccatiGrid& grid, std::ostream& out) {
  const Eigen::Index n = grid.K.empty() ? 0 : grid.K.front().rows();
  out << "t";
  for (Eigen::Index j = 0; j < n; ++j)
    for (Eigen::Index i = j; i < n; ++i) out << ",K_" << i << "_" << j;
  out << ",min_hessian_eig\n";
  for (std::size_t row = 0; row < grid.times.size(); ++row) {
    out << format_double(grid.times[row]);
    for (double v : vech(grid.K[row])) out << "," << format_double(v);
    out << "," << format_double(grid.min_hessian_eig[row]) << "\n";
  }
}

RiccatiGrid read_grid_csv(std::istream& in) {
  RiccatiGrid grid;
  std::string line;
  if (!std::getline(in, line)) throw CoefficientError("grid csv: missing header");
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<double> fields;
    std::size_t start = 0;
    while (start <= line.size()) {
      const std::size_t comma = line.find(',', start);
      const std::string_view piece(line.data() + start,
                                   (comma == std::string::npos ? line.size() : comma) - start);
      fields.push_back(parse_double(piece));
      if (comma == std::string::npos) break;
      start = comma + 1;
    }
    if (fields.size() < 3) throw CoefficientError("grid csv: short row");
    grid.times.push_back(fields.front());
    grid.min_hessian_eig.push_back(fields.back());
    grid.K.push_back(unvech(std::span<const double>(fields).subspan(1, fields.size() - 2)));
  }
  grid.stats.accepted = grid.steps();
  return grid;
}

}  // namespace rjump
