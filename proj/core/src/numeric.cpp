#include "rjump/numeric.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <stdexcept>
#include <system_error>

namespace rjump {

double pairwise_sum(std::span<const double> values) {
  if (values.size() <= 8) {
    double acc = 0.0;
    for (double v : values) acc += v;
    return acc;
  }
  const std::size_t half = values.size() / 2;
  return pairwise_sum(values.first(half)) + pairwise_sum(values.subspan(half));
}

MeanStdError mean_and_std_error(std::span<const double> values) {
  MeanStdError out;
  out.count = static_cast<std::int64_t>(values.size());
  if (values.empty()) return out;
  out.mean = pairwise_sum(values) / static_cast<double>(values.size());
  if (values.size() < 2) return out;
  std::vector<double> sq(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double dev = values[i] - out.mean;
    sq[i] = dev * dev;
  }
  const double var = pairwise_sum(sq) / static_cast<double>(values.size() - 1);
  out.std_error = std::sqrt(var / static_cast<double>(values.size()));
  return out;
}

double relative_asymmetry(const Matrix& x) {
  const double denom = 1.0 + x.cwiseAbs().maxCoeff();
  return (x - x.transpose()).cwiseAbs().maxCoeff() / denom;
}

double min_eigenvalue(const Matrix& sym) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(symmetrized(sym), Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

std::string format_double(double v) {
  char buf[40];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

double parse_double(std::string_view text) {
  // Trim surrounding whitespace; from_chars itself is strict.
  std::size_t b = text.find_first_not_of(" \t");
  std::size_t e = text.find_last_not_of(" \t");
  if (b == std::string_view::npos) throw std::invalid_argument("empty numeric field");
  text = text.substr(b, e - b + 1);
  double value = 0.0;
  auto res = std::from_chars(text.data(), text.data() + text.size(), value);
  if (res.ec != std::errc() || res.ptr != text.data() + text.size())
    throw std::invalid_argument("bad numeric field '" + std::string(text) + "'");
  return value;
}

std::vector<double> vech(const Matrix& sym) {
  const Eigen::Index n = sym.rows();
  std::vector<double> packed;
  packed.reserve(static_cast<std::size_t>(n * (n + 1) / 2));
  for (Eigen::Index j = 0; j < n; ++j)
    for (Eigen::Index i = j; i < n; ++i) packed.push_back(sym(i, j));
  return packed;
}

Matrix unvech(std::span<const double> packed) {
  // Solve k(k+1)/2 = len for k.
  const auto len = static_cast<Eigen::Index>(packed.size());
  Eigen::Index n = static_cast<Eigen::Index>((std::sqrt(8.0 * static_cast<double>(len) + 1.0) - 1.0) / 2.0 + 0.5);
  if (n * (n + 1) / 2 != len) throw std::invalid_argument("packed length is not triangular");
  Matrix out(n, n);
  std::size_t k = 0;
  for (Eigen::Index j = 0; j < n; ++j)
    for (Eigen::Index i = j; i < n; ++i) {
      out(i, j) = packed[k];
      out(j, i) = packed[k];
      ++k;
    }
  return out;
}

}  // namespace rjump
