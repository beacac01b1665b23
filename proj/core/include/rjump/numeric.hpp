#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>

namespace rjump {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Sum with a fixed pairwise reduction order. The result depends only on the
/// contents of the span, never on chunking or worker count, and the error
/// grows like O(log n) rather than O(n).
double pairwise_sum(std::span<const double> values);

struct MeanStdError {
  double mean = 0.0;
  double std_error = 0.0;  // sample standard deviation / sqrt(count)
  std::int64_t count = 0;
};

/// Two-pass mean and standard error, both passes via pairwise_sum.
MeanStdError mean_and_std_error(std::span<const double> values);

inline Matrix symmetrized(const Matrix& x) { return 0.5 * (x + x.transpose()); }

/// Largest absolute asymmetry |X - X'| relative to 1 + |X|, before any
/// symmetrization is applied.
double relative_asymmetry(const Matrix& x);

/// Smallest eigenvalue of a symmetric matrix.
double min_eigenvalue(const Matrix& sym);

/// Shortest decimal form that round-trips the exact double (std::to_chars).
/// Used for every CSV artifact so reruns are byte-identical.
std::string format_double(double v);

/// Strict double parser (std::from_chars); throws std::invalid_argument on
/// trailing garbage or empty input.
double parse_double(std::string_view text);

/// Lower-triangle column-major stacking of a symmetric n x n matrix:
/// (0,0),(1,0),...,(n-1,0),(1,1),... Length n(n+1)/2.
std::vector<double> vech(const Matrix& sym);

/// Inverse of vech; dimension recovered from the packed length.
Matrix unvech(std::span<const double> packed);

}  // namespace rjump
