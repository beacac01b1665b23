#include "rjump/mark_measure.hpp"

#include <cmath>
#include <unordered_set>

#include "rjump/errors.hpp"
#include "rjump/numeric.hpp"

namespace rjump {

MarkMeasure::MarkMeasure(std::vector<std::string> marks, std::vector<double> weights)
    : marks_(std::move(marks)), weights_(std::move(weights)) {
  if (marks_.size() != weights_.size())
    throw DimensionError("mark measure: " + std::to_string(marks_.size()) + " marks but " +
                         std::to_string(weights_.size()) + " weights");
  total_ = pairwise_sum(weights_);
  validate();
}

std::size_t MarkMeasure::index_of(const std::string& id) const {
  for (std::size_t k = 0; k < marks_.size(); ++k)
    if (marks_[k] == id) return k;
  return npos;
}

void MarkMeasure::validate() const {
  std::unordered_set<std::string> seen;
  for (std::size_t k = 0; k < marks_.size(); ++k) {
    if (!(weights_[k] > 0.0) || !std::isfinite(weights_[k]))
      throw CoefficientError("mark " + marks_[k] + ": weight must be positive and finite, got " +
                             format_double(weights_[k]));
    if (!seen.insert(marks_[k]).second)
      throw CoefficientError("mark " + marks_[k] + ": duplicate mark identifier");
  }
  const double sum = pairwise_sum(weights_);
  // 1 ulp-scale slack: the stored total must be the sum up to accumulated round-off.
  const double tol = 8.0 * std::numeric_limits<double>::epsilon() * (1.0 + std::abs(sum));
  if (std::abs(total_ - sum) > tol)
    throw CoefficientError("mark measure: stored total " + format_double(total_) +
                           " differs from weight sum " + format_double(sum));
}

}  // namespace rjump
