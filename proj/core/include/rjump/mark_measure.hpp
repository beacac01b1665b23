#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace rjump {

/// Finite jump mark space with strictly positive weights nu({e}). The empty
/// measure (no marks) models a pure-diffusion problem; every integral against
/// nu is then an empty sum.
class MarkMeasure {
 public:
  MarkMeasure() = default;
  MarkMeasure(std::vector<std::string> marks, std::vector<double> weights);

  std::size_t size() const { return marks_.size(); }
  bool empty() const { return marks_.empty(); }
  const std::string& mark(std::size_t k) const { return marks_[k]; }
  double weight(std::size_t k) const { return weights_[k]; }
  const std::vector<double>& weights() const { return weights_; }
  const std::vector<std::string>& marks() const { return marks_; }

  /// nu(Lambda), stored at construction.
  double total() const { return total_; }

  /// Index of a mark id, or npos.
  std::size_t index_of(const std::string& id) const;
  static constexpr std::size_t npos = static_cast<std::size_t>(-1);

  /// Re-checks: positive weights, distinct marks, stored total consistent
  /// with the sum. Throws CoefficientError naming the offending mark.
  void validate() const;

  bool operator==(const MarkMeasure&) const = default;

 private:
  std::vector<std::string> marks_;
  std::vector<double> weights_;
  double total_ = 0.0;
};

}  // namespace rjump
