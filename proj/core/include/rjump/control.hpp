#pragma once

#include <memory>
#include <string>
#include <vector>

#include "rjump/coefficients.hpp"
#include "rjump/numeric.hpp"
#include "rjump/riccati.hpp"
#include "rjump/simulator.hpp"

namespace rjump {

// Optimal feedback synthesis u = Theta(t) x with Theta = -H(t)^{-1} Cross(t)',
// where H is the control Hessian and Cross the cross operator evaluated along
// a solved value matrix K(t). Built either from a Riccati grid (deterministic
// case, L = R = 0) or from externally supplied time tables (the lattice path).
class FeedbackLaw {
  public:
    // Gain Theta(t), m x n. Exact table lookup at construction nodes;
    // elsewhere assembled from the interpolated K (Riccati-backed laws) or
    // held piecewise constant from the left (table-backed laws).
    Matrix gain(double t) const;

    // Control Hessian H(t) at the law's solution, m x m positive definite.
    Matrix hessian(double t) const;

    // Value matrix K(t), n x n symmetric PSD.
    Matrix value_matrix(double t) const;

    // <K(t) x, x>, the predicted optimal cost-to-go from (t, x).
    double value(double t, const Vector& x) const;

    // Human-readable description of what the law was built from.
    const std::string& source() const { return source_; }

    const std::vector<double>& node_times() const { return times_; }

    // Simulation policy (t, x) -> Theta(t) x. Thread-safe; keeps the law's
    // tables alive via shared ownership, so it may outlive this object.
    Policy policy() const;

    friend FeedbackLaw synthesize_feedback(const RiccatiGrid& grid,
                                           const CoefficientSet& coeffs);
    friend FeedbackLaw feedback_from_tables(std::vector<double> times,
                                            std::vector<Matrix> gains,
                                            std::vector<Matrix> hessians,
                                            std::vector<Matrix> values,
                                            std::string source);

  private:
    struct Tables {
        std::vector<double> times;
        std::vector<Matrix> gains;
        std::vector<Matrix> hessians;
        std::vector<Matrix> values;
        std::shared_ptr<const KInterpolant> interp;  // null for table-backed laws
        std::shared_ptr<const CoefficientSet> coeffs;
        // Gain/Hessian/K at an arbitrary time: table hit if t matches a node
        // (within an absolute 1e-12 (1 + T) tolerance), otherwise interpolate
        // or, lacking an interpolant, take the nearest node from the left.
        std::size_t locate(double t, bool& exact) const;
        Matrix gain_at(double t) const;
        Matrix hessian_at(double t) const;
        Matrix value_at(double t) const;
    };

    std::shared_ptr<const Tables> tables_;
    std::vector<double> times_;
    std::string source_;
};

// Builds the feedback law along a deterministic Riccati solution: at every
// grid node Theta = -H^{-1} Cross' with L = R = 0. Throws
// NonPositiveControlHessian if the Hessian fails Cholesky at any node.
FeedbackLaw synthesize_feedback(const RiccatiGrid& grid, const CoefficientSet& coeffs);

// Builds a piecewise-constant law from explicit node tables (used for laws
// extracted from a lattice, where time is discrete). All vectors must share
// one length >= 1; times strictly increasing.
FeedbackLaw feedback_from_tables(std::vector<double> times, std::vector<Matrix> gains,
                                 std::vector<Matrix> hessians, std::vector<Matrix> values,
                                 std::string source);

// simulate_paths under the closed-loop policy u = Theta(t) x. Gains are
// precomputed at the simulation grid nodes so the per-step cost is one
// matrix-vector product; jump times fall back to on-demand evaluation.
PathBundle simulate_closed_loop(const CoefficientSet& coeffs, const FeedbackLaw& law,
                                const SimConfig& cfg, const AuxIntegrand& aux = nullptr);

struct OptimalityGap {
    CostEstimate direct;     // J(alt) - <K(t0) x0, x0>, Monte Carlo
    CostEstimate predicted;  // E integral <H (u - Theta x), (u - Theta x)> dt
    double value_formula = 0.0;  // <K(t0) x0, x0>
};

// Completion-of-squares check: runs `alt_policy`, measures its cost, and on
// the same paths accumulates the predicted gap integrand with
// u~(s) = Theta(s) X(s-) taken along the alt-policy path. The two estimates
// agree within Monte Carlo error and are nonnegative within error when the
// law is optimal; both are returned for the caller to compare.
OptimalityGap optimality_gap(const CoefficientSet& coeffs, const FeedbackLaw& law,
                             const Policy& alt_policy, const SimConfig& cfg);

}  // namespace rjump
