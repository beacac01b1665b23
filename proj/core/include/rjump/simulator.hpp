#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "rjump/coefficients.hpp"
#include "rjump/numeric.hpp"

namespace rjump {

// Monte Carlo simulation of the controlled linear jump-diffusion
//
//   dX = (A X + B u) dt + sum_i (C_i X + D_i u) dW_i
//        + sum_e (E_e X(t-) + F_e u(t)) dmu~(e, dt)
//
// where mu~ is the compensated jump measure of a finite-activity marked
// Poisson process with intensity nu. Jump times are drawn exactly from an
// exponential clock of rate nu(Lambda); between jumps the diffusion part is
// advanced by Euler-Maruyama on a uniform grid that is augmented, per path,
// with the realized jump times. The compensator -sum_e (E_e x + F_e u) nu_e dt
// is part of the deterministic drift; at a jump time the uncompensated map
// x <- x + E_e x + F_e u is applied exactly.

// Control policy u = policy(t, x), written into `u` (preallocated to size m).
// Must be safe to call concurrently from several worker threads.
using Policy = std::function<void(double t, const Vector& x, Vector& u)>;

// Optional scalar integrand g(t, x, u) accumulated along each path by a
// left-endpoint rule: every sample sees exactly the (t, x, u) tuple the
// policy produced at that node. An integrand that vanishes on policy output
// (the completion-of-squares gap predictor under the optimal law) therefore
// integrates to an exact zero, at the price of first-order quadrature.
using AuxIntegrand = std::function<double(double t, const Vector& x, const Vector& u)>;

struct SimConfig {
    double dt = 1e-2;          // uniform grid step (last step clipped to T)
    long n_paths = 1000;
    std::uint64_t seed = 0;
    Vector x0;
    double t0 = 0.0;
    long record_paths = 0;     // keep full trajectories for the first k paths
    bool antithetic = false;   // pair path 2j+1 with 2j by negating normals
    int threads = 1;           // worker count; results do not depend on it
};

// Full trajectory of one recorded path, sampled on the augmented grid.
// At a node that is a jump time, `states` holds the post-jump value and
// `jump_mark` the mark index; elsewhere jump_mark is -1. `controls[j]` is
// the (predictable) control acting on [times[j], times[j+1]).
struct PathRecord {
    std::vector<double> times;
    std::vector<Vector> states;
    std::vector<Vector> controls;
    std::vector<int> jump_mark;
    std::vector<double> jump_times;
    std::vector<int> jump_marks;
};

// Per-path scalar summaries for all paths; full trajectories only for the
// first `record_paths` of them (path counts at acceptance scale make storing
// every trajectory infeasible).
struct PathBundle {
    long n_paths = 0;
    double t0 = 0.0;
    double horizon = 0.0;
    std::vector<double> running_cost;   // trapezoidal integral of the running cost
    std::vector<double> terminal_cost;  // <M X(T), X(T)>
    std::vector<double> aux_integral;   // empty unless an AuxIntegrand was given
    std::vector<Vector> terminal_state;
    std::vector<long> jump_count;
    std::vector<PathRecord> records;
    std::vector<std::string> warnings;

    double total_cost(long p) const { return running_cost[static_cast<std::size_t>(p)] + terminal_cost[static_cast<std::size_t>(p)]; }
};

struct CostEstimate {
    double mean = 0.0;
    double std_error = 0.0;  // sample standard deviation / sqrt(n_paths)
    long n_paths = 0;
};

// The uniform time grid used by the simulator: nodes t0 + k dt with the last
// node clipped to T. Exposed so callers can precompute per-node data (e.g.
// feedback gains) that line up exactly with the simulation nodes.
std::vector<double> uniform_grid(double t0, double T, double dt);

// Simulates cfg.n_paths independent paths. Reproducible: the same
// (coefficients, policy, cfg) produce a bit-identical bundle, regardless of
// cfg.threads, because every path owns a stream derived from (seed, index)
// and reductions are deterministic.
//
// Throws CoefficientError for invalid inputs (including path-dependent
// coefficients, which have no pathwise time evaluation), DimensionError for
// a bad x0 or policy output, NonFiniteState if a path blows up.
PathBundle simulate_paths(const CoefficientSet& coeffs, const Policy& policy,
                          const SimConfig& cfg, const AuxIntegrand& aux = nullptr);

// Mean and standard error of running + terminal cost across paths.
CostEstimate evaluate_cost(const PathBundle& bundle);

// Mean and standard error of an arbitrary per-path sample vector
// (deterministic pairwise reduction).
CostEstimate estimate_mean(const std::vector<double>& samples);

// Mean and standard error of the aux integrals; throws if none were recorded.
CostEstimate evaluate_aux(const PathBundle& bundle);

// Mean and standard error of the p-th power of component `comp` of X(T).
CostEstimate terminal_moment(const PathBundle& bundle, int power, int comp = 0);

struct MomentPair {
    double first_moment = 0.0;
    double second_moment = 0.0;
};

// Exact first and second moments of the scalar (n = m = 1) state under the
// linear feedback u = g x, obtained from the closed moment ODEs
//
//   dE[X]/dt  = (a + b g) E[X]
//   dE[X^2]/dt = (2(a + b g) + sum_i (c_i + d_i g)^2
//                 + sum_e nu_e (e_e + f_e g)^2) E[X^2]
//
// integrated by composite Simpson quadrature of the (time-dependent) rates.
// Serves as the independent oracle for simulator correctness tests.
// Throws DimensionError unless n = m = 1; CoefficientError if path-dependent.
MomentPair moment_oracle(const CoefficientSet& coeffs, double feedback_gain,
                         double t, double x0);

// CSV dump of recorded paths: path_id, t, x_*, u_*, jump_flag, mark_id.
void write_paths_csv(std::ostream& out, const PathBundle& bundle,
                     const CoefficientSet& coeffs);

}  // namespace rjump
