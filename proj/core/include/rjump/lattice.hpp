#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "rjump/coefficients.hpp"
#include "rjump/control.hpp"
#include "rjump/numeric.hpp"

namespace rjump {

// Discrete-filtration replay of the backward equation. Each step carries a
// Brownian sign vector s in {-1,+1}^d (each component +-sqrt(dt), uniform,
// probability 2^-d per vector) independent of a jump outcome j in
// {none} union marks with P(j = e) = nu_e dt and P(none) = 1 - nu(Lambda) dt.
// Backward dynamic programming gives the value as an exact quadratic form
// per node; the discrete Doob decomposition then extracts the triple
// (K, L, R) and the predictable increment, and residual checks compare the
// increment against the continuous generator.
//
// Branch index layout: b = sign_mask * (1 + num_marks) + (jump + 1), so the
// no-jump branch of a sign vector precedes its mark branches.

struct LatticeSpec {
    int nt = 1;                   // number of time steps; dt = T / nt
    bool force_explicit = false;  // build the full product tree even when a
                                  // collapsed chain would be exact
    long node_cap = 1000000;      // explicit-tree node budget
};

struct LatticeTree {
    // Structure, filled by build_tree.
    int nt = 0;
    double dt = 0.0;
    int n = 0, m = 0, d = 0;
    int num_marks = 0;
    int n_branch = 0;
    bool collapsed = false;       // one node per level (exact for
                                  // deterministic coefficients: node values
                                  // depend on time only)
    bool path_dependent = false;
    std::vector<double> times;                   // level times, last = T
    std::vector<long> level_size;                // nodes per level
    std::vector<double> branch_prob;             // per branch, sums to 1
    std::vector<LatticeOutcome> branch_outcome;  // per branch
    std::vector<std::vector<std::uint8_t>> state;  // per level/node history
                                                   // variant (empty when
                                                   // deterministic)
    std::vector<std::vector<double>> node_prob;  // per level/node probability
    std::vector<std::string> warnings;

    // Dynamic programming results, filled by backward_induction. Matrices are
    // stored per level in flat column-major blocks.
    bool induced = false;
    std::vector<std::vector<double>> K_buf;     // levels 0..nt, n*n per node
    std::vector<std::vector<double>> gain_buf;  // levels 0..nt-1, m*n per node

    // Doob decomposition results, filled by doob_decompose. All describe the
    // step from their level to the next, so they live on levels 0..nt-1.
    bool decomposed = false;
    std::vector<std::vector<double>> L_buf;      // d blocks of n*n per node
    std::vector<std::vector<double>> R_buf;      // num_marks blocks per node
    std::vector<std::vector<double>> k_inc_buf;  // n*n per node
    std::vector<std::vector<double>> proj_resid; // scalar per node

    long total_nodes() const;
    long child(int level, long node, int branch) const {
        (void)level;
        return collapsed ? 0 : node * n_branch + branch;
    }
    int state_of(int level, long node) const {
        return path_dependent ? static_cast<int>(state[static_cast<std::size_t>(level)]
                                                      [static_cast<std::size_t>(node)])
                              : 0;
    }
    double prob_of(int level, long node) const {
        return node_prob[static_cast<std::size_t>(level)][static_cast<std::size_t>(node)];
    }

    Eigen::Map<const Matrix> K_at(int level, long node) const;
    Eigen::Map<const Matrix> gain_at(int level, long node) const;
    Eigen::Map<const Matrix> L_at(int level, long node, int i) const;
    Eigen::Map<const Matrix> R_at(int level, long node, int e) const;
    Eigen::Map<const Matrix> k_increment_at(int level, long node) const;
    double proj_residual_at(int level, long node) const;

    // <K x, x> at a node; the discrete value of starting there in state x.
    double node_value(int level, long node, const Vector& x) const;
};

// Human-readable node address ("level 2, node 5, history (s=+-, j=e1) ...")
// used in error messages and the CSV export.
std::string node_address(const LatticeTree& tree, int level, long node);

// Materializes the tree: level times, branch model, node counts, history
// variants and node probabilities. Deterministic coefficient sets collapse to
// one node per level unless spec.force_explicit is set, because every node of
// a level would carry identical values. Throws LatticeOverflow when the
// explicit node count exceeds spec.node_cap, std::invalid_argument when
// nu(Lambda) dt >= 1; a warning is recorded when nu(Lambda) dt > 0.2.
LatticeTree build_tree(const CoefficientSet& coeffs, const LatticeSpec& spec);

// Exact one-step dynamic programming from the terminal condition K = M down
// to the root: at each node the one-step cost-to-go is an exact quadratic in
// (x, u); its closed-form minimization yields the node's K (symmetric) and
// feedback gain. Throws NonPositiveControlHessian (with the node address)
// when the discrete control Hessian N dt + S' K_next S fails Cholesky.
void backward_induction(LatticeTree& tree, const CoefficientSet& coeffs);

// Exhaustive minimization over branch-adapted controls drawn from u_grid
// (applied to every control component), evaluated from the root in state x0.
// Agrees with backward induction from above within O(grid step^2). Throws
// LatticeOverflow when the enumeration would exceed ~1e8 evaluations.
double brute_force_value(const LatticeTree& tree, const CoefficientSet& coeffs,
                         const Vector& x0, const std::vector<double>& u_grid);

// Discrete Doob decomposition of the K process along the tree, per node:
//   k_inc = K_node - E_node[K_next]                      (predictable drift)
//   R(e)  = avg_s K_next(s, e) - avg_s K_next(s, none)   (jump loading)
//   L_i   = dt^{-1/2} avg_s sign_i(s) K_next(s, none)    (Brownian loading)
// plus the per-node Frobenius norm of the part of K_next - K_node orthogonal
// to span{1, s_i, compensated jump indicators}, which is exactly zero when
// d = 0 and O(dt) otherwise.
void doob_decompose(LatticeTree& tree, const CoefficientSet& coeffs);

struct ResidualStats {
    double max_residual = 0.0;
    double mean_residual = 0.0;
    long nodes = 0;
};

// Drift consistency: per node ||k_inc - G(t, K, L, R) dt|| / dt with G the
// continuous generator evaluated at the node's coefficients and extracted
// triple. Both statistics shrink at first order in dt on smooth scenarios.
ResidualStats generator_residual(const LatticeTree& tree, const CoefficientSet& coeffs);

struct StructureReport {
    double min_hessian_eig = 0.0;     // control Hessian at (K, R), all nodes
    double min_K_eig = 0.0;           // K over all levels
    double min_K_plus_R_eig = 0.0;    // K + R(e) over nodes and marks
    double min_jump_quad_eig = 0.0;   // sum_e nu_e F'(K + R(e))F over nodes
    double sum_L_sq = 0.0;            // E sum_i ||L_i||_F^2 dt, summed over levels
    double sum_R_sq = 0.0;            // E sum_e nu_e ||R(e)||_F^2 dt, summed
    long nodes = 0;

    bool floors_ok(double floor = -1e-9) const {
        return min_hessian_eig >= floor && min_K_eig >= floor &&
               min_K_plus_R_eig >= floor && min_jump_quad_eig >= floor;
    }
};

// Positivity floors and square-summability of the extracted triple. Marks
// absent: the mark-dependent minima default to +infinity.
StructureReport check_structure(const LatticeTree& tree, const CoefficientSet& coeffs);

// A control choice per node (branch-adapted policy) for the submartingale
// check; receives the node's address and realized state.
using NodePolicy = std::function<Vector(int level, long node, const Vector& x)>;

// u = gain * x from the backward induction.
NodePolicy optimal_node_policy(const LatticeTree& tree);

struct MartingaleReport {
    double min_margin = 0.0;      // min over nodes of E[J_next] - J_node
    double max_abs_margin = 0.0;  // max |E[J_next] - J_node|
    long nodes = 0;
};

// Propagates the controlled state along every tree path from x0 and measures
// the one-step margin of the running-cost-plus-value process at each node:
// nonnegative for every adapted policy, zero under the optimal one. Requires
// an explicit tree (collapsed chains do not carry per-path states).
MartingaleReport submartingale_check(const LatticeTree& tree, const CoefficientSet& coeffs,
                                     const Vector& x0, const NodePolicy& policy);

// Piecewise-constant feedback law from a deterministic tree's per-level gains
// (the discrete counterpart of the Riccati-backed law). Requires
// backward_induction; rejects path-dependent trees.
FeedbackLaw lattice_feedback(const LatticeTree& tree, const CoefficientSet& coeffs);

// Bounded CSV export: level, node, t, vech(K), gain, vech(L_i), vech(R_e),
// k_inc, proj_residual. Stops after max_rows node rows.
void write_tree_csv(std::ostream& out, const LatticeTree& tree, long max_rows = 20000);

}  // namespace rjump
