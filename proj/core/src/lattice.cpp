#include "rjump/lattice.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <utility>

#include "rjump/errors.hpp"
#include "rjump/model.hpp"

namespace rjump {

namespace {

int sign_variant_of(int state_id) { return state_id & 1; }
int jump_variant_of(int state_id) { return (state_id >> 1) & 1; }

// Joint history state: bit 0 tracks the first-Brownian-sign functional,
// bit 1 the after-first-jump functional. Transitions delegate to the
// functional catalog so the lattice and the coefficient definitions cannot
// drift apart.
int transition(int state_id, int step, const LatticeOutcome& outcome) {
    static const PathFunctional sign_rep{PathSwitchKind::SignOfFirstBrownianStep, Matrix(),
                                         Matrix()};
    static const PathFunctional jump_rep{PathSwitchKind::AfterFirstJump, Matrix(), Matrix()};
    const int sv = sign_rep.step_variant(sign_variant_of(state_id), step, outcome);
    const int jv = jump_rep.step_variant(jump_variant_of(state_id), step, outcome);
    return sv | (jv << 1);
}

// Coefficients and one-step transition maps for one (level, history state):
// X_next = P[b] x + S[b] u on branch b.
struct LevelEntry {
    CoefficientSlice s;
    std::vector<Matrix> P, S;
};

struct LevelCache {
    std::array<std::optional<LevelEntry>, 4> entries;
    const LevelEntry& at(int state_id) const { return *entries[static_cast<std::size_t>(state_id)]; }
};

LevelEntry make_entry(const LatticeTree& tr, const CoefficientSet& c, int level, int state_id) {
    const double t = tr.times[static_cast<std::size_t>(level)];
    LevelEntry en{c.slice(t, sign_variant_of(state_id), jump_variant_of(state_id)), {}, {}};

    const std::string where = " at lattice level " + std::to_string(level) +
                              " (t = " + format_double(t) + ", state " +
                              std::to_string(state_id) + ")";
    if (relative_asymmetry(en.s.Q) > 1e-10) throw CoefficientError("Q not symmetric" + where);
    if (relative_asymmetry(en.s.N) > 1e-10) throw CoefficientError("N not symmetric" + where);
    if (min_eigenvalue(en.s.Q) < -1e-12 * (1.0 + en.s.Q.norm()))
        throw CoefficientError("Q not PSD" + where);
    if (min_eigenvalue(en.s.N) < c.delta - 1e-12 * (1.0 + c.delta))
        throw CoefficientError("N below delta" + where);

    const double sq = std::sqrt(tr.dt);
    Matrix Pc = Matrix::Identity(tr.n, tr.n) + tr.dt * en.s.A;
    Matrix Sc = tr.dt * en.s.B;
    for (int e = 0; e < tr.num_marks; ++e) {
        const double w = c.marks.weight(static_cast<std::size_t>(e)) * tr.dt;
        Pc -= w * en.s.E[static_cast<std::size_t>(e)];
        Sc -= w * en.s.F[static_cast<std::size_t>(e)];
    }
    en.P.reserve(static_cast<std::size_t>(tr.n_branch));
    en.S.reserve(static_cast<std::size_t>(tr.n_branch));
    for (int b = 0; b < tr.n_branch; ++b) {
        const LatticeOutcome& o = tr.branch_outcome[static_cast<std::size_t>(b)];
        Matrix P = Pc;
        Matrix S = Sc;
        for (int i = 0; i < tr.d; ++i) {
            const double sgn = (o.sign_mask >> i) & 1u ? sq : -sq;
            P += sgn * en.s.C[static_cast<std::size_t>(i)];
            S += sgn * en.s.D[static_cast<std::size_t>(i)];
        }
        if (o.jump >= 0) {
            P += en.s.E[static_cast<std::size_t>(o.jump)];
            S += en.s.F[static_cast<std::size_t>(o.jump)];
        }
        en.P.push_back(std::move(P));
        en.S.push_back(std::move(S));
    }
    return en;
}

// Per-level coefficient caches for levels 0..nt-1. Only the states that
// actually occur at a level are materialized; a deterministic tree has a
// single state everywhere.
std::vector<LevelCache> build_cache(const LatticeTree& tr, const CoefficientSet& c) {
    std::vector<LevelCache> cache(static_cast<std::size_t>(tr.nt));
    for (int k = 0; k < tr.nt; ++k) {
        bool present[4] = {false, false, false, false};
        if (tr.path_dependent)
            for (std::uint8_t s : tr.state[static_cast<std::size_t>(k)]) present[s] = true;
        else
            present[0] = true;
        for (int sid = 0; sid < 4; ++sid)
            if (present[sid])
                cache[static_cast<std::size_t>(k)].entries[static_cast<std::size_t>(sid)] =
                    make_entry(tr, c, k, sid);
    }
    return cache;
}

void store_block(std::vector<double>& buf, long block, const Matrix& value) {
    std::copy(value.data(), value.data() + value.size(),
              buf.begin() + block * value.size());
}

void require_induced(const LatticeTree& tr, const char* op) {
    if (!tr.induced)
        throw std::logic_error(std::string(op) + ": run backward_induction first");
}

void require_decomposed(const LatticeTree& tr, const char* op) {
    if (!tr.decomposed)
        throw std::logic_error(std::string(op) + ": run doob_decompose first");
}

}  // namespace

long LatticeTree::total_nodes() const {
    long total = 0;
    for (long s : level_size) total += s;
    return total;
}

Eigen::Map<const Matrix> LatticeTree::K_at(int level, long node) const {
    require_induced(*this, "K_at");
    const auto& buf = K_buf[static_cast<std::size_t>(level)];
    return {buf.data() + node * n * n, n, n};
}

Eigen::Map<const Matrix> LatticeTree::gain_at(int level, long node) const {
    require_induced(*this, "gain_at");
    const auto& buf = gain_buf[static_cast<std::size_t>(level)];
    return {buf.data() + node * m * n, m, n};
}

Eigen::Map<const Matrix> LatticeTree::L_at(int level, long node, int i) const {
    require_decomposed(*this, "L_at");
    const auto& buf = L_buf[static_cast<std::size_t>(level)];
    return {buf.data() + (node * d + i) * n * n, n, n};
}

Eigen::Map<const Matrix> LatticeTree::R_at(int level, long node, int e) const {
    require_decomposed(*this, "R_at");
    const auto& buf = R_buf[static_cast<std::size_t>(level)];
    return {buf.data() + (node * num_marks + e) * n * n, n, n};
}

Eigen::Map<const Matrix> LatticeTree::k_increment_at(int level, long node) const {
    require_decomposed(*this, "k_increment_at");
    const auto& buf = k_inc_buf[static_cast<std::size_t>(level)];
    return {buf.data() + node * n * n, n, n};
}

double LatticeTree::proj_residual_at(int level, long node) const {
    require_decomposed(*this, "proj_residual_at");
    return proj_resid[static_cast<std::size_t>(level)][static_cast<std::size_t>(node)];
}

double LatticeTree::node_value(int level, long node, const Vector& x) const {
    const auto K = K_at(level, node);
    if (x.size() != n) throw DimensionError("node_value: x has wrong size");
    return x.dot(K * x);
}

std::string node_address(const LatticeTree& tree, int level, long node) {
    std::string out = "level " + std::to_string(level) + ", node " + std::to_string(node);
    if (tree.collapsed) return out + " (collapsed)";
    if (level == 0) return out;
    std::vector<int> digits(static_cast<std::size_t>(level));
    long idx = node;
    for (int k = level - 1; k >= 0; --k) {
        digits[static_cast<std::size_t>(k)] = static_cast<int>(idx % tree.n_branch);
        idx /= tree.n_branch;
    }
    out += ", history";
    for (int k = 0; k < level; ++k) {
        const LatticeOutcome& o =
            tree.branch_outcome[static_cast<std::size_t>(digits[static_cast<std::size_t>(k)])];
        out += " (s=";
        for (int i = 0; i < tree.d; ++i) out += ((o.sign_mask >> i) & 1u) ? '+' : '-';
        if (tree.d == 0) out += '.';
        out += ", j=";
        out += o.jump >= 0 ? "#" + std::to_string(o.jump) : "none";
        out += ")";
    }
    return out;
}

LatticeTree build_tree(const CoefficientSet& coeffs, const LatticeSpec& spec) {
    coeffs.check_shape();
    if (spec.nt < 1) throw std::invalid_argument("lattice: nt must be >= 1");
    if (coeffs.d > 20) throw LatticeOverflow("lattice: 2^d branches with d = " +
                                             std::to_string(coeffs.d) + " are not materializable");

    LatticeTree tr;
    tr.nt = spec.nt;
    tr.dt = coeffs.horizon / spec.nt;
    tr.n = coeffs.n;
    tr.m = coeffs.m;
    tr.d = coeffs.d;
    tr.num_marks = static_cast<int>(coeffs.marks.size());
    tr.n_branch = (1 << coeffs.d) * (1 + tr.num_marks);
    tr.path_dependent = coeffs.path_dependent();
    tr.collapsed = !tr.path_dependent && !spec.force_explicit;

    const double nudt = coeffs.marks.total() * tr.dt;
    if (nudt >= 1.0)
        throw std::invalid_argument("lattice: nu(Lambda) * dt = " + format_double(nudt) +
                                    " >= 1; the no-jump branch needs positive probability, "
                                    "increase nt");
    if (nudt > 0.2)
        tr.warnings.push_back("nu(Lambda) * dt = " + format_double(nudt) +
                              " > 0.2: jump branch probabilities are coarse");

    if (!tr.path_dependent) {
        ValidationReport rep = validate_assumptions(coeffs);
        if (!rep.ok()) throw CoefficientError("lattice: " + rep.summary());
    }
    if (relative_asymmetry(coeffs.M) > 1e-10) throw CoefficientError("M not symmetric");
    if (min_eigenvalue(coeffs.M) < -1e-12 * (1.0 + coeffs.M.norm()))
        throw CoefficientError("M not PSD");

    tr.times.resize(static_cast<std::size_t>(tr.nt) + 1);
    for (int k = 0; k <= tr.nt; ++k) tr.times[static_cast<std::size_t>(k)] = k * tr.dt;
    tr.times.back() = coeffs.horizon;

    tr.branch_prob.reserve(static_cast<std::size_t>(tr.n_branch));
    tr.branch_outcome.reserve(static_cast<std::size_t>(tr.n_branch));
    const double sign_w = std::pow(0.5, tr.d);
    for (std::uint32_t smask = 0; smask < (1u << tr.d); ++smask) {
        for (int j = -1; j < tr.num_marks; ++j) {
            const double pj =
                j < 0 ? 1.0 - nudt : coeffs.marks.weight(static_cast<std::size_t>(j)) * tr.dt;
            tr.branch_prob.push_back(sign_w * pj);
            tr.branch_outcome.push_back(LatticeOutcome{smask, j});
        }
    }

    tr.level_size.resize(static_cast<std::size_t>(tr.nt) + 1);
    tr.node_prob.resize(static_cast<std::size_t>(tr.nt) + 1);
    if (tr.collapsed) {
        for (int k = 0; k <= tr.nt; ++k) {
            tr.level_size[static_cast<std::size_t>(k)] = 1;
            tr.node_prob[static_cast<std::size_t>(k)] = {1.0};
        }
    } else {
        long total = 0;
        long size = 1;
        for (int k = 0; k <= tr.nt; ++k) {
            tr.level_size[static_cast<std::size_t>(k)] = size;
            total += size;
            if (total > spec.node_cap)
                throw LatticeOverflow("lattice: explicit tree needs more than " +
                                      std::to_string(spec.node_cap) + " nodes (nt = " +
                                      std::to_string(tr.nt) + ", " + std::to_string(tr.n_branch) +
                                      " branches per step)");
            if (k < tr.nt) {
                if (size > spec.node_cap / tr.n_branch + 1)
                    throw LatticeOverflow("lattice: explicit tree exceeds the node cap at level " +
                                          std::to_string(k + 1));
                size *= tr.n_branch;
            }
        }
        if (tr.path_dependent) tr.state.resize(static_cast<std::size_t>(tr.nt) + 1);
        tr.node_prob[0] = {1.0};
        if (tr.path_dependent) tr.state[0] = {0};
        for (int k = 0; k < tr.nt; ++k) {
            const auto sz = static_cast<std::size_t>(tr.level_size[static_cast<std::size_t>(k)]);
            const auto nsz =
                static_cast<std::size_t>(tr.level_size[static_cast<std::size_t>(k) + 1]);
            tr.node_prob[static_cast<std::size_t>(k) + 1].resize(nsz);
            if (tr.path_dependent) tr.state[static_cast<std::size_t>(k) + 1].resize(nsz);
            for (std::size_t i = 0; i < sz; ++i) {
                for (int b = 0; b < tr.n_branch; ++b) {
                    const auto ch = static_cast<std::size_t>(
                        tr.child(k, static_cast<long>(i), b));
                    tr.node_prob[static_cast<std::size_t>(k) + 1][ch] =
                        tr.node_prob[static_cast<std::size_t>(k)][i] *
                        tr.branch_prob[static_cast<std::size_t>(b)];
                    if (tr.path_dependent)
                        tr.state[static_cast<std::size_t>(k) + 1][ch] = static_cast<std::uint8_t>(
                            transition(tr.state[static_cast<std::size_t>(k)][i], k,
                                       tr.branch_outcome[static_cast<std::size_t>(b)]));
                }
            }
        }
    }

    // Validation sweep: materializing every (level, state) slice catches bad
    // path-functional outputs and per-state assumption violations up front.
    build_cache(tr, coeffs);
    return tr;
}

void backward_induction(LatticeTree& tr, const CoefficientSet& coeffs) {
    if (tr.nt < 1 || tr.times.empty())
        throw std::logic_error("backward_induction: tree not built");
    const std::vector<LevelCache> cache = build_cache(tr, coeffs);
    const int n = tr.n;
    const int m = tr.m;

    tr.K_buf.assign(static_cast<std::size_t>(tr.nt) + 1, {});
    tr.gain_buf.assign(static_cast<std::size_t>(tr.nt), {});

    const Matrix Mterm = symmetrized(coeffs.M);
    {
        const long leaves = tr.level_size[static_cast<std::size_t>(tr.nt)];
        auto& buf = tr.K_buf[static_cast<std::size_t>(tr.nt)];
        buf.resize(static_cast<std::size_t>(leaves) * n * n);
        for (long i = 0; i < leaves; ++i) store_block(buf, i, Mterm);
    }
    tr.induced = true;  // K_at on level nt is valid from here on

    Matrix Abar(n, n), Bbar(n, m), Cbar(m, m), H(m, m), KP(n, n), KS(n, m);
    Matrix Knode(n, n), gain(m, n);
    for (int k = tr.nt - 1; k >= 0; --k) {
        const long size = tr.level_size[static_cast<std::size_t>(k)];
        auto& kbuf = tr.K_buf[static_cast<std::size_t>(k)];
        auto& gbuf = tr.gain_buf[static_cast<std::size_t>(k)];
        kbuf.resize(static_cast<std::size_t>(size) * n * n);
        gbuf.resize(static_cast<std::size_t>(size) * m * n);
        for (long i = 0; i < size; ++i) {
            const LevelEntry& en = cache[static_cast<std::size_t>(k)].at(tr.state_of(k, i));
            Abar.setZero();
            Bbar.setZero();
            Cbar.setZero();
            for (int b = 0; b < tr.n_branch; ++b) {
                const auto Knext = tr.K_at(k + 1, tr.child(k, i, b));
                const double p = tr.branch_prob[static_cast<std::size_t>(b)];
                const Matrix& P = en.P[static_cast<std::size_t>(b)];
                const Matrix& S = en.S[static_cast<std::size_t>(b)];
                KP.noalias() = Knext * P;
                KS.noalias() = Knext * S;
                Abar.noalias() += p * (P.transpose() * KP);
                Bbar.noalias() += p * (P.transpose() * KS);
                Cbar.noalias() += p * (S.transpose() * KS);
            }
            H = tr.dt * en.s.N + Cbar;
            Eigen::LLT<Matrix> llt(symmetrized(H));
            if (llt.info() != Eigen::Success)
                throw NonPositiveControlHessian(
                    "discrete control Hessian is not positive definite at " +
                    node_address(tr, k, i));
            gain.noalias() = -llt.solve(Bbar.transpose());
            Knode.noalias() = tr.dt * en.s.Q + Abar;
            Knode.noalias() += Bbar * gain;
            Knode = symmetrized(Knode);
            store_block(kbuf, i, Knode);
            store_block(gbuf, i, gain);
        }
    }
}

double brute_force_value(const LatticeTree& tr, const CoefficientSet& coeffs,
                         const Vector& x0, const std::vector<double>& u_grid) {
    if (tr.nt < 1 || tr.times.empty())
        throw std::logic_error("brute_force_value: tree not built");
    if (u_grid.empty()) throw std::invalid_argument("brute_force_value: empty control grid");
    if (x0.size() != tr.n) throw DimensionError("brute_force_value: x0 has wrong size");

    const double per_node = std::pow(static_cast<double>(u_grid.size()), tr.m);
    const double work = std::pow(per_node * tr.n_branch, tr.nt);
    if (!(work <= 1e8))
        throw LatticeOverflow("brute_force_value: ~" + std::to_string(work) +
                              " evaluations exceed the enumeration budget");

    const std::vector<LevelCache> cache = build_cache(tr, coeffs);
    const Matrix Mterm = symmetrized(coeffs.M);
    const auto g = u_grid.size();

    std::function<double(int, long, const Vector&)> go = [&](int level, long node,
                                                             const Vector& x) -> double {
        if (level == tr.nt) return x.dot(Mterm * x);
        const LevelEntry& en = cache[static_cast<std::size_t>(level)].at(tr.state_of(level, node));
        double best = std::numeric_limits<double>::infinity();
        Vector u(tr.m);
        std::vector<std::size_t> idx(static_cast<std::size_t>(tr.m), 0);
        while (true) {
            for (int j = 0; j < tr.m; ++j) u(j) = u_grid[idx[static_cast<std::size_t>(j)]];
            double val = running_cost(en.s, x, u) * tr.dt;
            for (int b = 0; b < tr.n_branch; ++b) {
                const Vector z = en.P[static_cast<std::size_t>(b)] * x +
                                 en.S[static_cast<std::size_t>(b)] * u;
                val += tr.branch_prob[static_cast<std::size_t>(b)] *
                       go(level + 1, tr.child(level, node, b), z);
            }
            best = std::min(best, val);
            int j = 0;
            while (j < tr.m && ++idx[static_cast<std::size_t>(j)] == g) {
                idx[static_cast<std::size_t>(j)] = 0;
                ++j;
            }
            if (j == tr.m) break;
        }
        return best;
    };
    return go(0, 0, x0);
}

void doob_decompose(LatticeTree& tr, const CoefficientSet& coeffs) {
    require_induced(tr, "doob_decompose");
    const int n = tr.n;
    const double sq = std::sqrt(tr.dt);
    const double sign_w = std::pow(0.5, tr.d);
    const int stride = 1 + tr.num_marks;  // branches per sign vector

    tr.L_buf.assign(static_cast<std::size_t>(tr.nt), {});
    tr.R_buf.assign(static_cast<std::size_t>(tr.nt), {});
    tr.k_inc_buf.assign(static_cast<std::size_t>(tr.nt), {});
    tr.proj_resid.assign(static_cast<std::size_t>(tr.nt), {});

    Matrix EK(n, n), mean_none(n, n), kinc(n, n), resid(n, n);
    std::vector<Matrix> meanE(static_cast<std::size_t>(tr.num_marks));
    std::vector<Matrix> Lw(static_cast<std::size_t>(tr.d));
    std::vector<Matrix> Rw(static_cast<std::size_t>(tr.num_marks));

    for (int k = 0; k < tr.nt; ++k) {
        const long size = tr.level_size[static_cast<std::size_t>(k)];
        auto& lbuf = tr.L_buf[static_cast<std::size_t>(k)];
        auto& rbuf = tr.R_buf[static_cast<std::size_t>(k)];
        auto& ibuf = tr.k_inc_buf[static_cast<std::size_t>(k)];
        auto& pbuf = tr.proj_resid[static_cast<std::size_t>(k)];
        lbuf.resize(static_cast<std::size_t>(size) * tr.d * n * n);
        rbuf.resize(static_cast<std::size_t>(size) * tr.num_marks * n * n);
        ibuf.resize(static_cast<std::size_t>(size) * n * n);
        pbuf.resize(static_cast<std::size_t>(size));

        for (long i = 0; i < size; ++i) {
            EK.setZero();
            for (int b = 0; b < tr.n_branch; ++b)
                EK.noalias() +=
                    tr.branch_prob[static_cast<std::size_t>(b)] * tr.K_at(k + 1, tr.child(k, i, b));
            kinc = tr.K_at(k, i) - EK;
            store_block(ibuf, i, kinc);

            mean_none.setZero();
            for (auto& me : meanE) me.setZero(n, n);
            for (int i_l = 0; i_l < tr.d; ++i_l) Lw[static_cast<std::size_t>(i_l)].setZero(n, n);
            for (std::uint32_t smask = 0; smask < (1u << tr.d); ++smask) {
                const int b0 = static_cast<int>(smask) * stride;
                const auto Knone = tr.K_at(k + 1, tr.child(k, i, b0));
                mean_none.noalias() += sign_w * Knone;
                for (int e = 0; e < tr.num_marks; ++e)
                    meanE[static_cast<std::size_t>(e)].noalias() +=
                        sign_w * tr.K_at(k + 1, tr.child(k, i, b0 + 1 + e));
                for (int i_l = 0; i_l < tr.d; ++i_l) {
                    const double sgn = ((smask >> i_l) & 1u) ? 1.0 : -1.0;
                    Lw[static_cast<std::size_t>(i_l)].noalias() += (sign_w * sgn / sq) * Knone;
                }
            }
            for (int e = 0; e < tr.num_marks; ++e) {
                Rw[static_cast<std::size_t>(e)] = meanE[static_cast<std::size_t>(e)] - mean_none;
                store_block(rbuf, i * tr.num_marks + e, Rw[static_cast<std::size_t>(e)]);
            }
            for (int i_l = 0; i_l < tr.d; ++i_l)
                store_block(lbuf, i * tr.d + i_l, Lw[static_cast<std::size_t>(i_l)]);

            // Orthogonal-part diagnostic: the branchwise defect of
            // K_next = K - k_inc + sum_i L_i dW_i + sum_e R(e) dmu~(e).
            double res2 = 0.0;
            for (int b = 0; b < tr.n_branch; ++b) {
                const LatticeOutcome& o = tr.branch_outcome[static_cast<std::size_t>(b)];
                resid = tr.K_at(k + 1, tr.child(k, i, b)) - tr.K_at(k, i) + kinc;
                for (int i_l = 0; i_l < tr.d; ++i_l) {
                    const double sgn = ((o.sign_mask >> i_l) & 1u) ? sq : -sq;
                    resid.noalias() -= sgn * Lw[static_cast<std::size_t>(i_l)];
                }
                if (o.jump >= 0) resid -= Rw[static_cast<std::size_t>(o.jump)];
                for (int e = 0; e < tr.num_marks; ++e)
                    resid.noalias() += (coeffs.marks.weight(static_cast<std::size_t>(e)) * tr.dt) *
                                       Rw[static_cast<std::size_t>(e)];
                res2 += tr.branch_prob[static_cast<std::size_t>(b)] * resid.squaredNorm();
            }
            pbuf[static_cast<std::size_t>(i)] = std::sqrt(res2);
        }
    }
    tr.decomposed = true;
}

ResidualStats generator_residual(const LatticeTree& tr, const CoefficientSet& coeffs) {
    require_decomposed(tr, "generator_residual");
    const std::vector<LevelCache> cache = build_cache(tr, coeffs);
    ResidualStats stats;
    double sum = 0.0;
    std::vector<Matrix> L(static_cast<std::size_t>(tr.d));
    std::vector<Matrix> R(static_cast<std::size_t>(tr.num_marks));
    for (int k = 0; k < tr.nt; ++k) {
        const long size = tr.level_size[static_cast<std::size_t>(k)];
        for (long i = 0; i < size; ++i) {
            const LevelEntry& en = cache[static_cast<std::size_t>(k)].at(tr.state_of(k, i));
            const Matrix K = tr.K_at(k, i);
            for (int i_l = 0; i_l < tr.d; ++i_l)
                L[static_cast<std::size_t>(i_l)] = tr.L_at(k, i, i_l);
            for (int e = 0; e < tr.num_marks; ++e) R[static_cast<std::size_t>(e)] = tr.R_at(k, i, e);
            const Matrix G = riccati_generator(en.s, K, L, R);
            const double res = (tr.k_increment_at(k, i) - tr.dt * G).norm() / tr.dt;
            stats.max_residual = std::max(stats.max_residual, res);
            sum += res;
            ++stats.nodes;
        }
    }
    stats.mean_residual = stats.nodes > 0 ? sum / static_cast<double>(stats.nodes) : 0.0;
    return stats;
}

StructureReport check_structure(const LatticeTree& tr, const CoefficientSet& coeffs) {
    require_decomposed(tr, "check_structure");
    const std::vector<LevelCache> cache = build_cache(tr, coeffs);
    StructureReport rep;
    const double inf = std::numeric_limits<double>::infinity();
    rep.min_hessian_eig = inf;
    rep.min_K_eig = inf;
    rep.min_K_plus_R_eig = inf;
    rep.min_jump_quad_eig = inf;

    for (int k = 0; k <= tr.nt; ++k) {
        const long size = tr.level_size[static_cast<std::size_t>(k)];
        for (long i = 0; i < size; ++i) {
            rep.min_K_eig = std::min(rep.min_K_eig, min_eigenvalue(tr.K_at(k, i)));
            ++rep.nodes;
        }
    }
    std::vector<Matrix> R(static_cast<std::size_t>(tr.num_marks));
    for (int k = 0; k < tr.nt; ++k) {
        const long size = tr.level_size[static_cast<std::size_t>(k)];
        for (long i = 0; i < size; ++i) {
            const LevelEntry& en = cache[static_cast<std::size_t>(k)].at(tr.state_of(k, i));
            const Matrix K = tr.K_at(k, i);
            for (int e = 0; e < tr.num_marks; ++e) R[static_cast<std::size_t>(e)] = tr.R_at(k, i, e);
            rep.min_hessian_eig =
                std::min(rep.min_hessian_eig, min_eigenvalue(control_hessian(en.s, K, R)));
            const double prob = tr.prob_of(k, i);
            double l2 = 0.0;
            for (int i_l = 0; i_l < tr.d; ++i_l) l2 += tr.L_at(k, i, i_l).squaredNorm();
            rep.sum_L_sq += prob * l2 * tr.dt;
            if (tr.num_marks > 0) {
                Matrix jump_quad = Matrix::Zero(tr.m, tr.m);
                double r2 = 0.0;
                for (int e = 0; e < tr.num_marks; ++e) {
                    const double nu_e = coeffs.marks.weight(static_cast<std::size_t>(e));
                    const Matrix KR = K + R[static_cast<std::size_t>(e)];
                    rep.min_K_plus_R_eig = std::min(rep.min_K_plus_R_eig, min_eigenvalue(KR));
                    jump_quad.noalias() +=
                        nu_e * (en.s.F[static_cast<std::size_t>(e)].transpose() * KR *
                                en.s.F[static_cast<std::size_t>(e)]);
                    r2 += nu_e * R[static_cast<std::size_t>(e)].squaredNorm();
                }
                rep.min_jump_quad_eig =
                    std::min(rep.min_jump_quad_eig, min_eigenvalue(jump_quad));
                rep.sum_R_sq += prob * r2 * tr.dt;
            }
        }
    }
    return rep;
}

NodePolicy optimal_node_policy(const LatticeTree& tree) {
    const LatticeTree* tp = &tree;
    return [tp](int level, long node, const Vector& x) {
        return Vector(tp->gain_at(level, node) * x);
    };
}

MartingaleReport submartingale_check(const LatticeTree& tr, const CoefficientSet& coeffs,
                                     const Vector& x0, const NodePolicy& policy) {
    require_induced(tr, "submartingale_check");
    if (tr.collapsed)
        throw std::invalid_argument(
            "submartingale_check: needs an explicit tree (per-path states); "
            "build with force_explicit");
    if (x0.size() != tr.n) throw DimensionError("submartingale_check: x0 has wrong size");
    const std::vector<LevelCache> cache = build_cache(tr, coeffs);

    MartingaleReport rep;
    rep.min_margin = std::numeric_limits<double>::infinity();
    std::vector<Vector> cur{x0};
    std::vector<Vector> next;
    Vector z(tr.n);
    for (int k = 0; k < tr.nt; ++k) {
        next.assign(static_cast<std::size_t>(tr.level_size[static_cast<std::size_t>(k) + 1]),
                    Vector());
        const long size = tr.level_size[static_cast<std::size_t>(k)];
        for (long i = 0; i < size; ++i) {
            const Vector& x = cur[static_cast<std::size_t>(i)];
            const Vector u = policy(k, i, x);
            if (u.size() != tr.m)
                throw DimensionError("submartingale_check: policy returned control of size " +
                                     std::to_string(u.size()));
            const LevelEntry& en = cache[static_cast<std::size_t>(k)].at(tr.state_of(k, i));
            double margin = running_cost(en.s, x, u) * tr.dt - x.dot(tr.K_at(k, i) * x);
            for (int b = 0; b < tr.n_branch; ++b) {
                z.noalias() = en.P[static_cast<std::size_t>(b)] * x;
                z.noalias() += en.S[static_cast<std::size_t>(b)] * u;
                const long ch = tr.child(k, i, b);
                margin += tr.branch_prob[static_cast<std::size_t>(b)] *
                          z.dot(tr.K_at(k + 1, ch) * z);
                next[static_cast<std::size_t>(ch)] = z;
            }
            rep.min_margin = std::min(rep.min_margin, margin);
            rep.max_abs_margin = std::max(rep.max_abs_margin, std::abs(margin));
            ++rep.nodes;
        }
        cur.swap(next);
    }
    return rep;
}

FeedbackLaw lattice_feedback(const LatticeTree& tr, const CoefficientSet& coeffs) {
    require_induced(tr, "lattice_feedback");
    if (tr.path_dependent)
        throw CoefficientError(
            "lattice_feedback: path-dependent trees have no single time-indexed gain");

    std::vector<double> times = tr.times;
    std::vector<Matrix> gains, hessians, values;
    gains.reserve(times.size());
    hessians.reserve(times.size());
    values.reserve(times.size());
    const std::vector<Matrix> Rz(static_cast<std::size_t>(tr.num_marks),
                                 Matrix::Zero(tr.n, tr.n));
    for (int k = 0; k <= tr.nt; ++k) {
        const Matrix K = tr.K_at(k, 0);
        values.push_back(K);
        gains.push_back(k < tr.nt ? Matrix(tr.gain_at(k, 0)) : Matrix(tr.gain_at(tr.nt - 1, 0)));
        const CoefficientSlice s = coeffs.slice(tr.times[static_cast<std::size_t>(k)], 0, 0);
        hessians.push_back(symmetrized(control_hessian(s, K, Rz)));
    }
    return feedback_from_tables(std::move(times), std::move(gains), std::move(hessians),
                                std::move(values),
                                "lattice with " + std::to_string(tr.nt) + " steps" +
                                    (tr.collapsed ? " (collapsed)" : ""));
}

void write_tree_csv(std::ostream& out, const LatticeTree& tr, long max_rows) {
    require_decomposed(tr, "write_tree_csv");
    const int n = tr.n;
    out << "level,node,t";
    for (int r = 0; r < n; ++r)
        for (int c = 0; c <= r; ++c) out << ",K_" << r << "_" << c;
    for (int r = 0; r < tr.m; ++r)
        for (int c = 0; c < n; ++c) out << ",gain_" << r << "_" << c;
    for (int i = 0; i < tr.d; ++i)
        for (int r = 0; r < n; ++r)
            for (int c = 0; c <= r; ++c) out << ",L" << i + 1 << "_" << r << "_" << c;
    for (int e = 0; e < tr.num_marks; ++e)
        for (int r = 0; r < n; ++r)
            for (int c = 0; c <= r; ++c) out << ",R" << e << "_" << r << "_" << c;
    for (int r = 0; r < n; ++r)
        for (int c = 0; c <= r; ++c) out << ",k_inc_" << r << "_" << c;
    out << ",proj_residual\n";

    long rows = 0;
    auto emit_lower = [&](const Eigen::Map<const Matrix>& Mx) {
        for (int r = 0; r < n; ++r)
            for (int c = 0; c <= r; ++c) out << ',' << format_double(Mx(r, c));
    };
    for (int k = 0; k <= tr.nt && rows < max_rows; ++k) {
        const long size = tr.level_size[static_cast<std::size_t>(k)];
        for (long i = 0; i < size && rows < max_rows; ++i, ++rows) {
            out << k << ',' << i << ',' << format_double(tr.times[static_cast<std::size_t>(k)]);
            emit_lower(tr.K_at(k, i));
            if (k < tr.nt) {
                const auto gain = tr.gain_at(k, i);
                for (int r = 0; r < tr.m; ++r)
                    for (int c = 0; c < n; ++c) out << ',' << format_double(gain(r, c));
                for (int i_l = 0; i_l < tr.d; ++i_l) emit_lower(tr.L_at(k, i, i_l));
                for (int e = 0; e < tr.num_marks; ++e) emit_lower(tr.R_at(k, i, e));
                emit_lower(tr.k_increment_at(k, i));
                out << ',' << format_double(tr.proj_residual_at(k, i));
            } else {
                const int blocks = tr.d + tr.num_marks + 1;
                const int cells = tr.m * n + blocks * (n * (n + 1)) / 2 + 1;
                for (int c = 0; c < cells; ++c) out << ',';
            }
            out << '\n';
        }
    }
}

}  // namespace rjump
