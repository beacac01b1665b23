#include <doctest.h>

#include <cmath>
#include <sstream>
#include <stdexcept>
#include <vector>

#include "rjump/errors.hpp"
#include "rjump/lattice.hpp"
#include "rjump/riccati.hpp"
#include "rjump/rng.hpp"
#include "test_util.hpp"

using namespace rjump;
using testutil::m1;
using testutil::Scalar;

namespace {

// One-step closed form: dt = 1, A = 0, B = Q = N = M = 1 gives
// K0 = min_u [1 + u^2 + (x + u)^2] / x^2 = 3/2 at u = -x/2.
CoefficientSet hand_set() {
    Scalar sc;
    sc.B = 1.0;
    sc.Q = 1.0;
    sc.N = 1.0;
    sc.M = 1.0;
    sc.delta = 0.5;
    return sc.build();
}

// Scalar model with every channel active on a short horizon.
CoefficientSet jump2_set() {
    Scalar sc;
    sc.A = 0.2;
    sc.B = 1.0;
    sc.Q = 1.0;
    sc.N = 1.0;
    sc.M = 1.0;
    sc.T = 0.5;
    sc.delta = 0.5;
    sc.C = {0.3};
    sc.D = {0.1};
    sc.E = {0.4};
    sc.F = {0.2};
    sc.nu = {1.0};
    return sc.build();
}

// State weight that switches on the sign of the first Brownian step.
CoefficientSet qswitch_set() {
    Scalar sc;
    sc.B = 1.0;
    sc.Q = 1.0;
    sc.N = 1.0;
    sc.M = 1.0;
    sc.T = 0.5;
    sc.delta = 0.5;
    sc.C = {0.3};
    sc.D = {0.0};
    auto c = sc.build();
    c.Q = Coefficient::path_switch(PathSwitchKind::SignOfFirstBrownianStep, m1(1.5), m1(0.5));
    return c;
}

// Drift that changes after the first jump; no Brownian channel.
CoefficientSet ajump_set() {
    Scalar sc;
    sc.B = 1.0;
    sc.Q = 1.0;
    sc.N = 1.0;
    sc.M = 1.0;
    sc.T = 0.5;
    sc.delta = 0.5;
    sc.E = {0.3};
    sc.F = {0.1};
    sc.nu = {1.0};
    auto c = sc.build();
    c.A = Coefficient::path_switch(PathSwitchKind::AfterFirstJump, m1(0.2), m1(-0.4));
    return c;
}

LatticeTree built(const CoefficientSet& c, int nt, bool force = false) {
    LatticeSpec spec;
    spec.nt = nt;
    spec.force_explicit = force;
    auto tree = build_tree(c, spec);
    backward_induction(tree, c);
    doob_decompose(tree, c);
    return tree;
}

std::vector<double> fine_grid(double lo, double hi, double step) {
    std::vector<double> g;
    for (double u = lo; u <= hi + 1e-12; u += step) g.push_back(u);
    return g;
}

NodePolicy random_node_policy(int trial, int m) {
    return [trial, m](int level, long node, const Vector& x) {
        PathRng rng(static_cast<std::uint64_t>(9000 + trial),
                    static_cast<std::uint64_t>(level) * 1000003ULL +
                        static_cast<std::uint64_t>(node));
        Vector u(m);
        for (int j = 0; j < m; ++j)
            u(j) = 0.7 * (2.0 * rng.uniform01() - 1.0) +
                   0.5 * (2.0 * rng.uniform01() - 1.0) * x(0);
        return u;
    };
}

}  // namespace

TEST_CASE("one-step hand example: K0 = 1.5, gain = -1/2") {
    const auto c = hand_set();
    auto tree = built(c, 1);
    CHECK(tree.collapsed);
    CHECK(tree.dt == 1.0);
    CHECK(std::abs(tree.K_at(0, 0)(0, 0) - 1.5) <= 1e-12);
    CHECK(std::abs(tree.gain_at(0, 0)(0, 0) + 0.5) <= 1e-12);
    CHECK((tree.K_at(1, 0) - m1(1.0)).norm() == 0.0);

    Vector x0 = m1(1.0).col(0);
    CHECK(tree.node_value(0, 0, x0) == doctest::Approx(1.5).epsilon(1e-12));

    // Exhaustive control search on a fine grid reproduces the closed form.
    const double bf = brute_force_value(tree, c, x0, fine_grid(-2.0, 2.0, 1e-3));
    CHECK(bf >= tree.node_value(0, 0, x0) - 1e-9);
    CHECK(std::abs(bf - 1.5) <= 1e-6);
}

TEST_CASE("tree shapes and probabilities") {
    // d = 1, no marks, two steps, explicit: 1 + 2 + 4 nodes.
    Scalar diff;
    diff.B = 1.0;
    diff.Q = 1.0;
    diff.M = 1.0;
    diff.delta = 0.5;
    diff.C = {0.4};
    diff.D = {0.0};
    LatticeSpec spec;
    spec.nt = 2;
    spec.force_explicit = true;
    auto two = build_tree(diff.build(), spec);
    CHECK(two.n_branch == 2);
    CHECK(two.level_size == std::vector<long>{1, 2, 4});
    CHECK(two.total_nodes() == 7);
    CHECK_FALSE(two.collapsed);

    // d = 1 plus one mark with nu dt = 0.5: four branches, 1 + 4 nodes.
    Scalar jm = diff;
    jm.E = {0.3};
    jm.F = {0.0};
    jm.nu = {0.5};
    spec.nt = 1;
    auto five = build_tree(jm.build(), spec);
    CHECK(five.n_branch == 4);
    CHECK(five.total_nodes() == 5);
    double total = 0.0;
    for (double p : five.branch_prob) total += p;
    CHECK(total == doctest::Approx(1.0).epsilon(1e-14));
    // sign weight 1/2, jump probability nu dt = 1/2: every branch has mass 1/4.
    for (double p : five.branch_prob) CHECK(p == doctest::Approx(0.25).epsilon(1e-14));

    // Deterministic sets collapse to a chain unless forced.
    auto chain = build_tree(jump2_set(), LatticeSpec{.nt = 4});
    CHECK(chain.collapsed);
    CHECK(chain.total_nodes() == 5);
    for (long sz : chain.level_size) CHECK(sz == 1);

    // Path-dependent coefficients force per-history nodes.
    auto pd = build_tree(qswitch_set(), LatticeSpec{.nt = 2});
    CHECK_FALSE(pd.collapsed);
    CHECK(pd.path_dependent);
    CHECK(pd.total_nodes() == 7);
}

TEST_CASE("two-step jump tree: brute force matches induction") {
    const auto c = jump2_set();
    auto tree = built(c, 2, true);
    Vector x0 = m1(1.0).col(0);
    const double dp = tree.node_value(0, 0, x0);
    const double bf = brute_force_value(tree, c, x0, fine_grid(-1.5, 1.5, 0.05));
    CHECK(bf >= dp - 1e-9);
    CHECK(bf - dp <= 0.01 * (1.0 + std::abs(dp)));
}

TEST_CASE("two-step path-dependent tree: brute force matches induction") {
    const auto c = qswitch_set();
    auto tree = built(c, 2);
    Vector x0 = m1(1.0).col(0);
    const double dp = tree.node_value(0, 0, x0);
    const double bf = brute_force_value(tree, c, x0, fine_grid(-1.5, 1.5, 0.05));
    CHECK(bf >= dp - 1e-9);
    CHECK(bf - dp <= 0.01 * (1.0 + std::abs(dp)));
}

TEST_CASE("deterministic trees have a degenerate decomposition") {
    const auto c = jump2_set();
    auto tree = built(c, 4);
    double scale = 1.0;
    for (int k = 0; k <= tree.nt; ++k)
        scale = std::max(scale, tree.K_at(k, 0).cwiseAbs().maxCoeff());
    for (int k = 0; k < tree.nt; ++k) {
        CHECK(tree.L_at(k, 0, 0).norm() <= 1e-12 * scale);
        CHECK(tree.R_at(k, 0, 0).norm() <= 1e-12 * scale);
        CHECK(tree.proj_residual_at(k, 0) <= 1e-12 * scale);
        // With one node per level the predictable increment is the plain
        // difference to the next level.
        const Matrix expect = tree.K_at(k, 0) - tree.K_at(k + 1, 0);
        CHECK((tree.k_increment_at(k, 0) - expect).norm() <= 1e-13 * scale);
    }
}

TEST_CASE("explicit expansion of a deterministic tree changes nothing") {
    const auto c = jump2_set();
    auto chain = built(c, 3);
    auto full = built(c, 3, true);
    CHECK_FALSE(chain.total_nodes() == full.total_nodes());
    for (int k = 0; k <= 3; ++k) {
        const Matrix ref = chain.K_at(k, 0);
        for (long i = 0; i < full.level_size[static_cast<std::size_t>(k)]; ++i)
            CHECK((full.K_at(k, i) - ref).cwiseAbs().maxCoeff() <= 1e-12);
    }
    for (int k = 0; k < 3; ++k)
        for (long i = 0; i < full.level_size[static_cast<std::size_t>(k)]; ++i) {
            CHECK(full.L_at(k, i, 0).norm() <= 1e-12);
            CHECK(full.R_at(k, i, 0).norm() <= 1e-12);
        }
}

TEST_CASE("Brownian loading is the signed half-difference of the children") {
    const auto c = qswitch_set();
    auto tree = built(c, 2);
    // Branch index equals the sign mask when there are no marks: child 1 is
    // the s = +1 move, child 0 the s = -1 move.
    const Matrix k_plus = tree.K_at(1, tree.child(0, 0, 1));
    const Matrix k_minus = tree.K_at(1, tree.child(0, 0, 0));
    const Matrix expect = (k_plus - k_minus) / (2.0 * std::sqrt(tree.dt));
    CHECK((tree.L_at(0, 0, 0) - expect).norm() <= 1e-13);
    CHECK(expect.norm() > 1e-3);  // the switch makes it genuinely nonzero
}

TEST_CASE("jump loading is the jump of K at the node (d = 0)") {
    const auto c = ajump_set();
    auto tree = built(c, 2);
    REQUIRE(tree.n_branch == 2);  // no-jump and jump branches only
    const Matrix k_none = tree.K_at(1, tree.child(0, 0, 0));
    const Matrix k_jump = tree.K_at(1, tree.child(0, 0, 1));
    CHECK((tree.R_at(0, 0, 0) - (k_jump - k_none)).norm() <= 1e-13);
    CHECK((k_jump - k_none).norm() > 1e-4);

    // Two branches, two basis functionals: the projection is exact.
    for (int k = 0; k < tree.nt; ++k)
        for (long i = 0; i < tree.level_size[static_cast<std::size_t>(k)]; ++i)
            CHECK(tree.proj_residual_at(k, i) <= 1e-12);

    // The predictable increment closes the one-step balance.
    Matrix mean = Matrix::Zero(1, 1);
    for (int b = 0; b < tree.n_branch; ++b)
        mean += tree.branch_prob[static_cast<std::size_t>(b)] *
                tree.K_at(1, tree.child(0, 0, b));
    CHECK((tree.k_increment_at(0, 0) - (tree.K_at(0, 0) - mean)).norm() <= 1e-13);
}

TEST_CASE("structure report floors and sums") {
    auto det = built(jump2_set(), 4);
    const auto sd = check_structure(det, jump2_set());
    CHECK(sd.floors_ok());
    CHECK(sd.min_hessian_eig > 0.0);
    CHECK(sd.sum_L_sq == 0.0);
    CHECK(sd.sum_R_sq == 0.0);
    CHECK(sd.nodes > 0);

    auto qs = built(qswitch_set(), 4);
    const auto sq = check_structure(qs, qswitch_set());
    CHECK(sq.floors_ok());
    CHECK(sq.sum_L_sq > 0.0);
    CHECK(std::isfinite(sq.sum_L_sq));

    auto aj = built(ajump_set(), 4);
    const auto sa = check_structure(aj, ajump_set());
    CHECK(sa.floors_ok());
    CHECK(sa.sum_R_sq > 0.0);
    CHECK(std::isfinite(sa.sum_R_sq));
}

TEST_CASE("generator residual shrinks at first order") {
    const auto c = jump2_set();
    auto coarse = built(c, 50);
    auto fine = built(c, 100);
    const auto rc = generator_residual(coarse, c);
    const auto rf = generator_residual(fine, c);
    CHECK(rf.max_residual > 0.0);
    const double ratio = rc.max_residual / rf.max_residual;
    CHECK(ratio >= 1.5);
    CHECK(ratio <= 3.0);
    CHECK(rc.mean_residual <= rc.max_residual);
    CHECK(rc.nodes == 50);
}

TEST_CASE("value process is a submartingale for adapted policies") {
    const auto c = jump2_set();
    auto tree = built(c, 2, true);
    Vector x0 = m1(1.0).col(0);

    for (int trial = 0; trial < 20; ++trial) {
        const auto rep = submartingale_check(tree, c, x0, random_node_policy(trial, 1));
        INFO("trial " << trial << " min margin " << rep.min_margin);
        CHECK(rep.min_margin >= -1e-9);
        CHECK(rep.nodes > 0);
    }

    const auto opt = submartingale_check(tree, c, x0, optimal_node_policy(tree));
    CHECK(opt.max_abs_margin <= 1e-10 * (1.0 + std::abs(tree.node_value(0, 0, x0))));
}

TEST_CASE("submartingale margins also hold on path-dependent trees") {
    const auto c = qswitch_set();
    auto tree = built(c, 3);
    Vector x0 = m1(1.0).col(0);
    for (int trial = 0; trial < 20; ++trial) {
        const auto rep = submartingale_check(tree, c, x0, random_node_policy(100 + trial, 1));
        CHECK(rep.min_margin >= -1e-9);
    }
    const auto opt = submartingale_check(tree, c, x0, optimal_node_policy(tree));
    CHECK(opt.max_abs_margin <= 1e-10 * (1.0 + std::abs(tree.node_value(0, 0, x0))));
}

TEST_CASE("submartingale check needs an explicit tree") {
    const auto c = jump2_set();
    auto tree = built(c, 2);
    REQUIRE(tree.collapsed);
    Vector x0 = m1(1.0).col(0);
    testutil::check_throws_containing<std::invalid_argument>(
        [&] { (void)submartingale_check(tree, c, x0, optimal_node_policy(tree)); },
        "explicit");
}

TEST_CASE("node values are even quadratic forms") {
    const auto c = jump2_set();
    auto tree = built(c, 2, true);
    Vector x = m1(1.3).col(0);
    const double v = tree.node_value(0, 0, x);
    CHECK(tree.node_value(0, 0, Vector(2.0 * x)) == 4.0 * v);
    CHECK(tree.node_value(0, 0, Vector(-x)) == v);
    CHECK(tree.node_value(0, 0, Vector(3.0 * x)) ==
          doctest::Approx(9.0 * v).epsilon(1e-12));
    CHECK_THROWS_AS((void)tree.node_value(0, 0, Vector::Ones(2)), DimensionError);
}

TEST_CASE("lattice feedback law approaches the continuous gain") {
    const auto c = jump2_set();
    auto tree = built(c, 8);
    const auto law = lattice_feedback(tree, c);
    CHECK(law.source().find("lattice") != std::string::npos);
    CHECK(law.node_times().size() == 9);

    const auto grid = solve_riccati_ide(c, 400);
    const auto cont = synthesize_feedback(grid, c);
    const double tol = 5.0 * tree.dt * (1.0 + std::abs(cont.gain(0.0)(0, 0)));
    CHECK(std::abs(law.gain(0.0)(0, 0) - cont.gain(0.0)(0, 0)) <= tol);
    CHECK(std::abs(law.value_matrix(0.0)(0, 0) - grid.K.front()(0, 0)) <=
          5.0 * tree.dt * (1.0 + grid.K.front()(0, 0)));

    auto pd = built(qswitch_set(), 2);
    CHECK_THROWS_AS((void)lattice_feedback(pd, qswitch_set()), CoefficientError);
}

TEST_CASE("node addresses describe the history") {
    const auto c = jump2_set();
    auto chain = built(c, 2);
    CHECK(node_address(chain, 1, 0).find("collapsed") != std::string::npos);

    auto full = built(c, 2, true);
    const auto addr = node_address(full, 2, 5);
    CHECK(addr.find("level 2") != std::string::npos);
    CHECK(addr.find("s=") != std::string::npos);
}

TEST_CASE("tree CSV export") {
    const auto c = jump2_set();
    auto tree = built(c, 2, true);
    std::stringstream out;
    write_tree_csv(out, tree);
    const std::string text = out.str();
    CHECK(text.rfind("level,node,t,K_0_0,gain_0_0,L1_0_0,R0_0_0,k_inc_0_0,proj_residual",
                     0) == 0);
    const auto lines = static_cast<long>(std::count(text.begin(), text.end(), '\n'));
    CHECK(lines == tree.total_nodes() + 1);

    std::stringstream capped;
    write_tree_csv(capped, tree, 3);
    const std::string ctext = capped.str();
    CHECK(std::count(ctext.begin(), ctext.end(), '\n') == 4);
}

TEST_CASE("stage gating of tree accessors") {
    const auto c = jump2_set();
    LatticeSpec spec;
    spec.nt = 2;
    auto tree = build_tree(c, spec);
    CHECK_THROWS_AS((void)tree.K_at(0, 0), std::logic_error);
    std::stringstream out;
    CHECK_THROWS_AS(write_tree_csv(out, tree), std::logic_error);
    backward_induction(tree, c);
    CHECK_THROWS_AS((void)tree.L_at(0, 0, 0), std::logic_error);
    doob_decompose(tree, c);
    CHECK(tree.L_at(0, 0, 0).norm() >= 0.0);
}

TEST_CASE("build_tree input validation") {
    // nu dt must stay below one.
    Scalar hot;
    hot.Q = 1.0;
    hot.M = 1.0;
    hot.delta = 0.5;
    hot.E = {0.1};
    hot.F = {0.0};
    hot.nu = {1.0};
    CHECK_THROWS_AS((void)build_tree(hot.build(), LatticeSpec{.nt = 1}),
                    std::invalid_argument);

    // Coarse jump probability only warns.
    hot.T = 0.5;
    auto warned = build_tree(hot.build(), LatticeSpec{.nt = 2});
    REQUIRE(!warned.warnings.empty());
    CHECK(warned.warnings.front().find("0.2") != std::string::npos);

    CHECK_THROWS_AS((void)build_tree(jump2_set(), LatticeSpec{.nt = 0}),
                    std::invalid_argument);

    // Node budget on explicit trees.
    LatticeSpec tight;
    tight.nt = 3;
    tight.force_explicit = true;
    tight.node_cap = 50;
    CHECK_THROWS_AS((void)build_tree(jump2_set(), tight), LatticeOverflow);

    // Terminal weight must be PSD.
    auto bad_m = jump2_set();
    bad_m.M = m1(-1.0);
    testutil::check_throws_containing<CoefficientError>(
        [&] { (void)build_tree(bad_m, LatticeSpec{.nt = 2}); }, "M not PSD");

    // Assumption violations carry the validator summary.
    auto low_n = jump2_set();
    low_n.N = Coefficient::constant(m1(0.1));  // below delta = 0.5
    testutil::check_throws_containing<CoefficientError>(
        [&] { (void)build_tree(low_n, LatticeSpec{.nt = 2}); }, "N below delta");

    // Per-variant validation for path functionals.
    auto bad_variant = qswitch_set();
    bad_variant.Q =
        Coefficient::path_switch(PathSwitchKind::SignOfFirstBrownianStep, m1(1.0), m1(-1.0));
    CHECK_THROWS_AS((void)build_tree(bad_variant, LatticeSpec{.nt = 2}), CoefficientError);
}

TEST_CASE("brute force guards") {
    const auto c = jump2_set();
    auto small = built(c, 2, true);
    Vector x0 = m1(1.0).col(0);
    CHECK_THROWS_AS((void)brute_force_value(small, c, x0, {}), std::invalid_argument);
    CHECK_THROWS_AS((void)brute_force_value(small, c, Vector::Ones(2), {0.0}),
                    DimensionError);

    auto deep = built(c, 8);
    CHECK_THROWS_AS((void)brute_force_value(deep, c, x0, fine_grid(-2.0, 2.0, 0.25)),
                    LatticeOverflow);
}
