#include <doctest.h>

#include <cmath>
#include <stdexcept>
#include <vector>

#include "rjump/control.hpp"
#include "rjump/errors.hpp"
#include "rjump/model.hpp"
#include "rjump/riccati.hpp"
#include "test_util.hpp"

using namespace rjump;
using testutil::m1;
using testutil::Scalar;

namespace {

CoefficientSet tanh_set() {
    Scalar sc;
    sc.B = 1.0;
    sc.Q = 1.0;
    sc.N = 1.0;
    sc.M = 0.0;
    sc.delta = 0.5;
    return sc.build();
}

// Fully coupled scalar jump model: control acts on drift, diffusion and jumps.
CoefficientSet jump_control_set() {
    Scalar sc;
    sc.A = 0.1;
    sc.B = 1.0;
    sc.Q = 1.0;
    sc.N = 1.0;
    sc.M = 1.0;
    sc.delta = 0.5;
    sc.C = {0.3};
    sc.D = {0.1};
    sc.E = {0.5};
    sc.F = {0.5};
    sc.nu = {1.0};
    return sc.build();
}

SimConfig cfg_for(long paths, double dt, std::uint64_t seed, double x0 = 1.0) {
    SimConfig cfg;
    cfg.n_paths = paths;
    cfg.dt = dt;
    cfg.seed = seed;
    cfg.x0 = m1(x0).col(0);
    return cfg;
}

constexpr double kTanh1 = 0.7615941559557649;

}  // namespace

TEST_CASE("tanh feedback gain is -tanh(T - t)") {
    const auto c = tanh_set();
    const auto grid = solve_riccati_ide(c, 1000);
    const auto law = synthesize_feedback(grid, c);

    // Theta = -H^{-1} cross' with H = N = 1 and cross = K B = K.
    CHECK(law.gain(0.0)(0, 0) == doctest::Approx(-kTanh1).epsilon(1e-10));
    CHECK(law.gain(1.0)(0, 0) == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(law.hessian(0.5)(0, 0) == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(law.value_matrix(0.0)(0, 0) == doctest::Approx(kTanh1).epsilon(1e-10));
    CHECK(law.node_times().size() == 1001);
    CHECK(law.source().find("riccati grid") != std::string::npos);

    // Between nodes the interpolated gain stays within the node bracket.
    const double mid = law.gain(0.50037)(0, 0);
    CHECK(mid <= -std::tanh(1.0 - 0.501) + 1e-6);
    CHECK(mid >= -std::tanh(1.0 - 0.500) - 1e-6);
}

TEST_CASE("value is the quadratic form of the solved matrix") {
    const auto c = tanh_set();
    const auto law = synthesize_feedback(solve_riccati_ide(c, 500), c);
    Vector x = m1(1.5).col(0);
    CHECK(law.value(0.0, x) == doctest::Approx(kTanh1 * 2.25).epsilon(1e-10));

    // Quadratic scaling: doubling the state exactly quadruples the value.
    Vector x2 = 2.0 * x;
    CHECK(law.value(0.0, x2) == 4.0 * law.value(0.0, x));
}

TEST_CASE("no control channels means an exactly zero gain") {
    Scalar sc;
    sc.A = 0.0;
    sc.B = 0.0;
    sc.Q = 0.0;
    sc.N = 1.0;
    sc.M = 1.0;
    sc.delta = 0.5;
    sc.E = {1.0};
    sc.F = {0.0};
    sc.nu = {1.0};
    const auto c = sc.build();
    const auto law = synthesize_feedback(solve_riccati_ide(c, 200), c);
    for (double t : {0.0, 0.25, 0.6180339887, 1.0})
        CHECK(law.gain(t).cwiseAbs().maxCoeff() == 0.0);

    // Closed loop under the zero gain replays the uncontrolled dynamics
    // bit for bit.
    const auto cfg = cfg_for(200, 5e-3, 13);
    const auto closed = simulate_closed_loop(c, law, cfg);
    const auto open = simulate_paths(c, testutil::zero_policy(), cfg);
    for (long p = 0; p < cfg.n_paths; ++p) {
        CHECK(closed.running_cost[static_cast<std::size_t>(p)] ==
              open.running_cost[static_cast<std::size_t>(p)]);
        CHECK(closed.terminal_cost[static_cast<std::size_t>(p)] ==
              open.terminal_cost[static_cast<std::size_t>(p)]);
    }
}

TEST_CASE("synthesized gain solves the pointwise minimization") {
    const auto c = jump_control_set();
    const auto grid = solve_riccati_ide(c, 400);
    const auto law = synthesize_feedback(grid, c);

    const std::vector<Matrix> L = {Matrix::Zero(1, 1)};
    const std::vector<Matrix> R = {Matrix::Zero(1, 1)};
    Vector x = m1(1.0).col(0);
    for (int j = 0; j < 20; ++j) {
        const std::size_t k = static_cast<std::size_t>(j) * 20;
        const double t = grid.times[k];
        const auto res = pointwise_minimizer(c, t, x, grid.K[k], L, R);
        CHECK(law.gain(t)(0, 0) == doctest::Approx(res.u(0)).epsilon(1e-12));
    }
}

TEST_CASE("closed-loop law and its exported policy simulate identically") {
    const auto c = jump_control_set();
    const auto law = synthesize_feedback(solve_riccati_ide(c, 400), c);
    const auto cfg = cfg_for(300, 2e-3, 29);
    const auto a = simulate_closed_loop(c, law, cfg);
    const auto b = simulate_paths(c, law.policy(), cfg);
    for (long p = 0; p < cfg.n_paths; ++p)
        CHECK(a.total_cost(p) == b.total_cost(p));
}

TEST_CASE("policy keeps its tables alive after the law is destroyed") {
    Policy p;
    {
        const auto c = tanh_set();
        const auto law = synthesize_feedback(solve_riccati_ide(c, 100), c);
        p = law.policy();
    }
    Vector x = m1(2.0).col(0), u = m1(0.0).col(0);
    p(0.0, x, u);
    CHECK(u(0) == doctest::Approx(-2.0 * kTanh1).epsilon(1e-8));
}

TEST_CASE("deterministic closed-loop cost matches the value formula") {
    const auto c = tanh_set();
    const auto law = synthesize_feedback(solve_riccati_ide(c, 1000), c);
    const auto cfg = cfg_for(256, 1e-3, 3);
    const auto bundle = simulate_closed_loop(c, law, cfg);
    const auto est = evaluate_cost(bundle);
    const double v = law.value(0.0, cfg.x0);

    // No noise: every path is identical bit for bit, so the spread is pure
    // summation round-off (the leaf sums are sequential, so the mean of
    // identical samples can land an ulp off), and the only systematic error
    // is the O(dt) integration bias.
    CHECK(est.std_error <= 1e-15 * (1.0 + std::abs(est.mean)));
    CHECK(std::abs(est.mean - v) <= 2.0 * cfg.dt * (1.0 + std::abs(v)));
}

TEST_CASE("gap at the optimum is exactly zero by construction") {
    const auto c = jump_control_set();
    const auto law = synthesize_feedback(solve_riccati_ide(c, 1000), c);
    const auto cfg = cfg_for(500, 1e-3, 7);
    const auto gap = optimality_gap(c, law, law.policy(), cfg);

    CHECK(gap.predicted.mean == 0.0);
    CHECK(gap.predicted.std_error == 0.0);
    const double v = gap.value_formula;
    CHECK(std::abs(gap.direct.mean) <=
          3.0 * gap.direct.std_error + 2.0 * cfg.dt * (1.0 + std::abs(v)));
}

TEST_CASE("gap under u = 0 reproduces the analytic tanh value") {
    const auto c = tanh_set();
    const auto law = synthesize_feedback(solve_riccati_ide(c, 1000), c);
    const auto cfg = cfg_for(4, 1e-3, 1);
    const auto gap = optimality_gap(c, law, testutil::zero_policy(), cfg);

    // Under u = 0 the state never moves, the cost is x0^2 T = 1, and the
    // value is tanh(1): the gap is 1 - tanh(1). The direct estimate is exact
    // up to round-off (trapezoid of a constant); the predictor integrates
    // tanh^2(1 - t) by a left rule and carries an O(dt) defect.
    const double expect = 1.0 - kTanh1;
    CHECK(gap.value_formula == doctest::Approx(kTanh1).epsilon(1e-10));
    CHECK(std::abs(gap.direct.mean - expect) <= 1e-9);
    CHECK(std::abs(gap.predicted.mean - expect) <= 1e-3);
    CHECK(gap.direct.std_error <= 1e-15 * (1.0 + std::abs(gap.direct.mean)));
}

TEST_CASE("gap scales quadratically with the initial state") {
    const auto c = tanh_set();
    const auto law = synthesize_feedback(solve_riccati_ide(c, 500), c);
    const auto g1 = optimality_gap(c, law, testutil::zero_policy(), cfg_for(2, 1e-3, 1, 1.0));
    const auto g2 = optimality_gap(c, law, testutil::zero_policy(), cfg_for(2, 1e-3, 1, 2.0));
    CHECK(g2.direct.mean == doctest::Approx(4.0 * g1.direct.mean).epsilon(1e-9));
    CHECK(g2.predicted.mean == doctest::Approx(4.0 * g1.predicted.mean).epsilon(1e-9));
}

TEST_CASE("perturbed policies are dominated and match the predictor") {
    const auto c = jump_control_set();
    const auto law = synthesize_feedback(solve_riccati_ide(c, 1000), c);
    const auto cfg = cfg_for(4000, 1e-3, 19);
    const double v = law.value(0.0, cfg.x0);
    const double bias = 2.0 * cfg.dt * (1.0 + std::abs(v));

    auto base = law.policy();
    Policy shifted = [base](double t, const Vector& x, Vector& u) {
        base(t, x, u);
        u.array() += 0.2;
    };
    Policy scaled = [base](double t, const Vector& x, Vector& u) {
        base(t, x, u);
        u *= 1.5;
    };

    for (const auto& alt : {shifted, scaled}) {
        const auto gap = optimality_gap(c, law, alt, cfg);
        CHECK(gap.direct.mean >= -3.0 * gap.direct.std_error - bias);
        CHECK(gap.predicted.mean >= 0.0);
        CHECK(std::abs(gap.direct.mean - gap.predicted.mean) <=
              3.0 * (gap.direct.std_error + gap.predicted.std_error) + bias);
    }
}

TEST_CASE("feedback_from_tables is piecewise constant from the left") {
    std::vector<double> times = {0.0, 0.5, 1.0};
    std::vector<Matrix> gains = {m1(-1.0), m1(-2.0), m1(-3.0)};
    std::vector<Matrix> hessians = {m1(1.0), m1(1.0), m1(1.0)};
    std::vector<Matrix> values = {m1(3.0), m1(2.0), m1(1.0)};
    const auto law = feedback_from_tables(times, gains, hessians, values, "tables");

    CHECK(law.gain(0.0)(0, 0) == -1.0);
    CHECK(law.gain(0.25)(0, 0) == -1.0);
    CHECK(law.gain(0.5)(0, 0) == -2.0);
    CHECK(law.gain(0.75)(0, 0) == -2.0);
    CHECK(law.gain(1.0)(0, 0) == -3.0);
    CHECK(law.value_matrix(0.6)(0, 0) == 2.0);
    CHECK(law.source() == "tables");
}

TEST_CASE("feedback_from_tables validates its inputs") {
    std::vector<Matrix> one = {m1(1.0)};
    std::vector<Matrix> two = {m1(1.0), m1(2.0)};
    CHECK_THROWS_AS(
        (void)feedback_from_tables({0.0, 1.0}, two, two, one, "bad"),
        std::invalid_argument);
    CHECK_THROWS_AS((void)feedback_from_tables({}, {}, {}, {}, "empty"),
                    std::invalid_argument);
    CHECK_THROWS_AS(
        (void)feedback_from_tables({0.5, 0.5}, two, two, two, "ties"),
        std::invalid_argument);
}
