#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <sstream>
#include <vector>

#include "rjump/errors.hpp"
#include "rjump/simulator.hpp"
#include "test_util.hpp"

using namespace rjump;
using testutil::m1;
using testutil::Scalar;

namespace {

SimConfig base_cfg(long paths, double dt, std::uint64_t seed) {
    SimConfig cfg;
    cfg.dt = dt;
    cfg.n_paths = paths;
    cfg.seed = seed;
    cfg.x0 = m1(1.0).col(0);
    return cfg;
}

// Geometric jump-diffusion: a = 0.1, c = 0.2, e = 0.5, nu = 1, u irrelevant.
CoefficientSet geometric_set() {
    Scalar sc;
    sc.A = 0.1;
    sc.B = 0.0;
    sc.Q = 0.0;
    sc.N = 1.0;
    sc.M = 1.0;
    sc.C = {0.2};
    sc.D = {0.0};
    sc.E = {0.5};
    sc.F = {0.0};
    sc.nu = {1.0};
    return sc.build();
}

}  // namespace

TEST_CASE("uniform_grid clips the last node to T") {
    const auto g = uniform_grid(0.0, 1.0, 0.3);
    REQUIRE(g.size() == 5);
    CHECK(g[0] == 0.0);
    CHECK(g[1] == doctest::Approx(0.3));
    CHECK(g[3] == doctest::Approx(0.9));
    CHECK(g.back() == 1.0);

    const auto exact = uniform_grid(0.0, 1.0, 0.25);
    REQUIRE(exact.size() == 5);
    CHECK(exact.back() == 1.0);
}

TEST_CASE("same configuration reproduces bit-identical bundles") {
    const auto c = geometric_set();
    const auto cfg = base_cfg(500, 1e-2, 11);
    const auto a = simulate_paths(c, testutil::zero_policy(), cfg);
    const auto b = simulate_paths(c, testutil::zero_policy(), cfg);
    REQUIRE(a.n_paths == b.n_paths);
    for (long p = 0; p < a.n_paths; ++p) {
        CHECK(a.running_cost[static_cast<std::size_t>(p)] ==
              b.running_cost[static_cast<std::size_t>(p)]);
        CHECK(a.terminal_state[static_cast<std::size_t>(p)](0) ==
              b.terminal_state[static_cast<std::size_t>(p)](0));
        CHECK(a.jump_count[static_cast<std::size_t>(p)] ==
              b.jump_count[static_cast<std::size_t>(p)]);
    }
}

TEST_CASE("results do not depend on the worker count") {
    const auto c = geometric_set();
    auto cfg = base_cfg(400, 1e-2, 7);
    const auto serial = simulate_paths(c, testutil::zero_policy(), cfg);
    cfg.threads = 4;
    const auto parallel = simulate_paths(c, testutil::zero_policy(), cfg);
    for (long p = 0; p < serial.n_paths; ++p) {
        CHECK(serial.terminal_state[static_cast<std::size_t>(p)](0) ==
              parallel.terminal_state[static_cast<std::size_t>(p)](0));
        CHECK(serial.running_cost[static_cast<std::size_t>(p)] ==
              parallel.running_cost[static_cast<std::size_t>(p)]);
    }
    CHECK(evaluate_cost(serial).mean == evaluate_cost(parallel).mean);
}

TEST_CASE("different seeds change the draw") {
    const auto c = geometric_set();
    const auto a = simulate_paths(c, testutil::zero_policy(), base_cfg(64, 1e-2, 1));
    const auto b = simulate_paths(c, testutil::zero_policy(), base_cfg(64, 1e-2, 2));
    bool any_diff = false;
    for (long p = 0; p < a.n_paths && !any_diff; ++p)
        any_diff = a.terminal_state[static_cast<std::size_t>(p)](0) !=
                   b.terminal_state[static_cast<std::size_t>(p)](0);
    CHECK(any_diff);
}

TEST_CASE("antithetic pairs negate the Brownian increments") {
    // Pure diffusion dX = 0.5 X dW: from the recorded states the normalized
    // increment per step is x_{k+1}/x_k - 1 = 0.5 dW_k, so the odd path of a
    // pair must mirror the even one.
    Scalar sc;
    sc.A = 0.0;
    sc.B = 0.0;
    sc.Q = 0.0;
    sc.N = 1.0;
    sc.M = 0.0;
    sc.C = {0.5};
    sc.D = {0.0};
    auto cfg = base_cfg(2, 0.05, 17);
    cfg.antithetic = true;
    cfg.record_paths = 2;
    const auto bundle = simulate_paths(sc.build(), testutil::zero_policy(), cfg);
    REQUIRE(bundle.records.size() == 2);
    const auto& even = bundle.records[0];
    const auto& odd = bundle.records[1];
    REQUIRE(even.times.size() == odd.times.size());
    for (std::size_t k = 0; k + 1 < even.times.size(); ++k) {
        const double dw_even = even.states[k + 1](0) / even.states[k](0) - 1.0;
        const double dw_odd = odd.states[k + 1](0) / odd.states[k](0) - 1.0;
        CHECK(dw_odd == doctest::Approx(-dw_even).epsilon(1e-12));
    }
}

TEST_CASE("jump counts match the intensity") {
    Scalar sc;
    sc.M = 0.0;
    sc.E = {0.0, 0.0};
    sc.F = {0.0, 0.0};
    sc.nu = {1.5, 0.5};  // total 2 on T = 1
    const auto bundle =
        simulate_paths(sc.build(), testutil::zero_policy(), base_cfg(4000, 1e-2, 23));
    std::vector<double> counts;
    counts.reserve(static_cast<std::size_t>(bundle.n_paths));
    for (long cnt : bundle.jump_count) counts.push_back(static_cast<double>(cnt));
    const auto est = estimate_mean(counts);
    CHECK(std::abs(est.mean - 2.0) <= 4.0 * est.std_error);

    // No marks: never a jump.
    Scalar none;
    none.M = 0.0;
    const auto quiet =
        simulate_paths(none.build(), testutil::zero_policy(), base_cfg(100, 1e-2, 23));
    for (long cnt : quiet.jump_count) CHECK(cnt == 0);
}

TEST_CASE("moment oracle closed forms (constant coefficients)") {
    const auto c = geometric_set();
    const auto mom = moment_oracle(c, 0.0, 1.0, 1.0);
    // E X_T = exp(a T), E X_T^2 = exp((2a + c^2 + nu e^2) T) = exp(0.49).
    CHECK(mom.first_moment == doctest::Approx(1.1051709180756477).epsilon(1e-12));
    CHECK(mom.second_moment == doctest::Approx(1.632316219955379).epsilon(1e-12));

    // Under feedback u = g x with b = 1, d = 0.1, f = 0.2 the rates shift to
    // a + b g and 2(a + b g) + (c + d g)^2 + nu (e + f g)^2.
    Scalar fb;
    fb.A = 0.1;
    fb.B = 1.0;
    fb.Q = 0.0;
    fb.N = 1.0;
    fb.M = 0.0;
    fb.C = {0.2};
    fb.D = {0.1};
    fb.E = {0.5};
    fb.F = {0.2};
    fb.nu = {1.0};
    const double g = -0.4;
    const auto m2 = moment_oracle(fb.build(), g, 1.0, 2.0);
    const double drift = 0.1 + g;
    const double rate2 = 2.0 * drift + std::pow(0.2 + 0.1 * g, 2) + std::pow(0.5 + 0.2 * g, 2);
    CHECK(m2.first_moment == doctest::Approx(2.0 * std::exp(drift)).epsilon(1e-12));
    CHECK(m2.second_moment == doctest::Approx(4.0 * std::exp(rate2)).epsilon(1e-12));
}

TEST_CASE("moment oracle integrates time-polynomial rates exactly") {
    CoefficientSet c;
    c.n = 1;
    c.m = 1;
    c.d = 1;
    c.A = Coefficient::polynomial({m1(0.2), m1(0.3)});  // a(t) = 0.2 + 0.3 t
    c.B = Coefficient::constant(m1(0.0));
    c.Q = Coefficient::constant(m1(0.0));
    c.N = Coefficient::constant(m1(1.0));
    c.C = {Coefficient::constant(m1(0.4))};
    c.D = {Coefficient::constant(m1(0.0))};
    c.M = m1(0.0);
    c.delta = 0.5;
    c.horizon = 1.0;

    const auto mom = moment_oracle(c, 0.0, 1.0, 1.0);
    const double ia = 0.2 + 0.3 / 2.0;  // integral of a over [0, 1]
    CHECK(mom.first_moment == doctest::Approx(std::exp(ia)).epsilon(1e-12));
    CHECK(mom.second_moment == doctest::Approx(std::exp(2.0 * ia + 0.16)).epsilon(1e-12));
}

TEST_CASE("Monte Carlo moments agree with the oracle") {
    const auto c = geometric_set();
    const auto cfg = base_cfg(20000, 2e-3, 31);
    const auto bundle = simulate_paths(c, testutil::zero_policy(), cfg);
    const auto oracle = moment_oracle(c, 0.0, 1.0, 1.0);

    const auto m1est = terminal_moment(bundle, 1);
    const auto m2est = terminal_moment(bundle, 2);
    const double allowance1 = 2.0 * cfg.dt * (1.0 + std::abs(oracle.first_moment));
    const double allowance2 = 2.0 * cfg.dt * (1.0 + std::abs(oracle.second_moment));
    CHECK(std::abs(m1est.mean - oracle.first_moment) <=
          3.0 * m1est.std_error + allowance1);
    CHECK(std::abs(m2est.mean - oracle.second_moment) <=
          3.0 * m2est.std_error + allowance2);
}

TEST_CASE("aux integrand uses the left-endpoint rule over the whole horizon") {
    const auto c = geometric_set();
    const auto bundle = simulate_paths(
        c, testutil::zero_policy(), base_cfg(50, 1e-2, 3),
        [](double, const Vector&, const Vector&) { return 1.0; });
    REQUIRE(!bundle.aux_integral.empty());
    for (double v : bundle.aux_integral) CHECK(v == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(evaluate_aux(bundle).mean == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("recorded paths are structurally consistent") {
    const auto c = geometric_set();
    auto cfg = base_cfg(10, 5e-2, 41);
    cfg.record_paths = 3;
    const auto bundle = simulate_paths(c, testutil::constant_policy(0.25), cfg);
    REQUIRE(bundle.records.size() == 3);
    for (std::size_t p = 0; p < 3; ++p) {
        const auto& rec = bundle.records[p];
        REQUIRE(rec.times.size() >= 2);
        CHECK(rec.times.front() == 0.0);
        CHECK(rec.times.back() == 1.0);
        CHECK(rec.states.size() == rec.times.size());
        CHECK(rec.jump_mark.size() == rec.times.size());
        CHECK(rec.jump_times.size() ==
              static_cast<std::size_t>(bundle.jump_count[static_cast<long>(p)]));
        CHECK(rec.jump_marks.size() == rec.jump_times.size());
        for (std::size_t k = 1; k < rec.times.size(); ++k)
            CHECK(rec.times[k] > rec.times[k - 1]);
        long marked = 0;
        for (int mk : rec.jump_mark)
            if (mk >= 0) ++marked;
        CHECK(marked == bundle.jump_count[static_cast<long>(p)]);
    }
}

TEST_CASE("cost estimators agree with a direct reduction") {
    const auto c = geometric_set();
    const auto bundle = simulate_paths(c, testutil::zero_policy(), base_cfg(256, 1e-2, 5));
    double total = 0.0;
    for (long p = 0; p < bundle.n_paths; ++p) total += bundle.total_cost(p);
    const auto est = evaluate_cost(bundle);
    CHECK(est.n_paths == 256);
    CHECK(est.mean == doctest::Approx(total / 256.0).epsilon(1e-13));
    CHECK(est.std_error > 0.0);
}

TEST_CASE("simulate_paths input validation") {
    const auto c = geometric_set();
    auto cfg = base_cfg(4, 1e-2, 1);
    cfg.x0 = Vector::Ones(2);
    CHECK_THROWS_AS((void)simulate_paths(c, testutil::zero_policy(), cfg),
                    DimensionError);

    auto bad_policy = [](double, const Vector&, Vector& u) { u = Vector::Ones(3); };
    CHECK_THROWS_AS((void)simulate_paths(c, bad_policy, base_cfg(4, 1e-2, 1)),
                    DimensionError);

    Scalar sc;
    sc.Q = 1.0;
    auto pd = sc.build();
    pd.Q = Coefficient::path_switch(PathSwitchKind::SignOfFirstBrownianStep, m1(1.0), m1(2.0));
    CHECK_THROWS_AS((void)simulate_paths(pd, testutil::zero_policy(), base_cfg(4, 1e-2, 1)),
                    CoefficientError);
}

TEST_CASE("moment oracle input validation") {
    Scalar sc;
    sc.Q = 1.0;
    auto pd = sc.build();
    pd.A = Coefficient::path_switch(PathSwitchKind::AfterFirstJump, m1(0.1), m1(0.2));
    CHECK_THROWS_AS((void)moment_oracle(pd, 0.0, 1.0, 1.0), CoefficientError);

    CoefficientSet two;
    two.n = 2;
    two.m = 1;
    two.d = 0;
    two.A = Coefficient::constant(Matrix::Zero(2, 2));
    two.B = Coefficient::constant(Matrix::Zero(2, 1));
    two.Q = Coefficient::constant(Matrix::Identity(2, 2));
    two.N = Coefficient::constant(m1(1.0));
    two.M = Matrix::Identity(2, 2);
    two.delta = 0.5;
    two.horizon = 1.0;
    CHECK_THROWS_AS((void)moment_oracle(two, 0.0, 1.0, 1.0), DimensionError);
}

TEST_CASE("paths CSV smoke") {
    const auto c = geometric_set();
    auto cfg = base_cfg(5, 0.1, 2);
    cfg.record_paths = 5;
    const auto bundle = simulate_paths(c, testutil::zero_policy(), cfg);
    std::stringstream out;
    write_paths_csv(out, bundle, c);
    const std::string text = out.str();
    CHECK(text.rfind("path_id,t", 0) == 0);
    CHECK(std::count(text.begin(), text.end(), '\n') >= 5 * 11);
}
