#include "rjump/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <limits>
#include <ostream>
#include <stdexcept>
#include <thread>
#include <utility>

#include "rjump/errors.hpp"
#include "rjump/model.hpp"
#include "rjump/rng.hpp"

namespace rjump {

namespace {

// Coefficients frozen at one time point, plus the drift matrices with the
// jump compensator folded in: drift_x = A - sum_e nu_e E_e and
// drift_u = B - sum_e nu_e F_e.
struct StepCache {
    CoefficientSlice s;
    Matrix drift_x;
    Matrix drift_u;
};

StepCache make_cache(const CoefficientSet& c, double t) {
    StepCache sc{c.slice(t), Matrix(), Matrix()};
    sc.drift_x = sc.s.A;
    sc.drift_u = sc.s.B;
    for (std::size_t e = 0; e < sc.s.E.size(); ++e) {
        const double w = c.marks.weight(e);
        sc.drift_x -= w * sc.s.E[e];
        sc.drift_u -= w * sc.s.F[e];
    }
    return sc;
}

// Per-thread scratch vectors so the hot loop performs no heap allocation.
struct Workspace {
    Vector x, xnew, u, tn, tm;

    explicit Workspace(int n, int m)
        : x(n), xnew(n), u(m), tn(n), tm(m) {}
};

double quad_form(const Matrix& S, const Vector& v, Vector& tmp) {
    tmp.noalias() = S * v;
    return v.dot(tmp);
}

// Running cost f(t, x, u) = <Qx, x> + <Nu, u> with Q, N taken from `sc`.
double running_cost_at(const StepCache& sc, const Vector& x, const Vector& u,
                       Workspace& w) {
    return quad_form(sc.s.Q, x, w.tn) + quad_form(sc.s.N, u, w.tm);
}

void simulate_one_path(const CoefficientSet& c, const std::vector<double>& grid,
                       const std::vector<StepCache>& cache, const Policy& policy,
                       const AuxIntegrand& aux, const SimConfig& cfg, long p,
                       PathBundle& out, Workspace& w) {
    const int m = c.m;
    const int d = c.d;
    const double T = c.horizon;
    const double nu_total = c.marks.total();
    const bool negate = cfg.antithetic && (p % 2 == 1);
    const std::uint64_t stream =
        cfg.antithetic ? static_cast<std::uint64_t>(p / 2) : static_cast<std::uint64_t>(p);
    PathRng rng(cfg.seed, stream);

    const bool record = p < cfg.record_paths;
    PathRecord* rec = record ? &out.records[static_cast<std::size_t>(p)] : nullptr;

    double t = cfg.t0;
    w.x = cfg.x0;
    policy(t, w.x, w.u);
    if (w.u.size() != m)
        throw DimensionError("policy returned a control of size " +
                             std::to_string(w.u.size()) + ", expected " + std::to_string(m));

    // First jump candidate. exponential(0) is +inf, so an empty mark space
    // yields a pure diffusion. A zero inter-jump gap (probability ~2^-53)
    // is clamped to keep time strictly increasing.
    auto next_gap = [&]() {
        double g = rng.exponential(nu_total);
        return g > 0.0 ? g : std::numeric_limits<double>::min();
    };
    double tau = t + next_gap();

    std::size_t k = 0;  // index of the grid node at or before t
    const StepCache* left = &cache[0];
    StepCache local;  // owns on-demand caches at jump times

    if (rec) {
        rec->times.push_back(t);
        rec->states.push_back(w.x);
        rec->controls.push_back(w.u);
        rec->jump_mark.push_back(-1);
    }

    double run_cost = 0.0;
    double aux_sum = 0.0;
    long jumps = 0;
    double f_left = running_cost_at(*left, w.x, w.u, w);
    double aux_left = aux ? aux(t, w.x, w.u) : 0.0;

    while (t < T) {
        double t_next = grid[k + 1];
        const bool jump_now = (tau <= t_next);
        if (jump_now && tau < t_next) t_next = tau;
        const bool at_grid = (t_next == grid[k + 1]);
        const double h = t_next - t;

        // Euler-Maruyama over [t, t_next) with coefficients at the left
        // endpoint and the control frozen there (predictable).
        w.xnew = w.x;
        if (h > 0.0) {
            w.xnew.noalias() += h * (left->drift_x * w.x);
            w.xnew.noalias() += h * (left->drift_u * w.u);
            const double sq = std::sqrt(h);
            for (int i = 0; i < d; ++i) {
                double z = rng.normal();
                if (negate) z = -z;
                const double zs = z * sq;
                w.xnew.noalias() += zs * (left->s.C[static_cast<std::size_t>(i)] * w.x);
                w.xnew.noalias() += zs * (left->s.D[static_cast<std::size_t>(i)] * w.u);
            }
        }
        if (!w.xnew.allFinite())
            throw NonFiniteState("path " + std::to_string(p) + " diverged at t = " +
                                 std::to_string(t_next));

        const StepCache* right;
        if (at_grid) {
            right = &cache[k + 1];
        } else {
            local = make_cache(c, t_next);
            right = &local;
        }

        // Trapezoid on [t, t_next]: right node uses the pre-jump state and
        // the control that acted on the interval, so a jump at t_next does
        // not leak into this interval's integral. The aux integral instead
        // uses the left endpoint only, where (t, x, u) is exactly the tuple
        // the policy produced; an integrand that vanishes on policy output
        // (the optimality-gap integrand under the optimal law) then
        // accumulates an exact zero.
        if (h > 0.0) {
            const double f_right = running_cost_at(*right, w.xnew, w.u, w);
            run_cost += 0.5 * h * (f_left + f_right);
            if (aux) aux_sum += h * aux_left;
        }

        int mark_here = -1;
        if (jump_now) {
            // Draw the mark with probability nu_e / nu(Lambda), then apply
            // the uncompensated jump map x <- x + E_e x + F_e u exactly.
            const double r = rng.uniform01() * nu_total;
            std::size_t e = 0;
            double acc = c.marks.weight(0);
            while (e + 1 < c.marks.size() && r > acc) acc += c.marks.weight(++e);
            mark_here = static_cast<int>(e);
            ++jumps;
            w.tn.noalias() = right->s.E[e] * w.xnew;
            w.tn.noalias() += right->s.F[e] * w.u;
            w.xnew += w.tn;
            if (!w.xnew.allFinite())
                throw NonFiniteState("path " + std::to_string(p) +
                                     " diverged at jump time t = " + std::to_string(t_next));
            if (rec) {
                rec->jump_times.push_back(t_next);
                rec->jump_marks.push_back(mark_here);
            }
            tau = t_next + next_gap();
        }

        t = t_next;
        w.x.swap(w.xnew);
        if (at_grid) {
            ++k;
            left = &cache[k];
        } else {
            left = &local;
        }

        policy(t, w.x, w.u);
        if (w.u.size() != m)
            throw DimensionError("policy returned a control of size " +
                                 std::to_string(w.u.size()) + ", expected " +
                                 std::to_string(m));
        if (t < T) {
            f_left = running_cost_at(*left, w.x, w.u, w);
            if (aux) aux_left = aux(t, w.x, w.u);
        }
        if (rec) {
            rec->times.push_back(t);
            rec->states.push_back(w.x);
            rec->controls.push_back(w.u);
            rec->jump_mark.push_back(mark_here);
        }
    }

    const std::size_t sp = static_cast<std::size_t>(p);
    out.running_cost[sp] = run_cost;
    out.terminal_cost[sp] = quad_form(c.M, w.x, w.tn);
    if (aux) out.aux_integral[sp] = aux_sum;
    out.terminal_state[sp] = w.x;
    out.jump_count[sp] = jumps;
}

}  // namespace

std::vector<double> uniform_grid(double t0, double T, double dt) {
    auto n_steps = static_cast<long>(std::ceil((T - t0) / dt - 1e-12));
    n_steps = std::max<long>(1, n_steps);
    std::vector<double> grid(static_cast<std::size_t>(n_steps) + 1);
    for (long i = 0; i <= n_steps; ++i)
        grid[static_cast<std::size_t>(i)] = t0 + static_cast<double>(i) * dt;
    grid.back() = T;
    return grid;
}

PathBundle simulate_paths(const CoefficientSet& coeffs, const Policy& policy,
                          const SimConfig& cfg, const AuxIntegrand& aux) {
    coeffs.check_shape();
    if (coeffs.path_dependent())
        throw CoefficientError(
            "path-dependent coefficients have no pathwise time evaluation; "
            "use the lattice solver instead");
    if (!policy) throw std::invalid_argument("simulate_paths: empty policy");
    if (!(cfg.dt > 0.0) || !std::isfinite(cfg.dt))
        throw std::invalid_argument("simulate_paths: dt must be positive and finite");
    if (cfg.n_paths < 1) throw std::invalid_argument("simulate_paths: n_paths must be >= 1");
    if (!(cfg.t0 >= 0.0) || !(cfg.t0 < coeffs.horizon))
        throw std::invalid_argument("simulate_paths: t0 must lie in [0, T)");
    if (cfg.dt > coeffs.horizon - cfg.t0 + 1e-12 * coeffs.horizon)
        throw std::invalid_argument("simulate_paths: dt exceeds the simulated span T - t0");
    if (cfg.x0.size() != coeffs.n)
        throw DimensionError("simulate_paths: x0 has size " + std::to_string(cfg.x0.size()) +
                             ", expected " + std::to_string(coeffs.n));
    {
        ValidationReport rep = validate_assumptions(coeffs);
        if (!rep.ok()) throw CoefficientError("simulate_paths: " + rep.summary());
    }

    const double T = coeffs.horizon;
    const std::vector<double> grid = uniform_grid(cfg.t0, T, cfg.dt);

    std::vector<StepCache> cache;
    cache.reserve(grid.size());
    for (double tg : grid) cache.push_back(make_cache(coeffs, tg));

    PathBundle out;
    out.n_paths = cfg.n_paths;
    out.t0 = cfg.t0;
    out.horizon = T;
    const auto np = static_cast<std::size_t>(cfg.n_paths);
    out.running_cost.assign(np, 0.0);
    out.terminal_cost.assign(np, 0.0);
    if (aux) out.aux_integral.assign(np, 0.0);
    out.terminal_state.assign(np, Vector());
    out.jump_count.assign(np, 0);
    const long n_rec = std::min<long>(std::max<long>(0, cfg.record_paths), cfg.n_paths);
    out.records.resize(static_cast<std::size_t>(n_rec));
    if (coeffs.marks.total() * cfg.dt >= 0.1)
        out.warnings.push_back(
            "nu(Lambda) * dt = " + std::to_string(coeffs.marks.total() * cfg.dt) +
            " >= 0.1: compensator discretization skew may dominate");

    SimConfig local_cfg = cfg;
    local_cfg.record_paths = n_rec;

    int threads = std::max(1, cfg.threads);
    threads = static_cast<int>(std::min<long>(threads, cfg.n_paths));

    if (threads == 1) {
        Workspace w(coeffs.n, coeffs.m);
        for (long p = 0; p < cfg.n_paths; ++p)
            simulate_one_path(coeffs, grid, cache, policy, aux, local_cfg, p, out, w);
    } else {
        std::vector<std::exception_ptr> errors(static_cast<std::size_t>(threads));
        std::vector<std::thread> pool;
        pool.reserve(static_cast<std::size_t>(threads));
        const long chunk = (cfg.n_paths + threads - 1) / threads;
        for (int ti = 0; ti < threads; ++ti) {
            const long lo = static_cast<long>(ti) * chunk;
            const long hi = std::min(cfg.n_paths, lo + chunk);
            pool.emplace_back([&, ti, lo, hi]() {
                try {
                    Workspace w(coeffs.n, coeffs.m);
                    for (long p = lo; p < hi; ++p)
                        simulate_one_path(coeffs, grid, cache, policy, aux, local_cfg, p, out, w);
                } catch (...) {
                    errors[static_cast<std::size_t>(ti)] = std::current_exception();
                }
            });
        }
        for (auto& th : pool) th.join();
        for (auto& e : errors)
            if (e) std::rethrow_exception(e);
    }
    return out;
}

CostEstimate estimate_mean(const std::vector<double>& samples) {
    MeanStdError r = mean_and_std_error(samples);
    return CostEstimate{r.mean, r.std_error, static_cast<long>(samples.size())};
}

CostEstimate evaluate_cost(const PathBundle& bundle) {
    std::vector<double> totals(bundle.running_cost.size());
    for (std::size_t i = 0; i < totals.size(); ++i)
        totals[i] = bundle.running_cost[i] + bundle.terminal_cost[i];
    return estimate_mean(totals);
}

CostEstimate evaluate_aux(const PathBundle& bundle) {
    if (bundle.aux_integral.empty())
        throw std::invalid_argument("evaluate_aux: bundle carries no aux integrals");
    return estimate_mean(bundle.aux_integral);
}

CostEstimate terminal_moment(const PathBundle& bundle, int power, int comp) {
    std::vector<double> samples(bundle.terminal_state.size());
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const Vector& x = bundle.terminal_state[i];
        if (comp < 0 || comp >= x.size())
            throw DimensionError("terminal_moment: component out of range");
        samples[i] = std::pow(x(comp), power);
    }
    return estimate_mean(samples);
}

MomentPair moment_oracle(const CoefficientSet& coeffs, double feedback_gain,
                         double t, double x0) {
    coeffs.check_shape();
    if (coeffs.n != 1 || coeffs.m != 1)
        throw DimensionError("moment_oracle requires scalar state and control");
    if (coeffs.path_dependent())
        throw CoefficientError("moment_oracle: coefficients must be deterministic");
    if (!(t >= 0.0) || t > coeffs.horizon + 1e-12 * (1.0 + coeffs.horizon))
        throw std::invalid_argument("moment_oracle: t outside [0, T]");

    const double g = feedback_gain;
    auto rates = [&](double s) {
        const CoefficientSlice sl = coeffs.slice(std::min(s, coeffs.horizon));
        const double alpha = sl.A(0, 0) + sl.B(0, 0) * g;
        double r2 = 2.0 * alpha;
        for (int i = 0; i < coeffs.d; ++i) {
            const double beta = sl.C[static_cast<std::size_t>(i)](0, 0) +
                                sl.D[static_cast<std::size_t>(i)](0, 0) * g;
            r2 += beta * beta;
        }
        for (std::size_t e = 0; e < sl.E.size(); ++e) {
            const double gamma = sl.E[e](0, 0) + sl.F[e](0, 0) * g;
            r2 += coeffs.marks.weight(e) * gamma * gamma;
        }
        return std::pair<double, double>(alpha, r2);
    };

    // Composite Simpson of both rate integrands; exact for the constant and
    // polynomial (degree <= 3 per panel) coefficient cases used in tests.
    const int n_sub = 2048;
    double i1 = 0.0;
    double i2 = 0.0;
    if (t > 0.0) {
        const double h = t / n_sub;
        for (int j = 0; j < n_sub; ++j) {
            const double a = j * h;
            auto [r1a, r2a] = rates(a);
            auto [r1m, r2m] = rates(a + 0.5 * h);
            auto [r1b, r2b] = rates(a + h);
            i1 += h / 6.0 * (r1a + 4.0 * r1m + r1b);
            i2 += h / 6.0 * (r2a + 4.0 * r2m + r2b);
        }
    }
    return MomentPair{x0 * std::exp(i1), x0 * x0 * std::exp(i2)};
}

void write_paths_csv(std::ostream& out, const PathBundle& bundle,
                     const CoefficientSet& coeffs) {
    out << "path_id,t";
    for (int i = 0; i < coeffs.n; ++i) out << ",x_" << i;
    for (int j = 0; j < coeffs.m; ++j) out << ",u_" << j;
    out << ",jump_flag,mark_id\n";
    for (std::size_t p = 0; p < bundle.records.size(); ++p) {
        const PathRecord& r = bundle.records[p];
        for (std::size_t j = 0; j < r.times.size(); ++j) {
            out << p << ',' << format_double(r.times[j]);
            for (int i = 0; i < coeffs.n; ++i) out << ',' << format_double(r.states[j](i));
            for (int i = 0; i < coeffs.m; ++i) out << ',' << format_double(r.controls[j](i));
            const int mk = r.jump_mark[j];
            out << ',' << (mk >= 0 ? 1 : 0) << ',';
            if (mk >= 0) out << coeffs.marks.mark(static_cast<std::size_t>(mk));
            out << '\n';
        }
    }
}

}  // namespace rjump
