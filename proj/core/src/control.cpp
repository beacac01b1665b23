#include "rjump/control.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <utility>

#include "rjump/errors.hpp"
#include "rjump/model.hpp"

namespace rjump {

namespace {

std::vector<Matrix> zero_block(int count, int n) {
    return std::vector<Matrix>(static_cast<std::size_t>(count), Matrix::Zero(n, n));
}

}  // namespace

std::size_t FeedbackLaw::Tables::locate(double t, bool& exact) const {
    const double tol = 1e-12 * (1.0 + std::abs(times.back()));
    auto it = std::lower_bound(times.begin(), times.end(), t - tol);
    auto i = static_cast<std::size_t>(it - times.begin());
    if (i < times.size() && std::abs(times[i] - t) <= tol) {
        exact = true;
        return i;
    }
    exact = false;
    return i == 0 ? 0 : i - 1;
}

Matrix FeedbackLaw::Tables::value_at(double t) const {
    bool exact = false;
    const std::size_t i = locate(t, exact);
    if (exact) return values[i];
    if (interp) return (*interp)(t);
    return values[i];
}

Matrix FeedbackLaw::Tables::gain_at(double t) const {
    bool exact = false;
    const std::size_t i = locate(t, exact);
    if (exact) return gains[i];
    if (!interp) return gains[i];
    const Matrix K = (*interp)(t);
    const CoefficientSlice s = coeffs->slice(t);
    const std::vector<Matrix> R = zero_block(s.num_marks(), s.n);
    const Matrix H = control_hessian(s, K, R);
    const Matrix cross = control_cross(s, K, zero_block(s.d, s.n), R);
    return -factor_hessian(H, "t = " + std::to_string(t)).solve(cross.transpose()).eval();
}

Matrix FeedbackLaw::Tables::hessian_at(double t) const {
    bool exact = false;
    const std::size_t i = locate(t, exact);
    if (exact) return hessians[i];
    if (!interp) return hessians[i];
    const Matrix K = (*interp)(t);
    const CoefficientSlice s = coeffs->slice(t);
    return control_hessian(s, K, zero_block(s.num_marks(), s.n));
}

Matrix FeedbackLaw::gain(double t) const { return tables_->gain_at(t); }
Matrix FeedbackLaw::hessian(double t) const { return tables_->hessian_at(t); }
Matrix FeedbackLaw::value_matrix(double t) const { return tables_->value_at(t); }

double FeedbackLaw::value(double t, const Vector& x) const {
    const Matrix K = tables_->value_at(t);
    if (x.size() != K.rows()) throw DimensionError("FeedbackLaw::value: x has wrong size");
    return x.dot(K * x);
}

Policy FeedbackLaw::policy() const {
    auto tb = tables_;
    return [tb](double t, const Vector& x, Vector& u) {
        bool exact = false;
        const std::size_t i = tb->locate(t, exact);
        if (exact)
            u.noalias() = tb->gains[i] * x;
        else
            u.noalias() = tb->gain_at(t) * x;
    };
}

FeedbackLaw synthesize_feedback(const RiccatiGrid& grid, const CoefficientSet& coeffs) {
    coeffs.check_shape();
    if (coeffs.path_dependent())
        throw CoefficientError("synthesize_feedback: coefficients must be deterministic");
    if (grid.times.size() < 2 || grid.K.size() != grid.times.size())
        throw std::invalid_argument("synthesize_feedback: malformed Riccati grid");

    auto tb = std::make_shared<FeedbackLaw::Tables>();
    tb->times = grid.times;
    tb->values = grid.K;
    tb->interp = std::make_shared<const KInterpolant>(grid);
    tb->coeffs = std::make_shared<const CoefficientSet>(coeffs);
    tb->gains.reserve(grid.times.size());
    tb->hessians.reserve(grid.times.size());
    const std::vector<Matrix> R = zero_block(static_cast<int>(coeffs.marks.size()), coeffs.n);
    const std::vector<Matrix> L = zero_block(coeffs.d, coeffs.n);
    for (std::size_t k = 0; k < grid.times.size(); ++k) {
        const double t = grid.times[k];
        const CoefficientSlice s = coeffs.slice(t);
        const Matrix H = control_hessian(s, grid.K[k], R);
        const Matrix cross = control_cross(s, grid.K[k], L, R);
        tb->hessians.push_back(symmetrized(H));
        tb->gains.push_back(
            -factor_hessian(H, "t = " + std::to_string(t)).solve(cross.transpose()));
    }

    FeedbackLaw law;
    law.tables_ = std::move(tb);
    law.times_ = grid.times;
    law.source_ = "riccati grid with " + std::to_string(grid.steps()) + " steps";
    return law;
}

FeedbackLaw feedback_from_tables(std::vector<double> times, std::vector<Matrix> gains,
                                 std::vector<Matrix> hessians, std::vector<Matrix> values,
                                 std::string source) {
    const std::size_t k = times.size();
    if (k == 0 || gains.size() != k || hessians.size() != k || values.size() != k)
        throw std::invalid_argument("feedback_from_tables: table lengths differ or are empty");
    for (std::size_t i = 1; i < k; ++i)
        if (!(times[i] > times[i - 1]))
            throw std::invalid_argument("feedback_from_tables: times must be strictly increasing");

    auto tb = std::make_shared<FeedbackLaw::Tables>();
    tb->times = std::move(times);
    tb->gains = std::move(gains);
    tb->hessians = std::move(hessians);
    tb->values = std::move(values);

    FeedbackLaw law;
    law.times_ = tb->times;
    law.tables_ = std::move(tb);
    law.source_ = std::move(source);
    return law;
}

PathBundle simulate_closed_loop(const CoefficientSet& coeffs, const FeedbackLaw& law,
                                const SimConfig& cfg, const AuxIntegrand& aux) {
    const std::vector<double> grid = uniform_grid(cfg.t0, coeffs.horizon, cfg.dt);
    auto times = std::make_shared<std::vector<double>>(grid);
    auto gains = std::make_shared<std::vector<Matrix>>();
    gains->reserve(grid.size());
    for (double t : grid) gains->push_back(law.gain(t));

    const double tol = 1e-12 * (1.0 + std::abs(coeffs.horizon));
    FeedbackLaw fallback = law;
    Policy fast = [times, gains, fallback, tol](double t, const Vector& x, Vector& u) {
        auto it = std::lower_bound(times->begin(), times->end(), t - tol);
        const auto i = static_cast<std::size_t>(it - times->begin());
        if (i < times->size() && std::abs((*times)[i] - t) <= tol)
            u.noalias() = (*gains)[i] * x;
        else
            u.noalias() = fallback.gain(t) * x;
    };
    return simulate_paths(coeffs, fast, cfg, aux);
}

OptimalityGap optimality_gap(const CoefficientSet& coeffs, const FeedbackLaw& law,
                             const Policy& alt_policy, const SimConfig& cfg) {
    const std::vector<double> grid = uniform_grid(cfg.t0, coeffs.horizon, cfg.dt);
    auto times = std::make_shared<std::vector<double>>(grid);
    auto gains = std::make_shared<std::vector<Matrix>>();
    auto hessians = std::make_shared<std::vector<Matrix>>();
    gains->reserve(grid.size());
    hessians->reserve(grid.size());
    for (double t : grid) {
        gains->push_back(law.gain(t));
        hessians->push_back(law.hessian(t));
    }

    // Predicted-gap integrand <H(t)(u - Theta(t) x), (u - Theta(t) x)> with
    // Theta, H along the law; evaluated on the alt-policy paths themselves.
    const double tol = 1e-12 * (1.0 + std::abs(coeffs.horizon));
    FeedbackLaw fallback = law;
    AuxIntegrand gap_integrand = [times, gains, hessians, fallback, tol](
                                     double t, const Vector& x, const Vector& u) {
        static thread_local Vector diff, tmp;
        auto it = std::lower_bound(times->begin(), times->end(), t - tol);
        const auto i = static_cast<std::size_t>(it - times->begin());
        if (i < times->size() && std::abs((*times)[i] - t) <= tol) {
            diff = u;
            diff.noalias() -= (*gains)[i] * x;
            tmp.noalias() = (*hessians)[i] * diff;
        } else {
            diff = u - fallback.gain(t) * x;
            tmp.noalias() = fallback.hessian(t) * diff;
        }
        return diff.dot(tmp);
    };

    const PathBundle bundle = simulate_paths(coeffs, alt_policy, cfg, gap_integrand);

    OptimalityGap out;
    out.value_formula = law.value(cfg.t0, cfg.x0);
    std::vector<double> gap_samples(bundle.running_cost.size());
    for (std::size_t p = 0; p < gap_samples.size(); ++p)
        gap_samples[p] = bundle.running_cost[p] + bundle.terminal_cost[p] - out.value_formula;
    out.direct = estimate_mean(gap_samples);
    out.predicted = evaluate_aux(bundle);
    return out;
}

}  // namespace rjump
