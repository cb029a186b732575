#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "drawdown/model.hpp"
#include "drawdown/numerics.hpp"
#include "drawdown/scale.hpp"

// Optimal strategy evaluation and the minimum drawdown probability phi.
//
// The optimal amount in the risky asset is pi*(w) = 2 (c(w) - r w)/(mu - r),
// independent of the running maximum and of the drawdown fraction. phi is
//   1 - g(w, m) / g(w_s, m)                     for m >= w_s (fixed barrier),
//   1 - k(m) g(w, m) / g(w_s, w_s)              for m <  w_s (moving barrier),
// with boundary values phi(alpha m, m) = 1 and phi(w_s, m) = 0 exact.

namespace drawdown {

struct DegenerateSecondDerivative : num::NumericalError {
    DegenerateSecondDerivative()
        : num::NumericalError("second derivative is at machine noise level; "
                              "the curvature ratio in the HJB residual is undefined") {}
};

struct PolicyEval {
    double risky_amount = 0.0;  // amount invested in the risky asset
    double drift = 0.0;         // wealth drift under that amount
    double volatility = 0.0;    // wealth volatility
};

// pi*(w) = 2 (c(w) - r w) / (mu - r) for 0 < w <= w_s.
inline double optimal_risky_amount(const DrawdownProblem& problem, double w) {
    return 2.0 * problem.excess_at(w) / (problem.market.mu - problem.market.r);
}

// pi* extended to all wealth levels: half weight below the drawdown barrier
// (where the barrier has already been breached), the optimal amount on
// [alpha m, w_s], all-riskless above the safe level.
inline double extended_risky_amount(const DrawdownProblem& problem, double w, double m) {
    const double am = problem.alpha * m;
    if (w < am) return problem.excess_at(w) / (problem.market.mu - problem.market.r);
    if (w <= problem.safe_level()) return optimal_risky_amount(problem, w);
    return 0.0;
}

inline PolicyEval policy_coefficients(const DrawdownProblem& problem, double w, double m) {
    const double pi = extended_risky_amount(problem, w, m);
    const auto& mk = problem.market;
    return {pi, mk.r * w + (mk.mu - mk.r) * pi - problem.payout_at(w), mk.sigma * pi};
}

struct PhiValue {
    enum class Branch { Boundary, RuinBranch, DrawdownBranch, CertainDrawdown };

    double value = 0.0;
    Branch branch = Branch::Boundary;

    static const char* name(Branch b) {
        switch (b) {
            case Branch::Boundary: return "Boundary";
            case Branch::RuinBranch: return "RuinBranch";
            case Branch::DrawdownBranch: return "DrawdownBranch";
            default: return "CertainDrawdown";
        }
    }
};

// Branch formulas without the domain guard; phi() snaps boundaries and
// validates, while diagnostics (finite-difference stencils, pasting checks)
// evaluate these directly just outside the domain edge.
inline double ruin_branch_value(const ScaleContext& ctx, double w, double m) {
    return 1.0 - ctx.scale_function(w, m) / ctx.scale_function(ctx.safe_level(), m);
}

inline double drawdown_branch_value(const ScaleContext& ctx, double w, double m) {
    const double denom = std::isfinite(ctx.safe_level()) ? ctx.scale_at_safe_diag()
                                                         : ctx.scale_function(m, m);
    return 1.0 - ctx.climb_factor(m) * ctx.scale_function(w, m) / denom;
}

// Minimum probability of drawdown from state (w, m). With allow_outside,
// points above a finite safe level (m >= w_s, w > w_s) report 0 instead of
// a DomainError.
inline PhiValue min_drawdown_probability(const ScaleContext& ctx, double w, double m,
                                         bool allow_outside = false) {
    const auto& problem = ctx.problem();
    const double ws = ctx.safe_level();
    const double tie = ctx.tolerance().abs_tol;

    if (problem.regime.certain_drawdown()) {
        require_in_domain(problem, w, m, tie);
        return {1.0, PhiValue::Branch::CertainDrawdown};
    }
    if (allow_outside && std::isfinite(ws) && m >= ws && w > ws)
        return {0.0, PhiValue::Branch::Boundary};
    require_in_domain(problem, w, m, tie);

    const double am = problem.alpha * m;
    if (w <= am + tie) return {1.0, PhiValue::Branch::Boundary};
    if (std::isfinite(ws) && m >= ws && w >= ws - tie) return {0.0, PhiValue::Branch::Boundary};

    if (std::isfinite(ws) && m >= ws) {
        const double value = std::clamp(ruin_branch_value(ctx, w, m), 0.0, 1.0);
        return {value, PhiValue::Branch::RuinBranch};
    }
    const double value = std::clamp(drawdown_branch_value(ctx, w, m), 0.0, 1.0);
    return {value, PhiValue::Branch::DrawdownBranch};
}

// Residual of (r w - c(w)) phi_w - delta phi_w^2 / phi_ww at w, with central
// differences of step h applied to an arbitrary w-slice evaluator.
template <class Eval>
double hjb_residual(const DrawdownProblem& problem, Eval&& value_at, double w, double h) {
    const double fp = value_at(w + h);
    const double f0 = value_at(w);
    const double fm = value_at(w - h);
    const double dw = (fp - fm) / (2.0 * h);
    const double dww = (fp - 2.0 * f0 + fm) / (h * h);

    const double noise = 64.0 * std::numeric_limits<double>::epsilon() *
                         (std::abs(fp) + 2.0 * std::abs(f0) + std::abs(fm) + 1.0) / (h * h);
    if (std::abs(dww) <= noise) throw DegenerateSecondDerivative();

    return (problem.market.r * w - problem.payout_at(w)) * dw - problem.delta() * dw * dw / dww;
}

inline double hjb_residual(const ScaleContext& ctx, double w, double m, double h) {
    const bool ruin = std::isfinite(ctx.safe_level()) && m >= ctx.safe_level();
    auto eval = [&](double x) {
        return ruin ? ruin_branch_value(ctx, x, m) : drawdown_branch_value(ctx, x, m);
    };
    return hjb_residual(ctx.problem(), eval, w, h);
}

struct ConditionCheck {
    std::string name;
    bool passed = false;
    double worst = 0.0;  // most violating value observed
    double where = 0.0;  // w at which it occurred
};

struct VerificationReport {
    std::vector<ConditionCheck> checks;
    bool all_passed() const {
        return std::all_of(checks.begin(), checks.end(), [](const auto& c) { return c.passed; });
    }
};

// Numerical verification-lemma conditions for a maximum level m < w_s:
// phi in [0,1], non-increasing and convex in w, and smooth pasting
// phi_m(m, m) = 0 within finite-difference error. An evaluator override
// supports injecting perturbed surfaces in tests.
inline VerificationReport verification_report(const ScaleContext& ctx, double m, int grid_size = 24,
                                              std::function<double(double, double)> eval = {}) {
    const auto& problem = ctx.problem();
    const double ws = ctx.safe_level();
    const double am = problem.alpha * m;
    const double top = std::min(m, ws);
    const double width = top - am;
    if (!eval) eval = [&ctx](double w, double mm) { return drawdown_branch_value(ctx, w, mm); };

    const double h = std::max(1e-5, 1e-4 * width);
    const double fd_tol = 1e-6;

    ConditionCheck range{"phi in [0, 1]", true, 0.0, 0.0};
    ConditionCheck monotone{"phi non-increasing in w", true, 0.0, 0.0};
    ConditionCheck convex{"phi convex in w", true, 0.0, 0.0};

    for (int i = 0; i < grid_size; ++i) {
        const double w = am + width * (i + 1.0) / (grid_size + 1.0);
        const double phi = eval(w, m);
        const double out_of_range = std::max(phi - 1.0, -phi);
        if (out_of_range > fd_tol && out_of_range > range.worst) {
            range = {range.name, false, out_of_range, w};
        }
        if (w - h <= am || w + h >= top) continue;
        const double dw = num::finite_diff([&](double x) { return eval(x, m); }, w, h, 1);
        const double dww = num::finite_diff([&](double x) { return eval(x, m); }, w, h, 2);
        if (dw > fd_tol && dw > monotone.worst) monotone = {monotone.name, false, dw, w};
        if (dww < -fd_tol && dww < -std::abs(convex.worst)) convex = {convex.name, false, dww, w};
    }

    const double hm = 1e-5 * width;
    const double pasting =
        num::finite_diff([&](double mm) { return eval(m, mm); }, m, hm, 1);
    ConditionCheck paste{"smooth pasting phi_m(m, m) = 0", std::abs(pasting) <= 1e-4, pasting, m};

    return {{range, monotone, convex, paste}};
}

}  // namespace drawdown
