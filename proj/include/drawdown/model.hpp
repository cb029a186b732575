#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "drawdown/numerics.hpp"

// Market parameters, payout functions, safe-level computation and regime
// classification for the drawdown-minimization problem.
//
// A payout c(w) is admissible when it is continuous, non-negative and
// non-decreasing on (0, inf), and c(w) - r w changes sign exactly once, at
// the safe level w_s (which may be +inf). Above w_s the all-riskless
// strategy makes wealth non-decreasing, so drawdown is impossible there.

namespace drawdown {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

struct DomainError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct MarketParams {
    double r = 0.0;      // riskless rate
    double mu = 0.0;     // risky drift
    double sigma = 0.0;  // risky volatility

    MarketParams() = default;
    MarketParams(double r_, double mu_, double sigma_) : r(r_), mu(mu_), sigma(sigma_) {
        if (!(r > 0.0)) throw std::invalid_argument("MarketParams: r > 0 required");
        if (!(mu > r)) throw std::invalid_argument("MarketParams: mu > r required");
        if (!(sigma > 0.0)) throw std::invalid_argument("MarketParams: sigma > 0 required");
    }

    // Half the squared Sharpe ratio; the single market constant entering
    // every probability below.
    double delta() const {
        const double s = (mu - r) / sigma;
        return 0.5 * s * s;
    }
};

struct ConstantPayout {
    double rate;  // c(w) == rate
};
struct ProportionalPayout {
    double kappa;  // c(w) == kappa * w
};
struct AffinePayout {
    double base, slope;  // c(w) == base + slope * w
};
struct QuadraticSafePayout {
    double curvature, ws;  // c(w) == r*w + curvature * (ws - w)^2, tangent to r*w at ws
};
struct TabulatedPayout {
    // Piecewise-linear through sorted (w, c) knots; clamped to the first
    // value below the first knot and to the last value beyond the last.
    std::vector<std::pair<double, double>> knots;
};

using PayoutSpec =
    std::variant<ConstantPayout, ProportionalPayout, AffinePayout, QuadraticSafePayout, TabulatedPayout>;

// Payout rate at wealth w. Defined for all real w: below 0 the payout is
// frozen at its level just above 0, matching the extension used by the
// simulated dynamics.
inline double payout_value(const PayoutSpec& payout, const MarketParams& market, double w) {
    struct Eval {
        double w;
        double r;
        double operator()(const ConstantPayout& p) const { return p.rate; }
        double operator()(const ProportionalPayout& p) const { return p.kappa * std::max(w, 0.0); }
        double operator()(const AffinePayout& p) const { return p.base + p.slope * std::max(w, 0.0); }
        double operator()(const QuadraticSafePayout& p) const {
            const double x = std::max(w, 0.0);
            return r * x + p.curvature * (p.ws - x) * (p.ws - x);
        }
        double operator()(const TabulatedPayout& p) const {
            const auto& k = p.knots;
            const double x = std::max(w, k.front().first);
            if (x >= k.back().first) return k.back().second;
            auto it = std::upper_bound(k.begin(), k.end(), x,
                                       [](double v, const auto& kn) { return v < kn.first; });
            const auto& hi = *it;
            const auto& lo = *(it - 1);
            const double t = (x - lo.first) / (hi.first - lo.first);
            return lo.second + t * (hi.second - lo.second);
        }
    };
    return std::visit(Eval{w, market.r}, payout);
}

// Excess payout over riskless earnings, c(w) - r w: positive below the safe
// level, negative above it. Evaluated in closed form per payout kind; the
// naive difference c(w) - r w loses all relative accuracy near the safe
// level, where the excess is the quantity every integrand divides by.
inline double excess(const PayoutSpec& payout, const MarketParams& market, double w) {
    struct Eval {
        double w;
        const MarketParams& mk;
        double operator()(const ConstantPayout& p) const { return p.rate - mk.r * w; }
        double operator()(const ProportionalPayout& p) const {
            return w >= 0.0 ? (p.kappa - mk.r) * w : -mk.r * w;
        }
        double operator()(const AffinePayout& p) const {
            return w >= 0.0 ? p.base + (p.slope - mk.r) * w : p.base - mk.r * w;
        }
        double operator()(const QuadraticSafePayout& p) const {
            const double x = std::max(w, 0.0);
            return p.curvature * (p.ws - x) * (p.ws - x) + mk.r * (x - w);
        }
        double operator()(const TabulatedPayout& p) const {
            return payout_value(PayoutSpec{p}, mk, w) - mk.r * w;
        }
    };
    return std::visit(Eval{w, market}, payout);
}

struct Violation {
    std::string what;
    double where = 0.0;
};

struct ValidationError : std::runtime_error {
    std::vector<Violation> violations;
    explicit ValidationError(std::vector<Violation> v)
        : std::runtime_error(v.empty() ? "invalid payout" : "invalid payout: " + v.front().what),
          violations(std::move(v)) {}
};

struct AmbiguousCrossing : std::runtime_error {
    AmbiguousCrossing()
        : std::runtime_error("payout crosses r*w more than once; safe level is not unique") {}
};

struct Regime {
    enum class Kind { FiniteSafe, InfiniteSafeCertainDrawdown, InfiniteSafeOther };

    Kind kind = Kind::FiniteSafe;
    double ws = kInf;  // finite for Kind::FiniteSafe
    double L = 0.0;    // certain-drawdown witness: excess(w) > L for w > w0
    double w0 = 0.0;

    bool finite_safe() const { return kind == Kind::FiniteSafe; }
    bool certain_drawdown() const { return kind == Kind::InfiniteSafeCertainDrawdown; }

    static const char* name(Kind k) {
        switch (k) {
            case Kind::FiniteSafe: return "FiniteSafe";
            case Kind::InfiniteSafeCertainDrawdown: return "InfiniteSafeCertainDrawdown";
            default: return "InfiniteSafeOther";
        }
    }
};

namespace detail {

// Upper bound of the crossing search; past it the regime scan takes over.
inline constexpr double kMaxSafeLevelSearch = 1e6;

// Lowest wealth where a quadratic-safe payout is non-decreasing. Such a
// payout is only meaningful on [ws - r/(2b), ws]; problems must keep
// alpha * m at or above this.
inline double quadratic_monotone_floor(const QuadraticSafePayout& p, const MarketParams& market) {
    return std::max(0.0, p.ws - market.r / (2.0 * p.curvature));
}

inline double payout_scale_hint(const PayoutSpec& payout, const MarketParams& market) {
    struct Hint {
        const MarketParams& m;
        double operator()(const ConstantPayout& p) const { return std::max(1.0, 4.0 * p.rate / m.r); }
        double operator()(const ProportionalPayout&) const { return 100.0; }
        double operator()(const AffinePayout& p) const {
            if (p.slope < m.r && p.base > 0.0) return 4.0 * p.base / (m.r - p.slope);
            return 100.0;
        }
        double operator()(const QuadraticSafePayout& p) const { return 4.0 * p.ws; }
        double operator()(const TabulatedPayout& p) const {
            return std::max(1.0, 2.0 * p.knots.back().first);
        }
    };
    return std::min(std::visit(Hint{market}, payout), kMaxSafeLevelSearch);
}

}  // namespace detail

// Structural checks on a geometric wealth grid: non-negativity, monotonicity
// (within an abs_tol slack), and a single sign change of c(w) - r w.
// Violations are returned as data; an empty list means valid.
inline std::vector<Violation> validate(const PayoutSpec& payout, const MarketParams& market,
                                       int grid_size = 256, const num::Tolerance& tol = {}) {
    if (grid_size < 16) throw std::invalid_argument("validate: grid_size >= 16 required");
    std::vector<Violation> out;

    if (const auto* q = std::get_if<QuadraticSafePayout>(&payout)) {
        if (!(q->curvature > 0.0)) out.push_back({"quadratic payout requires curvature > 0", 0.0});
        if (!(q->ws > 0.0)) out.push_back({"quadratic payout requires ws > 0", 0.0});
        if (!out.empty()) return out;
    }
    if (const auto* t = std::get_if<TabulatedPayout>(&payout)) {
        if (t->knots.size() < 2) {
            out.push_back({"tabulated payout requires at least 2 knots", 0.0});
            return out;
        }
        for (std::size_t i = 1; i < t->knots.size(); ++i)
            if (!(t->knots[i].first > t->knots[i - 1].first)) {
                out.push_back({"tabulated knots must have strictly increasing wealth", t->knots[i].first});
                return out;
            }
    }

    // Geometric grid; for quadratic payouts restricted to the region where
    // the payout is meant to be used (it decreases below the floor by design).
    double lo = 1e-4;
    double hi = detail::payout_scale_hint(payout, market);
    if (const auto* q = std::get_if<QuadraticSafePayout>(&payout)) {
        const double floor = detail::quadratic_monotone_floor(*q, market);
        if (floor > 0.0) lo = std::max(lo, floor);
    }

    std::vector<double> grid(grid_size);
    const double ratio = std::pow(hi / lo, 1.0 / (grid_size - 1));
    double w = lo;
    for (int i = 0; i < grid_size; ++i, w *= ratio) grid[i] = w;

    double prev_c = payout_value(payout, market, grid.front());
    int sign_changes = 0;
    int prev_sign = 0;
    bool any_positive_excess = false;
    for (int i = 0; i < grid_size; ++i) {
        const double c = payout_value(payout, market, grid[i]);
        if (!std::isfinite(c)) {
            out.push_back({"payout is not finite", grid[i]});
            return out;
        }
        if (c < 0.0) out.push_back({"payout is negative", grid[i]});
        if (c < prev_c - tol.abs_tol) out.push_back({"payout is decreasing", grid[i]});
        prev_c = std::max(prev_c, c);

        const double ex = c - market.r * grid[i];
        if (ex > 0.0) any_positive_excess = true;
        const int sign = ex > tol.abs_tol ? 1 : (ex < -tol.abs_tol ? -1 : 0);
        if (sign != 0) {
            if (prev_sign == 1 && sign == -1) ++sign_changes;
            if (prev_sign == -1 && sign == 1) {
                // Excess turning positive again means r w < c(w) above an
                // earlier crossing: tangency (quadratic) is fine, a true
                // re-crossing is not.
                if (!std::holds_alternative<QuadraticSafePayout>(payout)) ++sign_changes;
            }
            prev_sign = sign;
        }
    }
    if (sign_changes > 1) out.push_back({"payout crosses r*w more than once", 0.0});
    if (!any_positive_excess)
        out.push_back({"r*w >= c(w) everywhere: no wealth level is at risk, safe level would be 0", 0.0});
    return out;
}

// The safe level w_s: unique root of c(w) = r w, or +inf when the payout
// outpaces riskless earnings everywhere. Analytic where the payout form
// allows, bracketed root search otherwise.
inline double safe_level(const PayoutSpec& payout, const MarketParams& market,
                         const num::Tolerance& tol = {}) {
    if (const auto* c = std::get_if<ConstantPayout>(&payout)) return c->rate / market.r;
    if (const auto* p = std::get_if<ProportionalPayout>(&payout))
        return p->kappa > market.r ? kInf : 0.0;
    if (const auto* a = std::get_if<AffinePayout>(&payout)) {
        if (a->slope >= market.r) return a->base > 0.0 ? kInf : 0.0;
        return a->base / (market.r - a->slope);
    }
    if (const auto* q = std::get_if<QuadraticSafePayout>(&payout)) return q->ws;

    // Tabulated: scan a grid for sign changes of the excess, then bisect.
    const int n = 512;
    const double lo = 1e-4, hi = detail::kMaxSafeLevelSearch;
    const double ratio = std::pow(hi / lo, 1.0 / (n - 1));
    double prev_w = lo;
    double prev_ex = excess(payout, market, prev_w);
    double root = kInf;
    int crossings = 0;
    double w = lo * ratio;
    for (int i = 1; i < n; ++i, w *= ratio) {
        const double ex = excess(payout, market, w);
        if (prev_ex > 0.0 && ex <= 0.0) {
            ++crossings;
            if (crossings > 1) throw AmbiguousCrossing();
            root = num::find_root([&](double x) { return excess(payout, market, x); }, prev_w, w, tol);
        }
        if (prev_ex <= 0.0 && ex > 0.0 && crossings > 0) throw AmbiguousCrossing();
        prev_w = w;
        prev_ex = ex;
    }
    return root;
}

// FiniteSafe when the safe level exists; otherwise scans the excess on an
// expanding grid for a certain-drawdown witness (excess bounded below by
// some L > 0 past some w0, with non-decreasing excess as evidence).
inline Regime classify_regime(const PayoutSpec& payout, const MarketParams& market,
                              const num::Tolerance& tol = {}) {
    const double ws = safe_level(payout, market, tol);
    if (std::isfinite(ws)) return {Regime::Kind::FiniteSafe, ws, 0.0, 0.0};

    const double w0 = detail::payout_scale_hint(payout, market);
    double w = w0;
    double prev_ex = excess(payout, market, w);
    bool non_decreasing = true;
    double min_ex = prev_ex;
    for (int i = 0; i < 64; ++i) {
        w *= 1.5;
        const double ex = excess(payout, market, w);
        if (ex < prev_ex - tol.abs_tol) non_decreasing = false;
        min_ex = std::min(min_ex, ex);
        prev_ex = ex;
    }
    if (non_decreasing && min_ex > 0.0)
        return {Regime::Kind::InfiniteSafeCertainDrawdown, kInf, min_ex, w0};
    return {Regime::Kind::InfiniteSafeOther, kInf, 0.0, 0.0};
}

// A fully specified problem: market, payout, drawdown fraction alpha, and
// the derived safe level / regime.
struct DrawdownProblem {
    MarketParams market;
    PayoutSpec payout;
    double alpha = 0.0;
    Regime regime;

    double safe_level() const { return regime.ws; }
    double delta() const { return market.delta(); }
    double payout_at(double w) const { return payout_value(payout, market, w); }
    double excess_at(double w) const { return drawdown::excess(payout, market, w); }

    // Quadratic payouts are admissible only where they are non-decreasing;
    // alpha * m must sit at or above that floor.
    double min_alpha_m() const {
        if (const auto* q = std::get_if<QuadraticSafePayout>(&payout))
            return detail::quadratic_monotone_floor(*q, market);
        return 0.0;
    }
};

inline DrawdownProblem make_problem(const MarketParams& market, const PayoutSpec& payout, double alpha,
                                    const num::Tolerance& tol = {}) {
    if (!(alpha > 0.0 && alpha < 1.0))
        throw std::invalid_argument("DrawdownProblem: alpha in (0, 1) required");
    auto violations = validate(payout, market, 256, tol);
    if (!violations.empty()) throw ValidationError(std::move(violations));
    return {market, payout, alpha, classify_regime(payout, market, tol)};
}

// Current wealth and running maximum. Valid states live in the domain
// D = { alpha*m <= w <= min(m, w_s) }.
struct StatePoint {
    double w = 0.0;
    double m = 0.0;
};

inline bool in_domain(const DrawdownProblem& problem, double w, double m, double slack = 0.0) {
    if (!(m > 0.0)) return false;
    const double am = problem.alpha * m;
    if (am + slack < problem.min_alpha_m()) return false;
    return w >= am - slack && w <= std::min(m, problem.safe_level()) + slack;
}

inline void require_in_domain(const DrawdownProblem& problem, double w, double m, double slack = 0.0) {
    if (!in_domain(problem, w, m, slack))
        throw DomainError("state (w=" + std::to_string(w) + ", m=" + std::to_string(m) +
                          ") outside the domain alpha*m <= w <= min(m, w_s)");
}

}  // namespace drawdown
