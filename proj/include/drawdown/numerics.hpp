#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <queue>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

// Generic numerical kernels: adaptive Gauss-Kronrod quadrature, improper
// integrals over [a, inf) with divergence detection, bracketed root finding
// with secant acceleration, and central finite differences.

namespace drawdown::num {

struct Tolerance {
    double abs_tol = 1e-10;
    double rel_tol = 1e-9;
    int max_subdivisions = 2048;

    void validate() const {
        if (!(abs_tol > 0.0) || !(rel_tol > 0.0) || max_subdivisions < 1)
            throw std::invalid_argument("Tolerance: abs_tol > 0, rel_tol > 0, max_subdivisions >= 1 required");
    }
};

struct NumericalError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct NonFiniteSample : NumericalError {
    double x;
    explicit NonFiniteSample(double x_)
        : NumericalError("non-finite integrand sample at x = " + std::to_string(x_)), x(x_) {}
};

struct SubdivisionLimit : NumericalError {
    double best_estimate;
    double est_error;
    SubdivisionLimit(double best, double err)
        : NumericalError("quadrature subdivision budget exhausted (best estimate " +
                         std::to_string(best) + ", est error " + std::to_string(err) + ")"),
          best_estimate(best), est_error(err) {}
};

struct NoSignChange : NumericalError {
    NoSignChange() : NumericalError("find_root: no sign change over the bracket") {}
};

// Outcome of an improper integral over [a, inf).
struct ImproperResult {
    enum class Kind { Converged, Divergent, Inconclusive };

    Kind kind = Kind::Inconclusive;
    double value = 0.0;             // Converged: integral estimate
    double est_error = 0.0;         // Converged: error bound (>= 0)
    int direction = 0;              // Divergent: +1 or -1
    double partial = 0.0;           // Inconclusive: partial sum at truncation
    double last_increment = 0.0;    // Inconclusive: final window increment
    double truncation_point = 0.0;  // upper end of the last window integrated

    bool converged() const { return kind == Kind::Converged; }
    bool divergent() const { return kind == Kind::Divergent; }
};

namespace detail {

// 15-point Kronrod extension of 7-point Gauss (positive abscissae + center).
inline constexpr double kGK15Nodes[8] = {
    0.991455371120813, 0.949107912342759, 0.864864423359769, 0.741531185599394,
    0.586087235467691, 0.405845151377397, 0.207784955007898, 0.0};
inline constexpr double kK15Weights[8] = {
    0.022935322010529, 0.063092092629979, 0.104790010322250, 0.140653259715525,
    0.169004726639267, 0.190350578064785, 0.204432940075298, 0.209482141084728};
inline constexpr double kG7Weights[4] = {
    0.129484966168870, 0.279705391489277, 0.381830050505119, 0.417959183673469};

struct PanelEstimate {
    double integral;  // Kronrod value
    double error;     // |Kronrod - Gauss|
};

template <class F>
PanelEstimate gk15(F&& f, double a, double b) {
    const double half = 0.5 * (b - a);
    const double mid = 0.5 * (a + b);

    auto sample = [&](double x) {
        const double y = f(x);
        if (!std::isfinite(y)) throw NonFiniteSample(x);
        return y;
    };

    const double fc = sample(mid);
    double kronrod = kK15Weights[7] * fc;
    double gauss = kG7Weights[3] * fc;
    for (int i = 0; i < 7; ++i) {
        const double dx = half * kGK15Nodes[i];
        const double fsum = sample(mid - dx) + sample(mid + dx);
        kronrod += kK15Weights[i] * fsum;
        if (i % 2 == 1) gauss += kG7Weights[i / 2] * fsum;
    }
    kronrod *= half;
    gauss *= half;
    return {kronrod, std::abs(kronrod - gauss)};
}

}  // namespace detail

// Adaptive quadrature of f over [a, b]: Gauss-Kronrod 15 panels, always
// bisecting the panel with the largest nested-rule error until the summed
// error fits max(abs_tol, rel_tol * |I|). Endpoints are never sampled, so
// the integrand may approach a finite limit (or 0) at b without being
// evaluable there.
template <class F>
double integrate(F&& f, double a, double b, const Tolerance& tol = {}) {
    tol.validate();
    if (!(a <= b)) throw std::invalid_argument("integrate: requires a <= b");
    if (a == b) return 0.0;

    struct Segment {
        double a, b, integral, error;
        bool operator<(const Segment& o) const { return error < o.error; }
    };

    auto root = detail::gk15(f, a, b);
    std::priority_queue<Segment> active;
    active.push({a, b, root.integral, root.error});

    double total_integral = root.integral;
    double total_error = root.error;
    int splits = 0;
    int stagnant = 0;  // splits that barely reduced the worst panel's error

    while (total_error > std::max(tol.abs_tol, tol.rel_tol * std::abs(total_integral)) &&
           !active.empty()) {
        const Segment seg = active.top();
        active.pop();
        const double width_floor = std::numeric_limits<double>::epsilon() *
                                   std::max({std::abs(seg.a), std::abs(seg.b), 1.0});
        if ((seg.b - seg.a) <= width_floor) continue;  // resolution floor; irreducible
        if (stagnant >= 64) break;  // error estimates pinned at the roundoff floor
        if (splits >= tol.max_subdivisions)
            throw SubdivisionLimit(total_integral, total_error);
        ++splits;
        const double mid = 0.5 * (seg.a + seg.b);
        auto left = detail::gk15(f, seg.a, mid);
        auto right = detail::gk15(f, mid, seg.b);
        total_integral += left.integral + right.integral - seg.integral;
        total_error += left.error + right.error - seg.error;
        if (left.error + right.error > 0.9 * seg.error) ++stagnant;
        active.push({seg.a, mid, left.integral, left.error});
        active.push({mid, seg.b, right.integral, right.error});
    }
    return total_integral;
}

// Improper integral over [a, inf): accumulates window integrals over dyadic
// blocks [a + w(2^k - 1), a + w(2^{k+1} - 1)]. Doubling windows make both
// power-law and logarithmic divergence visible as a non-shrinking increment
// sequence, which a fixed window cannot detect within any practical cap.
// Converged: two successive increments below abs_tol.
// Divergent: a run of same-sign, non-shrinking increments (or a partial sum
// past 1/abs_tol with growing increments).
template <class F>
ImproperResult integrate_to_infinity(F&& f, double a, const Tolerance& tol = {}, double window = 1.0) {
    tol.validate();
    if (!(window > 0.0)) throw std::invalid_argument("integrate_to_infinity: window > 0 required");

    constexpr int kMaxWindows = 48;   // dyadic span ~ window * 2^48
    constexpr int kRunLength = 4;     // non-shrinking increments before declaring divergence
    constexpr double kRunSlack = 1e-4;

    double lo = a;
    double width = window;
    double partial = 0.0;
    double prev_increment = std::numeric_limits<double>::quiet_NaN();
    int run = 0;

    ImproperResult out;
    for (int k = 0; k < kMaxWindows; ++k) {
        const double increment = integrate(f, lo, lo + width, tol);
        partial += increment;
        lo += width;
        width *= 2.0;

        if (std::isfinite(prev_increment)) {
            if (std::abs(increment) < tol.abs_tol && std::abs(prev_increment) < tol.abs_tol) {
                out.kind = ImproperResult::Kind::Converged;
                out.value = partial;
                out.est_error = std::max(std::abs(increment), std::abs(prev_increment)) + tol.abs_tol;
                out.truncation_point = lo;
                return out;
            }
            const bool same_sign = increment * prev_increment > 0.0;
            const bool non_shrinking = std::abs(increment) >= (1.0 - kRunSlack) * std::abs(prev_increment);
            run = (same_sign && non_shrinking) ? run + 1 : 0;

            const bool ratio_rule = run >= kRunLength && std::abs(partial) > 10.0 * tol.abs_tol;
            const bool blowup_rule = std::abs(partial) > 1.0 / tol.abs_tol && same_sign &&
                                     std::abs(increment) >= std::abs(prev_increment);
            if (ratio_rule || blowup_rule) {
                out.kind = ImproperResult::Kind::Divergent;
                out.direction = increment > 0.0 ? +1 : -1;
                out.partial = partial;
                out.last_increment = increment;
                out.truncation_point = lo;
                return out;
            }
        }
        prev_increment = increment;
    }
    out.kind = ImproperResult::Kind::Inconclusive;
    out.partial = partial;
    out.last_increment = prev_increment;
    out.truncation_point = lo;
    return out;
}

// Bracketed root of f on [lo, hi]: bisection with secant acceleration; the
// final bracket has width <= abs_tol and the endpoint with smaller |f| is
// returned.
template <class F>
double find_root(F&& f, double lo, double hi, const Tolerance& tol = {}) {
    tol.validate();
    if (!(lo < hi)) throw std::invalid_argument("find_root: requires lo < hi");

    auto eval = [&](double x) {
        const double y = f(x);
        if (!std::isfinite(y)) throw NonFiniteSample(x);
        return y;
    };

    double flo = eval(lo), fhi = eval(hi);
    if (flo == 0.0) return lo;
    if (fhi == 0.0) return hi;
    if (flo * fhi > 0.0) throw NoSignChange();

    bool force_bisect = false;
    for (int it = 0; it < 256 && (hi - lo) > tol.abs_tol; ++it) {
        double x;
        const double width = hi - lo;
        if (!force_bisect && fhi != flo) {
            x = lo - flo * width / (fhi - flo);
            const double margin = 0.01 * width;
            if (!(x > lo + margin && x < hi - margin)) x = lo + 0.5 * width;
        } else {
            x = lo + 0.5 * width;
        }
        const double fx = eval(x);
        if (fx == 0.0) return x;
        if (flo * fx < 0.0) {
            hi = x;
            fhi = fx;
        } else {
            lo = x;
            flo = fx;
        }
        // If the secant step barely shrank the bracket, bisect next round.
        force_bisect = (hi - lo) > 0.75 * width;
    }
    return std::abs(flo) <= std::abs(fhi) ? lo : hi;
}

// Central finite difference of order 1 (first derivative) or 2 (second).
template <class F>
double finite_diff(F&& f, double x, double h, int order) {
    if (!(h > 0.0)) throw std::invalid_argument("finite_diff: h > 0 required");
    if (order == 1) return (f(x + h) - f(x - h)) / (2.0 * h);
    if (order == 2) return (f(x + h) - 2.0 * f(x) + f(x - h)) / (h * h);
    throw std::invalid_argument("finite_diff: order must be 1 or 2");
}

}  // namespace drawdown::num
