#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "drawdown/model.hpp"
#include "drawdown/numerics.hpp"
#include "drawdown/policy.hpp"
#include "drawdown/scale.hpp"

// Independent ground-truth routes for the scale machinery, used to gate the
// quadrature implementation: elementary closed forms for the constant and
// quadratic payouts, and an ODE integration of g'' = -delta/(c - rw) g' that
// bypasses quadrature entirely.

namespace drawdown::oracle {

struct StepUnderflow : num::NumericalError {
    double last_w;
    double last_g;
    StepUnderflow(double w, double g)
        : num::NumericalError("scale_by_ode: g' underflowed near the safe level at w = " +
                              std::to_string(w)),
          last_w(w), last_g(g) {}
};

// Constant payout c: the exponent integrates to (delta/r) ln((c - r alpha m)/(c - r w)),
// giving g in elementary terms:
//   g(w, m) = ((c - r am)^q - (c - r w)^q) / (r q (c - r am)^(q-1)),  q = delta/r + 1.
inline double constant_scale_closed(double c, const MarketParams& market, double alpha, double m,
                                    double w) {
    const double ws = c / market.r;
    const double am = alpha * m;
    const double tiny = 1e-12 * std::max(1.0, ws);
    if (w < am - tiny || w > ws + tiny)
        throw DomainError("constant_scale_closed: w outside [alpha*m, c/r]");
    const double q = market.delta() / market.r + 1.0;
    const double e0 = c - market.r * am;
    const double ew = c - market.r * std::clamp(w, am, ws);
    return (std::pow(e0, q) - std::pow(ew, q)) / (market.r * q * std::pow(e0, q - 1.0));
}

// Quadratic payout c(w) = r w + b (ws - w)^2: the exponent integrates to
// (delta/b) (1/(ws - y) - 1/(ws - am)), leaving
//   g(w, m) = exp(delta/(b (ws - am))) * int_{am}^w exp(-delta/(b (ws - y))) dy,
// evaluated here with the exponent difference kept inside one integrand.
inline double quadratic_scale_closed(double b, double ws, const MarketParams& market, double alpha,
                                     double m, double w, const num::Tolerance& tol = {}) {
    const double am = alpha * m;
    const double floor = ws - market.r / (2.0 * b);
    const double tiny = 1e-12 * std::max(1.0, ws);
    if (am < floor - tiny)
        throw DomainError("quadratic_scale_closed: alpha*m below ws - r/(2b)");
    if (w < am - tiny || w > ws + tiny)
        throw DomainError("quadratic_scale_closed: w outside [alpha*m, ws]");
    const double a = market.delta() / b;
    const double u0 = ws - am;
    return num::integrate(
        [&](double y) { return std::exp(a * (1.0 / u0 - 1.0 / (ws - y))); }, am,
        std::clamp(w, am, ws), tol);
}

// Closed form of the Feller integral for the quadratic payout:
//   v(w, m) = T1(w) - T2 * g(w, m)
// with T1, T2 elementary in 1/(ws - w); diverges like 1/(b (ws - w)).
inline double quadratic_feller_closed(double b, double ws, const MarketParams& market, double alpha,
                                      double m, double w, const num::Tolerance& tol = {}) {
    const double am = alpha * m;
    const double delta = market.delta();
    const double u0 = ws - am;
    const double aw = ws - w;
    const double t1 = (1.0 / b) * (1.0 / aw - 1.0 / u0) + (2.0 / delta) * std::log(aw / u0) +
                      (2.0 * b / (delta * delta)) * (w - am);
    const double t2 = (1.0 / b) / (u0 * u0) - (2.0 / delta) / u0 + 2.0 * b / (delta * delta);
    return t1 - t2 * quadratic_scale_closed(b, ws, market, alpha, m, w, tol);
}

// Integrates (g, g') from g(alpha m) = 0, g'(alpha m) = 1 with classical RK4
// and global step halving until successive refinements agree at every
// target. Targets must lie in [alpha m, w_s).
inline std::vector<double> scale_by_ode(const DrawdownProblem& problem, double m,
                                        std::vector<double> targets,
                                        const num::Tolerance& tol = {}) {
    const double am = problem.alpha * m;
    const double ws = problem.safe_level();
    const double limit = std::isfinite(ws) ? ws * (1.0 - 1e-12) : kInf;
    for (double t : targets)
        if (t < am - 1e-12 * std::max(1.0, am) || t >= limit)
            throw DomainError("scale_by_ode: target outside [alpha*m, w_s)");

    std::vector<std::size_t> order(targets.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return targets[a] < targets[b]; });

    auto slope = [&](double w, double gp) {
        const double ex = problem.excess_at(w);
        if (!(ex > 0.0)) throw NonPositiveExcess(w);
        return -problem.delta() / ex * gp;
    };

    auto sweep = [&](long n_base) {
        std::vector<double> out(targets.size(), 0.0);
        double w = am, g = 0.0, gp = 1.0;
        const double span = std::max(targets[order.back()] - am,
                                     1e-12 * std::max(1.0, std::abs(am)));
        const double h_base = span / static_cast<double>(n_base);
        for (std::size_t idx : order) {
            const double target = targets[idx];
            const double seg = target - w;
            if (seg > 0.0) {
                const long steps = std::max(1L, static_cast<long>(std::ceil(seg / h_base)));
                const double h = seg / static_cast<double>(steps);
                for (long s = 0; s < steps; ++s) {
                    const double k1g = gp, k1p = slope(w, gp);
                    const double k2g = gp + 0.5 * h * k1p, k2p = slope(w + 0.5 * h, k2g);
                    const double k3g = gp + 0.5 * h * k2p, k3p = slope(w + 0.5 * h, k3g);
                    const double k4g = gp + h * k3p, k4p = slope(w + h, k4g);
                    g += h / 6.0 * (k1g + 2.0 * k2g + 2.0 * k3g + k4g);
                    gp += h / 6.0 * (k1p + 2.0 * k2p + 2.0 * k3p + k4p);
                    w += h;
                    if (gp <= 0.0) {
                        if (gp < 0.0 || target - w > 1e-9 * span) throw StepUnderflow(w, g);
                        gp = 0.0;
                    }
                }
            }
            out[idx] = g;
        }
        return out;
    };

    long n = 256;
    std::vector<double> coarse = sweep(n);
    for (int round = 0; round < 14; ++round) {
        n *= 2;
        std::vector<double> fine = sweep(n);
        double worst = 0.0;
        for (std::size_t i = 0; i < targets.size(); ++i) {
            const double scale = std::max(std::abs(fine[i]), tol.abs_tol);
            worst = std::max(worst, std::abs(fine[i] - coarse[i]) / scale);
        }
        if (worst <= tol.rel_tol) return fine;
        coarse = std::move(fine);
    }
    return coarse;
}

// Max deviation of the capped drawdown probability from its defining
// boundary-value problem: interior HJB residual plus the three boundary
// conditions h(alpha m, m) = 1, h(cap, cap) = 0, h_m(m, m) = 0.
inline double bvp_residual_scan(const ScaleContext& ctx, double cap, int w_points = 16,
                                int m_points = 5) {
    const auto& problem = ctx.problem();
    const double alpha = problem.alpha;
    double worst = 0.0;

    for (int j = 0; j < m_points; ++j) {
        const double m = cap * (0.55 + 0.42 * (j + 1.0) / (m_points + 1.0));
        const double am = alpha * m;
        const double width = m - am;
        const double h = 1e-4 * width;

        worst = std::max(worst, std::abs(ctx.capped_drawdown_prob(am, m, cap) - 1.0));
        for (int i = 0; i < w_points; ++i) {
            const double w = am + width * (i + 1.0) / (w_points + 1.0);
            if (w - h <= am || w + h >= m) continue;
            const double res = hjb_residual(
                problem, [&](double x) { return ctx.capped_drawdown_prob(x, m, cap); }, w, h);
            worst = std::max(worst, std::abs(res));
        }
        const double hm = 1e-5 * width;
        const double pasting = num::finite_diff(
            [&](double mm) { return ctx.capped_drawdown_prob(m, mm, cap); }, m, hm, 1);
        worst = std::max(worst, std::abs(pasting));
    }
    worst = std::max(worst, std::abs(ctx.capped_drawdown_prob(cap, cap, cap)));
    return worst;
}

}  // namespace drawdown::oracle
