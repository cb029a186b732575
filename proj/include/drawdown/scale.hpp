#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "drawdown/model.hpp"
#include "drawdown/numerics.hpp"

// Scale-function machinery of the optimally controlled wealth diffusion
// dW = (c(W) - rW) { dt + (2 sigma / (mu - r)) dB }:
//
//   exponent(m, y)     E(y) = int_{alpha m}^y  delta / (c(u) - r u) du
//   scale_function     g(w, m) = int_{alpha m}^w exp(-E(y)) dy
//   decay_rate         f(m) = alpha [ 1/g(m,m) - delta / (c(alpha m) - r alpha m) ]
//   climb_factor       k(m) = exp(- int_m^{w_s} f(y) dy)
//   capped_drawdown_prob   h(w, m; N) = 1 - exp(- int_m^N f) g(w,m) / g(N,N)
//   extended_scale     p(w) = w - alpha m below alpha m, g(w, m) on [alpha m, w_s]
//   feller_integral    v(w, m) = int int delta/(c(z)-rz)^2 exp(- int_z^y delta/(c-ru) du) dz dy
//
// g is the scale function of the controlled diffusion; v is the Feller
// explosion-test integral whose divergence at w_s means the controlled
// wealth never reaches the safe level.

namespace drawdown {

struct NonPositiveExcess : num::NumericalError {
    double where;
    explicit NonPositiveExcess(double w)
        : num::NumericalError("c(w) - r*w <= 0 inside the integration range at w = " + std::to_string(w)),
          where(w) {}
};

struct IndeterminateLimit : num::NumericalError {
    IndeterminateLimit()
        : num::NumericalError("improper integral for the climb factor is inconclusive; "
                              "the drawdown probability limit is indeterminate") {}
};

struct FellerReport {
    enum class Verdict { DivergesAtSafeLevel, ConvergesAtSafeLevel, Inconclusive };
    enum class Condition { Holds, Fails, NotApplicable };

    std::vector<std::pair<double, double>> v_at_probe;  // (w_k, v(w_k, m)), w_k increasing to w_s
    Verdict verdict = Verdict::Inconclusive;
    double v_limit = 0.0;  // populated for ConvergesAtSafeLevel
    Condition condition_4_4 = Condition::NotApplicable;
    double witness_K = 0.0;    // c'(w) - r stays in (-K, -1/K) when the condition holds
    double witness_eps = 0.0;  // width of the sampled left-neighborhood of w_s

    static const char* name(Verdict v) {
        switch (v) {
            case Verdict::DivergesAtSafeLevel: return "DivergesAtSafeLevel";
            case Verdict::ConvergesAtSafeLevel: return "ConvergesAtSafeLevel";
            default: return "Inconclusive";
        }
    }
    static const char* name(Condition c) {
        switch (c) {
            case Condition::Holds: return "holds";
            case Condition::Fails: return "fails";
            default: return "not-applicable";
        }
    }
};

// Evaluation context: problem + tolerances + memo caches. Read paths take a
// shared lock; writes are idempotent (same key always maps to the same value
// within tolerance), so concurrent evaluation is safe. Clone for a fresh,
// independently cached context.
class ScaleContext {
public:
    explicit ScaleContext(DrawdownProblem problem, num::Tolerance tol = {})
        : problem_(std::move(problem)), tol_(tol) {
        tol_.validate();
        inner_tol_ = {tol_.abs_tol / 10.0, tol_.rel_tol / 10.0, tol_.max_subdivisions};
        between_tol_ = {std::min(tol_.abs_tol, 1e-9), 1e-9, tol_.max_subdivisions};
    }

    ScaleContext(const ScaleContext&) = delete;
    ScaleContext& operator=(const ScaleContext&) = delete;

    ScaleContext clone() const { return ScaleContext(problem_, tol_); }

    const DrawdownProblem& problem() const { return problem_; }
    const num::Tolerance& tolerance() const { return tol_; }
    double safe_level() const { return problem_.safe_level(); }

    // exp(-x) underflows past ~745; a larger exponent contributes nothing to
    // the outer integrals, so it is clamped there.
    static constexpr double kExponentSaturation = 745.0;

    // E(y) = int_{alpha m}^y delta / (c(u) - r u) du, clamped at saturation.
    // May only be called with alpha m <= y <= w_s and positive excess inside.
    double exponent(double m, double y) const {
        const double am = problem_.alpha * m;
        if (y <= am) {
            if (y < am - slack()) throw DomainError("exponent: y below alpha*m");
            return 0.0;
        }
        const double ws = safe_level();
        if (y > ws + slack()) throw DomainError("exponent: y above the safe level");

        const CacheKey key{m, y};
        if (auto hit = lookup(exponent_cache_, exponent_mutex_, key)) return *hit;
        const double value = std::min(exponent_integral(am, std::min(y, ws)), kExponentSaturation);
        store(exponent_cache_, exponent_mutex_, key, value);
        return value;
    }

    // int_z^y delta / (c(u) - r u) du, uncached and clamped. Keeping the
    // difference inside one integral avoids forming E(y) - E(z) from two
    // saturated values.
    double exponent_between(double z, double y) const {
        if (y <= z) return 0.0;
        return std::min(exponent_integral(z, std::min(y, safe_level())), kExponentSaturation);
    }

    // g(w, m) = int_{alpha m}^w exp(-E(y)) dy for alpha m <= w <= w_s.
    double scale_function(double w, double m) const {
        const double am = problem_.alpha * m;
        const double ws = safe_level();
        if (w < am - slack()) throw DomainError("scale_function: w below alpha*m");
        if (w > ws + slack()) throw DomainError("scale_function: w above the safe level");
        const double w_eff = std::clamp(w, am, ws);

        const CacheKey key{w_eff, m};
        if (auto hit = lookup(scale_cache_, scale_mutex_, key)) return *hit;
        const double value =
            num::integrate([&](double y) { return std::exp(-exponent(m, y)); }, am, w_eff, tol_);
        store(scale_cache_, scale_mutex_, key, value);
        return value;
    }

    // f(m) = alpha [ 1/g(m, m) - delta / excess(alpha m) ], for m < w_s.
    double decay_rate(double m) const {
        const double am = problem_.alpha * m;
        const double ex0 = problem_.excess_at(am);
        if (!(ex0 > 0.0)) throw NonPositiveExcess(am);
        return problem_.alpha * (1.0 / scale_function(m, m) - problem_.delta() / ex0);
    }

    // k(m) = exp(- int_m^{w_s} f). With w_s = inf, int f alone is the wrong
    // object (it can diverge to -inf); the survival ratio
    // exp(-int_m^N f)/g(N,N) is what the capped probabilities use, and its
    // negative log-derivative is F(y) = exp(-E(y; y)) / g(y, y) > 0. The
    // climb factor is then exp(- int_m^inf F): zero when that integral
    // diverges (drawdown certain), exp(-value) when it converges, and an
    // IndeterminateLimit error when the tail is inconclusive.
    double climb_factor(double m) const {
        const double ws = safe_level();
        if (std::isfinite(ws) && m >= ws - slack()) return 1.0;

        const CacheKey key{m, 0.0};
        if (auto hit = lookup(climb_cache_, climb_mutex_, key)) return *hit;

        double value;
        if (std::isfinite(ws)) {
            const double total =
                num::integrate([&](double y) { return decay_rate(y); }, m, ws, tol_);
            value = std::exp(-total);
        } else {
            const auto tail = num::integrate_to_infinity(
                [&](double y) { return ratio_decay_rate(y); }, m, tol_, std::max(m, 1.0));
            if (tail.divergent() && tail.direction > 0) {
                value = 0.0;
            } else if (tail.converged()) {
                value = std::exp(-tail.value);
            } else {
                throw IndeterminateLimit();
            }
        }
        store(climb_cache_, climb_mutex_, key, value);
        return value;
    }

    // F(y) = f(y) + d/dy ln g(y, y) = exp(-E(y; y)) / g(y, y); the
    // derivative of -ln[ exp(-int f)/g ] along the diagonal.
    double ratio_decay_rate(double y) const {
        return std::exp(-exponent(y, y)) / scale_function(y, y);
    }

    // h(w, m; cap) = 1 - exp(- int_m^cap f) g(w, m) / g(cap, cap), the
    // drawdown probability when the running maximum is only allowed to climb
    // to cap <= w_s.
    double capped_drawdown_prob(double w, double m, double cap) const {
        if (!(m <= cap + slack())) throw DomainError("capped_drawdown_prob: m <= cap required");
        if (cap > safe_level() + slack())
            throw DomainError("capped_drawdown_prob: cap above the safe level");
        const double total =
            cap > m ? num::integrate([&](double y) { return decay_rate(y); }, m, cap, tol_) : 0.0;
        return 1.0 - std::exp(-total) * scale_function(w, m) / scale_function(cap, cap);
    }

    // Scale function of the dynamics extended to all of R: identity slope
    // below alpha m (zero drift there), g on [alpha m, w_s], constant above.
    double extended_scale(double w, double m) const {
        const double am = problem_.alpha * m;
        if (w <= am) return w - am;
        const double ws = safe_level();
        if (w >= ws) return scale_function(ws, m);
        return scale_function(w, m);
    }

    // v(w, m) for alpha m <= w < w_s, via the single-z form
    //   v = int_{alpha m}^w delta/excess(z)^2 [ int_z^w exp(-int_z^y delta/excess) dy ] dz.
    double feller_integral(double w, double m) const {
        const double am = problem_.alpha * m;
        const double ws = safe_level();
        if (w < am - slack()) throw DomainError("feller_integral: w below alpha*m");
        if (w <= am) return 0.0;
        if (!(w < ws)) throw DomainError("feller_integral: w must lie strictly below the safe level");

        const double delta = problem_.delta();
        auto outer = [&](double z) {
            const double ex = problem_.excess_at(z);
            if (!(ex > 0.0)) throw NonPositiveExcess(z);
            return delta / (ex * ex) * layered_tail_integral(z, w);
        };

        // delta/excess^2 climbs toward z = w, then the inner factor rolls it
        // off within excess(w)/delta of the endpoint; sweep in geometrically
        // shrinking pieces so every regime is actually sampled.
        const num::Tolerance vtol{1e-12, 1e-9, tol_.max_subdivisions};
        const double rolloff = std::max(problem_.excess_at(w) / delta, 1e-14 * (w - am));
        double total = 0.0;
        double lo = am;
        double s = 0.25 * (w - am);
        while (s > rolloff) {
            total += num::integrate(outer, lo, w - s, vtol);
            lo = w - s;
            s *= 0.25;
        }
        total += num::integrate(outer, lo, w, vtol);
        return total;
    }

    // Probes v along w_k -> w_s and samples c' near w_s; diverging v (or the
    // derivative condition holding) means the controlled wealth never
    // reaches the safe level.
    FellerReport feller_report(double m, int probes = 12) const {
        const double ws = safe_level();
        if (!std::isfinite(ws)) throw DomainError("feller_report: requires a finite safe level");
        if (probes < 3) throw std::invalid_argument("feller_report: probes >= 3 required");

        const double am = problem_.alpha * m;
        const double width = ws - am;
        if (!(width > 0.0)) throw DomainError("feller_report: alpha*m must lie below w_s");

        FellerReport report;
        report.v_at_probe.reserve(probes);
        for (int k = 1; k <= probes; ++k) {
            const double w = ws - width * std::ldexp(1.0, -k);
            report.v_at_probe.emplace_back(w, feller_integral(w, m));
        }

        sample_condition_4_4(report, am);

        // Growth of v against k (probe index is linear in -ln(w_s - w_k)):
        // increasing increments means superlinear growth.
        const auto& pv = report.v_at_probe;
        const int n = static_cast<int>(pv.size());
        const double first_inc = pv[1].second - pv[0].second;
        const double last_inc = pv[n - 1].second - pv[n - 2].second;
        bool increasing = true;
        for (int i = 1; i < n; ++i)
            if (!(pv[i].second > pv[i - 1].second)) increasing = false;

        const bool superlinear = increasing && first_inc > 0.0 && last_inc >= 1.5 * first_inc;
        const bool flattening = first_inc > 0.0 && last_inc <= 0.05 * first_inc;

        if (report.condition_4_4 == FellerReport::Condition::Holds || superlinear) {
            report.verdict = FellerReport::Verdict::DivergesAtSafeLevel;
        } else if (flattening) {
            report.verdict = FellerReport::Verdict::ConvergesAtSafeLevel;
            report.v_limit = pv[n - 1].second;
        } else {
            report.verdict = FellerReport::Verdict::Inconclusive;
        }
        return report;
    }

    double scale_at_safe_diag() const {
        const double ws = safe_level();
        if (!std::isfinite(ws)) throw DomainError("scale_at_safe_diag: safe level is infinite");
        {
            std::shared_lock lock(diag_mutex_);
            if (safe_diag_) return *safe_diag_;
        }
        const double value = scale_function(ws, ws);
        std::unique_lock lock(diag_mutex_);
        if (!safe_diag_) safe_diag_ = value;
        return *safe_diag_;
    }

private:
    struct CacheKey {
        double a, b;
        bool operator==(const CacheKey&) const = default;
    };
    struct CacheKeyHash {
        std::size_t operator()(const CacheKey& k) const {
            const std::uint64_t x = std::bit_cast<std::uint64_t>(k.a);
            const std::uint64_t y = std::bit_cast<std::uint64_t>(k.b);
            std::uint64_t h = x * 0x9E3779B97F4A7C15ULL ^ (y + 0x7F4A7C15ULL + (x << 6) + (x >> 2));
            h ^= h >> 31;
            h *= 0xBF58476D1CE4E5B9ULL;
            h ^= h >> 29;
            return static_cast<std::size_t>(h);
        }
    };
    using Cache = std::unordered_map<CacheKey, double, CacheKeyHash>;

    double slack() const {
        const double ws = safe_level();
        return 1e-9 * std::max(1.0, std::isfinite(ws) ? ws : 1.0);
    }

    // int_z^w exp(-int_z^y delta/excess du) dy. Near the safe level the
    // integrand is a boundary layer at y = z of width excess(z)/delta, far
    // thinner than any panel of a single adaptive pass would sample, so the
    // range is swept in geometrically growing pieces starting at that scale.
    double layered_tail_integral(double z, double w) const {
        auto integrand = [&](double y) { return std::exp(-exponent_between(z, y)); };
        const double layer = problem_.excess_at(z) / problem_.delta();
        double width = 30.0 * layer;
        if (!(width > 0.0) || width >= w - z) return num::integrate(integrand, z, w, between_tol_);

        double total = 0.0;
        double lo = z;
        while (lo < w) {
            const double hi = std::min(w, lo + width);
            total += num::integrate(integrand, lo, hi, between_tol_);
            lo = hi;
            width *= 4.0;
            if (exponent_between(z, lo) >= kExponentSaturation) break;  // nothing left
        }
        return total;
    }

    double exponent_integral(double lo, double hi) const {
        const double delta = problem_.delta();
        auto integrand = [&](double u) {
            const double ex = problem_.excess_at(u);
            if (!(ex > 0.0)) throw NonPositiveExcess(u);
            return delta / ex;
        };
        try {
            return num::integrate(integrand, lo, hi, inner_tol_);
        } catch (const num::SubdivisionLimit& e) {
            // Deep in the saturated zone the exact value is irrelevant:
            // exp(-E) underflows for any E past the clamp.
            if (e.best_estimate - e.est_error > kExponentSaturation) return kExponentSaturation;
            throw;
        }
    }

    void sample_condition_4_4(FellerReport& report, double am) const {
        const double ws = safe_level();
        const double eps = std::min(0.1 * (ws - am), 0.05 * ws);
        report.witness_eps = eps;

        double samples[8];
        bool ok = true;
        for (int j = 0; j < 8; ++j) {
            const double dist = eps * std::ldexp(1.0, -j);
            const double w = ws - dist;
            const double h = 0.25 * dist;
            const double cprime = num::finite_diff(
                [&](double x) { return problem_.payout_at(x); }, w, h, 1);
            if (!std::isfinite(cprime)) ok = false;
            samples[j] = cprime - problem_.market.r;
        }
        if (!ok) {
            report.condition_4_4 = FellerReport::Condition::NotApplicable;
            return;
        }
        double lo = samples[0], hi = samples[0];
        for (double s : samples) {
            lo = std::min(lo, s);
            hi = std::max(hi, s);
        }
        const double first_mag = std::abs(samples[0]);
        const double last_mag = std::abs(samples[7]);
        if (hi >= 0.0 || last_mag <= 0.1 * first_mag) {
            // Not strictly negative, or decaying to zero: no uniform 1/K bound.
            report.condition_4_4 = FellerReport::Condition::Fails;
        } else if (last_mag >= 10.0 * first_mag) {
            // Blowing up toward w_s: outside the bounded-derivative setting.
            report.condition_4_4 = FellerReport::Condition::NotApplicable;
        } else {
            report.condition_4_4 = FellerReport::Condition::Holds;
            report.witness_K = 2.0 * std::max(std::abs(lo), 1.0 / std::abs(hi));
        }
    }

    static std::optional<double> lookup(const Cache& cache, std::shared_mutex& mutex,
                                        const CacheKey& key) {
        std::shared_lock lock(mutex);
        auto it = cache.find(key);
        if (it == cache.end()) return std::nullopt;
        return it->second;
    }
    static void store(Cache& cache, std::shared_mutex& mutex, const CacheKey& key, double value) {
        std::unique_lock lock(mutex);
        cache.emplace(key, value);
    }

    DrawdownProblem problem_;
    num::Tolerance tol_;
    num::Tolerance inner_tol_;
    num::Tolerance between_tol_;

    mutable Cache exponent_cache_;
    mutable Cache scale_cache_;
    mutable Cache climb_cache_;
    mutable std::optional<double> safe_diag_;
    mutable std::shared_mutex exponent_mutex_;
    mutable std::shared_mutex scale_mutex_;
    mutable std::shared_mutex climb_mutex_;
    mutable std::shared_mutex diag_mutex_;
};

}  // namespace drawdown
