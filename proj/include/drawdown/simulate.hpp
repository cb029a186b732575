#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <thread>
#include <variant>
#include <vector>

#include "drawdown/model.hpp"
#include "drawdown/policy.hpp"

// Euler-Maruyama Monte Carlo for the wealth process
//   dW = [ r W + (mu - r) pi - c(W) ] dt + sigma pi dB
// under feedback strategies, estimating the drawdown probability
// P(W hits alpha * M). Per-path RNG streams are derived from
// (seed, path index), so results are bit-identical for any worker count,
// and strategies compared under one seed share Brownian increments.

namespace drawdown::sim {

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct OptimalStrategy {};
struct ConstantAmountStrategy {
    double amount;
};
struct ConstantFractionStrategy {
    double fraction;  // pi_t = fraction * W_t, fraction >= 0
};
struct AllSafeStrategy {};

using Strategy =
    std::variant<OptimalStrategy, ConstantAmountStrategy, ConstantFractionStrategy, AllSafeStrategy>;

inline const char* strategy_name(const Strategy& s) {
    struct Name {
        const char* operator()(const OptimalStrategy&) const { return "optimal"; }
        const char* operator()(const ConstantAmountStrategy&) const { return "constant_amount"; }
        const char* operator()(const ConstantFractionStrategy&) const { return "constant_fraction"; }
        const char* operator()(const AllSafeStrategy&) const { return "all_safe"; }
    };
    return std::visit(Name{}, s);
}

inline double risky_amount(const Strategy& s, const DrawdownProblem& problem, double w, double m) {
    struct Amount {
        const DrawdownProblem& problem;
        double w, m;
        double operator()(const OptimalStrategy&) const {
            return extended_risky_amount(problem, w, m);
        }
        double operator()(const ConstantAmountStrategy& c) const { return c.amount; }
        double operator()(const ConstantFractionStrategy& c) const { return c.fraction * w; }
        double operator()(const AllSafeStrategy&) const { return 0.0; }
    };
    return std::visit(Amount{problem, w, m}, s);
}

// The safe-level absorption band is asymptotic territory: the optimally
// controlled wealth approaches w_s like a geometric Brownian motion in
// (w_s - W) and never reaches it, so entering a band of relative width eps
// takes ~ ln(1/eps)/r years. A band of 10% of the domain is reachable on
// practical horizons while contributing O((r eps / excess(alpha m))^q) bias
// to the estimate, far below Monte Carlo noise at 1e5 paths.
inline constexpr double kDefaultSafeBandRatio = 0.1;

struct SimConfig {
    double dt = 1e-3;
    double horizon = 100.0;
    long n_paths = 10000;
    std::uint64_t seed = 1;
    double eps_safe = -1.0;     // absorption band below w_s; < 0 selects the default ratio
    double eps_barrier = 0.0;   // reserved; the barrier test is the strict W <= alpha * M

    void validate() const {
        if (!(dt > 0.0)) throw ConfigError("SimConfig: dt > 0 required");
        if (!(horizon >= dt)) throw ConfigError("SimConfig: horizon >= dt required");
        if (n_paths < 1) throw ConfigError("SimConfig: n_paths >= 1 required");
        if (eps_barrier < 0.0) throw ConfigError("SimConfig: eps_barrier >= 0 required");
    }
};

struct SimEstimate {
    double p_drawdown = 0.0;
    double std_error = 0.0;
    long n_drawdown = 0;
    long n_safe_absorbed = 0;
    long n_censored = 0;
    double mean_hit_time = 0.0;  // among drawdown paths; 0 when none
};

// One Euler-Maruyama step; returns (w', max(m, w')).
inline std::pair<double, double> sim_step(const DrawdownProblem& problem, const Strategy& strategy,
                                          double w, double m, double dt, double z) {
    const double pi = risky_amount(strategy, problem, w, m);
    const auto& mk = problem.market;
    const double drift = mk.r * w + (mk.mu - mk.r) * pi - problem.payout_at(w);
    const double w_next = w + drift * dt + mk.sigma * pi * std::sqrt(dt) * z;
    return {w_next, std::max(m, w_next)};
}

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

inline std::mt19937_64 path_rng(std::uint64_t seed, long path_index) {
    return std::mt19937_64(splitmix64(splitmix64(seed) ^ static_cast<std::uint64_t>(path_index)));
}

enum class Outcome : std::uint8_t { Drawdown, SafeAbsorbed, Censored };

struct PathResult {
    Outcome outcome = Outcome::Censored;
    double hit_time = 0.0;
};

}  // namespace detail

// Simulates n_paths and classifies each as Drawdown (W <= alpha M),
// SafeAbsorbed (W within eps_safe of a finite w_s; drawdown is impossible
// from there) or Censored at the horizon. Deterministic for a given seed
// regardless of the worker count.
inline SimEstimate estimate_drawdown(const DrawdownProblem& problem, const Strategy& strategy,
                                     double w0, double m0, const SimConfig& config,
                                     unsigned threads = 0) {
    config.validate();
    require_in_domain(problem, w0, m0, 1e-12 * std::max(1.0, m0));

    const double ws = problem.safe_level();
    const double alpha = problem.alpha;
    const double eps_safe = config.eps_safe >= 0.0
                                ? config.eps_safe
                                : kDefaultSafeBandRatio * (std::isfinite(ws) ? ws - alpha * m0 : 0.0);
    const bool absorb_safe = std::isfinite(ws);
    const long n_steps = std::lround(config.horizon / config.dt);

    std::vector<detail::PathResult> results(config.n_paths);
    auto run_range = [&](long lo, long hi) {
        for (long i = lo; i < hi; ++i) {
            auto rng = detail::path_rng(config.seed, i);
            std::normal_distribution<double> normal;
            double w = w0, m = m0;
            detail::PathResult res;
            if (w <= alpha * m) {
                res = {detail::Outcome::Drawdown, 0.0};
            } else if (absorb_safe && w >= ws - eps_safe) {
                res = {detail::Outcome::SafeAbsorbed, 0.0};
            } else {
                res.outcome = detail::Outcome::Censored;
                for (long k = 1; k <= n_steps; ++k) {
                    const double z = normal(rng);
                    const auto [w_next, m_next] = sim_step(problem, strategy, w, m, config.dt, z);
                    w = w_next;
                    m = m_next;
                    if (w <= alpha * m) {
                        res = {detail::Outcome::Drawdown, static_cast<double>(k) * config.dt};
                        break;
                    }
                    if (absorb_safe && w >= ws - eps_safe) {
                        res = {detail::Outcome::SafeAbsorbed, 0.0};
                        break;
                    }
                }
            }
            results[i] = res;
        }
    };

    unsigned n_workers = threads > 0 ? threads : std::max(1u, std::thread::hardware_concurrency());
    n_workers = static_cast<unsigned>(
        std::min<long>(n_workers, config.n_paths));
    if (n_workers <= 1) {
        run_range(0, config.n_paths);
    } else {
        std::vector<std::thread> pool;
        pool.reserve(n_workers);
        const long chunk = (config.n_paths + n_workers - 1) / n_workers;
        for (unsigned t = 0; t < n_workers; ++t) {
            const long lo = static_cast<long>(t) * chunk;
            const long hi = std::min<long>(lo + chunk, config.n_paths);
            if (lo >= hi) break;
            pool.emplace_back(run_range, lo, hi);
        }
        for (auto& th : pool) th.join();
    }

    // Sequential reduction in path order keeps the floating sum identical
    // whatever the worker split was.
    SimEstimate est;
    double hit_sum = 0.0;
    for (const auto& res : results) {
        switch (res.outcome) {
            case detail::Outcome::Drawdown:
                ++est.n_drawdown;
                hit_sum += res.hit_time;
                break;
            case detail::Outcome::SafeAbsorbed: ++est.n_safe_absorbed; break;
            case detail::Outcome::Censored: ++est.n_censored; break;
        }
    }
    const double n = static_cast<double>(config.n_paths);
    est.p_drawdown = static_cast<double>(est.n_drawdown) / n;
    est.std_error = std::sqrt(est.p_drawdown * (1.0 - est.p_drawdown) / n);
    est.mean_hit_time = est.n_drawdown > 0 ? hit_sum / static_cast<double>(est.n_drawdown) : 0.0;
    return est;
}

// Runs every strategy under the same seed, so all estimates share Brownian
// increments path by path (common random numbers).
inline std::vector<SimEstimate> compare_strategies(const DrawdownProblem& problem,
                                                   const std::vector<Strategy>& strategies,
                                                   double w0, double m0, const SimConfig& config,
                                                   unsigned threads = 0) {
    std::vector<SimEstimate> out;
    out.reserve(strategies.size());
    for (const auto& s : strategies)
        out.push_back(estimate_drawdown(problem, s, w0, m0, config, threads));
    return out;
}

}  // namespace drawdown::sim
