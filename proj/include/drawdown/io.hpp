#pragma once

#include <charconv>
#include <fstream>
#include <stdexcept>
#include <string>
#include <system_error>
#include <vector>

#include <json.hpp>

#include "drawdown/model.hpp"
#include "drawdown/simulate.hpp"

// JSON problem/config loading and locale-independent number formatting for
// the CLI file formats:
//
//   problem file:  { "market": {"r":, "mu":, "sigma":}, "payout": {"kind":, ...}, "alpha": }
//   sweep file:    { "w_grid": {"min":, "max":, "count":},
//                    "m_grid": {...}, "outputs": ["phi", ...] }
//   sim config:    { "dt":, "horizon":, "n_paths":, "seed":,
//                    "eps_safe"?:, "eps_barrier"?: }

namespace drawdown::io {

struct ParseError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

namespace detail {

inline const nlohmann::json& field(const nlohmann::json& j, const char* key, const char* where) {
    auto it = j.find(key);
    if (it == j.end())
        throw ParseError(std::string(where) + ": missing field '" + key + "'");
    return *it;
}

inline double number(const nlohmann::json& j, const char* key, const char* where) {
    const auto& v = field(j, key, where);
    if (!v.is_number())
        throw ParseError(std::string(where) + ": field '" + key + "' must be a number");
    return v.get<double>();
}

inline nlohmann::json parse_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open file: " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(path + ": " + e.what());
    }
    return j;
}

}  // namespace detail

inline PayoutSpec payout_from_json(const nlohmann::json& j) {
    const auto& kind_field = detail::field(j, "kind", "payout");
    if (!kind_field.is_string()) throw ParseError("payout: field 'kind' must be a string");
    const std::string kind = kind_field.get<std::string>();

    if (kind == "constant") return ConstantPayout{detail::number(j, "c", "payout")};
    if (kind == "proportional") return ProportionalPayout{detail::number(j, "kappa", "payout")};
    if (kind == "affine")
        return AffinePayout{detail::number(j, "a", "payout"), detail::number(j, "b", "payout")};
    if (kind == "quadratic_safe")
        return QuadraticSafePayout{detail::number(j, "b", "payout"), detail::number(j, "ws", "payout")};
    if (kind == "tabulated") {
        const auto& knots = detail::field(j, "knots", "payout");
        if (!knots.is_array()) throw ParseError("payout: field 'knots' must be an array");
        TabulatedPayout t;
        for (const auto& k : knots) {
            if (!k.is_array() || k.size() != 2 || !k[0].is_number() || !k[1].is_number())
                throw ParseError("payout: each knot must be a [w, c] number pair");
            t.knots.emplace_back(k[0].get<double>(), k[1].get<double>());
        }
        return t;
    }
    throw ParseError("payout: unknown kind '" + kind + "'");
}

inline DrawdownProblem problem_from_json(const nlohmann::json& j) {
    const auto& mj = detail::field(j, "market", "problem");
    MarketParams market(detail::number(mj, "r", "market"), detail::number(mj, "mu", "market"),
                        detail::number(mj, "sigma", "market"));
    PayoutSpec payout = payout_from_json(detail::field(j, "payout", "problem"));
    const double alpha = detail::number(j, "alpha", "problem");
    return make_problem(market, payout, alpha);
}

inline DrawdownProblem load_problem_file(const std::string& path) {
    return problem_from_json(detail::parse_file(path));
}

struct GridSpec {
    double min = 0.0;
    double max = 0.0;
    int count = 0;
};

struct SweepSpec {
    GridSpec w_grid;
    GridSpec m_grid;
    std::vector<std::string> outputs;  // subset of {phi, pi_star, g, k, v}
};

inline SweepSpec sweep_from_json(const nlohmann::json& j) {
    auto grid = [&](const char* key) {
        const auto& gj = detail::field(j, key, "sweep");
        GridSpec g;
        g.min = detail::number(gj, "min", key);
        g.max = detail::number(gj, "max", key);
        const auto& count = detail::field(gj, "count", key);
        if (!count.is_number_integer()) throw ParseError(std::string(key) + ": count must be an integer");
        g.count = count.get<int>();
        if (g.count < 2) throw ParseError(std::string(key) + ": count >= 2 required");
        if (!(g.min < g.max)) throw ParseError(std::string(key) + ": min < max required");
        return g;
    };
    SweepSpec spec;
    spec.w_grid = grid("w_grid");
    spec.m_grid = grid("m_grid");
    const auto& outputs = detail::field(j, "outputs", "sweep");
    if (!outputs.is_array() || outputs.empty())
        throw ParseError("sweep: outputs must be a non-empty array");
    for (const auto& o : outputs) {
        if (!o.is_string()) throw ParseError("sweep: outputs entries must be strings");
        const std::string name = o.get<std::string>();
        if (name != "phi" && name != "pi_star" && name != "g" && name != "k" && name != "v")
            throw ParseError("sweep: unknown output column '" + name + "'");
        spec.outputs.push_back(name);
    }
    return spec;
}

inline SweepSpec load_sweep_file(const std::string& path) {
    return sweep_from_json(detail::parse_file(path));
}

inline sim::SimConfig sim_config_from_json(const nlohmann::json& j) {
    sim::SimConfig cfg;
    cfg.dt = detail::number(j, "dt", "sim config");
    cfg.horizon = detail::number(j, "horizon", "sim config");
    const auto& n = detail::field(j, "n_paths", "sim config");
    if (!n.is_number_integer()) throw ParseError("sim config: n_paths must be an integer");
    cfg.n_paths = n.get<long>();
    const auto& seed = detail::field(j, "seed", "sim config");
    if (!seed.is_number_integer()) throw ParseError("sim config: seed must be an integer");
    cfg.seed = seed.get<std::uint64_t>();
    if (j.contains("eps_safe")) cfg.eps_safe = detail::number(j, "eps_safe", "sim config");
    if (j.contains("eps_barrier")) cfg.eps_barrier = detail::number(j, "eps_barrier", "sim config");
    cfg.validate();
    return cfg;
}

inline sim::SimConfig load_sim_config_file(const std::string& path) {
    return sim_config_from_json(detail::parse_file(path));
}

// Shortest round-trip decimal form, '.' separator, no locale involvement.
inline std::string format_double(double x) {
    char buf[32];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, x);
    if (ec != std::errc()) throw std::runtime_error("format_double: conversion failed");
    return std::string(buf, ptr);
}

}  // namespace drawdown::io
