#pragma once

// Run configuration: JSON file, unknown keys rejected, every field validated
// before any compute. The hash of the canonical effective config is stamped
// on every artifact.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>

#include <fmt/format.h>
#include <json.hpp>

#include "invdp/errors.hpp"
#include "invdp/simulator.hpp"
#include "invdp/structural_estimation.hpp"

namespace invdp {

inline constexpr const char* kSchemaVersion = "1";

struct RunConfig {
    std::string schema_version = kSchemaVersion;
    std::uint64_t seed = 1;
    int workers = 1;
    std::string output_dir = "invdp_out";
    std::string input_dir;  ///< where fit/counterfact read earlier artifacts; defaults to output_dir
    bool skip_failed_units = false;

    ChainSpec chain = default_chain_spec();
    double beta = daily_discount_factor();
    ModelBuildOptions model;
    PmlOptions pml;
    bool delay = true;
    bool include_shock_surplus = false;

    nlohmann::json effective;  ///< canonical result-determining config after overrides
    std::string hash;          ///< 16 hex digits of FNV-1a over effective.dump()
};

namespace detail {

using nlohmann::json;

inline void reject_unknown(const json& j, const std::string& where, std::initializer_list<const char*> allowed) {
    if (!j.is_object()) throw ConfigError(where + ": expected an object");
    const std::set<std::string> ok(allowed.begin(), allowed.end());
    for (const auto& [k, v] : j.items())
        if (!ok.count(k)) throw ConfigError("unknown config key '" + (where.empty() ? k : where + "." + k) + "'");
}

template <typename T>
T get(const json& j, const char* key, const std::string& where, T fallback) {
    if (!j.contains(key)) return fallback;
    try {
        return j.at(key).get<T>();
    } catch (const json::exception&) {
        throw ConfigError("config field '" + where + key + "' has the wrong type");
    }
}

inline std::uint64_t fnv1a(const std::string& s) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

inline void require(bool ok, const std::string& field, const std::string& why) {
    if (!ok) throw ConfigError("config field '" + field + "' " + why);
}

inline void parse_cost(const json& j, CostEquation& eq, const std::string& where) {
    reject_unknown(j, where, {"intercept", "slopes", "class_effects", "region_effects", "product_effects"});
    const std::string w = where + ".";
    eq.intercept = get(j, "intercept", w, eq.intercept);
    eq.slopes = get(j, "slopes", w, eq.slopes);
    eq.class_effects = get(j, "class_effects", w, eq.class_effects);
    eq.region_effects = get(j, "region_effects", w, eq.region_effects);
    eq.product_effects = get(j, "product_effects", w, eq.product_effects);
}

inline void parse_chain(const json& j, ChainSpec& c) {
    reject_unknown(j, "chain", {"n_stores", "n_products", "n_days", "n_regions", "sigma_eps", "manager_noise",
                                "low_education_multiplier", "low_experience_multiplier", "markups", "demand",
                                "demand_population_slope", "prices", "cost", "initial_inventory", "pilot_days",
                                "holidays", "max_resample"});
    const std::string w = "chain.";
    c.n_stores = get(j, "n_stores", w, c.n_stores);
    c.n_products = get(j, "n_products", w, c.n_products);
    c.n_days = get(j, "n_days", w, c.n_days);
    c.n_regions = get(j, "n_regions", w, c.n_regions);
    c.sigma_eps = get(j, "sigma_eps", w, c.sigma_eps);
    c.manager_noise = get(j, "manager_noise", w, c.manager_noise);
    c.low_education_multiplier = get(j, "low_education_multiplier", w, c.low_education_multiplier);
    c.low_experience_multiplier = get(j, "low_experience_multiplier", w, c.low_experience_multiplier);
    c.markups = get(j, "markups", w, c.markups);
    c.demand_population_slope = get(j, "demand_population_slope", w, c.demand_population_slope);
    c.max_resample = get(j, "max_resample", w, c.max_resample);
    c.simulation.initial_inventory = get(j, "initial_inventory", w, c.simulation.initial_inventory);
    c.simulation.pilot_days = get(j, "pilot_days", w, c.simulation.pilot_days);
    c.simulation.calendar.holidays = get(j, "holidays", w, c.simulation.calendar.holidays);
    if (j.contains("demand")) {
        const auto& d = j["demand"];
        reject_unknown(d, "chain.demand", {"eta_weekend", "eta_holiday", "eta_intercept", "eta_p", "eta_q", "alpha"});
        const std::string wd = "chain.demand.";
        c.demand.eta_weekend = get(d, "eta_weekend", wd, c.demand.eta_weekend);
        c.demand.eta_holiday = get(d, "eta_holiday", wd, c.demand.eta_holiday);
        c.demand.eta_intercept = get(d, "eta_intercept", wd, c.demand.eta_intercept);
        c.demand.eta_p = get(d, "eta_p", wd, c.demand.eta_p);
        c.demand.eta_q = get(d, "eta_q", wd, c.demand.eta_q);
        c.demand.alpha = get(d, "alpha", wd, c.demand.alpha);
    }
    if (j.contains("prices")) {
        const auto& arr = j["prices"];
        require(arr.is_array(), "chain.prices", "must be an array");
        c.prices.clear();
        for (std::size_t i = 0; i < arr.size(); ++i) {
            const std::string wp = "chain.prices[" + std::to_string(i) + "]";
            reject_unknown(arr[i], wp, {"levels", "switch_prob"});
            PriceProcess p;
            p.levels = get(arr[i], "levels", wp + ".", p.levels);
            p.switch_prob = get(arr[i], "switch_prob", wp + ".", p.switch_prob);
            c.prices.push_back(p);
        }
    }
    if (j.contains("cost")) {
        const auto& cj = j["cost"];
        reject_unknown(cj, "chain.cost", {"gamma_h", "gamma_z", "gamma_f", "gamma_c"});
        for (int k = 0; k < 4; ++k)
            if (cj.contains(kCostNames[k]))
                parse_cost(cj[kCostNames[k]], c.cost[k], std::string("chain.cost.") + kCostNames[k]);
    }
}

inline void validate(const RunConfig& c) {
    require(c.schema_version == kSchemaVersion, "schema_version", std::string("must be \"") + kSchemaVersion + "\"");
    require(c.workers >= 1 && c.workers <= 1024, "workers", "must lie in [1, 1024]");
    require(!c.output_dir.empty(), "output_dir", "must not be empty");
    require(c.beta > 0 && c.beta < 1, "model.beta", "must lie in (0,1)");
    const auto& g = c.model.grids;
    require(g.k_step >= 1, "model.grids.k_step", "must be >= 1");
    require(g.k_max >= g.k_step && g.k_max % g.k_step == 0, "model.grids.k_max", "must be a positive multiple of k_step");
    require(g.y_step >= 1, "model.grids.y_step", "must be >= 1");
    require(g.y_max >= g.y_step && g.y_max % g.y_step == 0, "model.grids.y_max", "must be a positive multiple of y_step");
    require(c.model.n_clusters >= 1 && c.model.n_clusters <= 10, "model.n_clusters", "must lie in [1, 10]");
    require(c.pml.max_iterations >= 1, "pml.max_iterations", "must be >= 1");
    require(c.pml.gradient_tolerance > 0, "pml.gradient_tolerance", "must be > 0");
    require(c.pml.decrement_tolerance > 0, "pml.decrement_tolerance", "must be > 0");
    const auto& b = c.chain.simulation.bellman;
    require(b.tolerance > 0, "solver.tolerance", "must be > 0");
    require(b.max_sweeps >= 1, "solver.max_sweeps", "must be >= 1");
    const auto& ch = c.chain;
    require(ch.n_stores >= 1, "chain.n_stores", "must be >= 1");
    require(ch.n_products >= 1, "chain.n_products", "must be >= 1");
    require(ch.n_days >= 30, "chain.n_days", "must be >= 30");
    require(ch.n_regions >= 1, "chain.n_regions", "must be >= 1");
    require(ch.sigma_eps > 0, "chain.sigma_eps", "must be > 0");
    for (double s : ch.manager_noise) require(s >= 0, "chain.manager_noise", "entries must be >= 0");
    require(!ch.markups.empty(), "chain.markups", "must not be empty");
    for (double m : ch.markups) require(m >= 0, "chain.markups", "entries must be >= 0");
    require(ch.demand.alpha >= 0, "chain.demand.alpha", "must be >= 0");
    require(ch.simulation.initial_inventory >= 0, "chain.initial_inventory", "must be >= 0");
    require(ch.simulation.pilot_days >= 60, "chain.pilot_days", "must be >= 60");
    for (std::size_t i = 0; i < ch.prices.size(); ++i) {
        const std::string f = "chain.prices[" + std::to_string(i) + "]";
        require(!ch.prices[i].levels.empty(), f + ".levels", "must not be empty");
        for (double p : ch.prices[i].levels) require(p > 0, f + ".levels", "entries must be > 0");
        require(ch.prices[i].switch_prob >= 0 && ch.prices[i].switch_prob <= 1, f + ".switch_prob",
                "must lie in [0,1]");
    }
    for (int k = 0; k < 4; ++k) {
        const std::string f = std::string("chain.cost.") + kCostNames[k];
        if (!ch.cost[k].product_effects.empty())
            require(static_cast<int>(ch.cost[k].product_effects.size()) == ch.n_products, f + ".product_effects",
                    "must have n_products entries");
        if (!ch.cost[k].region_effects.empty())
            require(static_cast<int>(ch.cost[k].region_effects.size()) == ch.n_regions, f + ".region_effects",
                    "must have n_regions entries");
    }
}

}  // namespace detail

/// Parses a config document. Missing keys keep their defaults.
inline RunConfig parse_config(const nlohmann::json& j) {
    using detail::get;
    detail::reject_unknown(j, "", {"schema_version", "seed", "workers", "output_dir", "input_dir",
                                   "skip_failed_units", "chain", "model", "solver", "pml", "counterfactual"});
    RunConfig c;
    c.schema_version = get(j, "schema_version", "", c.schema_version);
    c.seed = get(j, "seed", "", c.seed);
    c.workers = get(j, "workers", "", c.workers);
    c.output_dir = get(j, "output_dir", "", c.output_dir);
    c.input_dir = get(j, "input_dir", "", c.input_dir);
    c.skip_failed_units = get(j, "skip_failed_units", "", c.skip_failed_units);
    if (j.contains("chain")) detail::parse_chain(j["chain"], c.chain);
    if (j.contains("model")) {
        const auto& m = j["model"];
        detail::reject_unknown(m, "model", {"beta", "grids", "n_clusters", "cluster_seed"});
        c.beta = get(m, "beta", "model.", c.beta);
        c.model.n_clusters = get(m, "n_clusters", "model.", c.model.n_clusters);
        c.model.seed = get(m, "cluster_seed", "model.", c.model.seed);
        if (m.contains("grids")) {
            const auto& g = m["grids"];
            detail::reject_unknown(g, "model.grids", {"k_step", "k_max", "y_step", "y_max"});
            c.model.grids.k_step = get(g, "k_step", "model.grids.", c.model.grids.k_step);
            c.model.grids.k_max = get(g, "k_max", "model.grids.", c.model.grids.k_max);
            c.model.grids.y_step = get(g, "y_step", "model.grids.", c.model.grids.y_step);
            c.model.grids.y_max = get(g, "y_max", "model.grids.", c.model.grids.y_max);
        }
    }
    if (j.contains("solver")) {
        const auto& s = j["solver"];
        detail::reject_unknown(s, "solver", {"tolerance", "max_sweeps"});
        auto& b = c.chain.simulation.bellman;
        b.tolerance = get(s, "tolerance", "solver.", b.tolerance);
        b.max_sweeps = get(s, "max_sweeps", "solver.", b.max_sweeps);
    }
    if (j.contains("pml")) {
        const auto& p = j["pml"];
        detail::reject_unknown(p, "pml", {"max_iterations", "gradient_tolerance", "decrement_tolerance",
                                          "floor_sensitivity"});
        c.pml.max_iterations = get(p, "max_iterations", "pml.", c.pml.max_iterations);
        c.pml.gradient_tolerance = get(p, "gradient_tolerance", "pml.", c.pml.gradient_tolerance);
        c.pml.decrement_tolerance = get(p, "decrement_tolerance", "pml.", c.pml.decrement_tolerance);
        c.pml.floor_sensitivity = get(p, "floor_sensitivity", "pml.", c.pml.floor_sensitivity);
    }
    if (j.contains("counterfactual")) {
        const auto& cf = j["counterfactual"];
        detail::reject_unknown(cf, "counterfactual", {"delay", "include_shock_surplus"});
        c.delay = get(cf, "delay", "counterfactual.", c.delay);
        c.include_shock_surplus = get(cf, "include_shock_surplus", "counterfactual.", c.include_shock_surplus);
    }
    c.chain.simulation.model = c.model;
    return c;
}

/// Canonical form of a config; the hash is taken over this.
inline nlohmann::json to_json(const RunConfig& c) {
    nlohmann::json j;
    j["schema_version"] = c.schema_version;
    j["seed"] = c.seed;
    j["workers"] = c.workers;
    j["output_dir"] = c.output_dir;
    j["input_dir"] = c.input_dir;
    j["skip_failed_units"] = c.skip_failed_units;
    const auto& ch = c.chain;
    auto& cj = j["chain"];
    cj["n_stores"] = ch.n_stores;
    cj["n_products"] = ch.n_products;
    cj["n_days"] = ch.n_days;
    cj["n_regions"] = ch.n_regions;
    cj["sigma_eps"] = ch.sigma_eps;
    cj["manager_noise"] = ch.manager_noise;
    cj["low_education_multiplier"] = ch.low_education_multiplier;
    cj["low_experience_multiplier"] = ch.low_experience_multiplier;
    cj["markups"] = ch.markups;
    cj["demand_population_slope"] = ch.demand_population_slope;
    cj["max_resample"] = ch.max_resample;
    cj["initial_inventory"] = ch.simulation.initial_inventory;
    cj["pilot_days"] = ch.simulation.pilot_days;
    cj["holidays"] = ch.simulation.calendar.holidays;
    cj["demand"] = {{"eta_weekend", ch.demand.eta_weekend}, {"eta_holiday", ch.demand.eta_holiday},
                    {"eta_intercept", ch.demand.eta_intercept}, {"eta_p", ch.demand.eta_p},
                    {"eta_q", ch.demand.eta_q}, {"alpha", ch.demand.alpha}};
    cj["prices"] = nlohmann::json::array();
    for (const auto& p : ch.prices) cj["prices"].push_back({{"levels", p.levels}, {"switch_prob", p.switch_prob}});
    for (int k = 0; k < 4; ++k) {
        const auto& e = ch.cost[k];
        cj["cost"][kCostNames[k]] = {{"intercept", e.intercept},
                                     {"slopes", e.slopes},
                                     {"class_effects", e.class_effects},
                                     {"region_effects", e.region_effects},
                                     {"product_effects", e.product_effects}};
    }
    j["model"] = {{"beta", c.beta},
                  {"n_clusters", c.model.n_clusters},
                  {"cluster_seed", c.model.seed},
                  {"grids",
                   {{"k_step", c.model.grids.k_step},
                    {"k_max", c.model.grids.k_max},
                    {"y_step", c.model.grids.y_step},
                    {"y_max", c.model.grids.y_max}}}};
    j["solver"] = {{"tolerance", ch.simulation.bellman.tolerance}, {"max_sweeps", ch.simulation.bellman.max_sweeps}};
    j["pml"] = {{"max_iterations", c.pml.max_iterations},
                {"gradient_tolerance", c.pml.gradient_tolerance},
                {"decrement_tolerance", c.pml.decrement_tolerance},
                {"floor_sensitivity", c.pml.floor_sensitivity}};
    j["counterfactual"] = {{"delay", c.delay}, {"include_shock_surplus", c.include_shock_surplus}};
    return j;
}

/// Validates, then fills the canonical form and hash.
inline void finalize(RunConfig& c) {
    c.chain.simulation.model = c.model;
    detail::validate(c);
    c.effective = to_json(c);
    // Paths and thread count do not change results, so they stay out of the hash.
    for (const char* k : {"output_dir", "input_dir", "workers"}) c.effective.erase(k);
    c.hash = fmt::format("{:016x}", detail::fnv1a(c.effective.dump()));
}

inline RunConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path.string());
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in, nullptr, true, true);
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError("config " + path.string() + " is not valid JSON: " + e.what());
    }
    return parse_config(j);
}

}  // namespace invdp
