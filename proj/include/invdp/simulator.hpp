#pragma once

// Forward simulation of daily store-product panels, (S,s) agents for the
// reduced-form Monte Carlo, and synthetic chains with planted cost
// heterogeneity.

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <deque>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "invdp/dp_solver.hpp"
#include "invdp/errors.hpp"
#include "invdp/inventory_model.hpp"
#include "invdp/model_core.hpp"
#include "invdp/parallel.hpp"
#include "invdp/random.hpp"

namespace invdp {

/// Finite-support price process: stay with probability 1 - switch_prob,
/// otherwise move to one of the other levels uniformly.
struct PriceProcess {
    std::vector<double> levels{25.28, 27.28};
    double switch_prob = 0.02;

    void validate() const {
        if (levels.empty()) throw DomainError("PriceProcess: no price levels");
        for (double p : levels)
            if (!(p > 0) || !std::isfinite(p)) throw DomainError("PriceProcess: prices must be > 0");
        if (!(switch_prob >= 0 && switch_prob <= 1)) throw DomainError("PriceProcess: switch_prob must lie in [0,1]");
    }

    Eigen::MatrixXd matrix() const {
        const int n = static_cast<int>(levels.size());
        if (n == 1) return Eigen::MatrixXd::Ones(1, 1);
        Eigen::MatrixXd m = Eigen::MatrixXd::Constant(n, n, switch_prob / (n - 1));
        m.diagonal().setConstant(1.0 - switch_prob);
        return m;
    }

    int step(int current, Rng& rng) const {
        const int n = static_cast<int>(levels.size());
        if (n == 1 || !bernoulli(rng, switch_prob)) return current;
        const int j = uniform_index(rng, n - 1);
        return j >= current ? j + 1 : j;
    }
};

/// Weekends are day_index mod 7 in {5, 6}; holidays are a fixed day-of-year list.
struct Calendar {
    std::vector<int> holidays{0, 48, 95, 140, 181, 216, 244, 285, 358, 359};

    static bool is_weekend(int day) { return day % 7 == 5 || day % 7 == 6; }
    bool is_holiday(int day) const {
        return std::find(holidays.begin(), holidays.end(), day % 365) != holidays.end();
    }
};

/// Inverse-CDF draw from NB2(mean, alpha).
inline int draw_negbin(Rng& rng, double mean, double alpha) {
    check_nb_args(mean, alpha);
    const double u = unit_uniform(rng);
    double logp = negbin_log_pmf(0, mean, alpha);
    const double log_base = std::log(mean) - std::log1p(alpha * mean);
    double cum = 0.0;
    for (int d = 0;; ++d) {
        const double p = std::exp(logp);
        cum += p;
        if (cum >= u || (d > mean && p < 1e-300)) return d;
        logp += std::log1p(alpha * d) - std::log(d + 1.0) + log_base;
    }
}

/// Q7 solving q = d_e(p, q, weekday) by fixed-point iteration.
inline double steady_state_trailing(const DemandParams& demand, double price) {
    double q = 1.0;
    for (int it = 0; it < 10000; ++it) {
        const double next = demand.mean(price, q, false, false);
        if (!std::isfinite(next)) throw DomainError("steady_state_trailing: forecast diverges");
        if (std::abs(next - q) < 1e-12 * std::max(1.0, q)) return next;
        q = next;
    }
    return q;
}

struct SimulationOptions {
    int initial_inventory = 24;
    std::optional<double> initial_trailing;  ///< defaults to the steady state of the forecast
    int burn_in = 14;                        ///< rows dropped by estimators
    Calendar calendar;
    ModelBuildOptions model;
    int pilot_days = 3000;
    BellmanOptions bellman;
};

/// Exogenous path plus uncensored demand (sales = demand, no orders) used to
/// build the simulator's reference model.
inline std::vector<PanelRow> simulate_uncensored(const DemandParams& demand, const PriceProcess& price, int T,
                                                 Rng& rng, const SimulationOptions& opt, int store_id = 0,
                                                 int product_id = 0) {
    std::vector<PanelRow> rows;
    rows.reserve(T);
    int pidx = 0;
    const double q0 = opt.initial_trailing.value_or(steady_state_trailing(demand, price.levels[0]));
    std::deque<double> buf(7, q0);
    double q7 = q0;
    for (int t = 0; t < T; ++t) {
        PanelRow r;
        r.store_id = store_id;
        r.product_id = product_id;
        r.day = t;
        r.price = price.levels[pidx];
        r.trailing7 = q7;
        r.weekend = Calendar::is_weekend(t);
        r.holiday = opt.calendar.is_holiday(t);
        const int d = draw_negbin(rng, demand.mean(r.price, q7, r.weekend, r.holiday), demand.alpha);
        r.demand = d;
        r.sales = d;
        r.inventory = opt.model.grids.k_max;
        rows.push_back(r);
        buf.pop_front();
        buf.push_back(d);
        q7 = std::accumulate(buf.begin(), buf.end(), 0.0) / 7.0;
        pidx = price.step(pidx, rng);
    }
    return rows;
}

/// Discrete model and optimal policy the simulated agent acts on.
struct ReferencePolicy {
    StructuralParams structural;
    DemandParams demand;
    MarkupClass markup;
    PriceProcess price;
    SimulationOptions options;
    InventoryModel model;
    PolicySolution solution;
    Eigen::MatrixXd action_values;  ///< scaled units, |X| x |Y|
};

inline ReferencePolicy make_reference_policy(const StructuralParams& structural, const DemandParams& demand,
                                             const MarkupClass& markup, const PriceProcess& price,
                                             std::uint64_t seed, const SimulationOptions& opt = {}) {
    structural.validate();
    demand.validate();
    price.validate();
    ReferencePolicy ref{structural, demand, markup, price, opt, {}, {}, {}};
    Rng rng = make_rng(seed, {0x70696c6f74ULL});
    const auto pilot = simulate_uncensored(demand, price, std::max(opt.pilot_days, 60), rng, opt);
    ModelBuildOptions mo = opt.model;
    mo.info = InfoSet::Current;
    ref.model = build_inventory_model(pilot, demand, markup.lerner, mo);
    ref.solution = solve_policy(ref.model.model, structural, opt.bellman);
    ref.action_values = action_values(ref.model.model, structural.scaled(), structural.beta, ref.solution.values);
    return ref;
}

/// Daily loop: Gumbel shocks and the solved values pick y_t at the current
/// discretized state; demand is drawn from the NB at the true forecast; sales,
/// inventory, the 7-day sales buffer, price and calendar then update.
inline std::vector<PanelRow> simulate_with_policy(const ReferencePolicy& ref, int T, std::uint64_t seed,
                                                  int store_id = 0, int product_id = 0) {
    if (T < 1) throw DomainError("simulate_panel: T must be >= 1");
    const auto& opt = ref.options;
    if (opt.initial_inventory < 0) throw DomainError("simulate_panel: initial inventory must be >= 0");
    Rng rng = make_rng(seed, {static_cast<std::uint64_t>(store_id), static_cast<std::uint64_t>(product_id)});
    const auto& actions = ref.model.model.actions;
    const int n_actions = static_cast<int>(actions.size());

    std::vector<PanelRow> rows;
    rows.reserve(T);
    int k = opt.initial_inventory;
    int pidx = 0;
    const double q0 = opt.initial_trailing.value_or(steady_state_trailing(ref.demand, ref.price.levels[0]));
    std::deque<double> buf(7, q0);
    std::deque<double> q7_hist(7, q0);  // Q7 values of the previous 7 days
    double q7 = q0;
    for (int t = 0; t < T; ++t) {
        PanelRow r;
        r.store_id = store_id;
        r.product_id = product_id;
        r.day = t;
        r.inventory = k;
        r.price = ref.price.levels[pidx];
        r.trailing7 = q7;
        r.weekend = Calendar::is_weekend(t);
        r.holiday = opt.calendar.is_holiday(t);

        const int st = ref.model.state_of(k, r.price, q7, q7_hist.front(), r.weekend, r.holiday);
        int best = 0;
        double best_v = -INFINITY;
        for (int a = 0; a < n_actions; ++a) {
            const double v = ref.action_values(st, a) + gumbel(rng);
            if (v > best_v) {
                best_v = v;
                best = a;
            }
        }
        r.order = actions[best];

        const double de = ref.demand.mean(r.price, q7, r.weekend, r.holiday);
        const int d = draw_negbin(rng, de, ref.demand.alpha);
        r.demand = d;
        r.sales = std::min(d, k);
        rows.push_back(r);

        k = k + r.order - r.sales;
        buf.pop_front();
        buf.push_back(r.sales);
        q7_hist.pop_front();
        q7_hist.push_back(q7);
        q7 = std::accumulate(buf.begin(), buf.end(), 0.0) / 7.0;
        pidx = ref.price.step(pidx, rng);
    }
    return rows;
}

inline std::vector<PanelRow> simulate_panel(const StructuralParams& structural, const DemandParams& demand,
                                            const MarkupClass& markup, const PriceProcess& price, int T,
                                            std::uint64_t seed, const SimulationOptions& opt = {},
                                            int store_id = 0, int product_id = 0) {
    const auto ref = make_reference_policy(structural, demand, markup, price, seed, opt);
    return simulate_with_policy(ref, T, seed, store_id, product_id);
}

/// Rows after the burn-in window.
inline std::vector<PanelRow> drop_burn_in(std::span<const PanelRow> rows, int burn_in = 14) {
    std::vector<PanelRow> out;
    for (const auto& r : rows)
        if (r.day >= burn_in) out.push_back(r);
    return out;
}

/// State/action path of a discrete chain under CCP P (actions drawn from P).
struct ChainPath {
    std::vector<int> states;
    std::vector<int> actions;  ///< action indices
};

inline int draw_index(Rng& rng, const Eigen::Ref<const Eigen::RowVectorXd>& probs) {
    const double u = unit_uniform(rng);
    double cum = 0.0;
    for (Eigen::Index i = 0; i < probs.size(); ++i) {
        cum += probs(i);
        if (u < cum) return static_cast<int>(i);
    }
    return static_cast<int>(probs.size() - 1);
}

inline ChainPath simulate_discrete_chain(const DiscreteModel& m, const CcpTable& P, int x0, int T,
                                         std::uint64_t seed) {
    if (x0 < 0 || x0 >= m.n_states()) throw DomainError("simulate_discrete_chain: bad initial state");
    Rng rng = make_rng(seed);
    ChainPath path;
    int x = x0;
    for (int t = 0; t < T; ++t) {
        const int a = draw_index(rng, P.row(x));
        path.states.push_back(x);
        path.actions.push_back(a);
        const double u = unit_uniform(rng);
        double cum = 0.0;
        int next = -1;
        for (Transition::InnerIterator it(m.transitions[a], x); it; ++it) {
            cum += it.value();
            next = static_cast<int>(it.col());
            if (u < cum) break;
        }
        x = next;
    }
    return path;
}

// ---------------------------------------------------------------------------
// (S,s) agent with stochastic log-thresholds.

/// log s_t = b0 + bd ln d_e + bp ln p + u^s, log S_t = B0 + Bd ln d_e + Bp ln p + u^S,
/// corr(u^s, u^S) = rho. An order is placed when ln(k+1) <= log s_t and brings
/// the stock up to round(S_t).
struct SsAgentSpec {
    std::array<double, 3> lower{std::log(8.0), 0.8, -0.2};
    double sigma_lower = 0.4;
    std::array<double, 3> upper{std::log(30.0), 0.9, -0.3};
    double sigma_upper = 0.3;
    double rho = 0.0;
};

inline std::vector<PanelRow> simulate_ss_agent(const SsAgentSpec& spec, const DemandParams& demand,
                                               const PriceProcess& price, int T, std::uint64_t seed,
                                               const SimulationOptions& opt = {}, int store_id = 0,
                                               int product_id = 0) {
    if (!(spec.sigma_lower > 0) || !(spec.sigma_upper > 0) || std::abs(spec.rho) >= 1)
        throw DomainError("simulate_ss_agent: invalid shock parameters");
    Rng rng = make_rng(seed, {static_cast<std::uint64_t>(store_id), static_cast<std::uint64_t>(product_id), 55});
    std::vector<PanelRow> rows;
    rows.reserve(T);
    int k = opt.initial_inventory, pidx = 0;
    const double q0 = opt.initial_trailing.value_or(steady_state_trailing(demand, price.levels[0]));
    std::deque<double> buf(7, q0);
    double q7 = q0;
    const double c = std::sqrt(1.0 - spec.rho * spec.rho);
    for (int t = 0; t < T; ++t) {
        PanelRow r;
        r.store_id = store_id;
        r.product_id = product_id;
        r.day = t;
        r.inventory = k;
        r.price = price.levels[pidx];
        r.trailing7 = q7;
        r.weekend = Calendar::is_weekend(t);
        r.holiday = opt.calendar.is_holiday(t);
        const double de = demand.mean(r.price, q7, r.weekend, r.holiday);
        const double lde = std::log(de), lp = std::log(r.price);
        const double z1 = standard_normal(rng), z2 = standard_normal(rng);
        const double us = spec.sigma_lower * z1;
        const double uS = spec.sigma_upper * (spec.rho * z1 + c * z2);
        const double log_s = spec.lower[0] + spec.lower[1] * lde + spec.lower[2] * lp + us;
        const double log_S = spec.upper[0] + spec.upper[1] * lde + spec.upper[2] * lp + uS;
        if (std::log(k + 1.0) <= log_s) r.order = std::max(1, static_cast<int>(std::lround(std::exp(log_S))) - k);
        const int d = draw_negbin(rng, de, demand.alpha);
        r.demand = d;
        r.sales = std::min(d, k);
        rows.push_back(r);
        k = k + r.order - r.sales;
        buf.pop_front();
        buf.push_back(r.sales);
        q7 = std::accumulate(buf.begin(), buf.end(), 0.0) / 7.0;
        pidx = price.step(pidx, rng);
    }
    return rows;
}

// ---------------------------------------------------------------------------
// Synthetic chain.

inline constexpr std::array<const char*, 6> kStoreClasses{"AAA", "AA", "A", "B", "C", "D"};
inline constexpr std::array<const char*, 4> kCostNames{"gamma_h", "gamma_z", "gamma_f", "gamma_c"};

struct StoreCovariates {
    int store_id = 0;
    int store_class = 0;  ///< index into kStoreClasses
    double log_assortment = 0.0;
    double log_population = 0.0;
    double log_income = 0.0;
    int region = 0;
};

struct ManagerCovariates {
    int store_id = 0;
    int education = 0;  ///< 0 high school, 1 college, 2 graduate
    double years_lcbo = 0.0;
    double years_other = 0.0;
};

/// gamma^sto_j = intercept + class effect + slopes . (log assortment, log
/// population, log income) + region effect + product effect.
struct CostEquation {
    double intercept = 0.0;
    std::array<double, 3> slopes{0.0, 0.0, 0.0};
    std::array<double, 6> class_effects{};
    std::vector<double> region_effects;
    std::vector<double> product_effects;
};

struct ChainSpec {
    int n_stores = 6;
    int n_products = 2;
    int n_days = 677;
    int n_regions = 2;
    std::vector<StoreCovariates> stores;      ///< generated when empty
    std::vector<ManagerCovariates> managers;  ///< generated when empty
    std::array<CostEquation, 4> cost;         ///< h, z, f, c
    std::array<double, 4> manager_noise{0.0, 0.0, 0.0, 0.0};
    double low_education_multiplier = 2.0;  ///< noise scale multiplier for education == 0
    double low_experience_multiplier = 1.5; ///< for years_lcbo < 5
    double sigma_eps = 1.0;
    DemandParams demand;
    double demand_population_slope = 0.0;  ///< shifts the forecast intercept by store log population
    std::vector<double> markups{0.655, 0.715};
    std::vector<PriceProcess> prices;  ///< one per product; defaults when empty
    SimulationOptions simulation;
    int max_resample = 200;

    void validate() const {
        if (n_stores < 1 || n_products < 1) throw SpecError("ChainSpec: need at least one store and product");
        if (n_days < 30) throw SpecError("ChainSpec: n_days must be >= 30");
        if (!(sigma_eps > 0)) throw SpecError("ChainSpec: sigma_eps must be > 0");
        for (double s : manager_noise)
            if (!(s >= 0)) throw SpecError("ChainSpec: manager noise scales must be >= 0");
        if (!stores.empty() && static_cast<int>(stores.size()) != n_stores)
            throw SpecError("ChainSpec: store table size mismatch");
        if (!managers.empty() && static_cast<int>(managers.size()) != n_stores)
            throw SpecError("ChainSpec: manager table size mismatch");
        if (markups.empty()) throw SpecError("ChainSpec: no markups");
        for (const auto& eq : cost) {
            if (!eq.product_effects.empty() && static_cast<int>(eq.product_effects.size()) != n_products)
                throw SpecError("ChainSpec: product effects size mismatch");
            if (!eq.region_effects.empty() && static_cast<int>(eq.region_effects.size()) != n_regions)
                throw SpecError("ChainSpec: region effects size mismatch");
        }
    }

    double planted_store_cost(int j, const StoreCovariates& s, int product) const {
        const auto& eq = cost[j];
        double v = eq.intercept + eq.class_effects[s.store_class] + eq.slopes[0] * s.log_assortment +
                   eq.slopes[1] * s.log_population + eq.slopes[2] * s.log_income;
        if (!eq.region_effects.empty()) v += eq.region_effects[s.region];
        if (!eq.product_effects.empty()) v += eq.product_effects[product];
        return v;
    }

    double manager_scale(int j, const ManagerCovariates& m) const {
        double s = manager_noise[j];
        if (m.education == 0) s *= low_education_multiplier;
        if (m.years_lcbo < 5.0) s *= low_experience_multiplier;
        return s;
    }

    PriceProcess price_for(int product) const {
        if (!prices.empty()) return prices[product % prices.size()];
        PriceProcess p;
        const double base = 25.28 + 2.0 * product;
        p.levels = {base, base + 2.0};
        return p;
    }
};

/// Forecast coefficients giving about 18 units per week at the default prices.
inline DemandParams default_demand() { return {0.6, 0.5, 2.07, -0.62, 0.52, 0.33}; }

/// Median cost levels used as the default calibration.
inline ChainSpec default_chain_spec() {
    ChainSpec s;
    s.cost[0].intercept = 0.0036;
    s.cost[1].intercept = 0.0219;
    s.cost[2].intercept = 2.9658;
    s.cost[3].intercept = 0.0341;
    s.demand = default_demand();
    s.sigma_eps = 0.5;
    s.manager_noise = {0.001, 0.01, 0.75, 0.01};
    return s;
}

struct StoreProductTruth {
    int store_id = 0;
    int product_id = 0;
    std::array<double, 4> gamma_sto{};
    std::array<double, 4> gamma_man{};
    double markup = 0.0;
    DemandParams demand;

    StructuralParams params(double sigma_eps, double beta = daily_discount_factor()) const {
        return {gamma_sto[0] + gamma_man[0], gamma_sto[1] + gamma_man[1], gamma_sto[2] + gamma_man[2],
                gamma_sto[3] + gamma_man[3], sigma_eps, beta};
    }
};

struct ChainData {
    std::vector<StoreCovariates> stores;
    std::vector<ManagerCovariates> managers;
    std::vector<StoreProductTruth> truth;         ///< sorted by (store, product)
    std::vector<std::vector<PanelRow>> panels;    ///< parallel to truth; empty when not simulated
};

inline std::vector<StoreCovariates> generate_stores(const ChainSpec& spec, Rng& rng) {
    std::vector<StoreCovariates> out;
    for (int i = 0; i < spec.n_stores; ++i) {
        StoreCovariates s;
        s.store_id = i;
        s.store_class = i % 6;
        s.log_assortment = std::log(400.0) - 0.3 * s.store_class + 0.2 * standard_normal(rng);
        s.log_population = std::log(50000.0) + 0.5 * standard_normal(rng);
        s.log_income = std::log(70000.0) + 0.2 * standard_normal(rng);
        s.region = uniform_index(rng, std::max(1, spec.n_regions));
        out.push_back(s);
    }
    return out;
}

inline std::vector<ManagerCovariates> generate_managers(const ChainSpec& spec, Rng& rng) {
    std::vector<ManagerCovariates> out;
    for (int i = 0; i < spec.n_stores; ++i) {
        ManagerCovariates m;
        m.store_id = i;
        m.education = uniform_index(rng, 3);
        m.years_lcbo = std::floor(25.0 * unit_uniform(rng));
        m.years_other = std::floor(10.0 * unit_uniform(rng));
        out.push_back(m);
    }
    return out;
}

/// Draws covariates and planted costs only (no panels).
inline ChainData plant_chain(const ChainSpec& spec, std::uint64_t seed) {
    spec.validate();
    Rng rng = make_rng(seed, {0x6368616eULL});
    ChainData data;
    data.stores = spec.stores.empty() ? generate_stores(spec, rng) : spec.stores;
    data.managers = spec.managers.empty() ? generate_managers(spec, rng) : spec.managers;
    for (int i = 0; i < spec.n_stores; ++i) {
        for (int j = 0; j < spec.n_products; ++j) {
            StoreProductTruth t;
            t.store_id = data.stores[i].store_id;
            t.product_id = j;
            t.markup = spec.markups[j % spec.markups.size()];
            t.demand = spec.demand;
            t.demand.eta_intercept += spec.demand_population_slope * (data.stores[i].log_population - std::log(50000.0));
            for (int c = 0; c < 4; ++c) t.gamma_sto[c] = spec.planted_store_cost(c, data.stores[i], j);
            for (int c : {0, 2, 3})
                if (t.gamma_sto[c] < 0)
                    throw SpecError("synthesize_chain: planted store cost " + std::string(kCostNames[c]) +
                                    " is negative for store " + std::to_string(i));
            for (int c = 0; c < 4; ++c) {
                const double scale = spec.manager_scale(c, data.managers[i]);
                if (scale == 0.0) continue;
                int tries = 0;
                for (;;) {
                    const double draw = scale * standard_normal(rng);
                    if (c == 1 || t.gamma_sto[c] + draw >= 0) {
                        t.gamma_man[c] = draw;
                        break;
                    }
                    if (++tries >= spec.max_resample)
                        throw SpecError("synthesize_chain: cannot draw a nonnegative " + std::string(kCostNames[c]) +
                                        " for store " + std::to_string(i) + " product " + std::to_string(j));
                }
            }
            data.truth.push_back(t);
        }
    }
    return data;
}

/// Plants costs and simulates every store-product panel (in parallel).
inline ChainData synthesize_chain(const ChainSpec& spec, std::uint64_t seed, int workers = 1) {
    ChainData data = plant_chain(spec, seed);
    data.panels.resize(data.truth.size());
    parallel_for(data.truth.size(), workers, [&](std::size_t idx) {
        const auto& t = data.truth[idx];
        data.panels[idx] =
            simulate_panel(t.params(spec.sigma_eps), t.demand, MarkupClass::from_markup(t.markup),
                           spec.price_for(t.product_id), spec.n_days, seed, spec.simulation, t.store_id, t.product_id);
    });
    return data;
}

}  // namespace invdp
