#pragma once

// Cost decomposition into store and manager components, outcome accounting
// under ergodic distributions, manager-shutdown and centralization
// experiments, realized cost-to-revenue ratios and comparative statics.

#include <Eigen/Dense>

#include <array>
#include <cmath>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "invdp/dp_solver.hpp"
#include "invdp/errors.hpp"
#include "invdp/inventory_model.hpp"
#include "invdp/log.hpp"
#include "invdp/model_core.hpp"
#include "invdp/simulator.hpp"
#include "invdp/stats.hpp"

namespace invdp {

// ---------------------------------------------------------------------------
// Decomposition.

struct CostEstimate {
    int store_id = 0;
    int product_id = 0;
    std::array<double, 4> gamma{};  ///< h, z, f, c
};

struct CostDecomposition {
    std::vector<int> store_id;
    std::vector<int> product_id;
    std::array<std::vector<double>, 4> gamma_sto;
    std::array<std::vector<double>, 4> gamma_man;
    std::array<OlsResult, 4> first_step;
    std::array<OlsResult, 4> second_step;
    std::array<OlsResult, 4> abs_residual;

    std::size_t size() const { return store_id.size(); }
    std::array<double, 4> sto(std::size_t i) const {
        return {gamma_sto[0][i], gamma_sto[1][i], gamma_sto[2][i], gamma_sto[3][i]};
    }
    std::array<double, 4> man(std::size_t i) const {
        return {gamma_man[0][i], gamma_man[1][i], gamma_man[2][i], gamma_man[3][i]};
    }
};

namespace detail {

inline void warn_dropped(const OlsResult& r, const std::string& what) {
    if (r.dropped.empty()) return;
    std::string names;
    for (const auto& n : r.dropped) names += (names.empty() ? "" : ", ") + n;
    log().warn("{}: aliased regressors dropped: {}", what, names);
}

}  // namespace detail

/// Store-class dummies (base: last class), log assortment, log population,
/// log income, region dummies (base 0) and product dummies (base 0).
inline std::pair<Eigen::MatrixXd, std::vector<std::string>> store_design(
    std::span<const CostEstimate> est, const std::map<int, StoreCovariates>& stores, int n_regions,
    int n_products) {
    std::vector<std::string> names{"const"};
    for (std::size_t c = 0; c + 1 < kStoreClasses.size(); ++c) names.push_back(std::string("class_") + kStoreClasses[c]);
    names.insert(names.end(), {"log_assortment", "log_population", "log_income"});
    for (int r = 1; r < n_regions; ++r) names.push_back("region_" + std::to_string(r));
    for (int p = 1; p < n_products; ++p) names.push_back("product_" + std::to_string(p));
    Eigen::MatrixXd X = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(est.size()), static_cast<Eigen::Index>(names.size()));
    for (std::size_t i = 0; i < est.size(); ++i) {
        const auto it = stores.find(est[i].store_id);
        if (it == stores.end())
            throw DomainError("decompose_costs: no covariates for store " + std::to_string(est[i].store_id));
        const auto& s = it->second;
        const auto r = static_cast<Eigen::Index>(i);
        Eigen::Index col = 0;
        X(r, col++) = 1.0;
        for (std::size_t c = 0; c + 1 < kStoreClasses.size(); ++c) X(r, col++) = s.store_class == static_cast<int>(c);
        X(r, col++) = s.log_assortment;
        X(r, col++) = s.log_population;
        X(r, col++) = s.log_income;
        for (int g = 1; g < n_regions; ++g) X(r, col++) = s.region == g;
        for (int p = 1; p < n_products; ++p) X(r, col++) = est[i].product_id == p;
    }
    return {X, names};
}

inline CostDecomposition decompose_costs(std::span<const CostEstimate> est, std::span<const StoreCovariates> stores,
                                         std::span<const ManagerCovariates> managers) {
    if (est.empty()) throw InsufficientDataError("decompose_costs: no estimates");
    std::map<int, StoreCovariates> smap;
    std::map<int, ManagerCovariates> mmap;
    int n_regions = 1, n_products = 1;
    for (const auto& s : stores) {
        smap[s.store_id] = s;
        n_regions = std::max(n_regions, s.region + 1);
    }
    for (const auto& m : managers) mmap[m.store_id] = m;
    for (const auto& e : est) n_products = std::max(n_products, e.product_id + 1);

    CostDecomposition out;
    std::vector<int> clusters;
    for (const auto& e : est) {
        out.store_id.push_back(e.store_id);
        out.product_id.push_back(e.product_id);
        clusters.push_back(e.store_id);
    }
    const auto [X1, names1] = store_design(est, smap, n_regions, n_products);

    const auto n = static_cast<Eigen::Index>(est.size());
    Eigen::MatrixXd X2(n, 5), X3(n, 7);
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto it = mmap.find(est[i].store_id);
        if (it == mmap.end())
            throw DomainError("decompose_costs: no manager covariates for store " + std::to_string(est[i].store_id));
        const auto& m = it->second;
        const auto& s = smap.at(est[i].store_id);
        X2.row(i) << 1.0, double(m.education == 1), double(m.education == 2), m.years_lcbo, m.years_other;
        X3.row(i) << 1.0, double(m.education == 0), m.years_lcbo, m.years_other, s.log_assortment, s.log_population,
            s.log_income;
    }
    const std::vector<std::string> names2{"const", "edu_college", "edu_graduate", "years_lcbo", "years_other"};
    const std::vector<std::string> names3{"const",          "low_education",  "years_lcbo", "years_other",
                                          "log_assortment", "log_population", "log_income"};

    for (int j = 0; j < 4; ++j) {
        Eigen::VectorXd y(n);
        for (Eigen::Index i = 0; i < n; ++i) y(i) = est[i].gamma[j];
        out.first_step[j] = ols(X1, y, names1, CovarianceType::Cluster, clusters);
        detail::warn_dropped(out.first_step[j], std::string("decompose_costs first step ") + kCostNames[j]);
        const Eigen::VectorXd resid = out.first_step[j].residuals;
        out.gamma_sto[j].resize(n);
        out.gamma_man[j].resize(n);
        for (Eigen::Index i = 0; i < n; ++i) {
            out.gamma_man[j][i] = resid(i);
            out.gamma_sto[j][i] = y(i) - resid(i);
        }
        out.second_step[j] = ols(X2, resid, names2, CovarianceType::Cluster, clusters);
        detail::warn_dropped(out.second_step[j], std::string("decompose_costs second step ") + kCostNames[j]);
        out.abs_residual[j] = ols(X3, resid.cwiseAbs(), names3, CovarianceType::Cluster, clusters);
        detail::warn_dropped(out.abs_residual[j], std::string("decompose_costs |residual| ") + kCostNames[j]);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Outcome accounting.

struct OutcomeStats {
    double stockout_frequency = 0.0;
    double ordering_frequency = 0.0;
    double inv_to_sales = 0.0;
    double inv_to_sales_after_order = 0.0;   ///< E[k + y | order] / mean sales
    double inv_to_sales_before_order = 0.0;  ///< E[k | order] / mean sales
    double mean_sales = 0.0;
    double flow_profit = 0.0;                ///< per day, dollars
    double inventory_cost = 0.0;             ///< per day: gamma_h k + gamma_z P(d>k) + gamma_f 1{y>0} + gamma_c y
    double revenue = 0.0;                    ///< per day, price times expected sales
};

struct AccountingOptions {
    /// Adds the expected extreme-value surplus sigma * sum_y P (euler - ln P) to profit.
    bool include_shock_surplus = false;
};

/// Expectations under the ergodic distribution pi and the CCPs P. Costs and
/// profit use `accounting`; `behavior` only enters the shock surplus.
inline OutcomeStats outcome_stats(const DiscreteModel& m, const StructuralParams& behavior,
                                  const StructuralParams& accounting, const CcpTable& P, const Eigen::VectorXd& pi,
                                  const AccountingOptions& opt = {}) {
    check_ccp(m, P, false);
    if (pi.size() != m.n_states()) throw DomainError("outcome_stats: distribution has the wrong length");
    if (m.states.size() != static_cast<std::size_t>(m.n_states()))
        throw DomainError("outcome_stats: model has no state labels");
    if (m.actions.front() != 0) throw DomainError("outcome_stats: first action must be the zero order");
    OutcomeStats o;
    const Vector5 w = accounting.cost_weights();
    const Vector5 cost_w(0.0, accounting.gamma_h, accounting.gamma_z, accounting.gamma_f, accounting.gamma_c);
    double order_mass = 0.0, k_order = 0.0, s_order = 0.0, k_mean = 0.0;
    for (Eigen::Index x = 0; x < m.n_states(); ++x) {
        const double px = pi(x);
        if (px == 0.0) continue;
        const auto& st = m.states[x];
        const double p_order = 1.0 - P(x, 0);
        o.ordering_frequency += px * p_order;
        o.stockout_frequency += px * st.stockout_prob;
        o.mean_sales += px * st.expected_sales;
        o.revenue += px * st.price * st.expected_sales;
        k_mean += px * st.k;
        order_mass += px * p_order;
        k_order += px * p_order * st.k;
        for (Eigen::Index a = 0; a < m.n_actions(); ++a) {
            const double pa = P(x, a);
            if (pa == 0.0) continue;
            const auto h = m.features[a].row(x);
            o.flow_profit += px * pa * h.dot(w);
            // Costs enter the feature vector with signs (-k, +P(d>k), -1{y>0}, -y).
            o.inventory_cost += px * pa * (-h(1) * cost_w(1) + h(2) * cost_w(2) - h(3) * cost_w(3) - h(4) * cost_w(4));
            if (a > 0) s_order += px * pa * (st.k + m.actions[a]);
        }
    }
    if (opt.include_shock_surplus)
        o.flow_profit += behavior.sigma_eps * pi.dot(choice_entropy_term(P, kEulerGamma));
    // Tolerance absorbs round-off mass left on stocked states by the ergodic solve.
    if (!(o.mean_sales > 1e-12)) throw DomainError("outcome_stats: expected sales are zero; inventory ratios undefined");
    o.inv_to_sales = k_mean / o.mean_sales;
    if (order_mass > 0) {
        o.inv_to_sales_after_order = s_order / order_mass / o.mean_sales;
        o.inv_to_sales_before_order = k_order / order_mass / o.mean_sales;
    }
    return o;
}

/// Solves the DP at `behavior`, takes the ergodic distribution and accounts at `accounting`.
inline OutcomeStats solve_and_account(const DiscreteModel& m, const StructuralParams& behavior,
                                      const StructuralParams& accounting, const AccountingOptions& opt = {},
                                      CcpTable* ccp_out = nullptr) {
    const auto sol = solve_policy(m, behavior);
    const Eigen::VectorXd pi = ergodic_distribution(m, sol.ccp);
    if (ccp_out) *ccp_out = sol.ccp;
    return outcome_stats(m, behavior, accounting, sol.ccp, pi, opt);
}

// ---------------------------------------------------------------------------
// Manager-shutdown experiments.

enum class Shutdown { H, Z, F, C, All };

inline const char* shutdown_name(Shutdown s) {
    switch (s) {
        case Shutdown::H: return "h";
        case Shutdown::Z: return "z";
        case Shutdown::F: return "f";
        case Shutdown::C: return "c";
        case Shutdown::All: return "all";
    }
    return "?";
}

/// Dollar costs from components; h, f and c floored at zero with a warning.
inline StructuralParams combine_costs(const std::array<double, 4>& sto, const std::array<double, 4>& man,
                                      double sigma_eps, double beta, const std::string& context) {
    std::array<double, 4> g{};
    for (int j = 0; j < 4; ++j) {
        g[j] = sto[j] + man[j];
        if (j != 1 && g[j] < 0) {
            log().warn("{}: {} = {:.6g} is negative; floored at 0", context, kCostNames[j], g[j]);
            g[j] = 0.0;
        }
    }
    return {g[0], g[1], g[2], g[3], sigma_eps, beta};
}

struct ShutdownResult {
    OutcomeStats factual;
    OutcomeStats counterfactual;
    OutcomeStats delta;  ///< factual - counterfactual, field by field
    double inventory_cost_change_pct = 0.0;  ///< 100 (counterfactual - factual) / factual, at store-level costs
};

inline OutcomeStats difference(const OutcomeStats& a, const OutcomeStats& b) {
    OutcomeStats d;
    d.stockout_frequency = a.stockout_frequency - b.stockout_frequency;
    d.ordering_frequency = a.ordering_frequency - b.ordering_frequency;
    d.inv_to_sales = a.inv_to_sales - b.inv_to_sales;
    d.inv_to_sales_after_order = a.inv_to_sales_after_order - b.inv_to_sales_after_order;
    d.inv_to_sales_before_order = a.inv_to_sales_before_order - b.inv_to_sales_before_order;
    d.mean_sales = a.mean_sales - b.mean_sales;
    d.flow_profit = a.flow_profit - b.flow_profit;
    d.inventory_cost = a.inventory_cost - b.inventory_cost;
    d.revenue = a.revenue - b.revenue;
    return d;
}

/// Factual behavior at gamma_sto + gamma_man; counterfactual sets the selected
/// manager components to zero. Both are accounted at gamma_sto.
inline ShutdownResult shutdown_experiment(const DiscreteModel& m, const std::array<double, 4>& gamma_sto,
                                          const std::array<double, 4>& gamma_man, double sigma_eps, double beta,
                                          Shutdown which, const AccountingOptions& opt = {}) {
    std::array<double, 4> man_cf = gamma_man;
    for (int j = 0; j < 4; ++j)
        if (which == Shutdown::All || static_cast<int>(which) == j) man_cf[j] = 0.0;
    const StructuralParams factual = combine_costs(gamma_sto, gamma_man, sigma_eps, beta, "shutdown factual");
    const StructuralParams counter = combine_costs(gamma_sto, man_cf, sigma_eps, beta, "shutdown counterfactual");
    const StructuralParams accounting =
        combine_costs(gamma_sto, {0.0, 0.0, 0.0, 0.0}, sigma_eps, beta, "shutdown accounting");
    ShutdownResult r;
    r.factual = solve_and_account(m, factual, accounting, opt);
    r.counterfactual = factual.cost_weights() == counter.cost_weights()
                           ? r.factual
                           : solve_and_account(m, counter, accounting, opt);
    r.delta = difference(r.factual, r.counterfactual);
    if (r.factual.inventory_cost != 0.0)
        r.inventory_cost_change_pct =
            100.0 * (r.counterfactual.inventory_cost - r.factual.inventory_cost) / std::abs(r.factual.inventory_cost);
    return r;
}

// ---------------------------------------------------------------------------
// Centralization.

/// The three information layouts built from one panel with shared clusters.
struct InformationModels {
    InventoryModel current;
    InventoryModel lagged;
    InventoryModel both;
};

inline InformationModels build_information_models(std::span<const PanelRow> rows, const DemandParams& demand,
                                                  double lerner, ModelBuildOptions opt = {}) {
    InformationModels im;
    opt.info = InfoSet::Current;
    im.current = build_inventory_model(rows, demand, lerner, opt);
    opt.info = InfoSet::Lagged;
    im.lagged = build_inventory_model(rows, demand, lerner, opt);
    opt.info = InfoSet::Both;
    im.both = build_inventory_model(rows, demand, lerner, opt);
    return im;
}

struct CentralizationResult {
    OutcomeStats decentralized;
    OutcomeStats centralized;
    double gain_pct = 0.0;                  ///< 100 (decentralized - centralized) / |centralized| profit
    double inventory_cost_change_pct = 0.0; ///< 100 (decentralized - centralized) / centralized cost
};

/// Decentralized: policy solved at gamma_sto + gamma_man on current trailing
/// sales. Centralized: policy solved at gamma_sto on the one-week lag (or on
/// current sales when delay is off). Both run on the augmented model and are
/// accounted at gamma_sto.
inline CentralizationResult centralization_experiment(const InformationModels& im,
                                                      const std::array<double, 4>& gamma_sto,
                                                      const std::array<double, 4>& gamma_man, double sigma_eps,
                                                      double beta, bool delay = true,
                                                      const AccountingOptions& opt = {}) {
    const StructuralParams decentral = combine_costs(gamma_sto, gamma_man, sigma_eps, beta, "decentralized");
    const StructuralParams central = combine_costs(gamma_sto, {0.0, 0.0, 0.0, 0.0}, sigma_eps, beta, "centralized");
    const auto& both = im.both;

    const auto dec = solve_policy(im.current.model, decentral);
    const CcpTable P_dec = lift_current_policy(im.current.layout, dec.ccp, both.layout);
    CcpTable P_cen;
    if (delay) {
        const auto cen = solve_policy(im.lagged.model, central);
        P_cen = lift_lagged_policy(im.lagged.layout, cen.ccp, both.layout);
    } else if (decentral.cost_weights() == central.cost_weights()) {
        P_cen = P_dec;
    } else {
        const auto cen = solve_policy(im.current.model, central);
        P_cen = lift_current_policy(im.current.layout, cen.ccp, both.layout);
    }
    CentralizationResult r;
    r.decentralized =
        outcome_stats(both.model, decentral, central, P_dec, ergodic_distribution(both.model, P_dec), opt);
    r.centralized = P_cen == P_dec ? r.decentralized
                                   : outcome_stats(both.model, central, central, P_cen,
                                                   ergodic_distribution(both.model, P_cen), opt);
    r.gain_pct = 100.0 * (r.decentralized.flow_profit - r.centralized.flow_profit) /
                 std::max(std::abs(r.centralized.flow_profit), 1e-300);
    if (r.centralized.inventory_cost != 0.0)
        r.inventory_cost_change_pct = 100.0 * (r.decentralized.inventory_cost - r.centralized.inventory_cost) /
                                      std::abs(r.centralized.inventory_cost);
    return r;
}

// ---------------------------------------------------------------------------
// Realized cost-to-revenue ratios.

struct CostRevenueRatios {
    double holding = 0.0;
    double stockout = 0.0;
    double fixed = 0.0;
    double variable = 0.0;
    double total = 0.0;
};

inline CostRevenueRatios cost_revenue_ratios(std::span<const PanelRow> rows, const StructuralParams& params) {
    double revenue = 0.0, k_sum = 0.0, y_sum = 0.0, stockouts = 0.0, orders = 0.0;
    for (const auto& r : rows) {
        revenue += r.price * r.sales;
        k_sum += r.inventory;
        y_sum += r.order;
        stockouts += r.stockout();
        orders += r.order > 0;
    }
    if (!(revenue > 0)) throw DomainError("cost_revenue_ratios: zero revenue; ratios undefined");
    CostRevenueRatios c;
    c.holding = params.gamma_h * k_sum / revenue;
    c.stockout = params.gamma_z * stockouts / revenue;
    c.fixed = params.gamma_f * orders / revenue;
    c.variable = params.gamma_c * y_sum / revenue;
    c.total = c.holding + c.stockout + c.fixed + c.variable;
    return c;
}

// ---------------------------------------------------------------------------
// Comparative statics.

enum class Outcome { Stockout, Ordering, InvToSales };

inline const char* outcome_name(Outcome o) {
    switch (o) {
        case Outcome::Stockout: return "stockout_frequency";
        case Outcome::Ordering: return "ordering_frequency";
        case Outcome::InvToSales: return "inv_to_sales";
    }
    return "?";
}

inline double outcome_value(const OutcomeStats& s, Outcome o) {
    switch (o) {
        case Outcome::Stockout: return s.stockout_frequency;
        case Outcome::Ordering: return s.ordering_frequency;
        case Outcome::InvToSales: return s.inv_to_sales;
    }
    return 0.0;
}

/// Outcomes along a ladder of values for one cost parameter (0 h, 1 z, 2 f, 3 c).
inline std::vector<OutcomeStats> parameter_ladder(const DiscreteModel& m, const StructuralParams& base, int param,
                                                  std::span<const double> values, int workers = 1) {
    if (param < 0 || param > 3) throw DomainError("parameter_ladder: parameter index must be 0..3");
    std::vector<OutcomeStats> out(values.size());
    parallel_for(values.size(), workers, [&](std::size_t i) {
        StructuralParams p = base;
        double* slots[4] = {&p.gamma_h, &p.gamma_z, &p.gamma_f, &p.gamma_c};
        *slots[param] = values[i];
        p.validate();
        out[i] = solve_and_account(m, p, p);
    });
    return out;
}

/// +1 strictly increasing, -1 strictly decreasing, 0 otherwise.
inline int monotone_direction(std::span<const double> v, double rel_tol = 1e-12) {
    if (v.size() < 2) return 0;
    bool up = true, down = true;
    for (std::size_t i = 1; i < v.size(); ++i) {
        const double d = v[i] - v[i - 1];
        const double tol = rel_tol * std::max({std::abs(v[i]), std::abs(v[i - 1]), 1e-300});
        if (!(d > tol)) up = false;
        if (!(d < -tol)) down = false;
    }
    return up ? 1 : (down ? -1 : 0);
}

}  // namespace invdp
