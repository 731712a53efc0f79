#include <gtest/gtest.h>

#include <cmath>

#include "invdp/counterfactual.hpp"
#include "invdp/simulator.hpp"

using namespace invdp;

namespace {

StructuralParams base_params() { return {0.0036, 0.0219, 2.9658, 0.0341, 0.5}; }

std::vector<PanelRow> small_panel() {
    static const auto rows = [] {
        SimulationOptions o;
        o.model.grids = Grids{2, 20, 6, 18};
        o.initial_inventory = 10;
        return drop_burn_in(simulate_panel(base_params(), default_demand(), MarkupClass::from_markup(0.655),
                                           PriceProcess{}, 2500, 3, o));
    }();
    return rows;
}

ModelBuildOptions small_build() {
    ModelBuildOptions mo;
    mo.grids = Grids{2, 20, 6, 18};
    return mo;
}

const InventoryModel& small_model() {
    static const auto im = build_inventory_model(small_panel(), default_demand(), 0.3957, small_build());
    return im;
}

ChainSpec decomposition_spec() {
    ChainSpec s = default_chain_spec();
    s.n_stores = 60;
    s.n_regions = 3;
    s.cost[2].slopes = {0.5, 0.2, -0.3};
    s.cost[2].intercept = 6.0;
    s.cost[2].class_effects = {0.4, 0.3, 0.2, 0.1, 0.05, 0.0};
    s.cost[2].region_effects = {0.0, 0.2, -0.1};
    s.cost[2].product_effects = {0.0, 0.3};
    return s;
}

std::vector<CostEstimate> planted_estimates(const ChainData& d) {
    std::vector<CostEstimate> est;
    for (const auto& t : d.truth) {
        CostEstimate e{t.store_id, t.product_id, {}};
        for (int j = 0; j < 4; ++j) e.gamma[j] = t.gamma_sto[j] + t.gamma_man[j];
        est.push_back(e);
    }
    return est;
}

}  // namespace

TEST(DecomposeCosts, ResidualIdentities) {
    const auto spec = decomposition_spec();
    const auto d = plant_chain(spec, 1);
    const auto est = planted_estimates(d);
    const auto dec = decompose_costs(est, d.stores, d.managers);
    ASSERT_EQ(dec.size(), est.size());
    for (int j = 0; j < 4; ++j) {
        double m = 0.0;
        for (std::size_t i = 0; i < dec.size(); ++i) {
            EXPECT_NEAR(dec.gamma_sto[j][i] + dec.gamma_man[j][i], est[i].gamma[j], 1e-12);
            m += dec.gamma_man[j][i];
        }
        EXPECT_NEAR(m / dec.size(), 0.0, 1e-10);
    }
    // Residuals are orthogonal to every store regressor.
    std::map<int, StoreCovariates> smap;
    for (const auto& s : d.stores) smap[s.store_id] = s;
    const auto [X, names] = store_design(est, smap, spec.n_regions, spec.n_products);
    for (int j = 0; j < 4; ++j) {
        const Eigen::Map<const Eigen::VectorXd> r(dec.gamma_man[j].data(), static_cast<Eigen::Index>(dec.size()));
        const Eigen::VectorXd xr = X.transpose() * r;
        EXPECT_LT(xr.cwiseAbs().maxCoeff(), 1e-8 * std::max(1.0, X.cwiseAbs().maxCoeff() * r.cwiseAbs().sum()));
    }
}

TEST(DecomposeCosts, FirstStepIntervalsCoverPlantedSlopes) {
    const auto spec = decomposition_spec();
    int covered = 0, positive_low_edu = 0;
    const int reps = 100;
    for (int r = 0; r < reps; ++r) {
        const auto d = plant_chain(spec, 100 + r);
        const auto dec = decompose_costs(planted_estimates(d), d.stores, d.managers);
        const auto& fs = dec.first_step[2];
        covered += std::abs(fs.coefficient("log_assortment") - spec.cost[2].slopes[0]) <=
                   1.96 * fs.std_error("log_assortment");
        positive_low_edu += dec.abs_residual[2].coefficient("low_education") > 0;
    }
    EXPECT_GE(covered, 88);
    EXPECT_GE(positive_low_edu, 80);
}

TEST(DecomposeCosts, MissingCovariatesAreAnError) {
    const auto d = plant_chain(decomposition_spec(), 2);
    auto est = planted_estimates(d);
    est.front().store_id = 999;
    EXPECT_THROW(decompose_costs(est, d.stores, d.managers), DomainError);
    EXPECT_THROW(decompose_costs(std::vector<CostEstimate>{}, d.stores, d.managers), InsufficientDataError);
}

TEST(OutcomeStats, NeverOrderingHasNoSales) {
    const auto& m = small_model().model;
    CcpTable P = CcpTable::Zero(m.n_states(), m.n_actions());
    P.col(0).setOnes();
    const Eigen::VectorXd pi = ergodic_distribution(m, P);
    // All mass ends at zero stock, so there are no sales to scale inventories by.
    EXPECT_THROW(outcome_stats(m, base_params(), base_params(), P, pi), DomainError);
}

TEST(OutcomeStats, AlwaysOrderingAndAccounting) {
    const auto& m = small_model().model;
    CcpTable P = CcpTable::Zero(m.n_states(), m.n_actions());
    P.col(m.n_actions() - 1).setOnes();
    const Eigen::VectorXd pi = ergodic_distribution(m, P);
    const auto p = base_params();
    const auto o = outcome_stats(m, p, p, P, pi);
    EXPECT_NEAR(o.ordering_frequency, 1.0, 1e-12);
    double k = 0.0, so = 0.0, sales = 0.0;
    for (Eigen::Index x = 0; x < m.n_states(); ++x) {
        k += pi(x) * m.states[x].k;
        so += pi(x) * m.states[x].stockout_prob;
        sales += pi(x) * m.states[x].expected_sales;
    }
    const double y = m.actions.back();
    EXPECT_NEAR(o.stockout_frequency, so, 1e-12);
    EXPECT_NEAR(o.inv_to_sales, k / sales, 1e-10);
    EXPECT_NEAR(o.inventory_cost, p.gamma_h * k + p.gamma_z * so + p.gamma_f + p.gamma_c * y, 1e-10);
    EXPECT_NEAR(o.inv_to_sales_before_order, o.inv_to_sales, 1e-10);
}

TEST(Shutdown, ZeroManagerComponentsGiveZeroDeltas) {
    const auto& m = small_model().model;
    const auto p = base_params();
    const std::array<double, 4> sto{p.gamma_h, p.gamma_z, p.gamma_f, p.gamma_c};
    for (auto which : {Shutdown::H, Shutdown::Z, Shutdown::F, Shutdown::C, Shutdown::All}) {
        const auto r = shutdown_experiment(m, sto, {0.0, 0.0, 0.0, 0.0}, p.sigma_eps, p.beta, which);
        EXPECT_EQ(r.delta.stockout_frequency, 0.0) << shutdown_name(which);
        EXPECT_EQ(r.delta.ordering_frequency, 0.0);
        EXPECT_EQ(r.delta.inv_to_sales, 0.0);
        EXPECT_EQ(r.delta.flow_profit, 0.0);
        EXPECT_EQ(r.inventory_cost_change_pct, 0.0);
    }
}

TEST(Shutdown, AllMatchesSolvingAtStoreCosts) {
    const auto& m = small_model().model;
    const auto p = base_params();
    const std::array<double, 4> sto{p.gamma_h, p.gamma_z, p.gamma_f, p.gamma_c};
    const std::array<double, 4> man{0.001, -0.01, 1.0, 0.01};
    const auto r = shutdown_experiment(m, sto, man, p.sigma_eps, p.beta, Shutdown::All);
    const auto direct = solve_and_account(m, p, p);
    EXPECT_NEAR(r.counterfactual.ordering_frequency, direct.ordering_frequency, 1e-10);
    EXPECT_NEAR(r.counterfactual.flow_profit, direct.flow_profit, 1e-9);
    EXPECT_NEAR(r.delta.flow_profit, r.factual.flow_profit - r.counterfactual.flow_profit, 1e-15);
    // A higher fixed cost means fewer orders.
    const auto f = shutdown_experiment(m, sto, man, p.sigma_eps, p.beta, Shutdown::F);
    EXPECT_LT(f.delta.ordering_frequency, 0.0);
}

TEST(Centralization, NoNoiseNoDelayIsNeutral) {
    const auto im = build_information_models(small_panel(), default_demand(), 0.3957, small_build());
    const auto p = base_params();
    const std::array<double, 4> sto{p.gamma_h, p.gamma_z, p.gamma_f, p.gamma_c};
    const auto r = centralization_experiment(im, sto, {0.0, 0.0, 0.0, 0.0}, p.sigma_eps, p.beta, false);
    EXPECT_EQ(r.gain_pct, 0.0);
    EXPECT_EQ(r.inventory_cost_change_pct, 0.0);
}

TEST(Centralization, CurrentInformationIsWorthSomething) {
    const auto im = build_information_models(small_panel(), default_demand(), 0.3957, small_build());
    const auto p = base_params();
    const std::array<double, 4> sto{p.gamma_h, p.gamma_z, p.gamma_f, p.gamma_c};
    const auto r = centralization_experiment(im, sto, {0.0, 0.0, 0.0, 0.0}, p.sigma_eps, p.beta, true);
    EXPECT_GE(r.gain_pct, -1e-9);
}

TEST(CostRatios, HandComputed) {
    std::vector<PanelRow> rows(3);
    rows[0].inventory = 10, rows[0].sales = 2, rows[0].price = 20.0, rows[0].order = 0;
    rows[1].inventory = 8, rows[1].sales = 8, rows[1].price = 20.0, rows[1].order = 12;
    rows[2].inventory = 12, rows[2].sales = 1, rows[2].price = 25.0, rows[2].order = 0;
    rows[1].demand = 9;
    rows[0].demand = 2;
    rows[2].demand = 1;
    const StructuralParams p{0.01, 0.5, 3.0, 0.05, 1.0};
    const auto c = cost_revenue_ratios(rows, p);
    const double revenue = 40.0 + 160.0 + 25.0;
    EXPECT_NEAR(c.holding, 0.01 * 30 / revenue, 1e-15);
    EXPECT_NEAR(c.stockout, 0.5 * 1 / revenue, 1e-15);
    EXPECT_NEAR(c.fixed, 3.0 / revenue, 1e-15);
    EXPECT_NEAR(c.variable, 0.05 * 12 / revenue, 1e-15);
    EXPECT_NEAR(c.total, c.holding + c.stockout + c.fixed + c.variable, 1e-15);
    EXPECT_EQ(cost_revenue_ratios(rows, StructuralParams{}).total, 0.0);
    for (auto& r : rows) r.sales = 0;
    EXPECT_THROW(cost_revenue_ratios(rows, p), DomainError);
}

TEST(ComparativeStatics, FixedCostLowersOrdering) {
    const auto& m = small_model().model;
    const std::vector<double> f{1.0, 2.0, 3.0, 4.5, 6.0};
    const auto out = parameter_ladder(m, base_params(), 2, f, 2);
    std::vector<double> ord;
    for (const auto& o : out) ord.push_back(outcome_value(o, Outcome::Ordering));
    EXPECT_EQ(monotone_direction(ord), -1);
    EXPECT_THROW(parameter_ladder(m, base_params(), 4, f), DomainError);
}

TEST(ComparativeStatics, MonotoneDirection) {
    EXPECT_EQ(monotone_direction(std::vector<double>{1, 2, 3}), 1);
    EXPECT_EQ(monotone_direction(std::vector<double>{3, 2, 1}), -1);
    EXPECT_EQ(monotone_direction(std::vector<double>{1, 3, 2}), 0);
    EXPECT_EQ(monotone_direction(std::vector<double>{1, 1, 2}), 0);
    EXPECT_EQ(monotone_direction(std::vector<double>{1}), 0);
}
