#include <gtest/gtest.h>

#include <cmath>

#include "invdp/simulator.hpp"
#include "invdp/stats.hpp"

using namespace invdp;

namespace {

StructuralParams medians() { return {0.0036, 0.0219, 2.9658, 0.0341, 0.5}; }

std::vector<PanelRow> default_panel(int T, std::uint64_t seed) {
    return simulate_panel(medians(), default_demand(), MarkupClass::from_markup(0.655), PriceProcess{}, T, seed);
}

bool same_rows(const std::vector<PanelRow>& a, const std::vector<PanelRow>& b) {
    if (a.size() != b.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const auto &x = a[i], &y = b[i];
        if (x.inventory != y.inventory || x.order != y.order || x.demand != y.demand || x.sales != y.sales ||
            x.price != y.price || x.trailing7 != y.trailing7 || x.weekend != y.weekend || x.holiday != y.holiday)
            return false;
    }
    return true;
}

}  // namespace

TEST(SimulatePanel, DeterministicGivenSeed) {
    const auto a = default_panel(400, 42);
    const auto b = default_panel(400, 42);
    const auto c = default_panel(400, 43);
    EXPECT_TRUE(same_rows(a, b));
    EXPECT_FALSE(same_rows(a, c));
}

TEST(SimulatePanel, InventoryAndStockoutAccounting) {
    const auto rows = default_panel(2000, 7);
    ASSERT_EQ(rows.size(), 2000u);
    for (std::size_t t = 0; t < rows.size(); ++t) {
        const auto& r = rows[t];
        ASSERT_TRUE(r.demand.has_value());
        EXPECT_EQ(r.sales, std::min(*r.demand, r.inventory));
        EXPECT_GE(r.inventory, 0);
        EXPECT_EQ(r.stockout(), r.sales == r.inventory && *r.demand > r.sales);
        if (t + 1 < rows.size()) EXPECT_EQ(rows[t + 1].inventory, r.inventory + r.order - r.sales) << "day " << t;
    }
}

TEST(SimulatePanel, NoDemandLeavesStockUnchanged) {
    DemandParams d = default_demand();
    d.eta_intercept = -20.0;
    const auto rows = simulate_panel(medians(), d, MarkupClass::from_markup(0.655), PriceProcess{}, 300, 3);
    for (std::size_t t = 0; t + 1 < rows.size(); ++t) {
        EXPECT_EQ(rows[t].sales, 0);
        if (rows[t].order == 0) EXPECT_EQ(rows[t + 1].inventory, rows[t].inventory);
    }
}

TEST(SimulatePanel, OrderingFrequencyIsPlausible) {
    const auto rows = drop_burn_in(default_panel(5000, 11));
    double orders = 0.0, sales = 0.0;
    for (const auto& r : rows) {
        orders += r.order > 0;
        sales += r.sales;
    }
    const double freq = orders / rows.size();
    EXPECT_GE(freq, 0.05);
    EXPECT_LE(freq, 0.35);
    EXPECT_NEAR(7.0 * sales / rows.size(), 18.0, 6.0);
}

TEST(SimulatePanel, RejectsBadInputs) {
    EXPECT_THROW(default_panel(0, 1), DomainError);
    StructuralParams p = medians();
    p.gamma_f = -1.0;
    EXPECT_THROW(simulate_panel(p, default_demand(), MarkupClass::from_markup(0.655), PriceProcess{}, 10, 1),
                 DomainError);
}

TEST(PriceProcess, RowsSumToOne) {
    PriceProcess p;
    p.levels = {10.0, 12.0, 15.0};
    p.switch_prob = 0.3;
    const auto M = p.matrix();
    for (Eigen::Index i = 0; i < M.rows(); ++i) EXPECT_NEAR(M.row(i).sum(), 1.0, 1e-15);
}

TEST(Behavior, GumbelArgmaxMatchesLogit) {
    const Eigen::RowVector3d v(0.3, -0.5, 1.1);
    const Eigen::RowVector3d p = (v.array() - v.maxCoeff()).exp() / (v.array() - v.maxCoeff()).exp().sum();
    Rng rng = make_rng(5, {});
    Eigen::RowVector3d freq = Eigen::RowVector3d::Zero();
    const int T = 50000;
    for (int t = 0; t < T; ++t) {
        int best = 0;
        double bv = -INFINITY;
        for (int a = 0; a < 3; ++a)
            if (const double u = v(a) + gumbel(rng); u > bv) bv = u, best = a;
        freq(best) += 1.0 / T;
    }
    EXPECT_LT(0.5 * (freq - p).cwiseAbs().sum(), 0.05);
}

TEST(Behavior, ChainFrequenciesConvergeToCcps) {
    DiscreteModel m;
    Eigen::Matrix3d F0, F1;
    F0 << 0.6, 0.3, 0.1, 0.2, 0.5, 0.3, 0.1, 0.3, 0.6;
    F1 << 0.1, 0.2, 0.7, 0.7, 0.2, 0.1, 0.3, 0.4, 0.3;
    for (const Eigen::Matrix3d* F : {&F0, &F1}) {
        Transition s = F->sparseView();
        s.makeCompressed();
        m.transitions.push_back(s);
    }
    m.actions = {0, 1};
    Eigen::MatrixXd H0 = Eigen::MatrixXd::Zero(3, 5), H1 = Eigen::MatrixXd::Zero(3, 5);
    H0.col(0) << 0.5, -0.2, 0.1;
    H1.col(0) << -0.1, 0.4, 0.0;
    m.features = {H0, H1};
    const auto sol = solve_policy(m, Vector5(1, 0, 0, 0, 0), 0.9);
    const auto path = simulate_discrete_chain(m, sol.ccp, 0, 50000, 9);
    Eigen::MatrixXd counts = Eigen::MatrixXd::Zero(3, 2);
    for (std::size_t t = 0; t < path.states.size(); ++t) counts(path.states[t], path.actions[t]) += 1.0;
    for (int x = 0; x < 3; ++x) {
        const Eigen::RowVectorXd f = counts.row(x) / counts.row(x).sum();
        EXPECT_LT(0.5 * (f - sol.ccp.row(x)).cwiseAbs().sum(), 0.05) << "state " << x;
    }
}

TEST(Chain, ZeroNoiseHasNoManagerComponent) {
    ChainSpec s = default_chain_spec();
    s.manager_noise = {0.0, 0.0, 0.0, 0.0};
    s.n_stores = 12;
    const auto d = plant_chain(s, 4);
    for (const auto& t : d.truth)
        for (double g : t.gamma_man) EXPECT_EQ(g, 0.0);
}

TEST(Chain, ManagerComponentIsZeroMeanAndFeasible) {
    ChainSpec s = default_chain_spec();
    s.n_stores = 300;
    const auto d = plant_chain(s, 5);
    for (int j = 0; j < 4; ++j) {
        std::vector<double> v;
        for (const auto& t : d.truth) {
            v.push_back(t.gamma_man[j]);
            if (j != 1) EXPECT_GE(t.gamma_sto[j] + t.gamma_man[j], 0.0);
        }
        // Resampling at zero truncates h and c slightly; f and z are far from the bound.
        if (j == 1 || j == 2) EXPECT_LT(std::abs(mean(v)), 3.0 * std::sqrt(sample_variance(v) / v.size())) << j;
    }
}

TEST(Chain, RegressionRecoversPlantedCoefficients) {
    ChainSpec s = default_chain_spec();
    s.n_stores = 60;
    s.cost[2].intercept = 4.0;
    s.cost[2].slopes = {0.6, -0.3, 0.2};
    int covered = 0;
    const int reps = 100;
    for (int r = 0; r < reps; ++r) {
        const auto d = plant_chain(s, 1000 + r);
        const auto n = static_cast<Eigen::Index>(d.truth.size());
        Eigen::MatrixXd X(n, 4);
        Eigen::VectorXd y(n);
        std::vector<int> cl;
        for (Eigen::Index i = 0; i < n; ++i) {
            const auto& t = d.truth[i];
            const auto& st = d.stores[t.store_id];
            X.row(i) << 1.0, st.log_assortment, st.log_population, st.log_income;
            y(i) = t.gamma_sto[2] + t.gamma_man[2];
            cl.push_back(t.store_id);
        }
        // Class effects are zero here, so the assortment slope alone is identified.
        const auto fit = ols(X, y, {"const", "a", "p", "i"}, CovarianceType::Cluster, cl);
        bool all = true;
        for (int c = 0; c < 3; ++c) all = all && std::abs(fit.coef(c + 1) - s.cost[2].slopes[c]) <= 1.96 * fit.se(c + 1);
        covered += all;
    }
    EXPECT_GE(covered, 85);
}

TEST(Chain, SpecErrors) {
    ChainSpec s = default_chain_spec();
    s.n_days = 20;
    EXPECT_THROW(plant_chain(s, 1), SpecError);
    s = default_chain_spec();
    s.cost[2].intercept = -5.0;
    EXPECT_THROW(plant_chain(s, 1), SpecError);
    s = default_chain_spec();
    s.cost[2].intercept = 0.0;
    s.manager_noise = {0.0, 0.0, 1e-9, 0.0};
    s.max_resample = 1;
    s.low_education_multiplier = 1.0;
    // Half of all draws are negative; with one try some store fails.
    s.n_stores = 40;
    EXPECT_THROW(plant_chain(s, 1), SpecError);
}

TEST(Chain, SynthesizeIsReproducible) {
    ChainSpec s = default_chain_spec();
    s.n_stores = 2;
    s.n_products = 1;
    s.n_days = 60;
    s.simulation.pilot_days = 600;
    const auto a = synthesize_chain(s, 9, 2);
    const auto b = synthesize_chain(s, 9, 1);
    ASSERT_EQ(a.panels.size(), 2u);
    for (std::size_t i = 0; i < a.panels.size(); ++i) EXPECT_TRUE(same_rows(a.panels[i], b.panels[i]));
}
