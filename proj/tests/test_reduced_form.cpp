#include <gtest/gtest.h>

#include <cmath>

#include "invdp/reduced_form_ss.hpp"
#include "invdp/simulator.hpp"

using namespace invdp;

namespace {

DemandParams demand() { return {0.25, 0.35, 2.2, -0.62, 0.52, 0.33}; }

std::vector<PanelRow> ss_panel(const SsAgentSpec& spec, int T, std::uint64_t seed) {
    return drop_burn_in(simulate_ss_agent(spec, demand(), PriceProcess{}, T, seed));
}

}  // namespace

TEST(Probit, GradientMatchesFiniteDifferences) {
    const auto rows = ss_panel(SsAgentSpec{}, 2000, 4);
    const Eigen::Vector4d b(1.5, -0.9, 0.4, -0.1);
    Eigen::Vector4d g;
    probit_loglik(rows, demand(), b, &g);
    for (int j = 0; j < 4; ++j) {
        Eigen::Vector4d bp = b, bm = b;
        bp(j) += 1e-6;
        bm(j) -= 1e-6;
        const double fd = (probit_loglik(rows, demand(), bp) - probit_loglik(rows, demand(), bm)) / 2e-6;
        EXPECT_NEAR(g(j), fd, 1e-5 * std::max(1.0, std::abs(fd)));
    }
}

TEST(Probit, RecoversLowerRule) {
    const SsAgentSpec spec;
    const auto fit = fit_ss_rule(ss_panel(spec, 5000, 9), demand());
    EXPECT_LT(fit.probit.coef(1), 0.0);
    EXPECT_NEAR(fit.sigma_u_lower, spec.sigma_lower, 0.2 * spec.sigma_lower);
    EXPECT_GT(fit.probit.coef(2), 0.0);
    EXPECT_NEAR(fit.beta_lower(0), spec.lower[0], 4 * fit.beta_lower_se(0) + 0.05);
}

TEST(Probit, TooFewOrders) {
    auto rows = ss_panel(SsAgentSpec{}, 400, 1);
    int kept = 0;
    for (auto& r : rows)
        if (r.order > 0 && ++kept > 5) r.order = 0;
    EXPECT_THROW(fit_order_probit(rows, demand()), InsufficientDataError);
}

TEST(Probit, SeparationNamesRegressor) {
    auto rows = ss_panel(SsAgentSpec{}, 2000, 2);
    for (auto& r : rows) r.order = r.inventory < 10 ? 5 : 0;
    try {
        fit_order_probit(rows, demand());
        FAIL() << "expected SingularError";
    } catch (const SingularError& e) {
        EXPECT_NE(std::string(e.what()).find("ln_k"), std::string::npos) << e.what();
    }
}

TEST(Heckman, MillsInsignificantWithIndependentShocks) {
    int covers = 0;
    const int reps = 20;
    for (int r = 0; r < reps; ++r) {
        const auto fit = fit_ss_rule(ss_panel(SsAgentSpec{}, 5000, 200 + r), demand());
        covers += std::abs(fit.heckman.coef(3)) <= 1.96 * fit.heckman.se(3);
        EXPECT_GT(fit.heckman.coef(1), 0.0);
    }
    EXPECT_GE(covers, 16);
}

TEST(Heckman, ThresholdsNearPlantedLevels) {
    const SsAgentSpec spec;
    const auto rows = ss_panel(spec, 8000, 31);
    const auto fit = fit_ss_rule(rows, demand());
    std::vector<double> lde, lp;
    for (const auto& r : rows) {
        lde.push_back(std::log(demand().mean(r.price, r.trailing7, r.weekend, r.holiday)));
        lp.push_back(std::log(r.price));
    }
    const double mde = mean(lde), mp = mean(lp);
    const auto t = thresholds_at(fit, mde, mp);
    const double S = std::exp(spec.upper[0] + spec.upper[1] * mde + spec.upper[2] * mp);
    EXPECT_NEAR(std::exp(t.log_S0), S, 0.15 * S);
}

TEST(Shrink, EqualErrorsMatchVarianceIdentity) {
    const std::vector<double> est{1.0, 2.5, -0.5, 3.0, 0.7, 1.9};
    const std::vector<double> se(est.size(), 0.6);
    const auto out = shrink(est, se);
    const double v = population_variance(est);
    EXPECT_NEAR(mean(out), mean(est), 1e-12);
    EXPECT_NEAR(population_variance(out), v - 0.36, 1e-10);
    for (std::size_t i = 0; i < est.size(); ++i)
        EXPECT_LE(std::abs(out[i] - mean(est)), std::abs(est[i] - mean(est)) + 1e-15);
}

TEST(Shrink, NoiseDominatedEstimatesCollapseToMean) {
    const std::vector<double> est{1.0, 2.0, 3.0};
    const std::vector<double> se{5.0, 5.0, 5.0};
    for (double g : shrink(est, se)) EXPECT_DOUBLE_EQ(g, 2.0);
}

TEST(VarianceDecomposition, BetweenPlusWithinIsTotal) {
    std::vector<UnitEstimate> est;
    Rng rng = make_rng(8, {});
    for (int s = 0; s < 7; ++s)
        for (int p = 0; p < 1 + s % 3; ++p) est.push_back({s, p, s * 0.3 + standard_normal(rng)});
    const auto d = variance_decomposition(est);
    EXPECT_NEAR(d.between + d.within, d.total, 1e-10);
    EXPECT_GT(d.between, 0.0);
    EXPECT_GT(d.within, 0.0);
    std::vector<UnitEstimate> one_store{{0, 0, 1.0}, {0, 1, 2.0}};
    EXPECT_THROW(variance_decomposition(one_store), DomainError);
}

TEST(HomogeneityBand, FractionGrowsWithDispersion) {
    Rng rng = make_rng(12, {});
    std::vector<double> base(200), se(200, 0.1);
    for (auto& b : base) b = standard_normal(rng);
    double prev = -1.0;
    for (double scale : {0.0, 0.2, 1.0}) {
        std::vector<double> est;
        for (double b : base) est.push_back(1.0 + scale * b);
        const double f = fraction_outside_homogeneity_band(est, se);
        EXPECT_GE(f, prev);
        prev = f;
    }
    EXPECT_GT(prev, 0.5);
}
