#include <gtest/gtest.h>

#include <cmath>

#include "invdp/model_core.hpp"

using namespace invdp;

namespace {

// Textbook NB2 pmf through gamma functions with r = 1/alpha.
double nb_oracle(int d, double mu, double alpha) {
    if (alpha == 0.0) return std::exp(d * std::log(mu) - mu - std::lgamma(d + 1.0));
    const double r = 1.0 / alpha;
    return std::exp(std::lgamma(d + r) - std::lgamma(r) - std::lgamma(d + 1.0) + r * std::log(r / (r + mu)) +
                    d * std::log(mu / (r + mu)));
}

}  // namespace

TEST(LernerIndex, KnownMarkups) {
    // Reported to four digits.
    EXPECT_NEAR(lerner_index(0.655), 0.3957, 1e-4);
    EXPECT_NEAR(lerner_index(0.715), 0.4169, 1e-4);
    EXPECT_EQ(lerner_index(0.0), 0.0);
    EXPECT_THROW(lerner_index(-0.1), DomainError);
    const auto mc = MarkupClass::from_markup(0.655);
    EXPECT_DOUBLE_EQ(mc.lerner, 0.655 / 1.655);
}

TEST(NegBin, PoissonLimitAtZero) {
    EXPECT_NEAR(negbin_pmf(0, 1.0, 0.0), std::exp(-1.0), 1e-15);
    EXPECT_THROW(negbin_pmf(0, 0.0, 0.1), DomainError);
    EXPECT_THROW(negbin_pmf(0, -1.0, 0.1), DomainError);
    EXPECT_THROW(negbin_pmf(0, 1.0, -0.1), DomainError);
}

TEST(NegBin, MatchesGammaFunctionOracle) {
    for (double mu : {0.1, 1.0, 2.57, 3.7, 25.0})
        for (double a : {0.05, 0.33, 1.0, 4.0})
            for (int d = 0; d < 60; ++d)
                EXPECT_NEAR(negbin_pmf(d, mu, a), nb_oracle(d, mu, a), 1e-12 * std::max(1.0, nb_oracle(d, mu, a)));
}

TEST(NegBin, MomentsAndNormalization) {
    double s = 0, m1 = 0, m2 = 0;
    for (int d = 0; d < 400; ++d) {
        const double p = negbin_pmf(d, 2.0, 0.5);
        s += p;
        m1 += d * p;
        m2 += double(d) * d * p;
    }
    EXPECT_NEAR(s, 1.0, 1e-12);
    EXPECT_NEAR(m1, 2.0, 1e-10);
    EXPECT_NEAR(m2 - m1 * m1, 4.0, 1e-9);

    double total = 0;
    for (int d = 0; d < 1000; ++d) total += negbin_pmf(d, 3.7, 0.33);
    EXPECT_NEAR(total, 1.0, 1e-10);
}

TEST(NegBin, ConvergesToPoisson) {
    for (double mu = 0.5; mu <= 10.0; mu += 0.5) {
        double sup = 0;
        for (int d = 0; d < 80; ++d) sup = std::max(sup, std::abs(negbin_pmf(d, mu, 1e-8) - nb_oracle(d, mu, 0.0)));
        EXPECT_LT(sup, 1e-6) << "mu=" << mu;
    }
}

TEST(DemandPmf, TruncationRule) {
    const auto pmf = DemandPmf::negative_binomial(3.7, 0.33);
    const int D = pmf.support_max();
    double cum = 0;
    for (int d = 0; d < D; ++d) cum += nb_oracle(d, 3.7, 0.33);
    EXPECT_LT(cum, 1.0 - DemandPmf::kTailMass);
    EXPECT_GE(cum + nb_oracle(D, 3.7, 0.33), 1.0 - DemandPmf::kTailMass - 1e-15);
    EXPECT_LE(D, 10 * (3.7 + 10));
    EXPECT_NEAR(pmf.total(), 1.0, 1e-11);
}

TEST(ExpectedMin, EdgeCases) {
    const auto m0 = expected_min_and_stockout(0, 2.0, 0.3);
    EXPECT_EQ(m0.expected_sales, 0.0);
    EXPECT_NEAR(m0.stockout_prob, 1.0 - nb_oracle(0, 2.0, 0.3), 1e-13);

    const double mu = 2.0, a = 0.3, sd = std::sqrt(mu * (1 + a * mu));
    const auto big = expected_min_and_stockout(static_cast<int>(mu + 60 * sd), mu, a);
    EXPECT_NEAR(big.expected_sales, mu, 1e-8);
    EXPECT_NEAR(big.stockout_prob, 0.0, 1e-8);
    EXPECT_THROW(expected_min_and_stockout(-1, mu, a), DomainError);
}

TEST(ExpectedMin, BruteForceSummation) {
    double es = 0, so = 0;
    for (int d = 0; d < 2000; ++d) {
        const double p = nb_oracle(d, 3.0, 0.2);
        es += std::min(d, 5) * p;
        if (d > 5) so += p;
    }
    const auto m = expected_min_and_stockout(5, 3.0, 0.2);
    EXPECT_NEAR(m.expected_sales, es, 1e-11);
    EXPECT_NEAR(m.stockout_prob, so, 1e-11);
}

TEST(ExpectedMin, MonotoneInK) {
    double prev_s = -1, prev_p = 2;
    for (int k = 0; k <= 100; k += 2) {
        const auto m = expected_min_and_stockout(k, 6.0, 0.5);
        EXPECT_GE(m.expected_sales, prev_s);
        EXPECT_LE(m.stockout_prob, prev_p);
        EXPECT_LE(m.expected_sales, std::min<double>(k, 6.0) + 1e-12);
        prev_s = m.expected_sales;
        prev_p = m.stockout_prob;
    }
}

TEST(ProfitFeatures, Components) {
    const auto h0 = profit_features(0, 0, 30.0, 2.0, 0.3, 0.4);
    EXPECT_EQ(h0(0), 0.0);
    EXPECT_EQ(h0(1), 0.0);
    EXPECT_NEAR(h0(2), 1.0 - nb_oracle(0, 2.0, 0.3), 1e-13);
    EXPECT_EQ(h0(3), 0.0);
    EXPECT_EQ(h0(4), 0.0);

    const auto h6 = profit_features(6, 10, 30.0, 2.0, 0.3, 0.4);
    EXPECT_EQ(h6(3), -1.0);
    EXPECT_EQ(h6(4), -6.0);
    EXPECT_EQ(h6(1), -10.0);
}

TEST(ProfitFeatures, MatchesSummationOracle) {
    double es = 0, so = 0;
    for (int d = 0; d < 2000; ++d) {
        const double p = nb_oracle(d, 2.0, 0.3);
        es += std::min(d, 4) * p;
        if (d > 4) so += p;
    }
    const auto h = profit_features(12, 4, 25.28, 2.0, 0.3, 0.40);
    EXPECT_NEAR(h(0), 0.40 * 25.28 * es, 1e-10);
    EXPECT_EQ(h(1), -4.0);
    EXPECT_NEAR(h(2), so, 1e-12);
    EXPECT_EQ(h(3), -1.0);
    EXPECT_EQ(h(4), -12.0);
}

TEST(ProfitFeatures, InnerProductIsFlowProfit) {
    StructuralParams prm{0.0036, 0.0219, 2.9658, 0.0341, 1.5};
    const double price = 25.28, li = 0.4, mu = 2.57, a = 0.33;
    for (int k : {0, 4, 10, 30})
        for (int y : {0, 6, 24}) {
            // Direct expectation of the realized profit function.
            double direct = 0;
            for (int d = 0; d < 3000; ++d) {
                const double p = nb_oracle(d, mu, a);
                direct += p * (li * price * std::min(d, k) + prm.gamma_z * (d > k) - prm.gamma_h * k -
                               prm.gamma_f * (y > 0) - prm.gamma_c * y);
            }
            const auto h = profit_features(y, k, price, mu, a, li);
            EXPECT_NEAR(flow_profit(h, prm), direct, 1e-10);
            EXPECT_NEAR(h.dot(prm.scaled()), direct / prm.sigma_eps, 1e-10);
        }
}

TEST(StructuralParams, Validation) {
    StructuralParams p;
    EXPECT_NO_THROW(p.validate());
    p.gamma_z = -3.0;
    EXPECT_NO_THROW(p.validate());
    p.beta = 1.2;
    EXPECT_THROW(p.validate(), DomainError);
    p.beta = 0.9;
    p.sigma_eps = 0;
    EXPECT_THROW(p.validate(), DomainError);
    p.sigma_eps = 2;
    p.gamma_f = -1;
    EXPECT_THROW(p.validate(), DomainError);

    StructuralParams q{0.1, -0.2, 3.0, 0.05, 2.0, 0.99};
    const auto back = StructuralParams::from_scaled(q.scaled(), q.beta);
    EXPECT_NEAR(back.gamma_h, q.gamma_h, 1e-15);
    EXPECT_NEAR(back.gamma_z, q.gamma_z, 1e-15);
    EXPECT_NEAR(back.sigma_eps, q.sigma_eps, 1e-15);
}

TEST(DemandParams, LogLinearMean) {
    DemandParams d;
    EXPECT_DOUBLE_EQ(d.mean(3.0, 5.0, true, false), 1.0);
    d.eta_q = 0.52;
    EXPECT_NEAR(d.mean(1.0, 2 * 4.0 + 1.0, false, false) / d.mean(1.0, 4.0, false, false),
                std::pow((2 * 4.0 + 2.0) / 5.0, 0.52), 1e-12);
    d.alpha = -1;
    EXPECT_THROW(d.validate(), DomainError);
}
