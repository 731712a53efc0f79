#include <gtest/gtest.h>

#include <chrono>
#include <cmath>

#include "invdp/simulator.hpp"
#include "invdp/structural_estimation.hpp"

using namespace invdp;

namespace {

StructuralParams truth() { return {0.0036, 0.0219, 2.9658, 0.0341, 0.5}; }

SimulationOptions small_options() {
    SimulationOptions o;
    o.model.grids = Grids{2, 20, 6, 18};
    o.initial_inventory = 10;
    return o;
}

// Small model built from a short simulated panel.
const InventoryModel& small_model() {
    static const InventoryModel im = [] {
        const auto opt = small_options();
        const auto rows = drop_burn_in(simulate_panel(truth(), default_demand(), MarkupClass::from_markup(0.655),
                                                      PriceProcess{}, 3000, 4, opt));
        ModelBuildOptions mo = opt.model;
        return build_inventory_model(rows, default_demand(), MarkupClass::from_markup(0.655).lerner, mo);
    }();
    return im;
}

StateSample chain_sample(const DiscreteModel& m, const CcpTable& P, int T, std::uint64_t seed) {
    const auto path = simulate_discrete_chain(m, P, 0, T, seed);
    return {path.states, path.actions};
}

}  // namespace

TEST(KernelCcp, KernelIsOneAtZero) {
    Eigen::MatrixXd coords(2, 1);
    coords << 0.0, 1.0;
    StateSample one{{0}, {1}};
    const CcpTable P = kernel_ccp(coords, one, 3);
    // A single observation: every query state reproduces its action after flooring.
    for (Eigen::Index x = 0; x < 2; ++x) {
        EXPECT_NEAR(P(x, 1), (1.0 - 0.0) / (1.0 + 2e-6), 1e-12);
        EXPECT_NEAR(P(x, 0), 1e-6 / (1.0 + 2e-6), 1e-15);
        EXPECT_NEAR(P.row(x).sum(), 1.0, 1e-14);
    }
}

TEST(KernelCcp, MatchesFrequenciesOnLargeSamples) {
    Eigen::MatrixXd coords(3, 1);
    coords << 0.0, 1.0, 2.0;
    const double probs[3][2] = {{0.8, 0.2}, {0.5, 0.5}, {0.1, 0.9}};
    StateSample s;
    Rng rng = make_rng(3, {});
    for (int t = 0; t < 300000; ++t) {
        const int x = uniform_index(rng, 3);
        s.state.push_back(x);
        s.action.push_back(bernoulli(rng, probs[x][1]) ? 1 : 0);
    }
    const CcpTable K = kernel_ccp(coords, s, 2);
    const CcpTable F = frequency_ccp(s, 3, 2);
    EXPECT_LT((K - F).cwiseAbs().maxCoeff(), 0.02);
}

TEST(PseudoLoglik, UniformCcpAndZeroPayoffIsLogNineth) {
    ModelBuildOptions mo;
    const auto rows = drop_burn_in(simulate_panel(truth(), default_demand(), MarkupClass::from_markup(0.655),
                                                  PriceProcess{}, 800, 2));
    const auto im = build_inventory_model(rows, default_demand(), 0.4, mo);
    ASSERT_EQ(im.model.n_actions(), 9);
    const auto sample = panel_sample(im);
    const CcpTable P = CcpTable::Constant(im.model.n_states(), 9, 1.0 / 9.0);
    const double q = pseudo_loglik(Vector5::Zero(), P, im.model, 0.0, sample);
    EXPECT_NEAR(q, sample.size() * std::log(1.0 / 9.0), 1e-8 * sample.size());
}

TEST(PseudoLoglik, FastPathMatchesDirectEvaluationAndGradient) {
    const auto& im = small_model();
    const auto sample = panel_sample(im);
    const CcpTable P = kernel_ccp(kernel_coordinates(im), sample, im.model.n_actions());
    const double beta = truth().beta;
    const PseudoLikelihood Q(im.model, P, beta, sample);
    Rng rng = make_rng(17, {});
    for (int rep = 0; rep < 10; ++rep) {
        Vector5 th = truth().scaled();
        for (int j = 0; j < 5; ++j) th(j) *= 0.5 + unit_uniform(rng);
        Vector5 g;
        const double fast = Q.value(th, &g);
        const double slow = pseudo_loglik(th, P, im.model, beta, sample);
        EXPECT_NEAR(fast, slow, 1e-8 * std::abs(slow));
        auto q = [&](const Vector5& t) { return pseudo_loglik(t, P, im.model, beta, sample); };
        for (int j = 0; j < 5; ++j) {
            // Five-point stencil; action values are large so a tiny step loses digits.
            const double h = 1e-3 * std::max(std::abs(th(j)), 1e-2);
            auto at = [&](double s) {
                Vector5 t = th;
                t(j) += s * h;
                return q(t);
            };
            const double fd = (at(-2) - 8 * at(-1) + 8 * at(1) - at(2)) / (12 * h);
            EXPECT_NEAR(g(j), fd, 1e-5 * std::max(std::abs(fd), 1.0)) << "coordinate " << j;
        }
    }
}

TEST(PseudoLoglik, InvariantToCommonPayoffShift) {
    const auto& im = small_model();
    const auto sample = panel_sample(im);
    const CcpTable P = kernel_ccp(kernel_coordinates(im), sample, im.model.n_actions());
    DiscreteModel shifted = im.model;
    for (auto& f : shifted.features) f.col(0).array() += 7.5;
    const Vector5 th = truth().scaled();
    const double a = pseudo_loglik(th, P, im.model, truth().beta, sample);
    const double b = pseudo_loglik(th, P, shifted, truth().beta, sample);
    EXPECT_NEAR(a, b, 1e-7 * std::abs(a));
}

TEST(PseudoLoglik, PsiAgreesWithSolverMapping) {
    const auto& im = small_model();
    const StructuralParams p = truth();
    const auto sol = solve_policy(im.model, p);
    const CcpTable P = sol.ccp.cwiseMax(1e-300);
    const CcpTable psi = psi_mapping(im.model, p.scaled(), p.beta, P);
    EXPECT_LT((psi - P).cwiseAbs().maxCoeff(), 1e-8);
    const CcpTable direct = ccp_from_values(im.model, p.scaled(), p.beta, valuation(im.model, p.scaled(), p.beta, P));
    EXPECT_LT((psi - direct).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(TwoStepPml, ScoreVanishesAtTruthOnLargeSamples) {
    const auto& im = small_model();
    const StructuralParams p = truth();
    const CcpTable P = solve_policy(im.model, p).ccp.cwiseMax(1e-300);
    const auto sample = chain_sample(im.model, P, 8000000, 5);
    const PseudoLikelihood Q(im.model, P, p.beta, sample);
    Vector5 g;
    const Vector5 th = p.scaled();
    const double q0 = Q.value(th, &g);
    const auto B = Q.score_outer_product(th);
    const double n = static_cast<double>(sample.size());
    for (int j = 0; j < 5; ++j) EXPECT_LT(std::abs(g(j) / n) / std::sqrt(B(j, j) / n), 1e-3) << j;
    // Perturb by 10% or three standard errors, whichever is larger; the
    // stockout coordinate is too weakly identified to resolve 10% alone.
    const Eigen::Matrix<double, 5, 5> C = B.inverse();
    for (int j = 0; j < 5; ++j)
        for (double sign : {-1.0, 1.0}) {
            Vector5 t = th;
            t(j) += sign * std::max(0.1 * std::abs(th(j)), 3.0 * std::sqrt(C(j, j)));
            EXPECT_LT(Q.value(t), q0) << "coordinate " << j << " sign " << sign;
        }
}

TEST(TwoStepPml, RecoversParametersWithTrueCcps) {
    const auto& im = small_model();
    const StructuralParams p = truth();
    const CcpTable P = solve_policy(im.model, p).ccp.cwiseMax(1e-300);
    const auto sample = chain_sample(im.model, P, 2000000, 6);
    const auto fit = two_step_pml(im.model, P, p.beta, sample);
    ASSERT_TRUE(fit.converged);
    const Vector5 th = p.scaled();
    for (int j = 0; j < 5; ++j) {
        ASSERT_TRUE(std::isfinite(fit.se_tilde(j)));
        EXPECT_LT(std::abs(fit.gamma_tilde(j) - th(j)), 4.5 * fit.se_tilde(j)) << kThetaNames[j];
    }
    for (int j = 0; j < 4; ++j) EXPECT_NEAR(fit.dollar[j], fit.gamma_tilde(j + 1) / fit.gamma_tilde(0), 1e-15);
}

TEST(TwoStepPml, NoOrderVariationIsAnError) {
    const auto& im = small_model();
    StateSample s = panel_sample(im);
    for (auto& a : s.action) a = 0;
    const CcpTable P = CcpTable::Constant(im.model.n_states(), im.model.n_actions(), 1.0 / im.model.n_actions());
    EXPECT_THROW(two_step_pml(im.model, P, truth().beta, s), InsufficientDataError);
}

TEST(TwoStepPml, FullSizeFitWithinTwentySeconds) {
    const auto rows = drop_burn_in(simulate_panel(truth(), default_demand(), MarkupClass::from_markup(0.655),
                                                  PriceProcess{}, 5014, 8));
    const auto start = std::chrono::steady_clock::now();
    const auto im = build_inventory_model(rows, default_demand(), 0.3957, {});
    EXPECT_GE(im.model.n_states(), 800);
    PmlOptions opt;
    opt.floor_sensitivity = true;
    const auto fit = estimate_structural(im, truth().beta, opt);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    EXPECT_LT(secs, 20.0);
    EXPECT_GT(fit.gamma_tilde(0), 0.0);
    EXPECT_TRUE(std::isfinite(fit.floor_sensitivity));
}
