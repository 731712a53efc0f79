// Simulates one store-product at known costs, then runs the estimation chain:
// demand, (S,s) reduced form and the structural pseudo-likelihood.
// Usage: estimate_store [days] [seed]

#include <cstdio>
#include <cstdlib>

#include "invdp/demand_estimation.hpp"
#include "invdp/reduced_form_ss.hpp"
#include "invdp/simulator.hpp"
#include "invdp/structural_estimation.hpp"

int main(int argc, char** argv) {
    using namespace invdp;
    const int days = argc > 1 ? std::atoi(argv[1]) : 5000;
    const auto seed = static_cast<std::uint64_t>(argc > 2 ? std::atoll(argv[2]) : 1);
    const StructuralParams truth{0.0036, 0.0219, 2.9658, 0.0341, 0.5};
    const auto markup = MarkupClass::from_markup(0.655);

    try {
        const auto rows = drop_burn_in(simulate_panel(truth, default_demand(), markup, PriceProcess{}, days, seed));

        const auto demand = fit_negbin(rows);
        std::printf("demand: alpha %.3f (se %.3f), eta_q %.3f (se %.3f)\n", demand.params.alpha, demand.se[5],
                    demand.params.eta_q, demand.se[4]);

        const auto ss = fit_ss_rule(rows, demand.params);
        std::printf("probit: ln k coefficient %.3f (se %.3f), implied sigma_u %.3f\n", ss.probit.coef(1),
                    ss.probit.se(1), ss.sigma_u_lower);

        const auto im = build_inventory_model(rows, demand.params, markup.lerner);
        const auto fit = estimate_structural(im, truth.beta);
        std::printf("\n%-10s %12s %12s %12s\n", "parameter", "truth", "estimate", "std.err");
        const Vector5 t = truth.scaled();
        for (int j = 0; j < 5; ++j)
            std::printf("%-10s %12.5f %12.5f %12.5f\n", kThetaNames[j], t(j), fit.gamma_tilde(j), fit.se_tilde(j));
        std::printf("\nDollar costs divide by inv_sigma, which is weakly identified in short panels.\n");
        for (int j = 0; j < 4; ++j)
            std::printf("%-10s %12.5f %12.5f %12.5f\n", kCostNames[j], t(j + 1) / t(0), fit.dollar[j],
                        fit.dollar_se[j]);
    } catch (const Error& e) {
        std::fprintf(stderr, "estimate_store: %s\n", e.what());
        return 2;
    }
}
