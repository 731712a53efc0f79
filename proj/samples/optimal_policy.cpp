// Solves the ordering problem for one calibrated store-product and prints
// long-run behavior, then shows how ordering reacts to the fixed cost.

#include <cstdio>

#include "invdp/counterfactual.hpp"
#include "invdp/simulator.hpp"

int main() {
    using namespace invdp;
    const StructuralParams p{0.0036, 0.0219, 2.9658, 0.0341, 0.5};
    const auto markup = MarkupClass::from_markup(0.655);

    // The model's exogenous transitions are estimated from an uncensored pilot path.
    Rng rng = make_rng(1);
    const auto pilot = simulate_uncensored(default_demand(), PriceProcess{}, 3000, rng, SimulationOptions{});
    const auto im = build_inventory_model(pilot, default_demand(), markup.lerner);
    std::printf("states %ld, order sizes %ld\n", static_cast<long>(im.model.n_states()),
                static_cast<long>(im.model.n_actions()));

    const auto o = solve_and_account(im.model, p, p);
    std::printf("ordering frequency   %.4f\n", o.ordering_frequency);
    std::printf("stockout frequency   %.4f\n", o.stockout_frequency);
    std::printf("inventory / sales    %.2f days\n", o.inv_to_sales);
    std::printf("daily flow profit    %.3f\n", o.flow_profit);

    std::printf("\n%8s %10s %10s\n", "gamma_f", "ordering", "inv/sales");
    const std::vector<double> ladder{1.0, 2.0, 3.0, 4.5, 6.0};
    const auto out = parameter_ladder(im.model, p, 2, ladder, 4);
    for (std::size_t i = 0; i < ladder.size(); ++i)
        std::printf("%8.2f %10.4f %10.2f\n", ladder[i], out[i].ordering_frequency, out[i].inv_to_sales);
}
