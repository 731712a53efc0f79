#pragma once

// Batch driver behind tools/invdp. Exit codes: 0 success, 1 configuration or
// input error, 2 numerical failure. Files written by a failed run are removed.

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "invdp/config.hpp"
#include "invdp/counterfactual.hpp"
#include "invdp/demand_estimation.hpp"
#include "invdp/io/csv.hpp"
#include "invdp/reduced_form_ss.hpp"
#include "invdp/structural_estimation.hpp"

namespace invdp::cli {

namespace fs = std::filesystem;
using io::num;
using UnitKey = std::pair<int, int>;

/// Tracks files written by one run; removes them unless commit() is called.
class ArtifactWriter {
public:
    ArtifactWriter(fs::path dir, std::vector<std::string> provenance)
        : dir_(std::move(dir)), provenance_(std::move(provenance)) {}
    ArtifactWriter(const ArtifactWriter&) = delete;
    ArtifactWriter& operator=(const ArtifactWriter&) = delete;
    ~ArtifactWriter() {
        if (committed_) return;
        std::error_code ec;
        for (const auto& p : created_) fs::remove(p, ec);
    }

    void write_table(const std::string& name, const io::TableWriter& t) { write(name, t.str(provenance_)); }

    void write(const std::string& name, const std::string& content) {
        fs::create_directories(dir_);
        const fs::path target = dir_ / name;
        const fs::path tmp = dir_ / (name + ".tmp");
        created_.push_back(tmp);
        {
            std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
            if (!out) throw ConfigError("cannot write " + tmp.string());
            out << content;
            if (!out) throw ConfigError("write failed for " + tmp.string());
        }
        fs::rename(tmp, target);
        created_.back() = target;
    }

    void commit() { committed_ = true; }

private:
    fs::path dir_;
    std::vector<std::string> provenance_;
    std::vector<fs::path> created_;
    bool committed_ = false;
};

struct Context {
    RunConfig cfg;
    fs::path out_dir;
    fs::path in_dir;
    std::string command;

    std::vector<std::string> provenance() const {
        return {"invdp " + command, "config_hash=" + cfg.hash, "seed=" + std::to_string(cfg.seed)};
    }
};

namespace detail {

inline std::string sanitize(std::string s) {
    std::replace(s.begin(), s.end(), ',', ';');
    std::replace(s.begin(), s.end(), '\n', ' ');
    return s;
}

inline fs::path require_input(const Context& ctx, const std::string& name) {
    const fs::path p = ctx.in_dir / name;
    if (!fs::exists(p)) throw ConfigError("missing input " + p.string() + " (run the earlier subcommand first)");
    return p;
}

inline double markup_for(const RunConfig& cfg, int product) {
    return cfg.chain.markups[static_cast<std::size_t>(product) % cfg.chain.markups.size()];
}

/// Runs fn on each unit in parallel. Numerical errors either abort the run or,
/// with skip_failed_units, are recorded as the unit's status.
template <typename Fn>
std::vector<std::string> for_units(const Context& ctx, std::size_t n, Fn&& fn) {
    std::vector<std::string> status(n, "ok");
    parallel_for(n, ctx.cfg.workers, [&](std::size_t i) {
        try {
            fn(i);
        } catch (const ConfigError&) {
            throw;
        } catch (const Error& e) {
            if (!ctx.cfg.skip_failed_units) throw;
            log().warn("unit {} failed: {}", i, e.what());
            status[i] = "failed: " + sanitize(e.what());
        }
    });
    return status;
}

inline std::map<UnitKey, DemandParams> read_demand(const fs::path& path) {
    const auto t = io::read_table(path);
    const auto st = t.column("status");
    std::map<UnitKey, DemandParams> out;
    for (const auto& r : t.rows) {
        if (r[st] != "ok") continue;
        DemandParams d;
        double* slots[6] = {&d.eta_weekend, &d.eta_holiday, &d.eta_intercept, &d.eta_p, &d.eta_q, &d.alpha};
        for (int j = 0; j < 6; ++j) *slots[j] = io::to_double(r[t.column(kDemandParamNames[j])], kDemandParamNames[j]);
        out[{io::to_int(r[t.column("store_id")], "store_id"), io::to_int(r[t.column("product_id")], "product_id")}] = d;
    }
    return out;
}

struct Unit {
    UnitKey key;
    std::vector<PanelRow> rows;  ///< after burn-in
    DemandParams demand;
};

/// Panels joined with fitted demand; units without a demand fit are skipped with a warning.
inline std::vector<Unit> load_units(const Context& ctx) {
    const auto panels = io::read_panels(require_input(ctx, "panels.csv"));
    const auto demand = read_demand(require_input(ctx, "demand_estimates.csv"));
    std::vector<Unit> units;
    for (const auto& [key, rows] : panels) {
        const auto it = demand.find(key);
        if (it == demand.end()) {
            log().warn("store {} product {}: no demand estimate; skipped", key.first, key.second);
            continue;
        }
        units.push_back({key, drop_burn_in(rows, ctx.cfg.chain.simulation.burn_in), it->second});
    }
    if (units.empty()) throw InsufficientDataError("no store-product has a demand estimate");
    return units;
}

inline std::string diagnostics(const Context& ctx, const nlohmann::json& units) {
    nlohmann::json j;
    j["command"] = ctx.command;
    j["config_hash"] = ctx.cfg.hash;
    j["seed"] = ctx.cfg.seed;
    j["config"] = ctx.cfg.effective;
    j["units"] = units;
    return j.dump(2) + "\n";
}

}  // namespace detail

// ---------------------------------------------------------------------------

inline void cmd_simulate(const Context& ctx, ArtifactWriter& out) {
    const auto& cfg = ctx.cfg;
    const auto data = synthesize_chain(cfg.chain, cfg.seed, cfg.workers);

    io::TableWriter panels(io::panel_header());
    for (const auto& p : data.panels)
        for (const auto& r : p) panels.add(io::panel_fields(r));

    io::TableWriter stores({"store_id", "store_class", "log_assortment", "log_population", "log_income", "region"});
    for (const auto& s : data.stores)
        stores.add({num(s.store_id), kStoreClasses[s.store_class], num(s.log_assortment), num(s.log_population),
                    num(s.log_income), num(s.region)});

    io::TableWriter managers({"store_id", "education", "years_lcbo", "years_other"});
    for (const auto& m : data.managers)
        managers.add({num(m.store_id), num(m.education), num(m.years_lcbo), num(m.years_other)});

    std::vector<std::string> th{"store_id", "product_id", "markup", "sigma_eps"};
    for (const char* prefix : {"gamma_sto_", "gamma_man_", ""})
        for (const char* c : kCostNames) th.push_back(std::string(prefix) + (prefix[0] ? c + 6 : c));
    io::TableWriter truth(th);
    for (const auto& t : data.truth) {
        std::vector<std::string> row{num(t.store_id), num(t.product_id), num(t.markup), num(cfg.chain.sigma_eps)};
        for (double v : t.gamma_sto) row.push_back(num(v));
        for (double v : t.gamma_man) row.push_back(num(v));
        for (int j = 0; j < 4; ++j) row.push_back(num(t.gamma_sto[j] + t.gamma_man[j]));
        truth.add(row);
    }
    out.write_table("panels.csv", panels);
    out.write_table("stores.csv", stores);
    out.write_table("managers.csv", managers);
    out.write_table("truth.csv", truth);
}

inline void cmd_fit_demand(const Context& ctx, ArtifactWriter& out) {
    const auto panels = io::read_panels(detail::require_input(ctx, "panels.csv"));
    std::vector<std::pair<UnitKey, std::vector<PanelRow>>> units(panels.begin(), panels.end());
    std::vector<DemandFit> fits(units.size());
    const auto status = detail::for_units(ctx, units.size(), [&](std::size_t i) {
        fits[i] = fit_negbin(drop_burn_in(units[i].second, ctx.cfg.chain.simulation.burn_in));
    });
    std::vector<std::string> h{"store_id", "product_id", "status", "n_obs"};
    for (const char* n : kDemandParamNames) h.push_back(n);
    for (const char* n : kDemandParamNames) h.push_back(std::string("se_") + n);
    h.insert(h.end(), {"loglik", "pseudo_r2", "iterations"});
    io::TableWriter t(h);
    nlohmann::json diag = nlohmann::json::array();
    for (std::size_t i = 0; i < units.size(); ++i) {
        const auto& f = fits[i];
        const auto& p = f.params;
        std::vector<std::string> row{num(units[i].first.first), num(units[i].first.second), status[i], num(f.n_obs)};
        for (double v : {p.eta_weekend, p.eta_holiday, p.eta_intercept, p.eta_p, p.eta_q, p.alpha}) row.push_back(num(v));
        for (double v : f.se) row.push_back(num(v));
        row.insert(row.end(), {num(f.loglik), num(f.pseudo_r2), num(f.iterations)});
        t.add(row);
        diag.push_back({{"store_id", units[i].first.first}, {"product_id", units[i].first.second},
                        {"status", status[i]}, {"gradient_norm", f.gradient_norm}});
    }
    out.write_table("demand_estimates.csv", t);
    out.write("fit-demand_diagnostics.json", detail::diagnostics(ctx, diag));
}

inline void cmd_fit_ss(const Context& ctx, ArtifactWriter& out) {
    const auto units = detail::load_units(ctx);
    std::vector<SsRuleParams> fits(units.size());
    std::vector<Thresholds> thr(units.size());
    const auto status = detail::for_units(ctx, units.size(), [&](std::size_t i) {
        fits[i] = fit_ss_rule(units[i].rows, units[i].demand);
        std::vector<double> lde, lp;
        for (const auto& r : units[i].rows) {
            lde.push_back(units[i].demand.log_mean(r.price, r.trailing7, r.weekend, r.holiday));
            lp.push_back(std::log(r.price));
        }
        thr[i] = thresholds_at(fits[i], mean(lde), mean(lp));
    });
    std::vector<std::string> h{"store_id", "product_id", "status", "n_obs", "n_orders"};
    for (const char* n : {"b0", "bk", "bd", "bp"}) h.push_back(n);
    for (const char* n : {"se_b0", "se_bk", "se_bd", "se_bp"}) h.push_back(n);
    h.insert(h.end(), {"sigma_u_lower", "beta0_s", "betad_s", "betap_s", "B0_S", "Bd_S", "Bp_S", "mills", "se_B0_S",
                       "se_Bd_S", "se_Bp_S", "se_mills", "log_s0", "log_S0"});
    io::TableWriter t(h);
    std::vector<UnitEstimate> ls, lS;
    std::vector<double> bk, bk_se, bd, bd_se;
    for (std::size_t i = 0; i < units.size(); ++i) {
        const auto& f = fits[i];
        std::vector<std::string> row{num(units[i].key.first), num(units[i].key.second), status[i],
                                     num(f.probit.n_obs), num(f.probit.n_orders)};
        for (int j = 0; j < 4; ++j) row.push_back(num(f.probit.coef(j)));
        for (int j = 0; j < 4; ++j) row.push_back(num(f.probit.se(j)));
        row.push_back(num(f.sigma_u_lower));
        for (int j = 0; j < 3; ++j) row.push_back(num(f.beta_lower(j)));
        for (int j = 0; j < 4; ++j) row.push_back(num(f.heckman.coef(j)));
        for (int j = 0; j < 4; ++j) row.push_back(num(f.heckman.se(j)));
        row.insert(row.end(), {num(thr[i].log_s0), num(thr[i].log_S0)});
        t.add(row);
        if (status[i] != "ok") continue;
        ls.push_back({units[i].key.first, units[i].key.second, thr[i].log_s0});
        lS.push_back({units[i].key.first, units[i].key.second, thr[i].log_S0});
        bk.push_back(f.probit.coef(1));
        bk_se.push_back(f.probit.se(1));
        bd.push_back(f.heckman.coef(1));
        bd_se.push_back(f.heckman.se(1));
    }
    out.write_table("ss_estimates.csv", t);

    io::TableWriter s({"statistic", "between", "within", "total", "fraction_outside_band"});
    auto decomp_row = [&](const char* name, const std::vector<UnitEstimate>& est) {
        try {
            const auto d = variance_decomposition(est);
            s.add({name, num(d.between), num(d.within), num(d.total), ""});
        } catch (const DomainError& e) {
            log().info("{}: variance decomposition skipped: {}", name, e.what());
        }
    };
    decomp_row("log_s0", ls);
    decomp_row("log_S0", lS);
    if (bk.size() >= 2) {
        s.add({"bk", "", "", "", num(fraction_outside_homogeneity_band(bk, bk_se))});
        s.add({"Bd_S", "", "", "", num(fraction_outside_homogeneity_band(bd, bd_se))});
    }
    out.write_table("ss_summary.csv", s);
}

inline void cmd_fit_structural(const Context& ctx, ArtifactWriter& out) {
    const auto& cfg = ctx.cfg;
    const auto units = detail::load_units(ctx);
    std::vector<StructuralFit> fits(units.size());
    std::vector<CostRevenueRatios> ratios(units.size());
    std::vector<int> n_states(units.size(), 0);
    const auto status = detail::for_units(ctx, units.size(), [&](std::size_t i) {
        const double lerner = lerner_index(detail::markup_for(cfg, units[i].key.second));
        const auto im = build_inventory_model(units[i].rows, units[i].demand, lerner, cfg.model);
        n_states[i] = static_cast<int>(im.model.n_states());
        fits[i] = estimate_structural(im, cfg.beta, cfg.pml);
        ratios[i] = cost_revenue_ratios(units[i].rows, fits[i].params(cfg.beta));
    });
    std::vector<std::string> h{"store_id", "product_id", "status", "n_obs", "n_states", "markup"};
    for (const char* n : kThetaNames) h.push_back(n);
    for (const char* n : kThetaNames) h.push_back(std::string("se_") + n);
    for (const char* n : kCostNames) h.push_back(n);
    for (const char* n : kCostNames) h.push_back(std::string("se_") + n);
    for (const char* n : kCostNames) h.push_back(std::string("t_") + n);
    h.insert(h.end(), {"pseudo_loglik", "iterations", "floor_sensitivity", "ratio_holding", "ratio_stockout",
                       "ratio_fixed", "ratio_variable", "ratio_total"});
    io::TableWriter t(h);
    nlohmann::json diag = nlohmann::json::array();
    for (std::size_t i = 0; i < units.size(); ++i) {
        const auto& f = fits[i];
        const auto& r = ratios[i];
        std::vector<std::string> row{num(units[i].key.first), num(units[i].key.second), status[i], num(f.n_obs),
                                     num(n_states[i]), num(detail::markup_for(cfg, units[i].key.second))};
        for (int j = 0; j < 5; ++j) row.push_back(num(f.gamma_tilde(j)));
        for (int j = 0; j < 5; ++j) row.push_back(num(f.se_tilde(j)));
        for (int j = 0; j < 4; ++j) row.push_back(num(f.dollar[j]));
        for (int j = 0; j < 4; ++j) row.push_back(num(f.dollar_se[j]));
        for (int j = 0; j < 4; ++j) row.push_back(num(f.t_stat(j)));
        row.insert(row.end(), {num(f.pseudo_loglik), num(f.iterations), num(f.floor_sensitivity), num(r.holding),
                               num(r.stockout), num(r.fixed), num(r.variable), num(r.total)});
        t.add(row);
        diag.push_back({{"store_id", units[i].key.first}, {"product_id", units[i].key.second}, {"status", status[i]},
                        {"gradient_norm", f.gradient_norm}, {"converged", f.converged}});
    }
    out.write_table("structural_estimates.csv", t);
    out.write("fit-structural_diagnostics.json", detail::diagnostics(ctx, diag));
}

namespace detail {

struct StructuralRow {
    UnitKey key;
    std::array<double, 4> gamma{};
    double sigma_eps = 1.0;
};

inline std::vector<StructuralRow> read_structural(const fs::path& path) {
    const auto t = io::read_table(path);
    std::vector<StructuralRow> out;
    for (const auto& r : t.rows) {
        if (r[t.column("status")] != "ok") continue;
        StructuralRow s;
        s.key = {io::to_int(r[t.column("store_id")], "store_id"), io::to_int(r[t.column("product_id")], "product_id")};
        for (int j = 0; j < 4; ++j) s.gamma[j] = io::to_double(r[t.column(kCostNames[j])], kCostNames[j]);
        const double inv = io::to_double(r[t.column("inv_sigma")], "inv_sigma");
        if (!(inv > 0)) throw DomainError("structural estimate with non-positive inv_sigma");
        s.sigma_eps = 1.0 / inv;
        out.push_back(s);
    }
    if (out.empty()) throw InsufficientDataError("no successful structural estimates");
    return out;
}

inline std::vector<StoreCovariates> read_stores(const fs::path& path) {
    const auto t = io::read_table(path);
    std::vector<StoreCovariates> out;
    for (const auto& r : t.rows) {
        StoreCovariates s;
        s.store_id = io::to_int(r[t.column("store_id")], "store_id");
        const auto& cls = r[t.column("store_class")];
        const auto it = std::find_if(kStoreClasses.begin(), kStoreClasses.end(), [&](const char* c) { return cls == c; });
        if (it == kStoreClasses.end()) throw ConfigError("stores.csv: unknown store class " + cls);
        s.store_class = static_cast<int>(it - kStoreClasses.begin());
        s.log_assortment = io::to_double(r[t.column("log_assortment")], "log_assortment");
        s.log_population = io::to_double(r[t.column("log_population")], "log_population");
        s.log_income = io::to_double(r[t.column("log_income")], "log_income");
        s.region = io::to_int(r[t.column("region")], "region");
        out.push_back(s);
    }
    return out;
}

inline std::vector<ManagerCovariates> read_managers(const fs::path& path) {
    const auto t = io::read_table(path);
    std::vector<ManagerCovariates> out;
    for (const auto& r : t.rows) {
        ManagerCovariates m;
        m.store_id = io::to_int(r[t.column("store_id")], "store_id");
        m.education = io::to_int(r[t.column("education")], "education");
        m.years_lcbo = io::to_double(r[t.column("years_lcbo")], "years_lcbo");
        m.years_other = io::to_double(r[t.column("years_other")], "years_other");
        out.push_back(m);
    }
    return out;
}

}  // namespace detail

inline void cmd_counterfact(const Context& ctx, ArtifactWriter& out) {
    const auto& cfg = ctx.cfg;
    const auto est = detail::read_structural(detail::require_input(ctx, "structural_estimates.csv"));
    const auto stores = detail::read_stores(detail::require_input(ctx, "stores.csv"));
    const auto managers = detail::read_managers(detail::require_input(ctx, "managers.csv"));
    const auto all_units = detail::load_units(ctx);
    std::map<UnitKey, const detail::Unit*> by_key;
    for (const auto& u : all_units) by_key[u.key] = &u;

    std::vector<CostEstimate> ce;
    for (const auto& e : est) ce.push_back({e.key.first, e.key.second, e.gamma});
    const auto dec = decompose_costs(ce, stores, managers);

    io::TableWriter dt({"store_id", "product_id", "gamma_sto_h", "gamma_sto_z", "gamma_sto_f", "gamma_sto_c",
                        "gamma_man_h", "gamma_man_z", "gamma_man_f", "gamma_man_c"});
    for (std::size_t i = 0; i < dec.size(); ++i) {
        std::vector<std::string> row{num(dec.store_id[i]), num(dec.product_id[i])};
        for (double v : dec.sto(i)) row.push_back(num(v));
        for (double v : dec.man(i)) row.push_back(num(v));
        dt.add(row);
    }
    io::TableWriter ct({"step", "cost", "regressor", "coef", "se"});
    for (int j = 0; j < 4; ++j) {
        const std::pair<const char*, const OlsResult*> steps[3] = {
            {"store", &dec.first_step[j]}, {"manager", &dec.second_step[j]}, {"abs_residual", &dec.abs_residual[j]}};
        for (const auto& [name, r] : steps)
            for (std::size_t k = 0; k < r->names.size(); ++k)
                ct.add({name, kCostNames[j], r->names[k], num(r->coef(static_cast<Eigen::Index>(k))),
                        num(r->se(static_cast<Eigen::Index>(k)))});
    }

    constexpr std::array<Shutdown, 5> experiments{Shutdown::H, Shutdown::Z, Shutdown::F, Shutdown::C, Shutdown::All};
    const std::size_t n = dec.size();
    std::vector<std::array<ShutdownResult, 5>> shut(n);
    std::vector<CentralizationResult> cen(n);
    AccountingOptions acc;
    acc.include_shock_surplus = cfg.include_shock_surplus;
    const auto status = detail::for_units(ctx, n, [&](std::size_t i) {
        const UnitKey key{dec.store_id[i], dec.product_id[i]};
        const auto it = by_key.find(key);
        if (it == by_key.end()) throw InsufficientDataError("no panel for an estimated unit");
        const auto& u = *it->second;
        const double lerner = lerner_index(detail::markup_for(cfg, key.second));
        const auto info = build_information_models(u.rows, u.demand, lerner, cfg.model);
        const double sigma = est[i].sigma_eps;
        for (std::size_t e = 0; e < experiments.size(); ++e)
            shut[i][e] = shutdown_experiment(info.current.model, dec.sto(i), dec.man(i), sigma, cfg.beta,
                                             experiments[e], acc);
        cen[i] = centralization_experiment(info, dec.sto(i), dec.man(i), sigma, cfg.beta, cfg.delay, acc);
    });

    const std::vector<std::string> delta_cols{"d_stockout", "d_ordering", "d_inv_to_sales", "d_inv_to_sales_after",
                                              "d_inv_to_sales_before", "d_flow_profit", "inventory_cost_change_pct"};
    auto delta_values = [](const ShutdownResult& r) {
        const auto& d = r.delta;
        return std::array<double, 7>{d.stockout_frequency,       d.ordering_frequency,        d.inv_to_sales,
                                     d.inv_to_sales_after_order, d.inv_to_sales_before_order, d.flow_profit,
                                     r.inventory_cost_change_pct};
    };
    std::vector<std::string> sh{"store_id", "product_id", "status", "experiment"};
    sh.insert(sh.end(), delta_cols.begin(), delta_cols.end());
    io::TableWriter st(sh);
    std::vector<std::string> ssh{"experiment", "n"};
    ssh.insert(ssh.end(), delta_cols.begin(), delta_cols.end());
    io::TableWriter ss(ssh);
    std::array<std::array<double, 7>, 5> sums{};
    std::size_t n_ok = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const bool ok = status[i] == "ok";
        n_ok += ok;
        for (std::size_t e = 0; e < experiments.size(); ++e) {
            const auto v = delta_values(shut[i][e]);
            std::vector<std::string> row{num(dec.store_id[i]), num(dec.product_id[i]), status[i],
                                         shutdown_name(experiments[e])};
            for (double x : v) row.push_back(num(x));
            st.add(row);
            if (ok)
                for (int c = 0; c < 7; ++c) sums[e][c] += v[c];
        }
    }
    for (std::size_t e = 0; e < experiments.size(); ++e) {
        std::vector<std::string> row{shutdown_name(experiments[e]), num(static_cast<int>(n_ok))};
        for (int c = 0; c < 7; ++c) row.push_back(n_ok ? num(sums[e][c] / n_ok) : "nan");
        ss.add(row);
    }

    io::TableWriter cu({"store_id", "product_id", "status", "profit_decentralized", "profit_centralized", "gain_pct",
                        "inventory_cost_change_pct", "ordering_decentralized", "ordering_centralized"});
    std::vector<double> gains, costs;
    for (std::size_t i = 0; i < n; ++i) {
        const auto& c = cen[i];
        cu.add({num(dec.store_id[i]), num(dec.product_id[i]), status[i], num(c.decentralized.flow_profit),
                num(c.centralized.flow_profit), num(c.gain_pct), num(c.inventory_cost_change_pct),
                num(c.decentralized.ordering_frequency), num(c.centralized.ordering_frequency)});
        if (status[i] == "ok") {
            gains.push_back(c.gain_pct);
            costs.push_back(c.inventory_cost_change_pct);
        }
    }
    io::TableWriter cs({"n", "mean_gain_pct", "median_gain_pct", "mean_inventory_cost_change_pct"});
    if (!gains.empty())
        cs.add({num(static_cast<int>(gains.size())), num(mean(gains)), num(median(gains)), num(mean(costs))});

    out.write_table("decomposition.csv", dt);
    out.write_table("decomposition_coefficients.csv", ct);
    out.write_table("shutdown.csv", st);
    out.write_table("shutdown_summary.csv", ss);
    out.write_table("centralization.csv", cu);
    out.write_table("centralization_summary.csv", cs);
}

inline void cmd_report(const Context& ctx, ArtifactWriter& out) {
    const auto t = io::read_table(detail::require_input(ctx, "structural_estimates.csv"));
    const auto st = t.column("status");
    std::vector<std::string> params;
    for (const char* c : kCostNames) params.push_back(c);
    for (const char* c : kCostNames) params.push_back(std::string("t_") + c);
    params.push_back("ratio_total");

    io::TableWriter sum({"parameter", "n", "mean", "p10", "p25", "median", "p75", "p90"});
    io::TableWriter cdf({"parameter", "rank", "probability", "value"});
    for (const auto& p : params) {
        const auto col = t.column(p);
        std::vector<double> v;
        for (const auto& r : t.rows)
            if (r[st] == "ok") v.push_back(io::to_double(r[col], p));
        if (v.empty()) continue;
        sum.add({p, num(static_cast<int>(v.size())), num(mean(v)), num(quantile(v, 0.10)), num(quantile(v, 0.25)),
                 num(quantile(v, 0.5)), num(quantile(v, 0.75)), num(quantile(v, 0.90))});
        std::sort(v.begin(), v.end());
        for (std::size_t i = 0; i < v.size(); ++i)
            cdf.add({p, num(static_cast<int>(i + 1)), num(static_cast<double>(i + 1) / v.size()), num(v[i])});
    }
    out.write_table("report_summary.csv", sum);
    out.write_table("report_cdf.csv", cdf);
}

// ---------------------------------------------------------------------------

inline int run(const std::string& command, RunConfig cfg, std::ostream& err = std::cerr) {
    try {
        finalize(cfg);
        Context ctx{cfg, cfg.output_dir, cfg.input_dir.empty() ? cfg.output_dir : cfg.input_dir, command};
        ArtifactWriter out(ctx.out_dir, ctx.provenance());
        log().info("{}: config hash {}, seed {}", command, cfg.hash, cfg.seed);
        if (command == "simulate") cmd_simulate(ctx, out);
        else if (command == "fit-demand") cmd_fit_demand(ctx, out);
        else if (command == "fit-ss") cmd_fit_ss(ctx, out);
        else if (command == "fit-structural") cmd_fit_structural(ctx, out);
        else if (command == "counterfact") cmd_counterfact(ctx, out);
        else if (command == "report") cmd_report(ctx, out);
        else throw ConfigError("unknown subcommand " + command);
        out.commit();
        return 0;
    } catch (const ConfigError& e) {
        err << "invdp: configuration error: " << e.what() << '\n';
        return 1;
    } catch (const SpecError& e) {
        err << "invdp: infeasible chain spec: " << e.what() << '\n';
        return 1;
    } catch (const fs::filesystem_error& e) {
        err << "invdp: " << e.what() << '\n';
        return 1;
    } catch (const std::exception& e) {
        err << "invdp: numerical failure: " << e.what() << '\n';
        return 2;
    }
}

inline int main(int argc, char** argv) {
    CLI::App app{"Dynamic inventory model: simulation, estimation and counterfactuals"};
    app.require_subcommand(1);
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::optional<int> workers;
    std::optional<std::string> out_dir;
    const std::pair<const char*, const char*> commands[] = {
        {"simulate", "synthesize a chain and simulate daily panels"},
        {"fit-demand", "negative binomial sales forecast per store-product"},
        {"fit-ss", "(S,s) probit and Heckman threshold rules"},
        {"fit-structural", "two-step pseudo likelihood cost estimates"},
        {"counterfact", "cost decomposition, manager shutdowns and centralization"},
        {"report", "quantiles and CDFs of the structural estimates"},
    };
    for (const auto& [name, about] : commands) {
        auto* sub = app.add_subcommand(name, about);
        sub->add_option("--config", config_path, "JSON config file")->required();
        sub->add_option("--seed", seed, "override the config seed");
        sub->add_option("--workers", workers, "override the worker count");
        sub->add_option("--out", out_dir, "override the output directory");
    }
    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }
    RunConfig cfg;
    try {
        cfg = load_config(config_path);
    } catch (const ConfigError& e) {
        std::cerr << "invdp: configuration error: " << e.what() << '\n';
        return 1;
    }
    if (seed) cfg.seed = *seed;
    if (workers) cfg.workers = *workers;
    if (out_dir) cfg.output_dir = *out_dir;
    return run(app.get_subcommands().front()->get_name(), cfg);
}

}  // namespace invdp::cli
