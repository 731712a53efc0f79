#pragma once

// Discretized inventory model: grids, k-means clustering of the exogenous
// state, empirical kernels and the per-action transition/feature matrices.

#include <Eigen/Dense>
#include <Eigen/SparseCore>

#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <set>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "invdp/dp_solver.hpp"
#include "invdp/errors.hpp"
#include "invdp/kmeans.hpp"
#include "invdp/log.hpp"
#include "invdp/model_core.hpp"
#include "invdp/stats.hpp"

namespace invdp {

/// Uniform inventory and order grids.
struct Grids {
    int k_step = 2;
    int k_max = 100;
    int y_step = 6;
    int y_max = 48;

    int n_k() const { return k_max / k_step + 1; }
    int n_y() const { return y_max / y_step + 1; }
    int k_value(int idx) const { return idx * k_step; }
    int y_value(int idx) const { return idx * y_step; }

    std::vector<int> k_values() const {
        std::vector<int> v;
        for (int i = 0; i < n_k(); ++i) v.push_back(k_value(i));
        return v;
    }
    std::vector<int> y_values() const {
        std::vector<int> v;
        for (int i = 0; i < n_y(); ++i) v.push_back(y_value(i));
        return v;
    }

    /// Nearest grid index, ties rounded up, clamped to the grid.
    static int snap_index(double v, int step, int max) {
        const int idx = static_cast<int>(std::floor((v + 0.5 * step) / step));
        return std::clamp(idx, 0, max / step);
    }
    int snap_k(double k) const { return snap_index(k, k_step, k_max); }
    int snap_y(double y) const { return snap_index(y, y_step, y_max); }

    void validate() const {
        if (k_step <= 0 || y_step <= 0 || k_max % k_step != 0 || y_max % y_step != 0 || k_max <= 0 || y_max <= 0)
            throw DomainError("Grids: steps must be positive and divide the maxima");
    }
};

/// Clustering of one scalar exogenous variable.
struct ClusterAxis {
    std::vector<double> centers;  ///< ascending
    double between_share = 1.0;
    bool degenerate = false;

    int size() const { return static_cast<int>(centers.size()); }
    int nearest(double v) const {
        int best = 0;
        for (int c = 1; c < size(); ++c)
            if (std::abs(v - centers[c]) < std::abs(v - centers[best])) best = c;
        return best;
    }

    static ClusterAxis fit(const std::vector<double>& values, int n_clusters, std::uint64_t seed,
                           const char* label) {
        if (values.empty()) throw DomainError(std::string("discretize: no values for ") + label);
        ClusterAxis axis;
        const std::set<double> distinct(values.begin(), values.end());
        const int k = std::min<int>(n_clusters, static_cast<int>(distinct.size()));
        if (k <= 1) {
            log().warn("discretize: {} has zero variance; using a single cluster", label);
            axis.centers = {*distinct.begin()};
            axis.degenerate = true;
            return axis;
        }
        const auto r = kmeans_1d(values, k, seed);
        for (int c = 0; c < k; ++c) axis.centers.push_back(r.centers(c, 0));
        axis.between_share = between_variance_share(values, r.assignment);
        return axis;
    }
};

inline double log_trailing(double q7) { return std::log(q7 + 1.0); }

/// Row-level discretization of a single store-product panel.
struct Discretization {
    Grids grids;
    ClusterAxis price;
    ClusterAxis logq;  ///< clusters of ln(Q7 + 1)
    std::vector<int> k_index;
    std::vector<int> y_index;
    std::vector<int> price_cluster;
    std::vector<int> q_cluster;
    std::vector<int> q_lag_cluster;  ///< cluster of Q7 seven days earlier; -1 when unavailable
    std::vector<int> next_row;       ///< index of the following day's row; -1 when absent
};

/// k-means (k-means++ seeding) on price and on ln(Q7+1) separately, plus grid
/// snapping of inventory and orders.
inline Discretization discretize(std::span<const PanelRow> rows, const Grids& grids = {}, int n_clusters = 2,
                                 std::uint64_t seed = 0) {
    grids.validate();
    if (rows.empty()) throw DomainError("discretize: empty panel");
    if (n_clusters < 1) throw DomainError("discretize: n_clusters must be >= 1");
    Discretization d;
    d.grids = grids;
    std::vector<double> prices, logq;
    prices.reserve(rows.size());
    logq.reserve(rows.size());
    for (const auto& r : rows) {
        prices.push_back(r.price);
        logq.push_back(log_trailing(r.trailing7));
    }
    d.price = ClusterAxis::fit(prices, n_clusters, seed, "price");
    d.logq = ClusterAxis::fit(logq, n_clusters, seed + 1, "ln(Q7+1)");

    const std::size_t n = rows.size();
    d.k_index.resize(n);
    d.y_index.resize(n);
    d.price_cluster.resize(n);
    d.q_cluster.resize(n);
    d.q_lag_cluster.assign(n, -1);
    d.next_row.assign(n, -1);
    std::map<std::tuple<int, int, int>, std::size_t> by_day;
    for (std::size_t i = 0; i < n; ++i) {
        const auto& r = rows[i];
        d.k_index[i] = grids.snap_k(r.inventory);
        d.y_index[i] = grids.snap_y(r.order);
        d.price_cluster[i] = d.price.nearest(r.price);
        d.q_cluster[i] = d.logq.nearest(logq[i]);
        by_day[{r.store_id, r.product_id, r.day}] = i;
    }
    for (std::size_t i = 0; i < n; ++i) {
        const auto& r = rows[i];
        if (auto it = by_day.find({r.store_id, r.product_id, r.day - 7}); it != by_day.end())
            d.q_lag_cluster[i] = d.q_cluster[it->second];
        if (auto it = by_day.find({r.store_id, r.product_id, r.day + 1}); it != by_day.end())
            d.next_row[i] = static_cast<int>(it->second);
    }
    return d;
}

/// Which trailing-sales information the decision state carries.
enum class InfoSet {
    Current,  ///< current Q7 cluster
    Lagged,   ///< Q7 cluster from one week earlier only
    Both      ///< current and lagged clusters (used to evaluate lagged policies)
};

/// Index arithmetic for states (k, price cluster, Q state, weekend, holiday).
/// State id = exo * n_k + k_index.
struct StateLayout {
    InfoSet info = InfoSet::Current;
    int n_k = 51;
    int n_price = 2;
    int n_q = 2;

    int n_qstate() const { return info == InfoSet::Both ? n_q * n_q : n_q; }
    int n_exo() const { return n_price * n_qstate() * 4; }
    int n_states() const { return n_exo() * n_k; }

    /// Q state from current and lagged clusters (-1 lag allowed for Current).
    int qstate(int q, int q_lag) const {
        switch (info) {
            case InfoSet::Current: return q;
            case InfoSet::Lagged: return q_lag;
            case InfoSet::Both: return q * n_q + q_lag;
        }
        return q;
    }
    bool qstate_available(int q_lag) const { return info == InfoSet::Current || q_lag >= 0; }
    int exo(int pc, int qs, bool w, bool h) const { return ((pc * n_qstate() + qs) * 2 + int(w)) * 2 + int(h); }
    int state(int k_idx, int exo_idx) const { return exo_idx * n_k + k_idx; }

    struct Exo {
        int pc, qs;
        bool w, h;
    };
    Exo decode_exo(int e) const {
        Exo x{};
        x.h = e % 2;
        e /= 2;
        x.w = e % 2;
        e /= 2;
        x.qs = e % n_qstate();
        x.pc = e / n_qstate();
        return x;
    }
    int current_q(int qs) const { return info == InfoSet::Both ? qs / n_q : (info == InfoSet::Current ? qs : -1); }
    int lagged_q(int qs) const { return info == InfoSet::Both ? qs % n_q : (info == InfoSet::Lagged ? qs : -1); }
};

/// Exogenous-state inputs to the transition builder.
struct TransitionInputs {
    std::vector<DemandPmf> cell_pmf;  ///< one per exo index
    std::vector<double> cell_price;   ///< price level per price cluster
    Eigen::MatrixXd price_matrix;     ///< n_price x n_price
    /// q_kernel[qs][tercile] is a distribution over next Q states.
    std::vector<std::array<std::vector<double>, 3>> q_kernel;
    std::array<double, 2> sales_cuts{0.0, 0.0};  ///< tercile boundaries on daily sales
    Eigen::Matrix2d weekend_matrix;
    Eigen::Matrix2d holiday_matrix;
    double lerner = 0.0;

    int tercile(double sales) const { return sales <= sales_cuts[0] ? 0 : (sales <= sales_cuts[1] ? 1 : 2); }
};

/// Two-state chain for the weekend flag implied by a 5+2 weekly cycle.
inline Eigen::Matrix2d weekend_markov_matrix() {
    Eigen::Matrix2d m;
    m << 4.0 / 5.0, 1.0 / 5.0, 1.0 / 2.0, 1.0 / 2.0;
    return m;
}

/// Builds F(y) and H(y). Inventory moves analytically: k' = k + y - min(d,k)
/// snapped to the grid (a value midway between two grid points is split
/// evenly between them). Price, Q state and calendar move independently given
/// the sales tercile.
inline DiscreteModel build_transitions(const Grids& g, const StateLayout& L, const TransitionInputs& in) {
    g.validate();
    const int n = L.n_states(), n_exo = L.n_exo(), nq = L.n_qstate();
    if (static_cast<int>(in.cell_pmf.size()) != n_exo) throw DomainError("build_transitions: one pmf per exo cell");
    if (in.price_matrix.rows() != L.n_price || in.price_matrix.cols() != L.n_price)
        throw DomainError("build_transitions: price matrix shape");
    if (static_cast<int>(in.q_kernel.size()) != nq) throw DomainError("build_transitions: Q kernel shape");
    if (static_cast<int>(in.cell_price.size()) != L.n_price) throw DomainError("build_transitions: cell prices");

    DiscreteModel m;
    m.actions = g.y_values();
    m.states.resize(n);
    for (int e = 0; e < n_exo; ++e) {
        const auto x = L.decode_exo(e);
        for (int ki = 0; ki < L.n_k; ++ki) {
            auto& s = m.states[L.state(ki, e)];
            s.k = g.k_value(ki);
            s.price_cluster = x.pc;
            s.q_cluster = L.current_q(x.qs);
            s.q_lag_cluster = L.lagged_q(x.qs);
            s.weekend = x.w;
            s.holiday = x.h;
            s.price = in.cell_price[x.pc];
            const auto mo = expected_min_and_stockout(s.k, in.cell_pmf[e]);
            s.expected_sales = mo.expected_sales;
            s.stockout_prob = mo.stockout_prob;
        }
    }

    for (int y : m.actions) {
        Eigen::MatrixXd H(n, 5);
        for (int st = 0; st < n; ++st) {
            const auto& s = m.states[st];
            H.row(st) = profit_features(y, s.k, s.price, in.cell_pmf[st / L.n_k], in.lerner).transpose();
        }
        m.features.push_back(std::move(H));
    }

    // Distribution of next exogenous cells by current cell and sales tercile.
    std::vector<std::array<std::vector<std::pair<int, double>>, 3>> exo_next(n_exo);
    for (int e = 0; e < n_exo; ++e) {
        const auto x = L.decode_exo(e);
        for (int t = 0; t < 3; ++t) {
            auto& out = exo_next[e][t];
            for (int pc2 = 0; pc2 < L.n_price; ++pc2) {
                const double pp = in.price_matrix(x.pc, pc2);
                if (pp <= 0) continue;
                for (int qs2 = 0; qs2 < nq; ++qs2) {
                    const double pq = in.q_kernel[x.qs][t][qs2];
                    if (pq <= 0) continue;
                    for (int w2 = 0; w2 < 2; ++w2) {
                        const double pw = in.weekend_matrix(x.w, w2);
                        if (pw <= 0) continue;
                        for (int h2 = 0; h2 < 2; ++h2) {
                            const double ph = in.holiday_matrix(x.h, h2);
                            if (ph <= 0) continue;
                            out.emplace_back(L.exo(pc2, qs2, w2, h2), pp * pq * pw * ph);
                        }
                    }
                }
            }
        }
    }

    std::vector<double> row(static_cast<std::size_t>(n), 0.0);
    std::vector<int> touched;
    for (int y : m.actions) {
        std::vector<Eigen::Triplet<double>> trip;
        trip.reserve(static_cast<std::size_t>(n) * 64);
        for (int st = 0; st < n; ++st) {
            const int e = st / L.n_k;
            const int k = m.states[st].k;
            const DemandPmf& pmf = in.cell_pmf[e];
            touched.clear();
            auto add_mass = [&](int sales, double w) {
                if (w <= 0) return;
                const int t = in.tercile(sales);
                const double post = std::min<double>(k + y - sales, g.k_max);
                const double pos = post / g.k_step;
                const int lo = static_cast<int>(std::floor(pos));
                const double frac = pos - lo;
                auto deposit = [&](int kidx, double wk) {
                    for (const auto& [e2, pe] : exo_next[e][t]) {
                        const int s2 = L.state(kidx, e2);
                        if (row[s2] == 0.0) touched.push_back(s2);
                        row[s2] += wk * pe;
                    }
                };
                if (frac == 0.0) {
                    deposit(lo, w);
                } else {
                    deposit(lo, 0.5 * w);
                    deposit(std::min(lo + 1, L.n_k - 1), 0.5 * w);
                }
            };
            for (int d = 0; d < k && d <= pmf.support_max(); ++d) add_mass(d, pmf[d]);
            add_mass(k, pmf.at_least(k));
            double total = 0.0;
            for (int s2 : touched) total += row[s2];
            if (!(total > 0)) throw DomainError("build_transitions: empty transition row");
            std::sort(touched.begin(), touched.end());
            for (int s2 : touched) {
                trip.emplace_back(st, s2, row[s2] / total);
                row[s2] = 0.0;
            }
        }
        Transition F(n, n);
        F.setFromTriplets(trip.begin(), trip.end());
        F.makeCompressed();
        m.transitions.push_back(std::move(F));
    }
    return m;
}

struct ModelBuildOptions {
    Grids grids;
    int n_clusters = 2;
    std::uint64_t seed = 0;
    InfoSet info = InfoSet::Current;
    int min_kernel_count = 1;
};

/// A discretized model together with everything needed to map panel rows and
/// simulator states onto it.
struct InventoryModel {
    DiscreteModel model;
    StateLayout layout;
    Discretization disc;
    TransitionInputs inputs;
    std::vector<int> row_state;  ///< model state per panel row; -1 if the lag is unavailable

    int state_of(int k, double price, double q7, double q7_lag, bool weekend, bool holiday) const {
        const int q = disc.logq.nearest(log_trailing(q7));
        const int ql = disc.logq.nearest(log_trailing(q7_lag));
        const int qs = layout.qstate(q, ql);
        return layout.state(disc.grids.snap_k(k), layout.exo(disc.price.nearest(price), qs, weekend, holiday));
    }
};

namespace detail {

inline std::vector<double> normalized_or_empty(std::vector<double> v) {
    double s = 0.0;
    for (double x : v) s += x;
    if (s <= 0) return {};
    for (double& x : v) x /= s;
    return v;
}

}  // namespace detail

/// Estimates the empirical exogenous kernels from a panel and builds the model.
/// Demand in each exogenous cell is the mixture of the NB forecasts of the
/// panel rows falling in that cell; empty cells fall back to the NB at the
/// cluster centers.
inline InventoryModel build_inventory_model(std::span<const PanelRow> rows, const DemandParams& demand, double lerner,
                                            const ModelBuildOptions& opt = {}) {
    demand.validate();
    if (!(lerner >= 0 && lerner < 1)) throw DomainError("build_inventory_model: lerner index must lie in [0,1)");
    InventoryModel im;
    im.disc = discretize(rows, opt.grids, opt.n_clusters, opt.seed);
    const auto& d = im.disc;
    StateLayout& L = im.layout;
    L.info = opt.info;
    L.n_k = opt.grids.n_k();
    L.n_price = d.price.size();
    L.n_q = d.logq.size();
    const int nq = L.n_qstate(), n_exo = L.n_exo();
    const std::size_t n = rows.size();

    TransitionInputs& in = im.inputs;
    in.lerner = lerner;
    in.cell_price = d.price.centers;
    in.weekend_matrix = weekend_markov_matrix();

    std::vector<int> row_exo(n, -1);
    for (std::size_t i = 0; i < n; ++i) {
        if (!L.qstate_available(d.q_lag_cluster[i])) continue;
        row_exo[i] = L.exo(d.price_cluster[i], L.qstate(d.q_cluster[i], d.q_lag_cluster[i]), rows[i].weekend,
                           rows[i].holiday);
    }
    im.row_state.assign(n, -1);
    for (std::size_t i = 0; i < n; ++i)
        if (row_exo[i] >= 0) im.row_state[i] = L.state(d.k_index[i], row_exo[i]);

    // Demand mixtures per cell.
    std::vector<DemandPmf> pmf(n_exo, DemandPmf::zero());
    std::vector<int> count(n_exo, 0);
    for (std::size_t i = 0; i < n; ++i) {
        if (row_exo[i] < 0) continue;
        const auto& r = rows[i];
        const double de = demand.mean(r.price, r.trailing7, r.weekend, r.holiday);
        pmf[row_exo[i]].add_scaled(DemandPmf::negative_binomial(de, demand.alpha), 1.0);
        ++count[row_exo[i]];
    }
    int fallback_cells = 0;
    for (int e = 0; e < n_exo; ++e) {
        if (count[e] > 0) {
            pmf[e].normalize();
            continue;
        }
        const auto x = L.decode_exo(e);
        const int q = L.current_q(x.qs) >= 0 ? L.current_q(x.qs) : L.lagged_q(x.qs);
        const double q7 = std::exp(d.logq.centers[q]) - 1.0;
        pmf[e] = DemandPmf::negative_binomial(demand.mean(d.price.centers[x.pc], std::max(q7, 0.0), x.w, x.h),
                                              demand.alpha);
        ++fallback_cells;
    }
    if (fallback_cells > 0)
        log().debug("build_inventory_model: {} of {} demand cells empty; using cluster-center forecasts",
                    fallback_cells, n_exo);
    in.cell_pmf = std::move(pmf);

    // Sales terciles.
    std::vector<double> sales;
    sales.reserve(n);
    for (const auto& r : rows) sales.push_back(r.sales);
    in.sales_cuts = {quantile(sales, 1.0 / 3.0), quantile(sales, 2.0 / 3.0)};

    // Price transitions between clusters.
    in.price_matrix = Eigen::MatrixXd::Zero(L.n_price, L.n_price);
    Eigen::Matrix2d hol = Eigen::Matrix2d::Zero();
    std::vector<std::array<std::vector<double>, 3>> qcount(nq);
    std::vector<std::vector<double>> qmarg(nq, std::vector<double>(nq, 0.0));
    std::vector<double> qall(nq, 0.0);
    for (auto& a : qcount)
        for (auto& v : a) v.assign(nq, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        const int j = d.next_row[i];
        if (j < 0) continue;
        in.price_matrix(d.price_cluster[i], d.price_cluster[j]) += 1.0;
        hol(rows[i].holiday, rows[j].holiday) += 1.0;
        if (row_exo[i] < 0 || row_exo[j] < 0) continue;
        const int qs = L.qstate(d.q_cluster[i], d.q_lag_cluster[i]);
        const int qs2 = L.qstate(d.q_cluster[j], d.q_lag_cluster[j]);
        qcount[qs][in.tercile(rows[i].sales)][qs2] += 1.0;
        qmarg[qs][qs2] += 1.0;
        qall[qs2] += 1.0;
    }
    for (int a = 0; a < L.n_price; ++a) {
        const double s = in.price_matrix.row(a).sum();
        if (s > 0)
            in.price_matrix.row(a) /= s;
        else
            in.price_matrix(a, a) = 1.0;
    }
    for (int a = 0; a < 2; ++a) {
        const double s = hol.row(a).sum();
        if (s > 0)
            hol.row(a) /= s;
        else
            hol.row(a) << 1.0, 0.0;
    }
    in.holiday_matrix = hol;

    const auto uncond = detail::normalized_or_empty(qall);
    in.q_kernel.resize(nq);
    int unconditional_cells = 0;
    for (int qs = 0; qs < nq; ++qs) {
        const auto marg = detail::normalized_or_empty(qmarg[qs]);
        for (int t = 0; t < 3; ++t) {
            double cnt = 0.0;
            for (double v : qcount[qs][t]) cnt += v;
            if (cnt >= opt.min_kernel_count) {
                in.q_kernel[qs][t] = detail::normalized_or_empty(qcount[qs][t]);
            } else if (!marg.empty()) {
                in.q_kernel[qs][t] = marg;
            } else if (!uncond.empty()) {
                in.q_kernel[qs][t] = uncond;
                ++unconditional_cells;
            } else {
                in.q_kernel[qs][t].assign(nq, 0.0);
                in.q_kernel[qs][t][qs] = 1.0;
                ++unconditional_cells;
            }
        }
    }
    if (unconditional_cells > 0)
        log().warn("build_inventory_model: {} empty Q-kernel cells; using unconditional cluster frequencies",
                   unconditional_cells);

    im.model = build_transitions(opt.grids, L, in);
    return im;
}

/// Policy on an augmented (Both) layout that ignores the current Q cluster and
/// follows a policy solved on the Lagged layout.
inline CcpTable lift_lagged_policy(const StateLayout& lagged, const CcpTable& P_lagged, const StateLayout& both) {
    if (lagged.info != InfoSet::Lagged || both.info != InfoSet::Both)
        throw DomainError("lift_lagged_policy: expects Lagged -> Both layouts");
    CcpTable P(both.n_states(), P_lagged.cols());
    for (int e = 0; e < both.n_exo(); ++e) {
        const auto x = both.decode_exo(e);
        const int e_lag = lagged.exo(x.pc, both.lagged_q(x.qs), x.w, x.h);
        for (int k = 0; k < both.n_k; ++k) P.row(both.state(k, e)) = P_lagged.row(lagged.state(k, e_lag));
    }
    return P;
}

/// Policy on an augmented (Both) layout that ignores the lagged cluster.
inline CcpTable lift_current_policy(const StateLayout& current, const CcpTable& P_current, const StateLayout& both) {
    if (current.info != InfoSet::Current || both.info != InfoSet::Both)
        throw DomainError("lift_current_policy: expects Current -> Both layouts");
    CcpTable P(both.n_states(), P_current.cols());
    for (int e = 0; e < both.n_exo(); ++e) {
        const auto x = both.decode_exo(e);
        const int e_cur = current.exo(x.pc, both.current_q(x.qs), x.w, x.h);
        for (int k = 0; k < both.n_k; ++k) P.row(both.state(k, e)) = P_current.row(current.state(k, e_cur));
    }
    return P;
}

}  // namespace invdp
