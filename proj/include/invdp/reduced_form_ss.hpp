#pragma once

// Reduced-form (S,s) rules: Probit for order placement, Heckman two-step for
// the order-up-to level, threshold evaluation, shrinkage and variance
// decomposition.

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "invdp/errors.hpp"
#include "invdp/log.hpp"
#include "invdp/model_core.hpp"
#include "invdp/stats.hpp"

namespace invdp {

inline constexpr std::array<const char*, 4> kProbitNames{"const", "ln_k", "ln_de", "ln_p"};

struct ProbitFit {
    Eigen::Vector4d coef = Eigen::Vector4d::Zero();  ///< (b0, bk, bd, bp)
    Eigen::Vector4d se = Eigen::Vector4d::Zero();
    Eigen::Matrix4d cov = Eigen::Matrix4d::Zero();
    double loglik = 0.0;
    int n_obs = 0;
    int n_orders = 0;
    int iterations = 0;
    double gradient_norm = 0.0;
};

struct HeckmanFit {
    Eigen::Vector4d coef = Eigen::Vector4d::Zero();  ///< (B0, Bd, Bp, mills)
    Eigen::Vector4d se = Eigen::Vector4d::Zero();
    int n_obs = 0;
    bool ridge_used = false;
};

/// Lower rule from the Probit (beta = b * sigma_u, sigma_u = -1/bk) and upper rule from the Heckman step.
struct SsRuleParams {
    ProbitFit probit;
    double sigma_u_lower = 0.0;
    Eigen::Vector3d beta_lower = Eigen::Vector3d::Zero();  ///< (b0, bd, bp) * sigma_u
    Eigen::Vector3d beta_lower_se = Eigen::Vector3d::Zero();
    HeckmanFit heckman;
};

struct Thresholds {
    double log_s0 = 0.0;
    double log_S0 = 0.0;
};

/// Regressors for one row: (1, ln(k+1), ln d_e, ln p).
inline Eigen::Vector4d probit_regressors(const PanelRow& r, const DemandParams& demand) {
    const double de = demand.mean(r.price, r.trailing7, r.weekend, r.holiday);
    return {1.0, std::log(r.inventory + 1.0), std::log(de), std::log(r.price)};
}

namespace detail {

inline double probit_loglik(const Eigen::MatrixXd& X, const std::vector<int>& y, const Eigen::Vector4d& b,
                            Eigen::Vector4d* grad, Eigen::Matrix4d* hess) {
    double ll = 0.0;
    if (grad) grad->setZero();
    if (hess) hess->setZero();
    for (Eigen::Index i = 0; i < X.rows(); ++i) {
        const double xb = X.row(i).dot(b);
        const double s = y[i] ? 1.0 : -1.0;
        const double z = s * xb;
        ll += log_normal_cdf(z);
        const double lam = inverse_mills(z);  // phi(z)/Phi(z)
        if (grad) *grad += s * lam * X.row(i).transpose();
        if (hess) *hess -= lam * (z + lam) * X.row(i).transpose() * X.row(i);
    }
    return ll;
}

}  // namespace detail

/// Probit of P(y>0) on (1, ln(k+1), ln d_e, ln p) by Newton's method with line search.
inline ProbitFit fit_order_probit(std::span<const PanelRow> rows, const DemandParams& demand, int max_iter = 100) {
    ProbitFit fit;
    fit.n_obs = static_cast<int>(rows.size());
    Eigen::MatrixXd X(fit.n_obs, 4);
    std::vector<int> y(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        X.row(static_cast<Eigen::Index>(i)) = probit_regressors(rows[i], demand).transpose();
        y[i] = rows[i].order > 0;
        fit.n_orders += y[i];
    }
    if (fit.n_orders < 10)
        throw InsufficientDataError("fit_order_probit: " + std::to_string(fit.n_orders) + " orders; need at least 10");
    if (fit.n_orders == fit.n_obs) throw InsufficientDataError("fit_order_probit: no days without orders");

    for (int c = 1; c < 4; ++c) {
        double lo1 = INFINITY, hi1 = -INFINITY, lo0 = INFINITY, hi0 = -INFINITY;
        for (Eigen::Index i = 0; i < X.rows(); ++i) {
            const double v = X(i, c);
            if (y[i]) {
                lo1 = std::min(lo1, v);
                hi1 = std::max(hi1, v);
            } else {
                lo0 = std::min(lo0, v);
                hi0 = std::max(hi0, v);
            }
        }
        if (hi1 < lo0 || hi0 < lo1)
            throw SingularError(std::string("fit_order_probit: perfect separation on regressor ") + kProbitNames[c]);
        if (std::max(hi1, hi0) - std::min(lo1, lo0) <= 1e-12)
            throw SingularError(std::string("fit_order_probit: regressor ") + kProbitNames[c] + " has no variation");
    }

    Eigen::Vector4d b = Eigen::Vector4d::Zero();
    b(0) = normal_quantile(static_cast<double>(fit.n_orders) / fit.n_obs);
    Eigen::Vector4d g;
    Eigen::Matrix4d H;
    double ll = detail::probit_loglik(X, y, b, &g, &H);
    int it = 0;
    for (; it < max_iter; ++it) {
        if (g.cwiseAbs().maxCoeff() < 1e-9 * std::max(1.0, std::abs(ll))) break;
        Eigen::LDLT<Eigen::Matrix4d> ldlt(-H);
        if (ldlt.info() != Eigen::Success || !(ldlt.vectorD().array() > 0).all())
            throw SingularError("fit_order_probit: information matrix is singular");
        const Eigen::Vector4d step = ldlt.solve(g);
        // Decrement test: with a near-collinear design the gradient can stall above
        // the absolute tolerance while the likelihood is already flat to round-off.
        if (g.dot(step) < 1e-10) break;
        double t = 1.0;
        Eigen::Vector4d b_new;
        double ll_new = -INFINITY;
        for (int k = 0; k < 50; ++k, t *= 0.5) {
            b_new = b + t * step;
            ll_new = detail::probit_loglik(X, y, b_new, nullptr, nullptr);
            if (ll_new >= ll) break;
        }
        if (!(ll_new >= ll)) break;
        b = b_new;
        ll = detail::probit_loglik(X, y, b, &g, &H);
        if (b.cwiseAbs().maxCoeff() > 1e6) {
            Eigen::Index worst;
            b.tail(3).cwiseAbs().maxCoeff(&worst);
            throw SingularError(std::string("fit_order_probit: coefficients diverge (quasi-separation on ") +
                                kProbitNames[worst + 1] + ")");
        }
    }
    if (it == max_iter)
        throw ConvergenceError("fit_order_probit: Newton did not converge", g.cwiseAbs().maxCoeff(), it);
    fit.coef = b;
    fit.loglik = ll;
    fit.iterations = it;
    fit.gradient_norm = g.cwiseAbs().maxCoeff();
    Eigen::FullPivLU<Eigen::Matrix4d> lu(-H);
    if (!lu.isInvertible()) throw SingularError("fit_order_probit: information matrix is singular");
    fit.cov = lu.inverse();
    fit.se = fit.cov.diagonal().cwiseMax(0.0).cwiseSqrt();
    return fit;
}

/// Probit log-likelihood and gradient, exposed for diagnostics.
inline double probit_loglik(std::span<const PanelRow> rows, const DemandParams& demand, const Eigen::Vector4d& b,
                            Eigen::Vector4d* grad = nullptr) {
    Eigen::MatrixXd X(static_cast<Eigen::Index>(rows.size()), 4);
    std::vector<int> y(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        X.row(static_cast<Eigen::Index>(i)) = probit_regressors(rows[i], demand).transpose();
        y[i] = rows[i].order > 0;
    }
    return detail::probit_loglik(X, y, b, grad, nullptr);
}

/// Second step: OLS of ln(k+y) on (1, ln d_e, ln p, inverse Mills ratio) over
/// order days. ln k is excluded from the outcome equation. HC1 standard errors
/// ignore first-stage noise.
inline HeckmanFit fit_upper_heckman(std::span<const PanelRow> rows, const DemandParams& demand,
                                    const ProbitFit& probit) {
    std::vector<Eigen::Vector4d> xs;
    std::vector<double> ys;
    for (const auto& r : rows) {
        if (r.order <= 0) continue;
        const Eigen::Vector4d x = probit_regressors(r, demand);
        xs.emplace_back(1.0, x(2), x(3), inverse_mills(x.dot(probit.coef)));
        ys.push_back(std::log(static_cast<double>(r.inventory + r.order)));
    }
    if (xs.size() < 10)
        throw InsufficientDataError("fit_upper_heckman: " + std::to_string(xs.size()) + " order days; need at least 10");
    const auto n = static_cast<Eigen::Index>(xs.size());
    Eigen::MatrixXd X(n, 4);
    Eigen::VectorXd yv(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        X.row(i) = xs[i].transpose();
        yv(i) = ys[i];
    }
    // Conditioning of the standardized design.
    Eigen::MatrixXd Z = X;
    for (int c = 1; c < 4; ++c) {
        const double m = Z.col(c).mean();
        const double sd = std::sqrt((Z.col(c).array() - m).square().mean());
        Z.col(c) = (Z.col(c).array() - m) / (sd > 0 ? sd : 1.0);
    }
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(Z);
    const double cond = svd.singularValues()(0) / std::max(svd.singularValues()(3), 1e-300);
    HeckmanFit fit;
    fit.n_obs = static_cast<int>(n);
    double ridge = 0.0;
    if (cond > 1e6) {
        log().warn("fit_upper_heckman: Mills ratio nearly collinear with regressors (condition {:.3g}); ridge 1e-8",
                   cond);
        ridge = 1e-8;
        fit.ridge_used = true;
    }
    const auto res = ols(X, yv, {"const", "ln_de", "ln_p", "mills"}, CovarianceType::HC1, {}, ridge);
    if (res.kept_columns.size() != 4) throw SingularError("fit_upper_heckman: aliased regressors in outcome equation");
    fit.coef = res.coef;
    fit.se = res.se;
    return fit;
}

/// Naive OLS of ln(k+y) on (1, ln d_e, ln p) over order days (no selection term).
inline Eigen::Vector3d fit_upper_naive(std::span<const PanelRow> rows, const DemandParams& demand) {
    std::vector<Eigen::Vector3d> xs;
    std::vector<double> ys;
    for (const auto& r : rows) {
        if (r.order <= 0) continue;
        const Eigen::Vector4d x = probit_regressors(r, demand);
        xs.emplace_back(1.0, x(2), x(3));
        ys.push_back(std::log(static_cast<double>(r.inventory + r.order)));
    }
    if (xs.size() < 10) throw InsufficientDataError("fit_upper_naive: fewer than 10 order days");
    Eigen::MatrixXd X(static_cast<Eigen::Index>(xs.size()), 3);
    Eigen::VectorXd y(X.rows());
    for (Eigen::Index i = 0; i < X.rows(); ++i) {
        X.row(i) = xs[i].transpose();
        y(i) = ys[i];
    }
    return ols(X, y, {"const", "ln_de", "ln_p"}, CovarianceType::Classical).coef;
}

inline SsRuleParams fit_ss_rule(std::span<const PanelRow> rows, const DemandParams& demand) {
    SsRuleParams p;
    p.probit = fit_order_probit(rows, demand);
    const double bk = p.probit.coef(1);
    if (!(bk < 0)) throw DomainError("fit_ss_rule: ln k coefficient is not negative; sigma_u is not identified");
    p.sigma_u_lower = -1.0 / bk;
    const Eigen::Vector3d b(p.probit.coef(0), p.probit.coef(2), p.probit.coef(3));
    p.beta_lower = b * p.sigma_u_lower;
    // Delta method for beta_j = -b_j / bk.
    const int idx[3] = {0, 2, 3};
    for (int j = 0; j < 3; ++j) {
        Eigen::Vector4d grad = Eigen::Vector4d::Zero();
        grad(idx[j]) = -1.0 / bk;
        grad(1) = b(j) / (bk * bk);
        p.beta_lower_se(j) = std::sqrt(std::max(0.0, grad.dot(p.probit.cov * grad)));
    }
    p.heckman = fit_upper_heckman(rows, demand, p.probit);
    return p;
}

inline Thresholds thresholds_at(const SsRuleParams& p, double ln_de_mean, double ln_p_mean) {
    Thresholds t;
    t.log_s0 = p.beta_lower(0) + p.beta_lower(1) * ln_de_mean + p.beta_lower(2) * ln_p_mean;
    t.log_S0 = p.heckman.coef(0) + p.heckman.coef(1) * ln_de_mean + p.heckman.coef(2) * ln_p_mean;
    return t;
}

// ---------------------------------------------------------------------------
// Cross-unit summaries.

/// gamma*_i = mean + sqrt(max(0, 1 - se_i^2 / Var)) (gamma_i - mean), Var the
/// population variance of the estimates.
inline std::vector<double> shrink(std::span<const double> estimates, std::span<const double> ses) {
    if (estimates.size() != ses.size()) throw DomainError("shrink: estimates and ses differ in length");
    if (estimates.empty()) return {};
    const double m = mean(estimates);
    const double v = population_variance(estimates);
    if (!(v > 0)) throw DomainError("shrink: estimates have zero variance");
    std::vector<double> out(estimates.size());
    for (std::size_t i = 0; i < estimates.size(); ++i) {
        const double w = std::sqrt(std::max(0.0, 1.0 - ses[i] * ses[i] / v));
        out[i] = m + w * (estimates[i] - m);
    }
    return out;
}

struct UnitEstimate {
    int store_id = 0;
    int product_id = 0;
    double value = 0.0;
};

struct VarianceDecomposition {
    double between = 0.0;
    double within = 0.0;
    double total = 0.0;
};

/// between = variance of store means, within = mean within-store variance,
/// both weighted by store size so that between + within = total (population
/// variances).
inline VarianceDecomposition variance_decomposition(std::span<const UnitEstimate> est) {
    std::map<int, std::vector<double>> by_store;
    std::set<int> products;
    for (const auto& e : est) {
        by_store[e.store_id].push_back(e.value);
        products.insert(e.product_id);
    }
    if (by_store.size() < 2) throw DomainError("variance_decomposition: need at least 2 stores");
    if (products.size() < 2) throw DomainError("variance_decomposition: need at least 2 products");
    std::vector<double> all;
    for (const auto& e : est) all.push_back(e.value);
    const double grand = mean(all);
    const double N = static_cast<double>(all.size());
    VarianceDecomposition d;
    for (const auto& [store, vals] : by_store) {
        const double w = vals.size() / N;
        const double m = mean(vals);
        d.between += w * (m - grand) * (m - grand);
        d.within += w * population_variance(vals);
    }
    d.total = population_variance(all);
    return d;
}

/// Share of units whose estimate lies outside Bonferroni-corrected 95% bands
/// around the cross-unit median.
inline double fraction_outside_homogeneity_band(std::span<const double> estimates, std::span<const double> ses,
                                                double level = 0.05) {
    if (estimates.size() != ses.size() || estimates.empty())
        throw DomainError("homogeneity band: estimates and ses must be nonempty and equal length");
    const double med = median(std::vector<double>(estimates.begin(), estimates.end()));
    const double z = normal_quantile(1.0 - level / (2.0 * estimates.size()));
    int outside = 0;
    for (std::size_t i = 0; i < estimates.size(); ++i)
        if (std::abs(estimates[i] - med) > z * ses[i]) ++outside;
    return static_cast<double>(outside) / estimates.size();
}

}  // namespace invdp
