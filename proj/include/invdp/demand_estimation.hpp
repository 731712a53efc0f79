#pragma once

// Maximum-likelihood Negative Binomial (NB2) sales forecasting.

#include <Eigen/Dense>

#include <array>
#include <cmath>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "invdp/errors.hpp"
#include "invdp/model_core.hpp"
#include "invdp/optimize.hpp"

namespace invdp {

inline constexpr double kAlphaFloor = 1e-8;
inline constexpr std::array<const char*, 6> kDemandParamNames{"eta_weekend", "eta_holiday", "eta_intercept",
                                                              "eta_p",       "eta_q",       "alpha"};

struct DemandFit {
    DemandParams params;
    std::array<double, 6> se{};  ///< same order as kDemandParamNames
    double loglik = 0.0;
    double loglik_null = 0.0;
    double pseudo_r2 = 0.0;
    int n_obs = 0;
    int iterations = 0;
    double gradient_norm = 0.0;
};

struct Forecast {
    double mean = 0.0;
    double variance = 0.0;
};

inline Forecast forecast(const DemandParams& p, double price, double trailing7, bool weekend, bool holiday) {
    const double de = p.mean(price, trailing7, weekend, holiday);
    return {de, de * (1.0 + p.alpha * de)};
}

inline Forecast forecast(const DemandFit& fit, double price, double trailing7, bool weekend, bool holiday) {
    return forecast(fit.params, price, trailing7, weekend, holiday);
}

/// NB2 log-likelihood of counts given linear predictors. theta = (eta..., a)
/// with alpha = 1e-8 + exp(a).
class NegBinLikelihood {
public:
    NegBinLikelihood(Eigen::MatrixXd X, std::vector<int> counts) : X_(std::move(X)), q_(std::move(counts)) {
        if (X_.rows() != static_cast<Eigen::Index>(q_.size())) throw DomainError("NegBinLikelihood: size mismatch");
    }

    Eigen::Index n_params() const { return X_.cols() + 1; }
    Eigen::Index n_obs() const { return X_.rows(); }

    /// Log-likelihood and its gradient in theta.
    double value(const Eigen::VectorXd& theta, Eigen::VectorXd* grad = nullptr) const {
        const Eigen::Index p = X_.cols();
        const double ea = std::exp(theta(p));
        const double alpha = kAlphaFloor + ea;
        const Eigen::VectorXd eta = X_ * theta.head(p);
        double ll = 0.0, dalpha = 0.0;
        Eigen::VectorXd dmu = Eigen::VectorXd::Zero(n_obs());
        for (Eigen::Index i = 0; i < n_obs(); ++i) {
            const int q = q_[i];
            const double mu = std::exp(eta(i));
            const double z = alpha * mu;
            const double l1 = std::log1p(z);
            double sum_log = 0.0, sum_frac = 0.0;
            for (int j = 1; j < q; ++j) {
                sum_log += std::log1p(alpha * j);
                sum_frac += j / (1.0 + alpha * j);
            }
            ll += sum_log + q * eta(i) - std::lgamma(q + 1.0) - q * l1 - mu * (l1 / z);
            if (grad) {
                dmu(i) = (q - mu) / (1.0 + z);
                // log1p(z)/alpha^2 - mu/(alpha(1+z)) = mu^2 [log1p(z) - z/(1+z)] / z^2
                const double tail = z < 1e-3 ? mu * mu * (0.5 - 2.0 * z / 3.0 + 0.75 * z * z - 0.8 * z * z * z)
                                             : mu * mu * (l1 - z / (1.0 + z)) / (z * z);
                dalpha += sum_frac - q * mu / (1.0 + z) + tail;
            }
        }
        if (grad) {
            grad->resize(n_params());
            grad->head(p) = X_.transpose() * dmu;
            (*grad)(p) = dalpha * ea;
        }
        return ll;
    }

private:
    Eigen::MatrixXd X_;
    std::vector<int> q_;
};

/// Design matrix columns: weekend, holiday, intercept, ln p, ln(Q7+1).
inline Eigen::MatrixXd demand_design(std::span<const PanelRow> rows) {
    Eigen::MatrixXd X(static_cast<Eigen::Index>(rows.size()), 5);
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto& r = rows[i];
        if (!(r.price > 0)) throw DomainError("fit_negbin: price must be > 0");
        X.row(static_cast<Eigen::Index>(i)) << double(r.weekend), double(r.holiday), 1.0, std::log(r.price),
            std::log(r.trailing7 + 1.0);
    }
    return X;
}

/// Rows with positive opening stock (sales are censored at k = 0).
inline std::vector<PanelRow> demand_sample(std::span<const PanelRow> rows) {
    std::vector<PanelRow> out;
    for (const auto& r : rows)
        if (r.inventory > 0) out.push_back(r);
    return out;
}

namespace detail {

inline OptimizerResult maximize_negbin(const NegBinLikelihood& lik, Eigen::VectorXd theta0,
                                       const OptimizerOptions& opt) {
    const double n = static_cast<double>(lik.n_obs());
    auto objective = [&](const Eigen::VectorXd& th, Eigen::VectorXd& g) {
        Eigen::VectorXd gl;
        const double v = lik.value(th, &gl);
        g = -gl / n;
        return -v / n;
    };
    return bfgs_minimize(objective, std::move(theta0), opt);
}

}  // namespace detail

/// MLE of the NB2 forecasting equation on rows with k > 0.
inline DemandFit fit_negbin(std::span<const PanelRow> all_rows, const OptimizerOptions& opt = {}) {
    const auto rows = demand_sample(all_rows);
    if (rows.size() < 50)
        throw InsufficientDataError("fit_negbin: " + std::to_string(rows.size()) + " usable rows; need at least 50");
    const Eigen::MatrixXd X = demand_design(rows);
    for (int c : {0, 1, 3, 4}) {
        const double lo = X.col(c).minCoeff(), hi = X.col(c).maxCoeff();
        if (hi - lo <= 1e-12 * std::max(1.0, std::abs(hi)))
            throw SingularError(std::string("fit_negbin: regressor ") +
                                (c == 0 ? "weekend" : c == 1 ? "holiday" : c == 3 ? "ln p" : "ln(Q7+1)") +
                                " has no variation; information matrix is singular");
    }
    std::vector<int> q;
    double qbar = 0.0;
    for (const auto& r : rows) {
        q.push_back(r.sales);
        qbar += r.sales;
    }
    qbar /= static_cast<double>(rows.size());
    if (qbar <= 0) throw SingularError("fit_negbin: all sales are zero");

    // Intercept-only model first; it seeds the full fit.
    NegBinLikelihood null_lik(Eigen::MatrixXd::Ones(static_cast<Eigen::Index>(rows.size()), 1), q);
    Eigen::VectorXd th0(2);
    th0 << std::log(qbar), std::log(0.1);
    const auto null_fit = detail::maximize_negbin(null_lik, th0, opt);

    NegBinLikelihood lik(X, q);
    Eigen::VectorXd theta = Eigen::VectorXd::Zero(6);
    theta(2) = null_fit.x(0);
    theta(5) = null_fit.x(1);
    const auto res = detail::maximize_negbin(lik, theta, opt);
    if (!res.converged)
        throw ConvergenceError("fit_negbin: optimizer did not converge (" + res.message + ", gradient norm " +
                                   std::to_string(res.gradient.cwiseAbs().maxCoeff()) + ")",
                               res.gradient.cwiseAbs().maxCoeff(), res.iterations);

    DemandFit fit;
    const Eigen::VectorXd& t = res.x;
    fit.params = DemandParams{t(0), t(1), t(2), t(3), t(4), kAlphaFloor + std::exp(t(5))};
    fit.loglik = lik.value(t);
    fit.loglik_null = null_lik.value(null_fit.x);
    fit.pseudo_r2 = 1.0 - fit.loglik / fit.loglik_null;
    fit.n_obs = static_cast<int>(rows.size());
    fit.iterations = res.iterations;
    fit.gradient_norm = res.gradient.cwiseAbs().maxCoeff();

    auto neg_grad = [&](const Eigen::VectorXd& th) {
        Eigen::VectorXd g;
        lik.value(th, &g);
        return Eigen::VectorXd(-g);
    };
    if (std::exp(t(5)) > 1e-6) {
        const Eigen::MatrixXd info = numerical_hessian(neg_grad, t);
        Eigen::FullPivLU<Eigen::MatrixXd> lu(info);
        if (!lu.isInvertible() || lu.rcond() < 1e-14)
            throw SingularError("fit_negbin: observed information matrix is singular");
        const Eigen::MatrixXd cov = lu.inverse();
        for (int i = 0; i < 5; ++i) fit.se[i] = std::sqrt(std::max(0.0, cov(i, i)));
        fit.se[5] = std::exp(t(5)) * std::sqrt(std::max(0.0, cov(5, 5)));
    } else {
        // alpha at its floor: log alpha is not locally identified, so the mean
        // block is inverted alone and alpha's information is taken in levels.
        const Eigen::MatrixXd info = numerical_hessian(neg_grad, t).topLeftCorner(5, 5);
        Eigen::FullPivLU<Eigen::MatrixXd> lu(info);
        if (!lu.isInvertible() || lu.rcond() < 1e-14)
            throw SingularError("fit_negbin: observed information matrix is singular");
        const Eigen::MatrixXd cov = lu.inverse();
        for (int i = 0; i < 5; ++i) fit.se[i] = std::sqrt(std::max(0.0, cov(i, i)));
        auto grad_alpha = [&](double alpha) {
            Eigen::VectorXd th = t, g;
            th(5) = std::log(alpha);
            lik.value(th, &g);
            return g(5) / alpha;
        };
        const double h = 1e-4;
        const double i_aa = -(grad_alpha(2 * h) - grad_alpha(h)) / h;
        fit.se[5] = i_aa > 0 ? 1.0 / std::sqrt(i_aa) : std::numeric_limits<double>::infinity();
    }
    return fit;
}

}  // namespace invdp
