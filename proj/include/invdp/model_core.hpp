#pragma once

// Domain types, profit features and Negative Binomial demand primitives.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "invdp/errors.hpp"

namespace invdp {

using Vector5 = Eigen::Matrix<double, 5, 1>;

/// One-day discount factor implied by an annual factor of 0.95.
inline double daily_discount_factor() { return std::pow(0.95, 1.0 / 365.0); }

/// Perceived cost parameters of one store-product, in currency units.
struct StructuralParams {
    double gamma_h = 0.0;    ///< holding cost per unit-day
    double gamma_z = 0.0;    ///< stockout term (enters profit with a plus sign; may be negative)
    double gamma_f = 0.0;    ///< fixed cost per order
    double gamma_c = 0.0;    ///< cost per unit ordered
    double sigma_eps = 1.0;  ///< scale of the extreme-value ordering shocks
    double beta = daily_discount_factor();

    void validate() const {
        auto bad = [](const char* name, const std::string& why) {
            throw DomainError(std::string("StructuralParams.") + name + ": " + why);
        };
        if (!std::isfinite(gamma_h) || gamma_h < 0) bad("gamma_h", "must be finite and >= 0");
        if (!std::isfinite(gamma_z)) bad("gamma_z", "must be finite");
        if (!std::isfinite(gamma_f) || gamma_f < 0) bad("gamma_f", "must be finite and >= 0");
        if (!std::isfinite(gamma_c) || gamma_c < 0) bad("gamma_c", "must be finite and >= 0");
        if (!std::isfinite(sigma_eps) || sigma_eps <= 0) bad("sigma_eps", "must be > 0");
        if (!(beta > 0 && beta < 1)) bad("beta", "must lie in (0,1)");
    }

    /// (1, gamma_h, gamma_z, gamma_f, gamma_c): dollar weights on the feature vector.
    Vector5 cost_weights() const { return Vector5(1.0, gamma_h, gamma_z, gamma_f, gamma_c); }

    /// Weights divided by sigma_eps; the payoff index used by the solver.
    Vector5 scaled() const { return cost_weights() / sigma_eps; }

    /// Inverse of scaled(): element 0 is 1/sigma_eps.
    static StructuralParams from_scaled(const Vector5& theta, double beta) {
        if (!(theta(0) > 0)) throw DomainError("from_scaled: first element (1/sigma) must be positive");
        StructuralParams p;
        p.sigma_eps = 1.0 / theta(0);
        p.gamma_h = theta(1) / theta(0);
        p.gamma_z = theta(2) / theta(0);
        p.gamma_f = theta(3) / theta(0);
        p.gamma_c = theta(4) / theta(0);
        p.beta = beta;
        return p;
    }
};

/// Coefficients of the log-linear sales forecast and NB over-dispersion.
/// log d_e = eta_weekend*weekend + eta_holiday*holiday + eta_intercept
///           + eta_p*log(p) + eta_q*log(Q7 + 1).
struct DemandParams {
    double eta_weekend = 0.0;
    double eta_holiday = 0.0;
    double eta_intercept = 0.0;
    double eta_p = 0.0;
    double eta_q = 0.0;
    double alpha = 0.0;

    void validate() const {
        for (double v : {eta_weekend, eta_holiday, eta_intercept, eta_p, eta_q, alpha})
            if (!std::isfinite(v)) throw DomainError("DemandParams: coefficients must be finite");
        if (alpha < 0) throw DomainError("DemandParams.alpha must be >= 0");
    }

    double log_mean(double price, double trailing7, bool weekend, bool holiday) const {
        if (!(price > 0)) throw DomainError("DemandParams: price must be > 0");
        return eta_weekend * weekend + eta_holiday * holiday + eta_intercept + eta_p * std::log(price) +
               eta_q * std::log(trailing7 + 1.0);
    }
    double mean(double price, double trailing7, bool weekend, bool holiday) const {
        return std::exp(log_mean(price, trailing7, weekend, holiday));
    }
};

/// One store-product-day observation.
struct PanelRow {
    int store_id = 0;
    int product_id = 0;
    int day = 0;
    int inventory = 0;              ///< k_t, stock at the start of the day
    int order = 0;                  ///< y_t
    std::optional<int> demand;      ///< d_t, simulated panels only
    int sales = 0;                  ///< q_t = min(d_t, k_t)
    double price = 0.0;
    double trailing7 = 0.0;         ///< mean daily sales over t-7..t-1
    bool weekend = false;
    bool holiday = false;

    /// True stockout when demand is known; otherwise the censoring flag sales == k.
    bool stockout() const { return demand ? *demand > inventory : sales >= inventory; }
};

/// Constant retail markup and its Lerner index.
struct MarkupClass {
    double markup = 0.0;
    double lerner = 0.0;

    static MarkupClass from_markup(double tau);
};

inline double lerner_index(double markup) {
    if (!(markup >= 0) || !std::isfinite(markup)) throw DomainError("lerner_index: markup must be >= 0");
    return markup / (1.0 + markup);
}

inline MarkupClass MarkupClass::from_markup(double tau) { return {tau, lerner_index(tau)}; }

// ---------------------------------------------------------------------------
// Negative Binomial (NB2): mean mu, variance mu (1 + alpha mu); alpha = 0 is Poisson.

inline void check_nb_args(double mean, double alpha) {
    if (!(mean > 0) || !std::isfinite(mean)) throw DomainError("negative binomial: mean must be > 0");
    if (!(alpha >= 0) || !std::isfinite(alpha)) throw DomainError("negative binomial: alpha must be >= 0");
}

/// log of the NB2 pmf. Written with log1p sums so it is stable as alpha -> 0.
inline double negbin_log_pmf(int d, double mean, double alpha) {
    check_nb_args(mean, alpha);
    if (d < 0) throw DomainError("negbin_pmf: d must be >= 0");
    const double z = alpha * mean;
    double acc = d * std::log(mean) - std::lgamma(d + 1.0);
    if (alpha == 0.0) return acc - mean;
    if (d < 2000) {
        for (int j = 1; j < d; ++j) acc += std::log1p(alpha * j);
    } else {
        const double r = 1.0 / alpha;
        acc += std::lgamma(d + r) - std::lgamma(r) - d * std::log(r);
    }
    acc -= d * std::log1p(z);
    acc -= mean * (std::log1p(z) / z);
    return acc;
}

inline double negbin_pmf(int d, double mean, double alpha) { return std::exp(negbin_log_pmf(d, mean, alpha)); }

/// Probability mass function on {0, ..., D}; mass beyond D is dropped.
class DemandPmf {
public:
    static constexpr double kTailMass = 1e-12;

    DemandPmf() : p_{1.0} {}
    explicit DemandPmf(std::vector<double> probs) : p_(std::move(probs)) {
        if (p_.empty()) throw DomainError("DemandPmf: empty support");
        nominal_mass_ = total();
    }

    /// NB2 pmf truncated at the smallest D with cumulative mass >= 1 - 1e-12,
    /// capped at 10 (mean + 10).
    static DemandPmf negative_binomial(double mean, double alpha) {
        check_nb_args(mean, alpha);
        const int cap = static_cast<int>(std::ceil(10.0 * (mean + 10.0)));
        std::vector<double> p;
        p.reserve(64);
        double logp = negbin_log_pmf(0, mean, alpha);
        const double log_ratio_base = std::log(mean) - std::log1p(alpha * mean);
        double cum = 0.0;
        for (int d = 0; d <= cap; ++d) {
            const double v = std::exp(logp);
            p.push_back(v);
            cum += v;
            if (cum >= 1.0 - kTailMass) break;
            logp += std::log1p(alpha * d) - std::log(d + 1.0) + log_ratio_base;
        }
        DemandPmf out(std::move(p));
        out.nominal_mass_ = 1.0;
        return out;
    }

    static DemandPmf point_mass(int d) {
        if (d < 0) throw DomainError("DemandPmf::point_mass: d must be >= 0");
        std::vector<double> p(static_cast<std::size_t>(d) + 1, 0.0);
        p.back() = 1.0;
        return DemandPmf(std::move(p));
    }

    /// Accumulate w * other into this pmf (used to build mixtures).
    void add_scaled(const DemandPmf& other, double w) {
        if (other.p_.size() > p_.size()) p_.resize(other.p_.size(), 0.0);
        for (std::size_t d = 0; d < other.p_.size(); ++d) p_[d] += w * other.p_[d];
        nominal_mass_ += w * other.nominal_mass_;
    }

    void normalize() {
        double s = 0.0;
        for (double v : p_) s += v;
        if (!(s > 0)) throw DomainError("DemandPmf: zero total mass");
        for (double& v : p_) v /= s;
        nominal_mass_ /= s;
    }

    static DemandPmf zero() { return DemandPmf(std::vector<double>{0.0}); }

    int support_max() const { return static_cast<int>(p_.size()) - 1; }
    double operator[](int d) const { return d >= 0 && d <= support_max() ? p_[d] : 0.0; }
    std::span<const double> probs() const { return p_; }

    double total() const {
        double s = 0.0;
        for (double v : p_) s += v;
        return s;
    }
    double mean() const {
        double s = 0.0;
        for (std::size_t d = 0; d < p_.size(); ++d) s += d * p_[d];
        return s;
    }
    /// E[min(d, k)] = sum_{d<k} d p(d) + k P(d >= k), with P(d >= k) taken
    /// against the nominal mass so the truncated tail still counts.
    double expected_min(int k) const {
        double below = 0.0, head = 0.0;
        for (int d = 0; d < k && d <= support_max(); ++d) {
            below += d * p_[d];
            head += p_[d];
        }
        return below + k * std::max(0.0, nominal_mass_ - head);
    }
    /// P(d >= k).
    double at_least(int k) const { return k <= 0 ? nominal_mass_ : tail(k - 1); }
    /// P(d > k) = nominal mass - P(d <= k).
    double tail(int k) const {
        double head = 0.0;
        for (int d = 0; d <= k && d <= support_max(); ++d) head += p_[d];
        return std::max(0.0, nominal_mass_ - head);
    }

private:
    std::vector<double> p_;
    double nominal_mass_ = 1.0;  ///< 1 for closed-form tables, the stored sum otherwise
};

struct SalesMoments {
    double expected_sales = 0.0;  ///< E[min(d,k)]
    double stockout_prob = 0.0;   ///< P(d > k)
};

inline SalesMoments expected_min_and_stockout(int k, const DemandPmf& pmf) {
    if (k < 0) throw DomainError("expected_min_and_stockout: k must be >= 0");
    return {pmf.expected_min(k), pmf.tail(k)};
}

inline SalesMoments expected_min_and_stockout(int k, double mean, double alpha) {
    return expected_min_and_stockout(k, DemandPmf::negative_binomial(mean, alpha));
}

/// Feature row h(y, x) = (LI p E[min(d,k)], -k, P(d>k), -1{y>0}, -y). Its inner
/// product with StructuralParams::scaled() is the expected flow profit over sigma.
inline Vector5 profit_features(int y, int k, double price, const DemandPmf& pmf, double lerner) {
    if (y < 0) throw DomainError("profit_features: order must be >= 0");
    const auto m = expected_min_and_stockout(k, pmf);
    return Vector5(lerner * price * m.expected_sales, -static_cast<double>(k), m.stockout_prob,
                   y > 0 ? -1.0 : 0.0, -static_cast<double>(y));
}

inline Vector5 profit_features(int y, int k, double price, double mean, double alpha, double lerner) {
    return profit_features(y, k, price, DemandPmf::negative_binomial(mean, alpha), lerner);
}

/// Expected flow profit in currency (excluding the ordering shock).
inline double flow_profit(const Vector5& features, const StructuralParams& params) {
    return features.dot(params.cost_weights());
}

}  // namespace invdp
