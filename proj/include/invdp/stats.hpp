#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "invdp/errors.hpp"

namespace invdp {

inline constexpr double kEulerGamma = 0.57721566490153286;

inline double normal_pdf(double z) { return std::exp(-0.5 * z * z) / std::sqrt(2.0 * M_PI); }

inline double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

/// log Phi(z), accurate far into the lower tail.
inline double log_normal_cdf(double z) {
    if (z > -30.0) return std::log(normal_cdf(z));
    // Asymptotic expansion of the Mills ratio.
    const double z2 = z * z;
    return -0.5 * z2 - std::log(-z) - 0.5 * std::log(2.0 * M_PI) +
           std::log(1.0 - 1.0 / z2 + 3.0 / (z2 * z2));
}

/// Inverse Mills ratio phi(z) / Phi(z).
inline double inverse_mills(double z) {
    if (z > -30.0) return normal_pdf(z) / normal_cdf(z);
    const double z2 = z * z;
    return -z / (1.0 - 1.0 / z2 + 3.0 / (z2 * z2));
}

/// Upper quantile of the standard normal, by bisection on normal_cdf.
inline double normal_quantile(double p) {
    if (!(p > 0.0 && p < 1.0)) throw DomainError("normal_quantile: p must be in (0,1)");
    double lo = -40.0, hi = 40.0;
    for (int i = 0; i < 200; ++i) {
        const double mid = 0.5 * (lo + hi);
        (normal_cdf(mid) < p ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
}

inline double mean(std::span<const double> x) {
    if (x.empty()) throw DomainError("mean of empty sample");
    return std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
}

/// Population variance (divides by n).
inline double population_variance(std::span<const double> x) {
    const double m = mean(x);
    double s = 0.0;
    for (double v : x) s += (v - m) * (v - m);
    return s / static_cast<double>(x.size());
}

inline double sample_variance(std::span<const double> x) {
    if (x.size() < 2) throw DomainError("sample variance needs at least two values");
    return population_variance(x) * static_cast<double>(x.size()) / static_cast<double>(x.size() - 1);
}

/// Linear-interpolation quantile on sorted data (type 7).
inline double quantile(std::vector<double> x, double q) {
    if (x.empty()) throw DomainError("quantile of empty sample");
    std::sort(x.begin(), x.end());
    const double h = (static_cast<double>(x.size()) - 1.0) * q;
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const auto hi = std::min(lo + 1, x.size() - 1);
    return x[lo] + (h - static_cast<double>(lo)) * (x[hi] - x[lo]);
}

inline double median(std::vector<double> x) { return quantile(std::move(x), 0.5); }

/// Spearman rank correlation (average ranks for ties).
inline double rank_correlation(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size() || a.size() < 2) throw DomainError("rank_correlation: size mismatch");
    auto ranks = [](std::span<const double> v) {
        std::vector<std::size_t> idx(v.size());
        std::iota(idx.begin(), idx.end(), 0);
        std::sort(idx.begin(), idx.end(), [&](auto i, auto j) { return v[i] < v[j]; });
        std::vector<double> r(v.size());
        for (std::size_t i = 0; i < idx.size();) {
            std::size_t j = i;
            while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
            for (std::size_t k = i; k <= j; ++k) r[idx[k]] = 0.5 * (i + j) + 1.0;
            i = j + 1;
        }
        return r;
    };
    const auto ra = ranks(a), rb = ranks(b);
    const double ma = mean(ra), mb = mean(rb);
    double sab = 0, saa = 0, sbb = 0;
    for (std::size_t i = 0; i < ra.size(); ++i) {
        sab += (ra[i] - ma) * (rb[i] - mb);
        saa += (ra[i] - ma) * (ra[i] - ma);
        sbb += (rb[i] - mb) * (rb[i] - mb);
    }
    if (saa == 0 || sbb == 0) return 0.0;
    return sab / std::sqrt(saa * sbb);
}

// ---------------------------------------------------------------------------
// Least squares

enum class CovarianceType { Classical, HC1, Cluster };

struct OlsResult {
    std::vector<std::string> names;    ///< retained regressors, original order
    std::vector<std::string> dropped;  ///< aliased regressors removed
    std::vector<int> kept_columns;
    Eigen::VectorXd coef;
    Eigen::VectorXd se;
    Eigen::MatrixXd cov;
    Eigen::VectorXd fitted;
    Eigen::VectorXd residuals;
    double r2 = 0.0;
    int n = 0;

    double coefficient(const std::string& name) const {
        for (std::size_t i = 0; i < names.size(); ++i)
            if (names[i] == name) return coef(static_cast<Eigen::Index>(i));
        throw DomainError("no regressor named " + name);
    }
    double std_error(const std::string& name) const {
        for (std::size_t i = 0; i < names.size(); ++i)
            if (names[i] == name) return se(static_cast<Eigen::Index>(i));
        throw DomainError("no regressor named " + name);
    }
};

/// OLS with aliased columns dropped (column-pivoting QR rank test).
/// R^2 is centered, so the design is expected to contain an intercept.
inline OlsResult ols(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                     std::vector<std::string> names,
                     CovarianceType cov_type = CovarianceType::HC1,
                     std::span<const int> clusters = {}, double ridge = 0.0) {
    const auto n = X.rows();
    if (y.size() != n) throw DomainError("ols: X and y row mismatch");
    if (names.size() != static_cast<std::size_t>(X.cols())) throw DomainError("ols: names size mismatch");
    if (cov_type == CovarianceType::Cluster && clusters.size() != static_cast<std::size_t>(n))
        throw DomainError("ols: cluster ids required for cluster-robust covariance");

    OlsResult out;
    out.n = static_cast<int>(n);

    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(X);
    qr.setThreshold(1e-10);
    const auto rank = qr.rank();
    std::vector<int> keep;
    for (Eigen::Index i = 0; i < rank; ++i) keep.push_back(qr.colsPermutation().indices()(i));
    std::sort(keep.begin(), keep.end());
    for (int j = 0; j < X.cols(); ++j) {
        if (std::find(keep.begin(), keep.end(), j) == keep.end()) out.dropped.push_back(names[j]);
    }
    out.kept_columns = keep;
    const auto k = static_cast<Eigen::Index>(keep.size());
    if (n <= k) throw InsufficientDataError("ols: fewer observations than regressors");

    Eigen::MatrixXd Xk(n, k);
    for (Eigen::Index j = 0; j < k; ++j) {
        Xk.col(j) = X.col(keep[j]);
        out.names.push_back(names[keep[j]]);
    }
    Eigen::MatrixXd xtx = Xk.transpose() * Xk;
    if (ridge > 0) xtx.diagonal().array() += ridge;
    Eigen::LDLT<Eigen::MatrixXd> ldlt(xtx);
    if (ldlt.info() != Eigen::Success) throw SingularError("ols: singular normal equations");
    out.coef = ldlt.solve(Xk.transpose() * y);
    out.fitted = Xk * out.coef;
    out.residuals = y - out.fitted;

    const Eigen::MatrixXd bread = ldlt.solve(Eigen::MatrixXd::Identity(k, k));
    const double dof = static_cast<double>(n - k);
    switch (cov_type) {
        case CovarianceType::Classical:
            out.cov = bread * (out.residuals.squaredNorm() / dof);
            break;
        case CovarianceType::HC1: {
            Eigen::MatrixXd meat = Eigen::MatrixXd::Zero(k, k);
            for (Eigen::Index i = 0; i < n; ++i) {
                const Eigen::VectorXd xi = Xk.row(i).transpose();
                meat.noalias() += xi * xi.transpose() * (out.residuals(i) * out.residuals(i));
            }
            out.cov = bread * meat * bread * (static_cast<double>(n) / dof);
            break;
        }
        case CovarianceType::Cluster: {
            std::map<int, Eigen::VectorXd> scores;
            for (Eigen::Index i = 0; i < n; ++i) {
                auto [it, fresh] = scores.try_emplace(clusters[i], Eigen::VectorXd::Zero(k));
                it->second += Xk.row(i).transpose() * out.residuals(i);
            }
            Eigen::MatrixXd meat = Eigen::MatrixXd::Zero(k, k);
            for (const auto& [id, s] : scores) meat.noalias() += s * s.transpose();
            const double g = static_cast<double>(scores.size());
            const double adj = g > 1 ? (g / (g - 1.0)) * ((static_cast<double>(n) - 1.0) / dof) : 1.0;
            out.cov = bread * meat * bread * adj;
            break;
        }
    }
    out.se = out.cov.diagonal().cwiseMax(0.0).cwiseSqrt();
    const double ybar = y.mean();
    const double sst = (y.array() - ybar).square().sum();
    out.r2 = sst > 0 ? 1.0 - out.residuals.squaredNorm() / sst : 0.0;
    return out;
}

}  // namespace invdp
