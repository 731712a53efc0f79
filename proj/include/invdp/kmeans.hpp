#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cstdint>
#include <limits>
#include <numeric>
#include <vector>

#include "invdp/errors.hpp"
#include "invdp/random.hpp"

namespace invdp {

struct KMeansResult {
    Eigen::MatrixXd centers;       ///< k x d
    std::vector<int> assignment;   ///< per point
    double inertia = 0.0;          ///< within-cluster sum of squared distances
    int iterations = 0;
};

namespace detail {

inline double sq_dist(const Eigen::MatrixXd& a, Eigen::Index i, const Eigen::MatrixXd& b, Eigen::Index j) {
    return (a.row(i) - b.row(j)).squaredNorm();
}

inline KMeansResult lloyd(const Eigen::MatrixXd& pts, Eigen::MatrixXd centers, int max_iter) {
    const auto n = pts.rows();
    const auto k = centers.rows();
    KMeansResult r;
    r.assignment.assign(static_cast<std::size_t>(n), -1);
    for (int it = 0; it < max_iter; ++it) {
        bool changed = false;
        for (Eigen::Index i = 0; i < n; ++i) {
            int best = 0;
            double bd = std::numeric_limits<double>::infinity();
            for (Eigen::Index c = 0; c < k; ++c) {
                const double d = sq_dist(pts, i, centers, c);
                if (d < bd) bd = d, best = static_cast<int>(c);
            }
            if (r.assignment[i] != best) changed = true, r.assignment[i] = best;
        }
        r.iterations = it + 1;
        Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(k, pts.cols());
        std::vector<int> counts(static_cast<std::size_t>(k), 0);
        for (Eigen::Index i = 0; i < n; ++i) {
            sums.row(r.assignment[i]) += pts.row(i);
            ++counts[r.assignment[i]];
        }
        for (Eigen::Index c = 0; c < k; ++c)
            if (counts[c] > 0) centers.row(c) = sums.row(c) / counts[c];
        if (!changed) break;
    }
    r.inertia = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) r.inertia += sq_dist(pts, i, centers, r.assignment[i]);
    r.centers = std::move(centers);
    return r;
}

}  // namespace detail

/// k-means with squared Euclidean distance and k-means++ seeding; best of
/// `n_init` restarts by inertia. Deterministic for a given seed.
inline KMeansResult kmeans(const Eigen::MatrixXd& pts, int k, std::uint64_t seed = 0, int n_init = 10,
                           int max_iter = 300) {
    const auto n = pts.rows();
    if (k < 1 || n < k) throw DomainError("kmeans: need at least k points");
    Rng rng = make_rng(seed, {0x6B6D65616E73ULL});
    KMeansResult best;
    best.inertia = std::numeric_limits<double>::infinity();
    for (int rep = 0; rep < n_init; ++rep) {
        Eigen::MatrixXd centers(k, pts.cols());
        centers.row(0) = pts.row(uniform_index(rng, static_cast<int>(n)));
        std::vector<double> d2(static_cast<std::size_t>(n));
        for (int c = 1; c < k; ++c) {
            double total = 0.0;
            for (Eigen::Index i = 0; i < n; ++i) {
                double m = std::numeric_limits<double>::infinity();
                for (int j = 0; j < c; ++j) m = std::min(m, detail::sq_dist(pts, i, centers, j));
                d2[i] = m;
                total += m;
            }
            Eigen::Index pick = n - 1;
            if (total > 0) {
                double u = unit_uniform(rng) * total;
                for (Eigen::Index i = 0; i < n; ++i) {
                    u -= d2[i];
                    if (u <= 0) { pick = i; break; }
                }
            } else {
                pick = uniform_index(rng, static_cast<int>(n));
            }
            centers.row(c) = pts.row(pick);
        }
        auto r = detail::lloyd(pts, std::move(centers), max_iter);
        if (r.inertia < best.inertia) best = std::move(r);
    }
    return best;
}

/// One-dimensional convenience wrapper; centers returned in ascending order
/// and assignments relabelled to match.
inline KMeansResult kmeans_1d(const std::vector<double>& values, int k, std::uint64_t seed = 0) {
    Eigen::MatrixXd pts(static_cast<Eigen::Index>(values.size()), 1);
    for (std::size_t i = 0; i < values.size(); ++i) pts(static_cast<Eigen::Index>(i), 0) = values[i];
    auto r = kmeans(pts, k, seed);
    std::vector<int> order(static_cast<std::size_t>(k));
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](int a, int b) { return r.centers(a, 0) < r.centers(b, 0); });
    std::vector<int> relabel(static_cast<std::size_t>(k));
    Eigen::MatrixXd sorted(k, 1);
    for (int i = 0; i < k; ++i) {
        relabel[order[i]] = i;
        sorted(i, 0) = r.centers(order[i], 0);
    }
    for (auto& a : r.assignment) a = relabel[a];
    r.centers = sorted;
    return r;
}

/// Share of total variance explained by cluster means (between / overall).
inline double between_variance_share(const std::vector<double>& values, const std::vector<int>& assignment) {
    if (values.size() != assignment.size() || values.empty()) throw DomainError("between_variance_share: size mismatch");
    const int k = *std::max_element(assignment.begin(), assignment.end()) + 1;
    std::vector<double> sum(static_cast<std::size_t>(k), 0.0);
    std::vector<int> cnt(static_cast<std::size_t>(k), 0);
    double grand = 0.0;
    for (std::size_t i = 0; i < values.size(); ++i) {
        sum[assignment[i]] += values[i];
        ++cnt[assignment[i]];
        grand += values[i];
    }
    grand /= static_cast<double>(values.size());
    double total = 0.0, between = 0.0;
    for (std::size_t i = 0; i < values.size(); ++i) {
        const double m = sum[assignment[i]] / cnt[assignment[i]];
        total += (values[i] - grand) * (values[i] - grand);
        between += (m - grand) * (m - grand);
    }
    return total > 0 ? between / total : 1.0;
}

}  // namespace invdp
