#pragma once

#include <random>
#include <vector>

#include "andor/common.hpp"

namespace andor {

struct Clustering {
    std::vector<std::vector<double>> centroids;
    std::vector<int> assignment;
    int iterations = 0;
    bool converged = false;

    std::vector<int> sizes() const {
        std::vector<int> s(centroids.size(), 0);
        for (int a : assignment) ++s[static_cast<std::size_t>(a)];
        return s;
    }
};

namespace detail {

inline double sqdist(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0;
    for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
    return s;
}

}  // namespace detail

/// k-means on squared Euclidean distance with k-means++ seeding from `seed`.
/// Ties in assignment go to the lower cluster index. An empty cluster takes
/// the point farthest from its centroid among clusters with > 1 member.
/// Stops when assignments repeat or after `max_iter` rounds.
inline Clustering kmeans(const std::vector<std::vector<double>>& x, int k, std::uint64_t seed, int max_iter = 100) {
    ANDOR_REQUIRE(k >= 1, "cluster count must be >= 1");
    if (static_cast<int>(x.size()) < k)
        throw ContractError("k-means needs at least " + std::to_string(k) + " samples, got " +
                            std::to_string(x.size()));
    const std::size_t n = x.size(), dim = x.front().size();
    for (const auto& p : x) ANDOR_REQUIRE(p.size() == dim, "feature dimensions differ");
    std::mt19937_64 rng(seed);
    Clustering c;
    c.centroids.push_back(x[std::uniform_int_distribution<std::size_t>(0, n - 1)(rng)]);
    std::vector<double> d2(n);
    while (static_cast<int>(c.centroids.size()) < k) {
        double total = 0;
        for (std::size_t i = 0; i < n; ++i) {
            double best = kInf;
            for (const auto& m : c.centroids) best = std::min(best, detail::sqdist(x[i], m));
            d2[i] = best;
            total += best;
        }
        std::size_t pick;
        if (total > 0) {
            double r = std::uniform_real_distribution<double>(0, total)(rng);
            pick = n - 1;
            for (std::size_t i = 0; i < n; ++i) {
                if (r < d2[i]) {
                    pick = i;
                    break;
                }
                r -= d2[i];
            }
        } else {
            pick = std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
        }
        c.centroids.push_back(x[pick]);
    }

    auto assign = [&] {
        std::vector<int> a(n, 0);
        for (std::size_t i = 0; i < n; ++i) {
            double best = kInf;
            for (int j = 0; j < k; ++j) {
                const double d = detail::sqdist(x[i], c.centroids[static_cast<std::size_t>(j)]);
                if (d < best) {
                    best = d;
                    a[i] = j;
                }
            }
        }
        std::vector<int> size(static_cast<std::size_t>(k), 0);
        for (int v : a) ++size[static_cast<std::size_t>(v)];
        for (int j = 0; j < k; ++j) {
            if (size[static_cast<std::size_t>(j)] > 0) continue;
            std::size_t far = n;
            double far_d = -1;
            for (std::size_t i = 0; i < n; ++i) {
                if (size[static_cast<std::size_t>(a[i])] <= 1) continue;
                const double d = detail::sqdist(x[i], c.centroids[static_cast<std::size_t>(a[i])]);
                if (d > far_d) {
                    far_d = d;
                    far = i;
                }
            }
            if (far == n) continue;
            --size[static_cast<std::size_t>(a[far])];
            a[far] = j;
            ++size[static_cast<std::size_t>(j)];
        }
        return a;
    };
    auto update = [&] {
        std::vector<std::vector<double>> sum(static_cast<std::size_t>(k), std::vector<double>(dim, 0.0));
        std::vector<int> cnt(static_cast<std::size_t>(k), 0);
        for (std::size_t i = 0; i < n; ++i) {
            const auto j = static_cast<std::size_t>(c.assignment[i]);
            ++cnt[j];
            for (std::size_t d = 0; d < dim; ++d) sum[j][d] += x[i][d];
        }
        for (std::size_t j = 0; j < sum.size(); ++j)
            if (cnt[j] > 0)
                for (std::size_t d = 0; d < dim; ++d) c.centroids[j][d] = sum[j][d] / cnt[j];
    };

    for (c.iterations = 1; c.iterations <= max_iter; ++c.iterations) {
        auto a = assign();
        if (a == c.assignment) {
            c.converged = true;
            break;
        }
        c.assignment = std::move(a);
        update();
    }
    c.iterations = std::min(c.iterations, max_iter);
    return c;
}

/// Layout clusters of the N-car layout vectors, T of them.
inline Clustering mine_contexts(const std::vector<std::vector<double>>& features, int t, std::uint64_t seed) {
    return kmeans(features, t, seed, 100);
}

}  // namespace andor
