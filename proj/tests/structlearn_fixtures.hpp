#pragma once

#include <random>
#include <vector>

#include "andor/occlusion.hpp"

namespace testutil {

struct PlantedMatrix {
    andor::OcclusionDataMatrix D;
    andor::PartMask consistent = 0;
    std::vector<andor::PartMask> clusters;
};

/// Every view: 6 always-visible parts plus exactly one of 3 disjoint clusters
/// of 3 parts. Row r sits in view r % views.
inline PlantedMatrix planted_matrix(int views, int rows) {
    using namespace andor;
    PlantedMatrix m;
    m.consistent = 0b111111;
    m.clusters = {PartMask{0b111} << 6, PartMask{0b111} << 9, PartMask{0b111} << 12};
    m.D.views = views;
    m.D.resize(rows);
    for (int r = 0; r < rows; ++r) {
        const int v = r % views;
        m.D.row_view[static_cast<std::size_t>(r)] = v;
        const PartMask mask = m.consistent | m.clusters[static_cast<std::size_t>((r / views) % 3)];
        double* root = m.D.geom(r, v, 0);
        root[2] = 2.0;
        root[3] = 1.0;
        for (int p = 0; p < kNumParts; ++p)
            if (mask >> p & 1u) {
                m.D.vis(r, v, p) = 1;
                double* g = m.D.geom(r, v, 1 + p);
                g[0] = 0.1 * (p % 5);
                g[1] = 0.1 * (p % 4);
                g[2] = 0.3;
                g[3] = 0.25;
            }
    }
    return m;
}

/// Rows of independent fair coin flips, one view per row at random.
inline andor::OcclusionDataMatrix random_matrix(std::mt19937_64& rng, int views, int rows, double p_on = 0.5) {
    using namespace andor;
    OcclusionDataMatrix D;
    D.views = views;
    D.resize(rows);
    std::uniform_real_distribution<double> u(0, 1);
    for (int r = 0; r < rows; ++r) {
        const int v = std::uniform_int_distribution<int>(0, views - 1)(rng);
        D.row_view[static_cast<std::size_t>(r)] = v;
        double* root = D.geom(r, v, 0);
        root[2] = 2.0;
        root[3] = 1.0;
        for (int p = 0; p < kNumParts; ++p)
            if (u(rng) < p_on) {
                D.vis(r, v, p) = 1;
                double* g = D.geom(r, v, 1 + p);
                g[2] = 0.2;
                g[3] = 0.2;
            }
    }
    return D;
}

inline bool objective_non_increasing(const std::vector<andor::CompressionStep>& steps, double tol = 1e-9) {
    for (std::size_t i = 1; i < steps.size(); ++i)
        if (steps[i].objective > steps[i - 1].objective + tol) return false;
    return true;
}

/// Two planted 2-car layouts, horizontal [0.5, 0] and diagonal [0.35, 0.35], with jitter.
inline std::vector<std::vector<double>> planted_layouts(std::mt19937_64& rng, int n, double sigma,
                                                        std::vector<int>& truth) {
    std::normal_distribution<double> e(0, sigma);
    std::vector<std::vector<double>> f;
    truth.clear();
    for (int i = 0; i < n; ++i) {
        const int k = i % 2;
        truth.push_back(k);
        f.push_back(k == 0 ? std::vector<double>{0.5 + e(rng), e(rng)}
                           : std::vector<double>{0.35 + e(rng), 0.35 + e(rng)});
    }
    return f;
}

/// Fraction of points agreeing with the best cluster-to-label matching (2 clusters).
inline double purity2(const std::vector<int>& assign, const std::vector<int>& truth) {
    int same = 0;
    for (std::size_t i = 0; i < assign.size(); ++i) same += assign[i] == truth[i];
    const double a = static_cast<double>(same) / static_cast<double>(assign.size());
    return std::max(a, 1 - a);
}

}  // namespace testutil
