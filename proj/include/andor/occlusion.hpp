#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <ostream>
#include <vector>

#include "andor/simulator.hpp"

namespace andor {

using PartMask = std::uint32_t;

inline std::vector<int> mask_parts(PartMask m) {
    std::vector<int> out;
    for (int p = 0; p < kNumParts; ++p)
        if (m >> p & 1u) out.push_back(p);
    return out;
}

/// Occlusion configurations learned for one view. Config c owns the parts
/// X plus clusters[c]; clusters[c] may be empty.
struct ViewStructure {
    int view = 0;
    PartMask consistent = 0;
    std::vector<PartMask> clusters;
    std::vector<int> support;  // rows explained by each config
    Box root;                  // car-height units
    std::array<Box, kNumParts> parts{};
    PartMask has_geometry = 0;

    int configs() const { return static_cast<int>(clusters.size()); }
    PartMask config_mask(int c) const { return consistent | clusters[static_cast<std::size_t>(c)]; }
};

struct CompressionStep {
    int branches = 0;
    double loss = 0;
    double size = 0;
    double objective = 0;
};

struct OcclusionStructure {
    int views = 1;
    std::vector<ViewStructure> per_view;  // views without rows are omitted
    std::vector<double> lambda;           // weight in force at the end, per entry of per_view
    std::vector<std::vector<CompressionStep>> trace;

    const ViewStructure* find(int view) const {
        for (const auto& v : per_view)
            if (v.view == view) return &v;
        return nullptr;
    }
};

namespace detail {

struct Branch {
    PartMask mask = 0;
    std::vector<std::pair<int, int>> members;  // (pattern, count)
    int count() const {
        int n = 0;
        for (auto& m : members) n += m.second;
        return n;
    }
};

/// |G| of a root Or over the given branches: nodes plus edges.
inline double graph_size(const std::vector<PartMask>& masks) {
    PartMask all = 0;
    double s = 1;
    for (PartMask m : masks) {
        all |= m;
        s += 2 + std::popcount(m);
    }
    return s + std::popcount(all);
}

inline double recon_loss(const std::vector<PartMask>& patterns, const std::vector<int>& counts,
                         const std::vector<PartMask>& masks) {
    double loss = 0;
    for (std::size_t i = 0; i < patterns.size(); ++i) {
        int best = kNumParts + 1;
        for (PartMask m : masks) best = std::min(best, std::popcount(patterns[i] ^ m));
        loss += static_cast<double>(counts[i]) * best;
    }
    return loss;
}

inline PartMask majority(const std::vector<std::pair<int, int>>& members, const std::vector<PartMask>& patterns) {
    PartMask out = 0;
    int total = 0;
    std::array<int, kNumParts> on{};
    for (auto [p, c] : members) {
        total += c;
        for (int k = 0; k < kNumParts; ++k)
            if (patterns[static_cast<std::size_t>(p)] >> k & 1u) on[static_cast<std::size_t>(k)] += c;
    }
    for (int k = 0; k < kNumParts; ++k)
        if (2 * on[static_cast<std::size_t>(k)] >= total) out |= PartMask{1} << k;
    return out;
}

}  // namespace detail

/// Greedy compression of one view's rows. Starts from one branch per row,
/// merges the pair with the largest objective decrease (majority vote of the
/// merged rows), and stops once no merge decreases the objective and at most
/// k branches remain. If more than k branches remain with no decreasing
/// merge, lambda is raised to the smallest value making some merge neutral.
inline ViewStructure compress_view(const std::vector<PartMask>& rows, int view, double& lambda, int k,
                                   std::vector<CompressionStep>* trace = nullptr) {
    ANDOR_REQUIRE(lambda > 0, "lambda must be > 0");
    ANDOR_REQUIRE(k >= 1, "branch limit must be >= 1");
    ANDOR_REQUIRE(!rows.empty(), "view has no rows");
    std::vector<PartMask> patterns;
    std::vector<int> counts;
    for (PartMask r : rows) {
        auto it = std::find(patterns.begin(), patterns.end(), r);
        if (it == patterns.end()) {
            patterns.push_back(r);
            counts.push_back(1);
        } else {
            ++counts[static_cast<std::size_t>(it - patterns.begin())];
        }
    }
    std::vector<CompressionStep> steps;
    {
        // one branch per row; identical rows are then merged one at a time,
        // each merge keeping the loss at zero and shrinking the graph
        std::vector<PartMask> per_row = rows;
        steps.push_back({static_cast<int>(rows.size()), 0.0, detail::graph_size(per_row), 0});
        for (std::size_t p = 0; p < patterns.size(); ++p)
            for (int c = 1; c < counts[p]; ++c) {
                auto it = std::find(per_row.begin(), per_row.end(), patterns[p]);
                per_row.erase(it);
                steps.push_back({static_cast<int>(per_row.size()), 0.0, detail::graph_size(per_row), 0});
            }
    }
    std::vector<detail::Branch> br;
    for (std::size_t p = 0; p < patterns.size(); ++p) br.push_back({patterns[p], {{static_cast<int>(p), counts[p]}}});

    auto masks_of = [](const std::vector<detail::Branch>& b) {
        std::vector<PartMask> m;
        for (auto& x : b) m.push_back(x.mask);
        return m;
    };
    double cur_loss = detail::recon_loss(patterns, counts, masks_of(br));
    double cur_size = detail::graph_size(masks_of(br));
    while (br.size() > 1) {
        struct Cand {
            std::size_t i, j;
            PartMask mask;
            double dloss, dsize;
        };
        std::vector<Cand> cands;
        for (std::size_t i = 0; i < br.size(); ++i)
            for (std::size_t j = i + 1; j < br.size(); ++j) {
                auto members = br[i].members;
                members.insert(members.end(), br[j].members.begin(), br[j].members.end());
                const PartMask m = detail::majority(members, patterns);
                auto masks = masks_of(br);
                masks[i] = m;
                masks.erase(masks.begin() + static_cast<std::ptrdiff_t>(j));
                cands.push_back({i, j, m, detail::recon_loss(patterns, counts, masks) - cur_loss,
                                 detail::graph_size(masks) - cur_size});
            }
        auto delta = [&](const Cand& c) { return c.dloss + lambda * c.dsize; };
        const Cand* best = nullptr;
        for (const auto& c : cands)
            if (!best || delta(c) < delta(*best)) best = &c;
        if (delta(*best) >= 0) {
            if (static_cast<int>(br.size()) <= k) break;
            double need = kInf;
            for (const auto& c : cands)
                if (c.dsize < 0) need = std::min(need, c.dloss / -c.dsize);
            lambda = std::max(lambda, need);
            best = nullptr;
            for (const auto& c : cands)
                if (!best || delta(c) < delta(*best)) best = &c;
        }
        const Cand c = *best;
        br[c.i].mask = c.mask;
        br[c.i].members.insert(br[c.i].members.end(), br[c.j].members.begin(), br[c.j].members.end());
        br.erase(br.begin() + static_cast<std::ptrdiff_t>(c.j));
        cur_loss += c.dloss;
        cur_size += c.dsize;
        steps.push_back({static_cast<int>(br.size()), cur_loss, cur_size, 0});
    }
    for (auto& s : steps) s.objective = s.loss + lambda * s.size;
    if (trace) *trace = steps;

    // reassign rows to their nearest branch for support counts
    std::vector<int> support(br.size(), 0);
    for (std::size_t p = 0; p < patterns.size(); ++p) {
        std::size_t best = 0;
        for (std::size_t b = 1; b < br.size(); ++b)
            if (std::popcount(patterns[p] ^ br[b].mask) < std::popcount(patterns[p] ^ br[best].mask)) best = b;
        support[best] += counts[p];
    }
    std::vector<std::size_t> order(br.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (support[a] != support[b]) return support[a] > support[b];
        return br[a].mask < br[b].mask;
    });
    ViewStructure vs;
    vs.view = view;
    vs.consistent = ~PartMask{0} & ((PartMask{1} << kNumParts) - 1);
    for (auto& b : br) vs.consistent &= b.mask;
    for (std::size_t i : order) {
        vs.clusters.push_back(br[i].mask & ~vs.consistent);
        vs.support.push_back(support[i]);
    }
    return vs;
}

/// Means of the b entries of a view: arithmetic for x, y and geometric for w, h.
inline void view_geometry(const OcclusionDataMatrix& D, ViewStructure& vs) {
    auto mean_box = [&](int slot, Box& out) {
        double sx = 0, sy = 0, lw = 0, lh = 0;
        int n = 0;
        for (int r = 0; r < D.rows; ++r) {
            if (D.row_view[static_cast<std::size_t>(r)] != vs.view) continue;
            if (slot > 0 && !D.vis(r, vs.view, slot - 1)) continue;
            const double* g = D.geom(r, vs.view, slot);
            sx += g[0];
            sy += g[1];
            lw += std::log(g[2]);
            lh += std::log(g[3]);
            ++n;
        }
        if (n == 0) return false;
        out = {sx / n, sy / n, std::exp(lw / n), std::exp(lh / n)};
        return true;
    };
    mean_box(0, vs.root);
    vs.has_geometry = 0;
    for (int p = 0; p < kNumParts; ++p)
        if (mean_box(1 + p, vs.parts[static_cast<std::size_t>(p)])) vs.has_geometry |= PartMask{1} << p;
}

inline OcclusionStructure compress(const OcclusionDataMatrix& D, double lambda, int k) {
    ANDOR_REQUIRE(lambda > 0, "lambda must be > 0");
    ANDOR_REQUIRE(k >= 1, "branch limit must be >= 1");
    OcclusionStructure out;
    out.views = D.views;
    for (int view = 0; view < D.views; ++view) {
        std::vector<PartMask> rows;
        for (int r = 0; r < D.rows; ++r) {
            if (D.row_view[static_cast<std::size_t>(r)] != view) continue;
            PartMask m = 0;
            for (int p = 0; p < kNumParts; ++p)
                if (D.vis(r, view, p)) m |= PartMask{1} << p;
            rows.push_back(m);
        }
        if (rows.empty()) continue;
        double lam = lambda;
        std::vector<CompressionStep> steps;
        ViewStructure vs = compress_view(rows, view, lam, k, &steps);
        view_geometry(D, vs);
        out.per_view.push_back(std::move(vs));
        out.lambda.push_back(lam);
        out.trace.push_back(std::move(steps));
    }
    return out;
}

inline void write_structure(std::ostream& out, const OcclusionStructure& s, const PartDictionary& dict) {
    out << "andor-occlusion 1\nviews " << s.views << "\n";
    for (std::size_t i = 0; i < s.per_view.size(); ++i) {
        const auto& v = s.per_view[i];
        out << "view " << v.view << " lambda " << s.lambda[i] << " configs " << v.configs() << "\n  X";
        for (int p : mask_parts(v.consistent)) out << " " << dict.names[static_cast<std::size_t>(p)];
        out << "\n";
        for (int c = 0; c < v.configs(); ++c) {
            out << "  config " << c << " rows " << v.support[static_cast<std::size_t>(c)] << " cluster";
            for (int p : mask_parts(v.clusters[static_cast<std::size_t>(c)]))
                out << " " << dict.names[static_cast<std::size_t>(p)];
            out << "\n";
        }
    }
}

}  // namespace andor
