#pragma once

#include <random>

#include "andor/aog.hpp"
#include "andor/feature.hpp"

namespace testutil {

struct Instance {
    andor::AndOrGraph g;
    andor::FeaturePyramid pyr;
};

/// Pyramid of random cells: level 0 is w x h, each further level halves.
inline andor::FeaturePyramid random_pyramid(std::mt19937_64& rng, int w, int h, int levels, int lambda,
                                            int padding) {
    std::uniform_real_distribution<double> u(-1, 1);
    andor::FeaturePyramid pyr;
    pyr.levels_per_octave = lambda;
    pyr.cell_size = 8;
    pyr.padding = padding;
    pyr.image_width = (w - 2 * padding) * 8;
    pyr.image_height = (h - 2 * padding) * 8;
    for (int l = 0; l < levels; ++l) {
        const int lw = std::max(2 * padding + 1, padding * 2 + (w - 2 * padding) / (1 << l));
        const int lh = std::max(2 * padding + 1, padding * 2 + (h - 2 * padding) / (1 << l));
        andor::FeatureGrid grid(lw, lh);
        for (int y = padding; y < lh - padding; ++y)
            for (int x = padding; x < lw - padding; ++x)
                for (int c = 0; c < andor::kHogChannels; ++c) grid.cell(x, y)[c] = u(rng);
        pyr.levels.push_back(std::move(grid));
    }
    return pyr;
}

inline void randomize_theta(andor::AndOrGraph& g, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(-1, 1), quad(0.001, 1.0), lin(-0.5, 0.5);
    for (auto& v : g.theta) v = u(rng);
    for (const auto& e : g.edges)
        if (e.deform_offset >= 0) {
            g.theta[e.deform_offset] = quad(rng);
            g.theta[e.deform_offset + 1] = lin(rng);
            g.theta[e.deform_offset + 2] = quad(rng);
            g.theta[e.deform_offset + 3] = lin(rng);
        }
}

/// Random grammar following the layer typing: at most 2 multi-car layouts,
/// 3 single-car branches, 4 shared part filters, 20 nodes.
inline Instance random_instance(std::mt19937_64& rng) {
    using namespace andor;
    auto pick = [&](int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); };
    Instance inst;
    AndOrGraph& g = inst.g;
    g.meta.levels_per_octave = 1;
    g.meta.cell_size = 8;
    g.meta.padding = pick(0, 1);
    g.meta.slot_deformation = pick(0, 1) == 1;
    g.meta.views = 2;

    g.root = g.add_node(NodeRole::RootOr);
    const int n_parts = pick(0, 4);
    std::vector<NodeId> parts;
    for (int i = 0; i < n_parts; ++i) parts.push_back(g.add_terminal(g.add_filter(pick(1, 2), pick(1, 2))));
    const NodeId slot = g.add_node(NodeRole::CarSlot);
    const int n_cars = pick(1, 3);
    int part_cursor = 0;
    bool cluster_used = false;
    for (int c = 0; c < n_cars; ++c) {
        const NodeId car = g.add_node(NodeRole::SingleCar);
        g.node(car).view = c % 2;
        g.node(car).config = c;
        const int fw = pick(1, 3), fh = pick(1, 3);
        g.node(car).model_box = {-fw / 2, -fh / 2, fw, fh};
        const NodeId rt = g.add_terminal(g.add_filter(fw, fh));
        g.add_edge(car, rt, {-fw / 2, -fh / 2}, 0, false);
        for (NodeId p : parts)
            if (pick(0, 1)) g.add_edge(car, p, {pick(-2, 2), pick(-2, 2)}, 1, true);
        if (!parts.empty() && !cluster_used && pick(0, 1) == 0) {
            cluster_used = true;
            const NodeId cl = g.add_node(NodeRole::PartCluster);
            g.add_edge(car, cl, {pick(-1, 1), pick(-1, 1)}, pick(0, 1), false);
            const int groups = pick(1, 2);
            for (int k = 0; k < groups; ++k) {
                const NodeId grp = g.add_node(NodeRole::PartGroup);
                g.add_edge(cl, grp);
                const NodeId p = parts[static_cast<std::size_t>(part_cursor++ % parts.size())];
                g.add_edge(grp, p, {pick(-1, 1), pick(-1, 1)}, 0, pick(0, 1) == 1);
            }
        }
        g.add_edge(slot, car);
    }
    const NodeId single = g.add_node(NodeRole::Pattern);
    g.node(single).pattern = 0;
    g.add_edge(single, slot, {0, 0}, 0, false);
    g.add_edge(g.root, single);
    const int n_multi = pick(0, 2);
    for (int t = 0; t < n_multi; ++t) {
        const NodeId pat = g.add_node(NodeRole::Pattern);
        g.node(pat).pattern = t + 1;
        g.add_edge(pat, slot, {0, 0}, 0, false);
        g.add_edge(pat, slot, {pick(1, 3), pick(-2, 2)}, 0, g.meta.slot_deformation && pick(0, 1));
        g.add_edge(g.root, pat);
    }
    randomize_theta(g, rng);
    const int w = pick(4, 10) + 2 * g.meta.padding, h = pick(4, 10) + 2 * g.meta.padding;
    inst.pyr = random_pyramid(rng, w, h, 2, 1, g.meta.padding);
    return inst;
}

}  // namespace testutil
