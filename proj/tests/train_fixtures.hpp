#pragma once

#include <random>

#include "andor/train.hpp"

namespace testutil {

/// Root Or straight over one car: a 6x4 rigid root filter and a 2x2 part
/// deformable around its centre. Cells of 4 px, two levels per octave.
inline andor::AndOrGraph single_branch_model() {
    using namespace andor;
    AndOrGraph g;
    g.meta.cell_size = 4;
    g.meta.levels_per_octave = 2;
    g.root = g.add_node(NodeRole::RootOr, "root");
    const NodeId car = g.add_node(NodeRole::SingleCar, "car");
    g.node(car).view = 0;
    g.node(car).config = 0;
    g.node(car).model_box = {-3, -2, 6, 4};
    g.add_edge(g.root, car);
    g.add_edge(car, g.add_terminal(g.add_filter(6, 4), "root"), {-3, -2});
    g.add_edge(car, g.add_terminal(g.add_filter(2, 2), "part"), {-1, -1}, 0, true, {0.05, 0, 0.05, 0});
    return g;
}

/// Flat noisy backgrounds; positives hold one 24x16 striped block at a
/// lattice-aligned spot. Returns images [positives..., backgrounds...].
inline andor::TrainingData separable_set(std::mt19937_64& rng, int npos, int nbg, int w = 64, int h = 48) {
    using namespace andor;
    TrainingData d;
    std::normal_distribution<double> noise(0, 2);
    auto canvas = [&] {
        Image im(w, h, 128);
        for (double& v : im.pixels) v += noise(rng);
        return im;
    };
    for (int i = 0; i < npos; ++i) {
        Image im = canvas();
        const int bx = 4 * std::uniform_int_distribution<int>(1, (w - 24) / 4 - 1)(rng);
        const int by = 4 * std::uniform_int_distribution<int>(1, (h - 16) / 4 - 1)(rng);
        for (int y = by; y < by + 16; ++y)
            for (int x = bx; x < bx + 24; ++x) {
                const bool edge = x == bx || y == by || x == bx + 23 || y == by + 15;
                im.at(x, y) = edge ? 20 : ((x - bx) / 3 % 2 ? 230 : 60);
            }
        d.images.push_back(std::move(im));
        d.positives.push_back({i, std::vector<Box>{{static_cast<double>(bx), static_cast<double>(by), 24, 16}}, {}});
    }
    for (int i = 0; i < nbg; ++i) {
        d.images.push_back(canvas());
        d.backgrounds.push_back(npos + i);
    }
    return d;
}

}  // namespace testutil
