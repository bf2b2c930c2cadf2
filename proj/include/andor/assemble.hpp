#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "andor/aog.hpp"
#include "andor/kmeans.hpp"
#include "andor/occlusion.hpp"
#include "andor/positives.hpp"

namespace andor {

/// Multi-car layout: anchors of each car centre relative to car 1, in root cells.
struct ContextPattern {
    std::vector<Point> anchors;
    int support = 0;
};

struct AssembleOptions {
    int car_height_cells = 6;
    int cell_size = 4;
    int levels_per_octave = 4;
    int padding = 0;
    int max_part_cells = 6;     // part filters are cropped to this many cells per side
    bool parts = true;          // false: root filters only
    bool single_pattern = true; // keep the 1-car branch
    bool slot_deformation = true;
    std::array<double, 4> part_deformation{0.05, 0.0, 0.05, 0.0};
    std::array<double, 4> slot_deformation_init{0.05, 0.0, 0.05, 0.0};
    int slot_radius = 3;
};

/// Layout clusters of the N-car samples turned into cell anchors. A car
/// centre offset is measured in heights of car 1.
inline std::vector<ContextPattern> context_patterns(const std::vector<NCarSample>& samples, const Clustering& c,
                                                   int car_height_cells) {
    std::vector<ContextPattern> out(c.centroids.size());
    std::vector<std::vector<std::array<double, 2>>> sum(c.centroids.size());
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const auto k = static_cast<std::size_t>(c.assignment[i]);
        const auto& b = samples[i].boxes;
        if (sum[k].empty()) sum[k].assign(b.size(), {0, 0});
        for (std::size_t j = 0; j < b.size(); ++j) {
            sum[k][j][0] += (b[j].cx() - b[0].cx()) / b[0].h;
            sum[k][j][1] += (b[j].cy() - b[0].cy()) / b[0].h;
        }
        ++out[k].support;
    }
    for (std::size_t k = 0; k < out.size(); ++k) {
        for (const auto& s : sum[k])
            out[k].anchors.push_back({static_cast<int>(std::lround(s[0] / out[k].support * car_height_cells)),
                                      static_cast<int>(std::lround(s[1] / out[k].support * car_height_cells))});
    }
    return out;
}

/// Mines 2..N-car layouts from annotations: positive sets, layout features,
/// k-means with `clusters` centres per N (fewer if samples are scarce).
inline std::vector<ContextPattern> mine_layouts(const AnnotationSet& train, int n_max, int clusters, std::uint64_t seed,
                                                int car_height_cells) {
    std::vector<ContextPattern> out;
    const auto sets = gen_positive_sets(train, n_max);
    for (int n = 2; n <= n_max; ++n) {
        std::vector<NCarSample> kept;
        std::vector<std::vector<double>> feats;
        for (const auto& s : sets[static_cast<std::size_t>(n - 1)]) {
            auto f = layout_features(s);
            if (!f) continue;
            kept.push_back(s);
            feats.push_back(*f);
        }
        const int t = std::min<int>(clusters, static_cast<int>(feats.size()));
        if (t < 1) continue;
        const auto c = mine_contexts(feats, t, seed + static_cast<std::uint64_t>(n));
        for (auto& p : context_patterns(kept, c, car_height_cells))
            if (p.support > 0) out.push_back(std::move(p));
    }
    return out;
}

/// Builds the grammar skeleton: root Or over layout patterns, each pattern an
/// And over car slots, a shared slot Or over (view, config) car Ands, each car
/// a root filter, the consistently visible parts and an Or over its optional
/// cluster. Part terminals are shared by the configs of a view.
inline AndOrGraph assemble_model(const std::vector<ContextPattern>& contexts, const OcclusionStructure& occ,
                                 const PartDictionary& dict, int views, const AssembleOptions& opt = {}) {
    if (occ.views != views) throw ContractError("occlusion structure has " + std::to_string(occ.views) +
                                                " views, model asks for " + std::to_string(views));
    ANDOR_REQUIRE(!occ.per_view.empty(), "occlusion structure has no views");
    ANDOR_REQUIRE(opt.single_pattern || !contexts.empty(), "model needs at least one pattern");
    const int hc = opt.car_height_cells;
    AndOrGraph g;
    g.meta.levels_per_octave = opt.levels_per_octave;
    g.meta.cell_size = opt.cell_size;
    g.meta.views = views;
    g.meta.padding = opt.padding;
    g.meta.slot_deformation = opt.slot_deformation && !contexts.empty();
    g.meta.slot_radius = opt.slot_radius;
    g.root = g.add_node(NodeRole::RootOr, "root");
    const NodeId slot = g.add_node(NodeRole::CarSlot, "slot");

    for (const ViewStructure& vs : occ.per_view) {
        const int w = std::max(1, static_cast<int>(std::lround(vs.root.w / vs.root.h * hc)));
        const CellBox box{-(w / 2), -(hc / 2), w, hc};
        std::array<NodeId, kNumParts> term;
        std::array<Point, kNumParts> anchor{};
        term.fill(-1);
        if (opt.parts) {
            PartMask used = 0;
            for (int c = 0; c < vs.configs(); ++c) used |= vs.config_mask(c);
            for (int p : mask_parts(used)) {
                if (!(vs.has_geometry >> p & 1u)) continue;
                const Box& pb = vs.parts[static_cast<std::size_t>(p)];
                const double sx = 2.0 * hc / vs.root.h;
                const double fw = pb.w * sx, fh = pb.h * sx;
                const int pw = std::clamp(static_cast<int>(std::lround(fw)), 1, opt.max_part_cells);
                const int ph = std::clamp(static_cast<int>(std::lround(fh)), 1, opt.max_part_cells);
                anchor[static_cast<std::size_t>(p)] = {
                    2 * box.x + static_cast<int>(std::lround(pb.x * sx + (fw - pw) / 2)),
                    2 * box.y + static_cast<int>(std::lround(pb.y * sx + (fh - ph) / 2))};
                term[static_cast<std::size_t>(p)] =
                    g.add_terminal(g.add_filter(pw, ph), "v" + std::to_string(vs.view) + "_" +
                                                             dict.names[static_cast<std::size_t>(p)]);
            }
        }
        for (int c = 0; c < vs.configs(); ++c) {
            const std::string tag = "v" + std::to_string(vs.view) + "c" + std::to_string(c);
            const NodeId car = g.add_node(NodeRole::SingleCar, "car_" + tag);
            g.node(car).view = vs.view;
            g.node(car).config = c;
            g.node(car).model_box = box;
            g.add_edge(slot, car);
            g.add_edge(car, g.add_terminal(g.add_filter(w, hc), "root_" + tag), {box.x, box.y});
            if (!opt.parts) continue;
            for (int p : mask_parts(vs.consistent))
                if (term[static_cast<std::size_t>(p)] >= 0)
                    g.add_edge(car, term[static_cast<std::size_t>(p)], anchor[static_cast<std::size_t>(p)], 1, true,
                               opt.part_deformation);
            const PartMask cl = vs.clusters[static_cast<std::size_t>(c)];
            bool any = false;
            for (int p : mask_parts(cl)) any = any || term[static_cast<std::size_t>(p)] >= 0;
            if (!any) continue;
            const NodeId orn = g.add_node(NodeRole::PartCluster, "optional_" + tag);
            const NodeId grp = g.add_node(NodeRole::PartGroup, "cluster_" + tag);
            g.add_edge(car, orn, {}, 1);
            g.add_edge(orn, grp);
            for (int p : mask_parts(cl))
                if (term[static_cast<std::size_t>(p)] >= 0)
                    g.add_edge(grp, term[static_cast<std::size_t>(p)], anchor[static_cast<std::size_t>(p)], 0, true,
                               opt.part_deformation);
        }
    }

    int pattern_id = 0;
    if (opt.single_pattern) {
        const NodeId pat = g.add_node(NodeRole::Pattern, "pattern_1car");
        g.node(pat).pattern = pattern_id++;
        g.add_edge(g.root, pat);
        g.add_edge(pat, slot);
    }
    for (const auto& ctx : contexts) {
        const NodeId pat = g.add_node(NodeRole::Pattern, "pattern_" + std::to_string(pattern_id));
        g.node(pat).pattern = pattern_id++;
        g.add_edge(g.root, pat);
        for (std::size_t j = 0; j < ctx.anchors.size(); ++j)
            g.add_edge(pat, slot, ctx.anchors[j], 0, g.meta.slot_deformation && j > 0, opt.slot_deformation_init);
    }
    std::fill(g.theta.begin(), g.theta.end(), 0.0);
    for (const auto& e : g.edges)
        if (e.deform_offset >= 0) {
            const auto& d = e.child == slot ? opt.slot_deformation_init : opt.part_deformation;
            std::copy(d.begin(), d.end(), g.theta.begin() + e.deform_offset);
        }
    require_valid(g);
    return g;
}

}  // namespace andor
