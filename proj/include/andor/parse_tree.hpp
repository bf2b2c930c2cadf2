#pragma once

#include <map>
#include <utility>
#include <vector>

#include "andor/aog.hpp"
#include "andor/feature.hpp"

namespace andor {

struct ParseNode {
    NodeId node = -1;
    Position pos;
    int parent = -1;     // index into ParseTree::nodes
    EdgeId via = -1;     // edge from the parent
    Point delta;         // displacement from the edge anchor (zero on rigid edges)
    EdgeId chosen = -1;  // Or nodes: selected child edge
};

/// One instantiation of the grammar, nodes in breadth-first order from the
/// root of the tree (not necessarily the graph root).
struct ParseTree {
    std::vector<ParseNode> nodes;
    double score = kNegInf;

    bool empty() const { return nodes.empty(); }
    const ParseNode& root() const { return nodes.front(); }
};

// ------ block-sparse feature vectors -------

/// Sparse vector over Theta stored as dense blocks at given offsets.
struct FeatureVector {
    struct Block {
        int offset;
        std::vector<double> values;
    };
    std::vector<Block> blocks;

    void add(int offset, double v) { blocks.push_back({offset, {v}}); }
    void add(int offset, std::vector<double> vals) { blocks.push_back({offset, std::move(vals)}); }

    double dot(const std::vector<double>& theta) const {
        double s = 0;
        for (const auto& b : blocks)
            for (std::size_t k = 0; k < b.values.size(); ++k) s += theta[b.offset + k] * b.values[k];
        return s;
    }
    void add_to(std::vector<double>& dst, double scale) const {
        for (const auto& b : blocks)
            for (std::size_t k = 0; k < b.values.size(); ++k) dst[b.offset + k] += scale * b.values[k];
    }
    std::vector<double> dense(std::size_t dim) const {
        std::vector<double> d(dim, 0.0);
        add_to(d, 1.0);
        return d;
    }
    /// Sorts blocks and merges those sharing an offset and length.
    void canonicalize() {
        std::sort(blocks.begin(), blocks.end(), [](const Block& a, const Block& b) {
            return a.offset != b.offset ? a.offset < b.offset : a.values.size() < b.values.size();
        });
        std::vector<Block> out;
        for (auto& b : blocks) {
            if (!out.empty() && out.back().offset == b.offset && out.back().values.size() == b.values.size()) {
                for (std::size_t k = 0; k < b.values.size(); ++k) out.back().values[k] += b.values[k];
            } else {
                out.push_back(std::move(b));
            }
        }
        blocks = std::move(out);
    }
    std::size_t memory() const {
        std::size_t m = 0;
        for (const auto& b : blocks) m += b.values.size() * sizeof(double) + sizeof(Block);
        return m;
    }
};

/// HOG patch under a filter placed with its top-left cell at (x, y).
inline std::vector<double> feature_patch(const FeatureGrid& g, int x, int y, int w, int h) {
    if (x < 0 || y < 0 || x + w > g.width || y + h > g.height)
        throw DomainError("filter patch outside the feature grid");
    std::vector<double> out(static_cast<std::size_t>(w) * h * kHogChannels);
    for (int fy = 0; fy < h; ++fy)
        std::copy(g.cell(x, y + fy), g.cell(x, y + fy) + static_cast<std::size_t>(w) * kHogChannels,
                  out.begin() + static_cast<std::ptrdiff_t>(fy) * w * kHogChannels);
    return out;
}

/// Phi(x, pt): HOG patches for terminals, -[dx^2, dx, dy^2, dy] per
/// deformable edge, 1 per And bias. <Theta, Phi> is the parse-tree score.
inline FeatureVector parse_tree_features(const AndOrGraph& g, const FeaturePyramid& pyr, const ParseTree& pt) {
    FeatureVector phi;
    for (const auto& pn : pt.nodes) {
        const Node& n = g.node(pn.node);
        if (n.kind() == NodeKind::And) phi.add(n.bias_offset, 1.0);
        if (n.kind() == NodeKind::Terminal) {
            if (pn.pos.level < 0 || pn.pos.level >= pyr.num_levels()) throw DomainError("terminal level outside pyramid");
            const Filter& f = g.filters[static_cast<std::size_t>(n.filter)];
            phi.add(f.offset, feature_patch(pyr.levels[static_cast<std::size_t>(pn.pos.level)], pn.pos.x, pn.pos.y,
                                            f.width, f.height));
        }
        if (pn.via >= 0 && g.edge(pn.via).deform_offset >= 0) {
            const auto d = deformation_features(pn.delta.x, pn.delta.y);
            phi.add(g.edge(pn.via).deform_offset, {-d[0], -d[1], -d[2], -d[3]});
        }
    }
    phi.canonicalize();
    return phi;
}

/// Score recomputed from placements alone.
inline double score_parse_tree(const AndOrGraph& g, const FeaturePyramid& pyr, const ParseTree& pt) {
    return parse_tree_features(g, pyr, pt).dot(g.theta);
}

/// Checks topology and placement arithmetic of a parse tree; throws
/// ContractError on the first inconsistency.
inline void check_parse_tree(const AndOrGraph& g, const ParseTree& pt) {
    std::vector<int> kids(pt.nodes.size(), 0);
    for (std::size_t i = 0; i < pt.nodes.size(); ++i) {
        const auto& pn = pt.nodes[i];
        if (i == 0) {
            ANDOR_REQUIRE(pn.parent < 0, "parse tree root has a parent");
            continue;
        }
        ANDOR_REQUIRE(pn.parent >= 0 && pn.parent < static_cast<int>(i), "parse tree not in BFS order");
        const auto& par = pt.nodes[static_cast<std::size_t>(pn.parent)];
        const Edge& e = g.edge(pn.via);
        ANDOR_REQUIRE(e.parent == par.node && e.child == pn.node, "parse tree edge does not match graph");
        ++kids[static_cast<std::size_t>(pn.parent)];
        const Node& pnode = g.node(par.node);
        if (pnode.kind() == NodeKind::Or) {
            ANDOR_REQUIRE(par.chosen == pn.via, "Or child differs from its recorded choice");
            ANDOR_REQUIRE(pn.pos == par.pos, "Or child must share the parent position");
        } else {
            if (e.deform_offset < 0) ANDOR_REQUIRE(pn.delta == Point{}, "rigid edge carries a displacement");
            const Position a = g.child_anchor(par.pos, e);
            ANDOR_REQUIRE(pn.pos == (Position{a.level, a.x + pn.delta.x, a.y + pn.delta.y}),
                          "child position inconsistent with anchor and displacement");
        }
    }
    for (std::size_t i = 0; i < pt.nodes.size(); ++i) {
        const Node& n = g.node(pt.nodes[i].node);
        const int expect = n.kind() == NodeKind::And ? static_cast<int>(n.children.size())
                           : n.kind() == NodeKind::Or ? 1
                                                      : 0;
        ANDOR_REQUIRE(kids[i] == expect, "parse tree node has the wrong number of children");
    }
}

// ------ geometry and semantic readout -------

enum class BoxRole { SingleCar, Union };

struct PlacedBox {
    Box box;
    BoxRole role = BoxRole::SingleCar;
    double score = 0;
    int view = -1;
    int config = -1;
};

/// Pixel scale of a lattice level.
inline double level_scale(const GraphMeta& m, int level) {
    return std::exp2(-static_cast<double>(level) / m.levels_per_octave);
}

/// Pixel box of a cell rectangle relative to a lattice position.
inline Box cells_to_pixels(const GraphMeta& m, const Position& p, const CellBox& cb) {
    const double f = m.cell_size / level_scale(m, p.level);
    return {(p.x + cb.x - m.padding) * f, (p.y + cb.y - m.padding) * f, cb.w * f, cb.h * f};
}

/// One box per single-car And in tree order, plus a union box when the tree
/// holds more than one car.
inline std::vector<PlacedBox> parse_tree_boxes(const AndOrGraph& g, const ParseTree& pt) {
    std::vector<PlacedBox> out;
    for (const auto& pn : pt.nodes) {
        const Node& n = g.node(pn.node);
        if (n.role != NodeRole::SingleCar) continue;
        out.push_back({cells_to_pixels(g.meta, pn.pos, n.model_box), BoxRole::SingleCar, pt.score, n.view, n.config});
    }
    if (out.size() > 1) {
        std::vector<Box> b;
        for (const auto& x : out) b.push_back(x.box);
        out.push_back({union_box(b), BoxRole::Union, pt.score, -1, -1});
    }
    return out;
}

inline std::vector<Box> car_boxes(const AndOrGraph& g, const ParseTree& pt) {
    std::vector<Box> out;
    for (const auto& b : parse_tree_boxes(g, pt))
        if (b.role == BoxRole::SingleCar) out.push_back(b.box);
    return out;
}

namespace detail {
inline std::vector<const Node*> single_cars(const AndOrGraph& g, const ParseTree& pt) {
    std::vector<const Node*> out;
    for (const auto& pn : pt.nodes)
        if (g.node(pn.node).role == NodeRole::SingleCar) out.push_back(&g.node(pn.node));
    if (out.empty()) throw ContractError("parse tree contains no single-car branch");
    return out;
}
}  // namespace detail

/// View bins of the chosen single-car branches, in car order.
inline std::vector<int> viewpoint_of(const AndOrGraph& g, const ParseTree& pt) {
    std::vector<int> out;
    for (const Node* n : detail::single_cars(g, pt)) out.push_back(n->view);
    return out;
}

inline std::vector<int> occlusion_config_of(const AndOrGraph& g, const ParseTree& pt) {
    std::vector<int> out;
    for (const Node* n : detail::single_cars(g, pt)) out.push_back(n->config);
    return out;
}

/// Pattern id of the tree's layout node, or -1 if the tree has none.
inline int pattern_of(const AndOrGraph& g, const ParseTree& pt) {
    for (const auto& pn : pt.nodes)
        if (g.node(pn.node).role == NodeRole::Pattern) return g.node(pn.node).pattern;
    return -1;
}

}  // namespace andor
