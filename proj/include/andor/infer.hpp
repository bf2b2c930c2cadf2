#pragma once

#include <deque>
#include <iostream>
#include <optional>
#include <set>

#include "andor/aog.hpp"
#include "andor/dt.hpp"
#include "andor/feature.hpp"
#include "andor/parse_tree.hpp"

namespace andor {

/// Cross-correlation of a filter with a feature grid; the response at (x, y)
/// puts the filter's top-left cell at (x, y). Placements that do not fit are -inf.
inline ScoreGrid filter_response(const FeatureGrid& fg, std::span<const double> w, int fw, int fh) {
    ScoreGrid out(fg.width, fg.height, kNegInf);
    const std::size_t row = static_cast<std::size_t>(fw) * kHogChannels;
    for (int y = 0; y + fh <= fg.height; ++y)
        for (int x = 0; x + fw <= fg.width; ++x) {
            double s[4] = {0, 0, 0, 0};
            for (int fy = 0; fy < fh; ++fy) {
                const double* f = fg.cell(x, y + fy);
                const double* k = w.data() + fy * row;
                std::size_t i = 0;
                for (; i + 4 <= row; i += 4) {
                    s[0] += f[i] * k[i];
                    s[1] += f[i + 1] * k[i + 1];
                    s[2] += f[i + 2] * k[i + 2];
                    s[3] += f[i + 3] * k[i + 3];
                }
                for (; i < row; ++i) s[0] += f[i] * k[i];
            }
            out(x, y) = (s[0] + s[1]) + (s[2] + s[3]);
        }
    return out;
}

/// Memoised bottom-up score maps of every (node, level) pair, computed on
/// demand. Shared nodes and deformed edge maps are evaluated once.
class ScoreMaps {
public:
    ScoreMaps(const AndOrGraph& g, const FeaturePyramid& pyr)
        : g_(g), pyr_(pyr), node_(g.nodes.size()), choice_(g.nodes.size()), edge_(g.edges.size()) {
        const std::size_t L = static_cast<std::size_t>(pyr.num_levels());
        for (auto& v : node_) v.resize(L);
        for (auto& v : choice_) v.resize(L);
        for (auto& v : edge_) v.resize(L);
        response_.resize(g.filters.size());
        for (auto& v : response_) v.resize(L);
        ANDOR_REQUIRE(pyr.levels_per_octave == g.meta.levels_per_octave && pyr.cell_size == g.meta.cell_size &&
                          pyr.padding == g.meta.padding,
                      "pyramid settings do not match the model");
    }

    const AndOrGraph& graph() const { return g_; }
    const FeaturePyramid& pyramid() const { return pyr_; }
    int num_levels() const { return pyr_.num_levels(); }
    bool has_level(int l) const { return l >= 0 && l < pyr_.num_levels(); }

    /// Computes every filter response reachable from the root, concurrently.
    void precompute(unsigned threads = default_threads()) {
        std::set<std::pair<int, int>> seen, need;
        std::vector<std::pair<int, int>> stack;
        for (int l = 0; l < num_levels(); ++l) stack.push_back({g_.root, l});
        while (!stack.empty()) {
            const auto [n, l] = stack.back();
            stack.pop_back();
            if (!seen.insert({n, l}).second) continue;
            const Node& nd = g_.node(n);
            if (nd.kind() == NodeKind::Terminal) {
                need.insert({nd.filter, l});
                continue;
            }
            if (nd.kind() == NodeKind::And && !std::all_of(nd.children.begin(), nd.children.end(), [&](EdgeId e) {
                    return has_level(l - g_.edge(e).scale * g_.meta.levels_per_octave);
                }))
                continue;
            for (EdgeId e : nd.children) {
                const int lc = l - g_.edge(e).scale * g_.meta.levels_per_octave;
                if (has_level(lc)) stack.push_back({g_.edge(e).child, lc});
            }
        }
        const std::vector<std::pair<int, int>> jobs(need.begin(), need.end());
        parallel_for(jobs.size(), [&](std::size_t i) { response(jobs[i].first, jobs[i].second); }, threads);
    }

    const ScoreGrid& response(FilterId f, int level) {
        auto& slot = response_[static_cast<std::size_t>(f)][static_cast<std::size_t>(level)];
        if (!slot) {
            const Filter& fl = g_.filters[static_cast<std::size_t>(f)];
            slot = filter_response(pyr_.levels[static_cast<std::size_t>(level)], g_.filter_weights(f), fl.width,
                                   fl.height);
        }
        return *slot;
    }

    /// Score map of a node at a level, before the parent places it.
    const ScoreGrid& node_map(NodeId n, int level) {
        ANDOR_REQUIRE(has_level(level), "level outside pyramid");
        auto& slot = node_[static_cast<std::size_t>(n)][static_cast<std::size_t>(level)];
        if (slot) return *slot;
        const Node& nd = g_.node(n);
        const auto& lv = pyr_.levels[static_cast<std::size_t>(level)];
        if (nd.kind() == NodeKind::Terminal) {
            slot = response(nd.filter, level);
        } else if (nd.kind() == NodeKind::Or) {
            ScoreGrid s(lv.width, lv.height, kNegInf);
            Grid<int> c(lv.width, lv.height, 0);
            for (std::size_t k = 0; k < nd.children.size(); ++k) {
                const ScoreGrid& m = node_map(g_.edge(nd.children[k]).child, level);
                for (std::size_t i = 0; i < s.data.size(); ++i)
                    if (m.data[i] > s.data[i]) {
                        s.data[i] = m.data[i];
                        c.data[i] = static_cast<int>(k);
                    }
            }
            choice_[static_cast<std::size_t>(n)][static_cast<std::size_t>(level)] = std::move(c);
            slot = std::move(s);
        } else {
            ScoreGrid s(lv.width, lv.height, g_.bias(n));
            bool feasible = true;
            for (EdgeId e : nd.children)
                if (!has_level(level - g_.edge(e).scale * g_.meta.levels_per_octave)) feasible = false;
            if (!feasible) {
                std::fill(s.data.begin(), s.data.end(), kNegInf);
            } else {
                for (EdgeId e : nd.children) {
                    const Position a0 = g_.child_anchor(Position{level, 0, 0}, e);
                    const ScoreGrid& m = edge_map(e, a0.level);
                    for (int y = 0; y < s.height; ++y)
                        for (int x = 0; x < s.width; ++x) {
                            double& v = s(x, y);
                            if (v == kNegInf) continue;
                            const Position a = g_.child_anchor(Position{level, x, y}, e);
                            v = m.contains(a.x, a.y) ? v + m(a.x, a.y) : kNegInf;
                        }
                }
            }
            slot = std::move(s);
        }
        return *slot;
    }

    /// Child map as seen through an edge: distance-transformed if the edge
    /// is deformable, the raw child map otherwise. `level` is the child's level.
    const ScoreGrid& edge_map(EdgeId e, int level) {
        const Edge& ed = g_.edge(e);
        if (ed.deform_offset < 0) return node_map(ed.child, level);
        return deformed(e, level).values;
    }

    const DeformedGrid& deformed(EdgeId e, int level) {
        const Edge& ed = g_.edge(e);
        ANDOR_REQUIRE(ed.deform_offset >= 0, "edge is rigid");
        auto& slot = edge_[static_cast<std::size_t>(e)][static_cast<std::size_t>(level)];
        if (!slot) {
            const bool bounded = g_.meta.slot_radius > 0 && g_.node(ed.child).role == NodeRole::CarSlot;
            slot = bounded ? bounded_distance_transform(node_map(ed.child, level), g_.deformation(e), g_.meta.slot_radius)
                           : distance_transform(node_map(ed.child, level), g_.deformation(e));
        }
        return *slot;
    }

    /// Index into the Or node's child list chosen at a position.
    int choice(NodeId n, const Position& p) {
        node_map(n, p.level);
        return choice_[static_cast<std::size_t>(n)][static_cast<std::size_t>(p.level)]->operator()(p.x, p.y);
    }

    double score(NodeId n, const Position& p) {
        if (!has_level(p.level)) return kNegInf;
        const ScoreGrid& m = node_map(n, p.level);
        return m.contains(p.x, p.y) ? m(p.x, p.y) : kNegInf;
    }

    /// Value an edge contributes to its parent placed at `parent_pos`, with
    /// the optimal displacement.
    double edge_value(EdgeId e, const Position& parent_pos, Point* delta = nullptr) {
        const Position a = g_.child_anchor(parent_pos, e);
        if (delta) *delta = {};
        if (!has_level(a.level)) return kNegInf;
        const ScoreGrid& m = edge_map(e, a.level);
        if (!m.contains(a.x, a.y)) return kNegInf;
        if (delta && g_.edge(e).deform_offset >= 0) {
            const auto& d = deformed(e, a.level);
            *delta = {d.dx(a.x, a.y), d.dy(a.x, a.y)};
        }
        return m(a.x, a.y);
    }

    /// Appends the optimal subtree of `n` at `p` below tree node `parent`
    /// (reached through `via` with displacement `delta`), breadth first.
    void append_subtree(ParseTree& pt, NodeId n, const Position& p, int parent, EdgeId via, Point delta) {
        std::deque<int> queue;
        pt.nodes.push_back({n, p, parent, via, delta, -1});
        queue.push_back(static_cast<int>(pt.nodes.size()) - 1);
        expand(pt, queue);
    }

    /// Expands every queued tree node with optimal choices below it.
    void expand(ParseTree& pt, std::deque<int>& queue) {
        while (!queue.empty()) {
            const int i = queue.front();
            queue.pop_front();
            const ParseNode cur = pt.nodes[static_cast<std::size_t>(i)];
            const Node& nd = g_.node(cur.node);
            if (nd.kind() == NodeKind::Or) {
                const EdgeId e = nd.children[static_cast<std::size_t>(choice(cur.node, cur.pos))];
                pt.nodes[static_cast<std::size_t>(i)].chosen = e;
                pt.nodes.push_back({g_.edge(e).child, cur.pos, i, e, {}, -1});
                queue.push_back(static_cast<int>(pt.nodes.size()) - 1);
            } else if (nd.kind() == NodeKind::And) {
                for (EdgeId e : nd.children) {
                    Point d;
                    edge_value(e, cur.pos, &d);
                    const Position a = g_.child_anchor(cur.pos, e);
                    pt.nodes.push_back({g_.edge(e).child, {a.level, a.x + d.x, a.y + d.y}, i, e, d, -1});
                    queue.push_back(static_cast<int>(pt.nodes.size()) - 1);
                }
            }
        }
    }

    /// Optimal parse tree rooted at node `n` placed at `p`.
    ParseTree extract(NodeId n, const Position& p) {
        if (!has_level(p.level) || !node_map(n, p.level).contains(p.x, p.y))
            throw DomainError("position outside the lattice");
        const double s = score(n, p);
        if (s == kNegInf) throw DomainError("no valid parse tree at this position");
        ParseTree pt;
        append_subtree(pt, n, p, -1, -1, {});
        pt.score = s;
        return pt;
    }

private:
    const AndOrGraph& g_;
    const FeaturePyramid& pyr_;
    std::vector<std::vector<std::optional<ScoreGrid>>> node_;
    std::vector<std::vector<std::optional<Grid<int>>>> choice_;
    std::vector<std::vector<std::optional<DeformedGrid>>> edge_;
    std::vector<std::vector<std::optional<ScoreGrid>>> response_;
};

/// Runs the DP for every node and level reachable from the root.
inline ScoreMaps bottom_up(const AndOrGraph& g, const FeaturePyramid& pyr, unsigned threads = default_threads()) {
    ScoreMaps maps(g, pyr);
    maps.precompute(threads);
    for (int l = 0; l < pyr.num_levels(); ++l) maps.node_map(g.root, l);
    return maps;
}

inline ParseTree top_down(ScoreMaps& maps, const Position& p) { return maps.extract(maps.graph().root, p); }

// ------ detection -------

struct Detection {
    int image = -1;
    double score = kNegInf;
    Position root_pos;
    int pattern = -1;
    std::vector<PlacedBox> boxes;  // single-car boxes in car order, then the union box if any
    ParseTree pt;

    std::vector<PlacedBox> cars() const {
        std::vector<PlacedBox> out;
        for (const auto& b : boxes)
            if (b.role == BoxRole::SingleCar) out.push_back(b);
        return out;
    }
};

struct DetectOptions {
    double threshold = 0.0;
    /// Pyramid depth limit, 0 for unbounded.
    int max_levels = 0;
    unsigned threads = default_threads();
};

/// Pyramid with the model's resolution settings.
inline FeaturePyramid model_pyramid(const AndOrGraph& g, const Image& img, int max_levels = 0) {
    PyramidOptions po;
    po.levels_per_octave = g.meta.levels_per_octave;
    po.cell_size = g.meta.cell_size;
    po.padding = g.meta.padding;
    po.max_levels = max_levels;
    for (const auto& f : g.filters) {
        po.min_width = std::max(po.min_width, f.width);
        po.min_height = std::max(po.min_height, f.height);
    }
    return build_pyramid(img, po);
}

/// Turns a root parse tree into a detection with boxes clipped to the image.
inline Detection make_detection(const AndOrGraph& g, ParseTree pt, double img_w, double img_h) {
    Detection d;
    d.score = pt.score;
    d.root_pos = pt.root().pos;
    d.pattern = pattern_of(g, pt);
    d.boxes = parse_tree_boxes(g, pt);
    for (auto& b : d.boxes) b.box = clip_box(b.box, img_w, img_h);
    d.pt = std::move(pt);
    return d;
}

/// All root positions with a finite score >= threshold, each with its
/// optimal parse tree (before suppression).
inline std::vector<Detection> detect(const AndOrGraph& g, const FeaturePyramid& pyr, const DetectOptions& opt) {
    std::vector<Detection> out;
    if (pyr.num_levels() == 0) return out;
    ScoreMaps maps = bottom_up(g, pyr, opt.threads);
    for (int l = 0; l < pyr.num_levels(); ++l) {
        const ScoreGrid& m = maps.node_map(g.root, l);
        for (int y = 0; y < m.height; ++y)
            for (int x = 0; x < m.width; ++x) {
                const double s = m(x, y);
                if (s == kNegInf || !(s >= opt.threshold)) continue;
                out.push_back(make_detection(g, maps.extract(g.root, {l, x, y}), pyr.image_width, pyr.image_height));
            }
    }
    return out;
}

inline std::vector<Detection> detect(const AndOrGraph& g, const Image& img, const DetectOptions& opt) {
    FeaturePyramid pyr;
    try {
        pyr = model_pyramid(g, img, opt.max_levels);
    } catch (const DimensionError& e) {
        std::cerr << "warning: " << e.what() << "; no detections\n";
        return {};
    }
    if (pyr.num_levels() == 0) {
        std::cerr << "warning: image " << img.width << "x" << img.height << " too small for the model\n";
        return {};
    }
    return detect(g, pyr, opt);
}

}  // namespace andor
