#pragma once

#include <optional>
#include <vector>

#include "andor/infer.hpp"

namespace andor {

/// Ground-truth or predicted box set; nullopt is the background output.
using BoxSet = std::optional<std::vector<Box>>;

struct LossSpec {
    double ell = 1.0;
    double tau = 0.5;
};

inline constexpr LossSpec kMarginLoss{1.0, 0.5};
inline constexpr LossSpec kOutputLoss{kInf, 0.7};

inline void check_loss_spec(const LossSpec& s) {
    if (!(s.ell > 0)) throw ContractError("loss penalty must be positive");
    if (!(s.tau > 0 && s.tau < 1)) throw ContractError("overlap threshold must lie in (0, 1)");
}

/// True if every box of y overlaps some predicted box at IoU >= tau.
inline bool covers(const std::vector<Box>& y, const std::vector<Box>& pred, double tau) {
    for (const Box& b : y) {
        bool hit = false;
        for (const Box& p : pred) hit = hit || iou(b, p) >= tau;
        if (!hit) return false;
    }
    return true;
}

/// 0 or ell. An empty prediction counts as background.
inline double loss_L(const BoxSet& y, const BoxSet& boxes, const LossSpec& spec) {
    check_loss_spec(spec);
    const bool pred_bg = !boxes || boxes->empty();
    if (!y) return pred_bg ? 0.0 : spec.ell;
    if (pred_bg) return spec.ell;
    return covers(*y, *boxes, spec.tau) ? 0.0 : spec.ell;
}

enum class LossMode { Margin, Output };

/// Fixes Or choices during inference: the root pattern id (-1 free) and one
/// single-car node per slot (empty for free).
struct Supervision {
    int pattern = -1;
    std::vector<NodeId> cars;
    bool empty() const { return pattern < 0 && cars.empty(); }
};

struct AugmentedResult {
    ParseTree pt;          // empty for the background output
    double score = 0;      // model score of pt, 0 for background
    double loss = 0;
    double adjusted = 0;   // score + loss (margin) or score (output)
    bool feasible = true;  // output mode: some placement covers y
    bool background() const { return pt.empty(); }
};

struct AugmentOptions {
    /// Search radius in cells around the anchor of a deformable slot edge.
    int slot_radius = 3;
};

namespace detail {

struct SlotPick {
    double value = kNegInf;
    int car = -1;  // index into the slot Or's children; -1 when the root child is the car
    Position pos;
    Point delta;
};

/// Largest reach of any single-car model box from its node position, in cells.
inline int car_reach(const AndOrGraph& g) {
    int r = 0;
    for (const auto& n : g.nodes)
        if (n.role == NodeRole::SingleCar)
            r = std::max({r, std::abs(n.model_box.x), std::abs(n.model_box.y), std::abs(n.model_box.x + n.model_box.w),
                          std::abs(n.model_box.y + n.model_box.h)});
    return r;
}

}  // namespace detail

/// Loss-augmented argmax over root placements. Margin mode maximises
/// score + L(1, 0.5) and includes the background output at score 0; output
/// mode keeps only placements covering all of y at IoU 0.7. With a label, only
/// placements with some car box meeting the union of y are searched.
/// Root children must be single cars or patterns over car slots. A deformable
/// slot edge is searched within opt.slot_radius cells of its anchor.
inline AugmentedResult loss_adjusted_inference(ScoreMaps& maps, const BoxSet& y, LossMode mode,
                                               const Supervision& sup = {}, const AugmentOptions& opt = {}) {
    const AndOrGraph& g = maps.graph();
    const GraphMeta& meta = g.meta;
    AugmentedResult best;

    if (!y) {
        if (mode == LossMode::Output) return best;
        double top = kNegInf;
        Position at;
        for (int l = 0; l < maps.num_levels(); ++l) {
            const ScoreGrid& m = maps.node_map(g.root, l);
            for (int yy = 0; yy < m.height; ++yy)
                for (int x = 0; x < m.width; ++x)
                    if (m(x, yy) > top) {
                        top = m(x, yy);
                        at = {l, x, yy};
                    }
        }
        if (top != kNegInf && top + 1 > 0) {
            best.pt = maps.extract(g.root, at);
            best.score = top;
            best.loss = 1;
            best.adjusted = top + 1;
        }
        return best;
    }

    if (y->empty()) throw ContractError("label with no boxes");
    if (y->size() > 6) throw ContractError("loss-augmented inference takes at most 6 boxes per label");
    const auto n = static_cast<unsigned>(y->size());
    const double tau = mode == LossMode::Margin ? kMarginLoss.tau : kOutputLoss.tau;
    const unsigned full = (1u << n) - 1, touch = 1u << n;
    const std::size_t M = std::size_t{1} << (n + 1);
    const Box uy = union_box(*y);
    auto mask_of = [&](const Box& b) {
        unsigned m = 0;
        for (unsigned k = 0; k < n; ++k)
            if (iou((*y)[k], b) >= tau) m |= 1u << k;
        if (intersection_area(b, uy) > 0) m |= touch;
        return m;
    };

    if (mode == LossMode::Margin) {
        best.loss = kMarginLoss.ell;
        best.adjusted = kMarginLoss.ell;
    } else {
        best.feasible = false;
        best.adjusted = kNegInf;
    }

    struct Winner {
        Position pos;
        EdgeId root_edge = -1;
        std::vector<detail::SlotPick> picks;
    } win;
    bool found = false;

    // per (car, level): its score map and the coverage mask of each placement, filled lazily
    constexpr unsigned kUnset = ~0u;
    struct CarLevel {
        const ScoreGrid* score = nullptr;
        Grid<unsigned> mask;
    };
    const std::size_t L = static_cast<std::size_t>(maps.num_levels());
    std::vector<CarLevel> car_level(g.nodes.size() * L);
    auto lookup = [&](NodeId car, const Position& q) -> std::pair<double, unsigned> {
        if (!maps.has_level(q.level)) return {kNegInf, 0};
        CarLevel& cl = car_level[static_cast<std::size_t>(car) * L + static_cast<std::size_t>(q.level)];
        if (!cl.score) {
            cl.score = &maps.node_map(car, q.level);
            cl.mask = Grid<unsigned>(cl.score->width, cl.score->height, kUnset);
        }
        if (!cl.score->contains(q.x, q.y)) return {kNegInf, 0};
        const double v = (*cl.score)(q.x, q.y);
        if (v == kNegInf) return {v, 0};
        unsigned& m = cl.mask(q.x, q.y);
        if (m == kUnset) m = mask_of(cells_to_pixels(meta, q, g.node(car).model_box));
        return {v, m};
    };
    std::vector<double> pen;

    const int reach = detail::car_reach(g) + opt.slot_radius + 1;
    const Node& root = g.node(g.root);
    std::vector<std::vector<detail::SlotPick>> pick;
    std::vector<std::vector<double>> stage;
    std::vector<std::vector<unsigned>> from;

    for (const EdgeId re : root.children) {
        const NodeId R = g.edge(re).child;
        const Node& rn = g.node(R);
        const bool pattern = rn.role == NodeRole::Pattern;
        if (!pattern && rn.role != NodeRole::SingleCar)
            throw ContractError("root children must be patterns or single cars");
        if (sup.pattern >= 0 && (!pattern || rn.pattern != sup.pattern)) continue;
        const std::size_t slots = pattern ? rn.children.size() : 1;
        if (!sup.cars.empty() && sup.cars.size() != slots) continue;
        if (!pattern && !sup.cars.empty() && sup.cars[0] != R) continue;

        for (int l = 0; l < maps.num_levels(); ++l) {
            const ScoreGrid& rm = maps.node_map(R, l);
            for (int py = 0; py < rm.height; ++py)
                for (int px = 0; px < rm.width; ++px) {
                    if (rm(px, py) == kNegInf) continue;
                    const Position p{l, px, py};

                    bool near = false;
                    for (std::size_t j = 0; j < slots && !near; ++j) {
                        const Position a = pattern ? g.child_anchor(p, rn.children[j]) : p;
                        const Box zone = cells_to_pixels(meta, a, {-reach, -reach, 2 * reach, 2 * reach});
                        near = intersection_area(zone, uy) > 0;
                    }
                    if (!near) continue;

                    pick.resize(slots);
                    for (auto& pk : pick) pk.assign(M, detail::SlotPick{});
                    bool dead = false;
                    for (std::size_t j = 0; j < slots && !dead; ++j) {
                        auto& sb = pick[j];
                        auto consider = [&](int idx, NodeId car, const Position& q, Point d, double penalty) {
                            const auto [v, m] = lookup(car, q);
                            if (v == kNegInf) return;
                            if (v - penalty > sb[m].value) sb[m] = {v - penalty, idx, q, d};
                        };
                        if (!pattern) {
                            consider(-1, R, p, {}, 0.0);
                        } else {
                            const EdgeId se = rn.children[j];
                            const Node& slot = g.node(g.edge(se).child);
                            const Position a = g.child_anchor(p, se);
                            const int r = g.edge(se).deform_offset >= 0 ? opt.slot_radius : 0;
                            const auto def = g.deformation(se);
                            pen.clear();
                            for (int dy = -r; dy <= r; ++dy)
                                for (int dx = -r; dx <= r; ++dx) {
                                    const auto f = deformation_features(dx, dy);
                                    pen.push_back(def[0] * f[0] + def[1] * f[1] + def[2] * f[2] + def[3] * f[3]);
                                }
                            for (std::size_t c = 0; c < slot.children.size(); ++c) {
                                const NodeId car = g.edge(slot.children[c]).child;
                                if (!sup.cars.empty() && car != sup.cars[j]) continue;
                                std::size_t k = 0;
                                for (int dy = -r; dy <= r; ++dy)
                                    for (int dx = -r; dx <= r; ++dx)
                                        consider(static_cast<int>(c), car, {a.level, a.x + dx, a.y + dy}, {dx, dy},
                                                 pen[k++]);
                            }
                        }
                        dead = std::all_of(sb.begin(), sb.end(), [](const auto& s) { return s.value == kNegInf; });
                    }
                    if (dead) continue;

                    // combine slots by OR over coverage masks
                    stage.assign(slots + 1, std::vector<double>(M, kNegInf));
                    from.assign(slots, std::vector<unsigned>(M, 0));
                    stage[0][0] = pattern ? g.bias(R) : 0.0;
                    for (std::size_t j = 0; j < slots; ++j)
                        for (std::size_t m1 = 0; m1 < M; ++m1) {
                            if (stage[j][m1] == kNegInf) continue;
                            for (std::size_t m2 = 0; m2 < M; ++m2) {
                                if (pick[j][m2].value == kNegInf) continue;
                                const double v = stage[j][m1] + pick[j][m2].value;
                                if (v > stage[j + 1][m1 | m2]) {
                                    stage[j + 1][m1 | m2] = v;
                                    from[j][m1 | m2] = static_cast<unsigned>(m1);
                                }
                            }
                        }

                    for (std::size_t mm = 0; mm < M; ++mm) {
                        const double s = stage[slots][mm];
                        if (s == kNegInf || !(mm & touch)) continue;
                        const bool cov = (mm & full) == full;
                        if (mode == LossMode::Output && !cov) continue;
                        const double loss = cov ? 0.0 : kMarginLoss.ell;
                        const double adj = mode == LossMode::Margin ? s + loss : s;
                        if (!(adj > best.adjusted)) continue;
                        best.adjusted = adj;
                        best.score = s;
                        best.loss = loss;
                        best.feasible = true;
                        found = true;
                        win.pos = p;
                        win.root_edge = re;
                        win.picks.assign(slots, {});
                        std::size_t cur = mm;
                        for (std::size_t j = slots; j-- > 0;) {
                            const std::size_t prev = from[j][cur];
                            // the slot's mask is any m2 with prev | m2 == cur and a matching value
                            for (std::size_t m2 = 0; m2 < M; ++m2)
                                if ((prev | m2) == cur && pick[j][m2].value != kNegInf &&
                                    stage[j][prev] + pick[j][m2].value == stage[j + 1][cur]) {
                                    win.picks[j] = pick[j][m2];
                                    break;
                                }
                            cur = prev;
                        }
                    }
                }
        }
    }

    if (!found) {
        if (mode == LossMode::Output) best.adjusted = kNegInf;
        return best;
    }

    // root -> (pattern -> slots -> cars | car), then optimal subtrees below the cars
    ParseTree& pt = best.pt;
    const NodeId R = g.edge(win.root_edge).child;
    pt.nodes.push_back({g.root, win.pos, -1, -1, {}, win.root_edge});
    pt.nodes.push_back({R, win.pos, 0, win.root_edge, {}, -1});
    std::deque<int> queue;
    if (g.node(R).role == NodeRole::SingleCar) {
        queue.push_back(1);
    } else {
        const Node& rn = g.node(R);
        std::vector<int> slot_idx;
        for (std::size_t j = 0; j < rn.children.size(); ++j) {
            const EdgeId se = rn.children[j];
            const auto& pk = win.picks[j];
            const EdgeId ce = g.node(g.edge(se).child).children[static_cast<std::size_t>(pk.car)];
            pt.nodes.push_back({g.edge(se).child, pk.pos, 1, se, pk.delta, ce});
            slot_idx.push_back(static_cast<int>(pt.nodes.size()) - 1);
        }
        for (std::size_t j = 0; j < rn.children.size(); ++j) {
            const int si = slot_idx[j];
            const EdgeId ce = pt.nodes[static_cast<std::size_t>(si)].chosen;
            pt.nodes.push_back({g.edge(ce).child, win.picks[j].pos, si, ce, {}, -1});
            queue.push_back(static_cast<int>(pt.nodes.size()) - 1);
        }
    }
    maps.expand(pt, queue);
    pt.score = best.score;
    return best;
}

}  // namespace andor
