#pragma once

#include <array>
#include <span>
#include <string>
#include <vector>

#include "andor/common.hpp"
#include "andor/feature.hpp"

namespace andor {

using NodeId = int;
using EdgeId = int;
using FilterId = int;

enum class NodeKind { And, Or, Terminal };

/// Layer a node occupies in the grammar. Typing rules between layers are
/// enforced by validate().
enum class NodeRole {
    RootOr,       // selects among multi-car layouts and single cars
    Pattern,      // And: one multi-car layout (or the 1-car layout)
    CarSlot,      // Or: the i-th car, chooses a (view, occlusion) single-car branch
    SingleCar,    // And: one viewpoint + occlusion configuration
    PartCluster,  // Or: optional part clusters of a single car
    PartGroup,    // And: one optional part cluster
    Terminal,
};

inline NodeKind kind_of(NodeRole r) {
    switch (r) {
        case NodeRole::RootOr:
        case NodeRole::CarSlot:
        case NodeRole::PartCluster: return NodeKind::Or;
        case NodeRole::Terminal: return NodeKind::Terminal;
        default: return NodeKind::And;
    }
}

inline const char* role_name(NodeRole r) {
    switch (r) {
        case NodeRole::RootOr: return "root";
        case NodeRole::Pattern: return "pattern";
        case NodeRole::CarSlot: return "carslot";
        case NodeRole::SingleCar: return "car";
        case NodeRole::PartCluster: return "cluster";
        case NodeRole::PartGroup: return "group";
        case NodeRole::Terminal: return "terminal";
    }
    return "?";
}

/// Rectangle in cells relative to a node position.
struct CellBox {
    int x = 0, y = 0, w = 0, h = 0;
    bool operator==(const CellBox&) const = default;
};

struct Node {
    NodeRole role = NodeRole::Terminal;
    std::vector<EdgeId> children;
    int bias_offset = -1;       // And nodes
    int pattern = -1;           // Pattern nodes: layout cluster id
    int view = -1, config = -1; // SingleCar nodes
    CellBox model_box;          // SingleCar nodes: car box relative to the node position
    FilterId filter = -1;       // Terminal nodes
    std::string label;

    NodeKind kind() const { return kind_of(role); }
};

/// Parent-to-child edge. Placement parameters live here so a shared child can
/// carry distinct anchors and deformations per parent.
struct Edge {
    NodeId parent = -1;
    NodeId child = -1;
    Point anchor;
    int scale = 0;           // 1 places the child at twice the parent resolution
    int deform_offset = -1;  // -1: rigid, displacement fixed at (0, 0)
};

struct Filter {
    int width = 0;
    int height = 0;
    int offset = -1;
    int size() const { return width * height * kHogChannels; }
};

struct GraphMeta {
    int levels_per_octave = 5;
    int cell_size = 8;
    int views = 1;
    int channels = kHogChannels;
    int padding = 0;
    /// Enables deformation on pattern-to-car-slot edges.
    bool slot_deformation = false;
    /// Largest slot displacement in cells along each axis, 0 for unbounded.
    int slot_radius = 0;
};

/// Lattice position in a feature pyramid (padded coordinates).
struct Position {
    int level = 0, x = 0, y = 0;
    bool operator==(const Position&) const = default;
};

inline constexpr double kMinQuadraticDeformation = 0.001;

inline std::array<double, 4> deformation_features(int dx, int dy) {
    return {static_cast<double>(dx) * dx, static_cast<double>(dx), static_cast<double>(dy) * dy,
            static_cast<double>(dy)};
}

/// The And-Or grammar G = (V, E, Theta). All parameters live in one flat
/// vector `theta`; nodes, edges and filters address it by offset.
class AndOrGraph {
public:
    GraphMeta meta;
    std::vector<Node> nodes;
    std::vector<Edge> edges;
    std::vector<Filter> filters;
    NodeId root = -1;
    std::vector<double> theta;

    const Node& node(NodeId id) const { return nodes.at(static_cast<std::size_t>(id)); }
    Node& node(NodeId id) { return nodes.at(static_cast<std::size_t>(id)); }
    const Edge& edge(EdgeId id) const { return edges.at(static_cast<std::size_t>(id)); }
    int dimension() const { return static_cast<int>(theta.size()); }

    NodeId add_node(NodeRole role, std::string label = {}) {
        Node n;
        n.role = role;
        n.label = std::move(label);
        if (n.kind() == NodeKind::And) n.bias_offset = allocate(1);
        nodes.push_back(std::move(n));
        return static_cast<NodeId>(nodes.size() - 1);
    }

    FilterId add_filter(int width, int height) {
        ANDOR_REQUIRE(width >= 1 && height >= 1, "filter dims must be >= 1");
        Filter f{width, height, -1};
        f.offset = allocate(f.size());
        filters.push_back(f);
        return static_cast<FilterId>(filters.size() - 1);
    }

    NodeId add_terminal(FilterId filter, std::string label = {}) {
        const NodeId id = add_node(NodeRole::Terminal, std::move(label));
        nodes[id].filter = filter;
        return id;
    }

    /// Adds an edge; a deformable edge gets 4 parameters initialised to `def`.
    EdgeId add_edge(NodeId parent, NodeId child, Point anchor = {}, int scale = 0, bool deformable = false,
                    std::array<double, 4> def = {0.1, 0.0, 0.1, 0.0}) {
        Edge e{parent, child, anchor, scale, -1};
        if (deformable) {
            e.deform_offset = allocate(4);
            std::copy(def.begin(), def.end(), theta.begin() + e.deform_offset);
        }
        edges.push_back(e);
        const EdgeId id = static_cast<EdgeId>(edges.size() - 1);
        nodes.at(static_cast<std::size_t>(parent)).children.push_back(id);
        return id;
    }

    std::span<double> filter_weights(FilterId f) {
        const auto& fl = filters.at(static_cast<std::size_t>(f));
        return {theta.data() + fl.offset, static_cast<std::size_t>(fl.size())};
    }
    std::span<const double> filter_weights(FilterId f) const {
        const auto& fl = filters.at(static_cast<std::size_t>(f));
        return {theta.data() + fl.offset, static_cast<std::size_t>(fl.size())};
    }
    double& bias(NodeId n) { return theta.at(static_cast<std::size_t>(node(n).bias_offset)); }
    double bias(NodeId n) const { return theta.at(static_cast<std::size_t>(node(n).bias_offset)); }

    std::array<double, 4> deformation(EdgeId e) const {
        const int o = edge(e).deform_offset;
        if (o < 0) return {0, 0, 0, 0};
        return {theta[o], theta[o + 1], theta[o + 2], theta[o + 3]};
    }

    /// Terminal children placed through this edge read from this level offset.
    Position child_anchor(const Position& p, EdgeId e) const { return child_anchor(p, edge(e)); }
    Position child_anchor(const Position& p, const Edge& e) const {
        const int f = 1 << e.scale;
        return {p.level - e.scale * meta.levels_per_octave, f * (p.x - meta.padding) + meta.padding + e.anchor.x,
                f * (p.y - meta.padding) + meta.padding + e.anchor.y};
    }

    std::vector<int> deformation_offsets() const {
        std::vector<int> out;
        for (const auto& e : edges)
            if (e.deform_offset >= 0) out.push_back(e.deform_offset);
        return out;
    }

    std::vector<NodeId> nodes_with_role(NodeRole r) const {
        std::vector<NodeId> out;
        for (std::size_t i = 0; i < nodes.size(); ++i)
            if (nodes[i].role == r) out.push_back(static_cast<NodeId>(i));
        return out;
    }

private:
    int allocate(int n) {
        const int off = static_cast<int>(theta.size());
        theta.resize(theta.size() + static_cast<std::size_t>(n), 0.0);
        return off;
    }
};

/// Raises every quadratic deformation coefficient to at least 0.001.
inline void clamp_deformation(const AndOrGraph& g, std::vector<double>& theta) {
    for (const auto& e : g.edges) {
        if (e.deform_offset < 0) continue;
        auto& ax = theta[static_cast<std::size_t>(e.deform_offset)];
        auto& ay = theta[static_cast<std::size_t>(e.deform_offset) + 2];
        ax = std::max(ax, kMinQuadraticDeformation);
        ay = std::max(ay, kMinQuadraticDeformation);
    }
}
inline void clamp_deformation(AndOrGraph& g) { clamp_deformation(g, g.theta); }

// ------ validation -------

struct Diagnostic {
    enum class Kind { Cycle, WrongChildType, OrphanParameter, ParameterOverlap, MissingChildren, BadRoot, BadEdge, Clamp };
    Kind kind;
    std::string message;
    std::vector<NodeId> nodes;
};

inline const char* diagnostic_name(Diagnostic::Kind k) {
    switch (k) {
        case Diagnostic::Kind::Cycle: return "cycle";
        case Diagnostic::Kind::WrongChildType: return "wrong child type";
        case Diagnostic::Kind::OrphanParameter: return "orphan parameter";
        case Diagnostic::Kind::ParameterOverlap: return "parameter overlap";
        case Diagnostic::Kind::MissingChildren: return "missing children";
        case Diagnostic::Kind::BadRoot: return "bad root";
        case Diagnostic::Kind::BadEdge: return "bad edge";
        case Diagnostic::Kind::Clamp: return "deformation below clamp";
    }
    return "?";
}

namespace detail {

inline bool allowed_child(NodeRole parent, NodeRole child) {
    switch (parent) {
        case NodeRole::RootOr: return child == NodeRole::Pattern || child == NodeRole::SingleCar;
        case NodeRole::Pattern: return child == NodeRole::CarSlot;
        case NodeRole::CarSlot: return child == NodeRole::SingleCar;
        case NodeRole::SingleCar: return child == NodeRole::Terminal || child == NodeRole::PartCluster;
        case NodeRole::PartCluster: return child == NodeRole::PartGroup;
        case NodeRole::PartGroup: return child == NodeRole::Terminal;
        case NodeRole::Terminal: return false;
    }
    return false;
}

}  // namespace detail

/// Structural checks: DAG, layer typing, parameter housing and clamping.
/// Returns an empty list iff the graph is well formed.
inline std::vector<Diagnostic> validate(const AndOrGraph& g) {
    using K = Diagnostic::Kind;
    std::vector<Diagnostic> out;
    const int n = static_cast<int>(g.nodes.size());
    auto report = [&](K k, std::string msg, std::vector<NodeId> ids) {
        out.push_back({k, std::move(msg), std::move(ids)});
    };

    if (g.root < 0 || g.root >= n) {
        report(K::BadRoot, "root id out of range", {});
        return out;
    }
    if (g.node(g.root).role != NodeRole::RootOr) report(K::BadRoot, "root must be the root Or-node", {g.root});
    for (int i = 0; i < n; ++i)
        if (i != g.root && g.nodes[i].role == NodeRole::RootOr)
            report(K::BadRoot, "more than one root Or-node", {i});

    for (std::size_t ei = 0; ei < g.edges.size(); ++ei) {
        const Edge& e = g.edges[ei];
        if (e.parent < 0 || e.parent >= n || e.child < 0 || e.child >= n) {
            report(K::BadEdge, "edge " + std::to_string(ei) + " references a missing node", {});
            continue;
        }
        const auto& kids = g.nodes[e.parent].children;
        if (std::count(kids.begin(), kids.end(), static_cast<EdgeId>(ei)) != 1)
            report(K::BadEdge, "edge " + std::to_string(ei) + " not listed exactly once by its parent", {e.parent});
        if (e.scale != 0 && e.scale != 1)
            report(K::BadEdge, "edge " + std::to_string(ei) + " scale must be 0 or 1", {e.parent, e.child});
        const NodeKind pk = g.nodes[e.parent].kind(), ck = g.nodes[e.child].kind();
        if (pk == NodeKind::Or && (e.anchor != Point{} || e.scale != 0 || e.deform_offset >= 0))
            report(K::BadEdge, "Or-node edges carry no placement parameters", {e.parent, e.child});
        if (pk == NodeKind::And && ck == NodeKind::Or && e.deform_offset >= 0 &&
            !(g.meta.slot_deformation && g.nodes[e.child].role == NodeRole::CarSlot))
            report(K::BadEdge, "deformation on an And-to-Or edge requires slot deformation", {e.parent, e.child});
        if (!detail::allowed_child(g.nodes[e.parent].role, g.nodes[e.child].role))
            report(K::WrongChildType,
                   std::string(role_name(g.nodes[e.parent].role)) + " node " + std::to_string(e.parent) +
                       " cannot have a " + role_name(g.nodes[e.child].role) + " child " + std::to_string(e.child),
                   {e.parent, e.child});
    }

    for (int i = 0; i < n; ++i) {
        const Node& nd = g.nodes[i];
        for (EdgeId c : nd.children)
            if (c < 0 || c >= static_cast<int>(g.edges.size()) || g.edges[c].parent != i)
                report(K::BadEdge, "node " + std::to_string(i) + " lists a foreign edge", {i});
        if (nd.kind() != NodeKind::Terminal && nd.children.empty())
            report(K::MissingChildren, "node " + std::to_string(i) + " has no children", {i});
        if (nd.kind() == NodeKind::Terminal) {
            if (!nd.children.empty()) report(K::WrongChildType, "terminal " + std::to_string(i) + " has children", {i});
            if (nd.filter < 0 || nd.filter >= static_cast<int>(g.filters.size()))
                report(K::OrphanParameter, "terminal " + std::to_string(i) + " has no filter", {i});
        }
        if (nd.kind() == NodeKind::And && nd.bias_offset < 0)
            report(K::OrphanParameter, "And-node " + std::to_string(i) + " has no bias", {i});
    }

    // DFS cycle detection
    {
        std::vector<int> color(n, 0);
        std::vector<std::pair<int, std::size_t>> stack;
        for (int s = 0; s < n; ++s) {
            if (color[s]) continue;
            stack.push_back({s, 0});
            color[s] = 1;
            while (!stack.empty()) {
                auto& [v, idx] = stack.back();
                const auto& kids = g.nodes[v].children;
                if (idx < kids.size()) {
                    const EdgeId e = kids[idx++];
                    if (e < 0 || e >= static_cast<int>(g.edges.size())) continue;
                    const int c = g.edges[e].child;
                    if (c < 0 || c >= n) continue;
                    if (color[c] == 1) {
                        report(K::Cycle, "cycle through edge " + std::to_string(v) + " -> " + std::to_string(c), {v, c});
                    } else if (color[c] == 0) {
                        color[c] = 1;
                        stack.push_back({c, 0});
                    }
                } else {
                    color[v] = 2;
                    stack.pop_back();
                }
            }
        }
    }

    // every theta slot owned exactly once
    {
        std::vector<int> owner(g.theta.size(), 0);
        auto claim = [&](int off, int len, const std::string& what) {
            if (off < 0 || off + len > static_cast<int>(g.theta.size())) {
                report(K::OrphanParameter, what + " offset out of range", {});
                return;
            }
            for (int k = 0; k < len; ++k) ++owner[static_cast<std::size_t>(off + k)];
        };
        for (std::size_t f = 0; f < g.filters.size(); ++f) {
            if (g.filters[f].width < 1 || g.filters[f].height < 1)
                report(K::BadEdge, "filter " + std::to_string(f) + " has empty dims", {});
            claim(g.filters[f].offset, g.filters[f].size(), "filter " + std::to_string(f));
        }
        for (const auto& e : g.edges)
            if (e.deform_offset >= 0) claim(e.deform_offset, 4, "deformation");
        for (const auto& nd : g.nodes)
            if (nd.bias_offset >= 0) claim(nd.bias_offset, 1, "bias");
        std::vector<int> used_filters(g.filters.size(), 0);
        for (const auto& nd : g.nodes)
            if (nd.kind() == NodeKind::Terminal && nd.filter >= 0 && nd.filter < static_cast<int>(g.filters.size()))
                used_filters[static_cast<std::size_t>(nd.filter)] = 1;
        for (std::size_t f = 0; f < used_filters.size(); ++f)
            if (!used_filters[f]) report(K::OrphanParameter, "filter " + std::to_string(f) + " unused", {});
        for (std::size_t k = 0; k < owner.size(); ++k) {
            if (owner[k] == 0) {
                report(K::OrphanParameter, "parameter slot " + std::to_string(k) + " has no owner", {});
                break;
            }
            if (owner[k] > 1) {
                report(K::ParameterOverlap, "parameter slot " + std::to_string(k) + " owned twice", {});
                break;
            }
        }
        for (const auto& e : g.edges) {
            if (e.deform_offset < 0 || e.deform_offset + 4 > static_cast<int>(g.theta.size())) continue;
            const double ax = g.theta[static_cast<std::size_t>(e.deform_offset)];
            const double ay = g.theta[static_cast<std::size_t>(e.deform_offset) + 2];
            if (!(ax >= kMinQuadraticDeformation) || !(ay >= kMinQuadraticDeformation))
                report(K::Clamp, "quadratic deformation below 0.001 on edge " + std::to_string(e.parent) + " -> " +
                                     std::to_string(e.child),
                       {e.parent, e.child});
        }
        for (double v : g.theta)
            if (!std::isfinite(v)) {
                report(K::OrphanParameter, "non-finite parameter", {});
                break;
            }
    }
    return out;
}

inline bool has_diagnostic(const std::vector<Diagnostic>& d, Diagnostic::Kind k) {
    return std::any_of(d.begin(), d.end(), [&](const Diagnostic& x) { return x.kind == k; });
}

/// Throws ContractError listing every diagnostic if the graph is malformed.
inline void require_valid(const AndOrGraph& g) {
    const auto d = validate(g);
    if (d.empty()) return;
    std::string msg = "invalid And-Or graph:";
    for (const auto& x : d) msg += std::string("\n  ") + diagnostic_name(x.kind) + ": " + x.message;
    throw ContractError(msg);
}

}  // namespace andor
