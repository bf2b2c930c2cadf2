#pragma once

#include <cctype>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>
#include <sstream>
#include <string>

#include "andor/aog.hpp"

namespace andor {

inline constexpr int kModelFormatVersion = 1;

namespace detail {

inline std::string fmt17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline const std::map<std::string, NodeRole>& role_table() {
    static const std::map<std::string, NodeRole> t = {
        {"root", NodeRole::RootOr},        {"pattern", NodeRole::Pattern},  {"carslot", NodeRole::CarSlot},
        {"car", NodeRole::SingleCar},      {"cluster", NodeRole::PartCluster}, {"group", NodeRole::PartGroup},
        {"terminal", NodeRole::Terminal},
    };
    return t;
}

}  // namespace detail

/// Text serialisation. Layout:
///
///   andor-model 1
///   levels_per_octave L / cell_size C / views B / channels 31 / padding P / slot_deformation 0|1
///   theta_size N
///   root R
///   nodes K, then K lines:
///     node ID ROLE bias OFF pattern P view V config C box X Y W H filter F children n E1..En label S
///   edges E, then E lines:
///     edge ID PARENT CHILD anchor X Y scale S deform OFF
///   filters F, then F lines:
///     filter ID W H OFF
///   theta, then N lines of %.17g values
///   end
inline std::string model_to_string(const AndOrGraph& g) {
    std::ostringstream out;
    out << "andor-model " << kModelFormatVersion << "\n";
    out << "levels_per_octave " << g.meta.levels_per_octave << "\n";
    out << "cell_size " << g.meta.cell_size << "\n";
    out << "views " << g.meta.views << "\n";
    out << "channels " << g.meta.channels << "\n";
    out << "padding " << g.meta.padding << "\n";
    out << "slot_deformation " << (g.meta.slot_deformation ? 1 : 0) << "\n";
    out << "slot_radius " << g.meta.slot_radius << "\n";
    out << "theta_size " << g.theta.size() << "\n";
    out << "root " << g.root << "\n";
    out << "nodes " << g.nodes.size() << "\n";
    for (std::size_t i = 0; i < g.nodes.size(); ++i) {
        const Node& n = g.nodes[i];
        for (char c : n.label)
            if (std::isspace(static_cast<unsigned char>(c))) throw ContractError("node label contains whitespace");
        out << "node " << i << " " << role_name(n.role) << " bias " << n.bias_offset << " pattern " << n.pattern
            << " view " << n.view << " config " << n.config << " box " << n.model_box.x << " " << n.model_box.y << " "
            << n.model_box.w << " " << n.model_box.h << " filter " << n.filter << " children " << n.children.size();
        for (EdgeId e : n.children) out << " " << e;
        out << " label " << (n.label.empty() ? "-" : n.label) << "\n";
    }
    out << "edges " << g.edges.size() << "\n";
    for (std::size_t i = 0; i < g.edges.size(); ++i) {
        const Edge& e = g.edges[i];
        out << "edge " << i << " " << e.parent << " " << e.child << " anchor " << e.anchor.x << " " << e.anchor.y
            << " scale " << e.scale << " deform " << e.deform_offset << "\n";
    }
    out << "filters " << g.filters.size() << "\n";
    for (std::size_t i = 0; i < g.filters.size(); ++i) {
        const Filter& f = g.filters[i];
        out << "filter " << i << " " << f.width << " " << f.height << " " << f.offset << "\n";
    }
    out << "theta\n";
    for (double v : g.theta) out << detail::fmt17(v) << "\n";
    out << "end\n";
    return out.str();
}

namespace detail {

class LineReader {
public:
    explicit LineReader(std::istream& in) : in_(in) {}

    std::istringstream next() {
        std::string line;
        if (!std::getline(in_, line)) throw ParseError("unexpected end of file", line_no_ + 1);
        ++line_no_;
        return std::istringstream(line);
    }
    int line() const { return line_no_; }

    template <class T>
    T keyed(const std::string& key) {
        auto s = next();
        std::string k;
        T v{};
        if (!(s >> k >> v) || k != key) fail("expected '" + key + " <value>'");
        expect_end(s);
        return v;
    }
    void word(std::istringstream& s, const std::string& w) {
        std::string k;
        if (!(s >> k) || k != w) fail("expected '" + w + "'");
    }
    template <class T>
    T value(std::istringstream& s) {
        T v{};
        if (!(s >> v)) fail("malformed value");
        return v;
    }
    void expect_end(std::istringstream& s) {
        std::string rest;
        if (s >> rest) fail("trailing token '" + rest + "'");
    }
    [[noreturn]] void fail(const std::string& msg) const { throw ParseError(msg, line_no_); }

private:
    std::istream& in_;
    int line_no_ = 0;
};

}  // namespace detail

inline AndOrGraph model_from_stream(std::istream& in) {
    detail::LineReader r(in);
    AndOrGraph g;
    {
        auto s = r.next();
        std::string magic;
        int version = 0;
        if (!(s >> magic >> version) || magic != "andor-model") r.fail("not a model file");
        if (version != kModelFormatVersion)
            throw VersionError("model format version " + std::to_string(version) + ", expected " +
                               std::to_string(kModelFormatVersion));
    }
    g.meta.levels_per_octave = r.keyed<int>("levels_per_octave");
    g.meta.cell_size = r.keyed<int>("cell_size");
    g.meta.views = r.keyed<int>("views");
    g.meta.channels = r.keyed<int>("channels");
    if (g.meta.channels != kHogChannels) r.fail("unsupported channel count");
    g.meta.padding = r.keyed<int>("padding");
    g.meta.slot_deformation = r.keyed<int>("slot_deformation") != 0;
    g.meta.slot_radius = r.keyed<int>("slot_radius");
    if (g.meta.slot_radius < 0) r.fail("negative slot radius");
    const auto theta_size = r.keyed<std::size_t>("theta_size");
    g.root = r.keyed<int>("root");

    const auto n_nodes = r.keyed<std::size_t>("nodes");
    for (std::size_t i = 0; i < n_nodes; ++i) {
        auto s = r.next();
        Node n;
        r.word(s, "node");
        if (r.value<std::size_t>(s) != i) r.fail("node ids must be consecutive");
        const auto role = r.value<std::string>(s);
        const auto it = detail::role_table().find(role);
        if (it == detail::role_table().end()) r.fail("unknown node role '" + role + "'");
        n.role = it->second;
        r.word(s, "bias");
        n.bias_offset = r.value<int>(s);
        r.word(s, "pattern");
        n.pattern = r.value<int>(s);
        r.word(s, "view");
        n.view = r.value<int>(s);
        r.word(s, "config");
        n.config = r.value<int>(s);
        r.word(s, "box");
        n.model_box = {r.value<int>(s), r.value<int>(s), 0, 0};
        n.model_box.w = r.value<int>(s);
        n.model_box.h = r.value<int>(s);
        r.word(s, "filter");
        n.filter = r.value<int>(s);
        r.word(s, "children");
        const auto nc = r.value<std::size_t>(s);
        for (std::size_t k = 0; k < nc; ++k) n.children.push_back(r.value<int>(s));
        r.word(s, "label");
        n.label = r.value<std::string>(s);
        if (n.label == "-") n.label.clear();
        r.expect_end(s);
        g.nodes.push_back(std::move(n));
    }
    const auto n_edges = r.keyed<std::size_t>("edges");
    for (std::size_t i = 0; i < n_edges; ++i) {
        auto s = r.next();
        Edge e;
        r.word(s, "edge");
        if (r.value<std::size_t>(s) != i) r.fail("edge ids must be consecutive");
        e.parent = r.value<int>(s);
        e.child = r.value<int>(s);
        r.word(s, "anchor");
        e.anchor.x = r.value<int>(s);
        e.anchor.y = r.value<int>(s);
        r.word(s, "scale");
        e.scale = r.value<int>(s);
        r.word(s, "deform");
        e.deform_offset = r.value<int>(s);
        r.expect_end(s);
        if (e.parent < 0 || e.child < 0 || e.parent >= static_cast<int>(n_nodes) || e.child >= static_cast<int>(n_nodes))
            r.fail("edge references a missing node");
        g.edges.push_back(e);
    }
    const auto n_filters = r.keyed<std::size_t>("filters");
    for (std::size_t i = 0; i < n_filters; ++i) {
        auto s = r.next();
        Filter f;
        r.word(s, "filter");
        if (r.value<std::size_t>(s) != i) r.fail("filter ids must be consecutive");
        f.width = r.value<int>(s);
        f.height = r.value<int>(s);
        f.offset = r.value<int>(s);
        r.expect_end(s);
        if (f.width < 1 || f.height < 1 || f.offset < 0 || static_cast<std::size_t>(f.offset + f.size()) > theta_size)
            r.fail("filter block outside the parameter vector");
        g.filters.push_back(f);
    }
    {
        auto s = r.next();
        r.word(s, "theta");
        r.expect_end(s);
    }
    g.theta.resize(theta_size);
    for (std::size_t i = 0; i < theta_size; ++i) {
        auto s = r.next();
        std::string tok;
        if (!(s >> tok)) r.fail("missing parameter value");
        char* end = nullptr;
        g.theta[i] = std::strtod(tok.c_str(), &end);
        if (end == tok.c_str() || *end != '\0') r.fail("malformed parameter value '" + tok + "'");
        r.expect_end(s);
    }
    {
        auto s = r.next();
        r.word(s, "end");
    }
    for (std::size_t i = 0; i < g.nodes.size(); ++i) {
        const Node& n = g.nodes[i];
        for (EdgeId e : n.children)
            if (e < 0 || e >= static_cast<int>(n_edges) || g.edges[e].parent != static_cast<int>(i))
                throw ParseError("node " + std::to_string(i) + " lists an invalid child edge", 0);
        const int bias_end = n.bias_offset + 1;
        if (n.bias_offset < -1 || bias_end > static_cast<int>(theta_size))
            throw ParseError("node " + std::to_string(i) + " bias outside the parameter vector", 0);
        if (n.filter >= static_cast<int>(n_filters)) throw ParseError("node references a missing filter", 0);
    }
    for (const auto& e : g.edges)
        if (e.deform_offset < -1 || e.deform_offset + 4 > static_cast<int>(theta_size))
            throw ParseError("edge deformation outside the parameter vector", 0);
    if (g.root < 0 || g.root >= static_cast<int>(n_nodes)) throw ParseError("root id out of range", 0);
    return g;
}

inline AndOrGraph model_from_string(const std::string& text) {
    std::istringstream in(text);
    return model_from_stream(in);
}

inline void save_model(const AndOrGraph& g, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write model " + path);
    out << model_to_string(g);
    if (!out) throw Error("write failed for " + path);
}

inline AndOrGraph load_model(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open model " + path);
    return model_from_stream(in);
}

}  // namespace andor
