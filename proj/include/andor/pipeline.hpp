#pragma once

#include <fstream>
#include <bit>
#include <filesystem>
#include <functional>
#include <iomanip>
#include <iostream>
#include <map>
#include <sstream>
#include <string>

#include "andor/assemble.hpp"
#include "andor/eval.hpp"
#include "andor/model_io.hpp"
#include "andor/render.hpp"
#include "andor/train.hpp"

namespace andor {

enum class Variant { AndOrStructure, AogGreedy, AogCad };

inline const char* variant_name(Variant v) {
    switch (v) {
        case Variant::AndOrStructure: return "and-or-structure";
        case Variant::AogGreedy: return "aog-greedy";
        case Variant::AogCad: return "aog-cad";
    }
    return "?";
}

inline Variant parse_variant(const std::string& s) {
    for (Variant v : {Variant::AndOrStructure, Variant::AogGreedy, Variant::AogCad})
        if (s == variant_name(v)) return v;
    throw ContractError("unknown model variant '" + s + "'");
}

/// Every knob of an experiment, readable from a flat key=value file.
struct PipelineConfig {
    // data
    int views = 4;
    int types = 4;
    int train_scenes = 200;
    int test_scenes = 100;
    int backgrounds = 40;
    int structure_scenes = 2000;
    std::uint64_t seed = 1;
    // structure
    double lambda_c = 0.5;
    int configs = 4;
    int contexts = 4;
    int n_max = 2;
    // model
    int cell_size = 4;
    int levels_per_octave = 4;
    int car_height_cells = 6;
    int max_part_cells = 6;
    int greedy_parts = 6;
    bool slot_deformation = true;
    int slot_radius = 3;
    int max_levels = 0;
    // training
    double C = 0.002;
    int step0_epochs = 3;
    int epochs = 2;
    int inner_epochs = 5;
    double eta0 = 1.0;
    int cache_capacity = 2000;
    int negatives_per_image = 10;
    // detection and evaluation
    double threshold = -1.0;
    double nms_iou = 0.5;
    double eval_iou = 0.5;
    double min_height = 0;
    bool eleven_point = false;
    unsigned threads = default_threads();
};

namespace detail {

using Setter = std::function<void(PipelineConfig&, const std::string&)>;

template <class T>
Setter setter(T PipelineConfig::*field) {
    return [field](PipelineConfig& c, const std::string& v) {
        std::istringstream in(v);
        T x{};
        if constexpr (std::is_same_v<T, bool>) {
            if (v == "true" || v == "1") x = true;
            else if (v == "false" || v == "0") x = false;
            else throw ParseError("expected a boolean, got '" + v + "'", 0);
        } else {
            if (!(in >> x) || !(in >> std::ws).eof()) throw ParseError("bad value '" + v + "'", 0);
        }
        c.*field = x;
    };
}

template <class T>
std::function<std::string(const PipelineConfig&)> getter(T PipelineConfig::*field) {
    return [field](const PipelineConfig& c) {
        std::ostringstream out;
        out << std::setprecision(17) << c.*field;
        return out.str();
    };
}

struct ConfigKey {
    const char* name;
    Setter set;
    std::function<std::string(const PipelineConfig&)> get;
};

inline const std::vector<ConfigKey>& config_keys() {
#define ANDOR_KEY(f) ConfigKey{#f, setter(&PipelineConfig::f), getter(&PipelineConfig::f)}
    static const std::vector<ConfigKey> keys = {
        ANDOR_KEY(views), ANDOR_KEY(types), ANDOR_KEY(train_scenes), ANDOR_KEY(test_scenes),
        ANDOR_KEY(backgrounds), ANDOR_KEY(structure_scenes), ANDOR_KEY(seed), ANDOR_KEY(lambda_c),
        ANDOR_KEY(configs), ANDOR_KEY(contexts), ANDOR_KEY(n_max), ANDOR_KEY(cell_size),
        ANDOR_KEY(levels_per_octave), ANDOR_KEY(car_height_cells), ANDOR_KEY(max_part_cells),
        ANDOR_KEY(greedy_parts), ANDOR_KEY(slot_deformation), ANDOR_KEY(slot_radius), ANDOR_KEY(max_levels),
        ANDOR_KEY(C), ANDOR_KEY(step0_epochs), ANDOR_KEY(epochs), ANDOR_KEY(inner_epochs), ANDOR_KEY(eta0),
        ANDOR_KEY(cache_capacity), ANDOR_KEY(negatives_per_image), ANDOR_KEY(threshold), ANDOR_KEY(nms_iou),
        ANDOR_KEY(eval_iou), ANDOR_KEY(min_height), ANDOR_KEY(eleven_point), ANDOR_KEY(threads),
    };
#undef ANDOR_KEY
    return keys;
}

inline std::string trim(const std::string& s) {
    const auto a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return {};
    const auto b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

}  // namespace detail

inline void set_config_value(PipelineConfig& c, const std::string& key, const std::string& value) {
    for (const auto& k : detail::config_keys())
        if (key == k.name) {
            k.set(c, value);
            return;
        }
    throw ParseError("unknown config key '" + key + "'", 0);
}

/// `key = value` per line; '#' starts a comment.
inline PipelineConfig read_config(std::istream& in, PipelineConfig c = {}) {
    std::string line;
    int n = 0;
    while (std::getline(in, line)) {
        ++n;
        if (const auto h = line.find('#'); h != std::string::npos) line.resize(h);
        line = detail::trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw ParseError("expected key = value", n);
        try {
            set_config_value(c, detail::trim(line.substr(0, eq)), detail::trim(line.substr(eq + 1)));
        } catch (const ParseError& e) {
            throw ParseError(e.what(), n);
        }
    }
    return c;
}

inline PipelineConfig read_config(const std::string& path, PipelineConfig c = {}) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open config " + path);
    return read_config(in, c);
}

inline void write_config(std::ostream& out, const PipelineConfig& c) {
    for (const auto& k : detail::config_keys()) out << k.name << " = " << k.get(c) << "\n";
}

inline SimOptions sim_options(const PipelineConfig& c) {
    SimOptions s;
    s.views = c.views;
    s.types = c.types;
    return s;
}

// ------ data -------

/// Per-car labels a renderer knows: view bin and the parts left visible.
struct CarLabel {
    int view = -1;
    PartMask visible = 0;
};

struct Dataset {
    std::vector<Image> images;
    AnnotationSet annotations;
    std::vector<std::vector<CarLabel>> labels;  // empty rows for background images
    std::vector<bool> background;
    std::vector<std::vector<bool>> occluded;

    std::size_t size() const { return images.size(); }
};

inline Dataset to_dataset(const std::vector<SynthImage>& set, const SimOptions& sim,
                          const PartDictionary& dict = default_part_dictionary()) {
    Dataset d;
    for (const auto& s : set) {
        d.images.push_back(s.image);
        d.annotations.push_back(s.annotation);
        d.background.push_back(s.background_only);
        d.occluded.push_back(s.occluded);
        std::vector<CarLabel> row;
        if (!s.background_only)
            for (std::size_t i = 0; i < s.annotation.boxes.size(); ++i) {
                CarLabel l{s.annotation.views[i], 0};
                const auto vis = part_visibility(s.scene, i, sim.views, dict);
                for (int p = 0; p < kNumParts; ++p)
                    if (vis[static_cast<std::size_t>(p)] >= sim.occluded_below) l.visible |= PartMask{1} << p;
                row.push_back(l);
            }
        d.labels.push_back(std::move(row));
    }
    return d;
}

/// Renders `scenes` car images then `backgrounds` car-free ones.
inline Dataset synthesize(const PipelineConfig& c, int scenes, int backgrounds, std::uint64_t seed) {
    const SimOptions sim = sim_options(c);
    return to_dataset(synth_dataset(scenes, backgrounds, sim, RenderOptions{}, seed, default_part_dictionary(), c.threads),
                      sim);
}

inline std::uint64_t test_seed(const PipelineConfig& c) { return c.seed * 0x9E3779B97F4A7C15ull + 7; }

/// Writes images, annotations.txt, occlusion.txt and labels.txt
/// (`image car view visible_mask` per car).
inline void write_dataset(const Dataset& d, const std::string& dir) {
    std::filesystem::create_directories(dir);
    AnnotationSet ann;
    std::ofstream occ(dir + "/occlusion.txt"), lab(dir + "/labels.txt");
    if (!occ || !lab) throw Error("cannot write into " + dir);
    for (std::size_t i = 0; i < d.size(); ++i) {
        Annotation a = d.annotations[i];
        a.image += ".pgm";
        write_pgm(d.images[i], dir + "/" + a.image);
        if (!d.background[i]) {
            int n = 0;
            for (bool o : d.occluded[i]) n += o;
            occ << a.image << " " << d.occluded[i].size() << " " << n << "\n";
            for (std::size_t k = 0; k < d.labels[i].size(); ++k)
                lab << a.image << " " << k << " " << d.labels[i][k].view << " " << d.labels[i][k].visible << "\n";
        }
        ann.push_back(std::move(a));
    }
    write_annotations(dir + "/annotations.txt", ann);
}

/// Reads a directory written by write_dataset. Images without boxes are backgrounds.
inline Dataset read_dataset(const std::string& dir) {
    Dataset d;
    d.annotations = read_annotations(dir + "/annotations.txt");
    std::map<std::string, std::size_t> index;
    for (const auto& a : d.annotations) {
        index[a.image] = d.images.size();
        d.images.push_back(read_image(dir + "/" + a.image));
        d.background.push_back(a.boxes.empty());
        d.labels.emplace_back();
        d.occluded.emplace_back();
    }
    std::ifstream lab(dir + "/labels.txt");
    std::string name;
    std::size_t k;
    CarLabel l;
    while (lab >> name >> k >> l.view >> l.visible) {
        auto it = index.find(name);
        if (it == index.end()) throw ParseError("labels.txt names unknown image " + name, 0);
        auto& row = d.labels[it->second];
        if (row.size() <= k) row.resize(k + 1);
        row[k] = l;
    }
    std::ifstream occ(dir + "/occlusion.txt");
    std::size_t cars, n;
    while (occ >> name >> cars >> n) {
        auto it = index.find(name);
        if (it == index.end()) continue;
        // per-car flags are not stored; mark the first n as occluded for the ratio
        d.occluded[it->second].assign(cars, false);
        for (std::size_t i = 0; i < n && i < cars; ++i) d.occluded[it->second][i] = true;
    }
    return d;
}

inline std::vector<GroundTruth> ground_truth(const Dataset& d, const std::vector<std::size_t>& subset = {}) {
    std::vector<GroundTruth> out;
    auto add = [&](std::size_t i) {
        const auto& a = d.annotations[i];
        for (std::size_t k = 0; k < a.boxes.size(); ++k)
            out.push_back({static_cast<int>(i), a.boxes[k], k < a.views.size() ? a.views[k] : -1});
    };
    if (subset.empty())
        for (std::size_t i = 0; i < d.size(); ++i) add(i);
    else
        for (std::size_t i : subset) add(i);
    return out;
}

// ------ structure -------

struct Structure {
    OcclusionStructure occlusion;
    std::vector<ContextPattern> contexts;
};

/// Occlusion configurations from simulated scenes, layouts from the training
/// annotations.
inline Structure mine_structure(const PipelineConfig& c, const Dataset& train) {
    Structure s;
    const SimOptions sim = sim_options(c);
    const auto scenes = simulate_scenes(c.structure_scenes, sim, c.seed ^ 0xa5a5a5a5ull, default_part_dictionary(),
                                        c.threads);
    s.occlusion = compress(build_data_matrix(scenes, sim), c.lambda_c, c.configs);
    AnnotationSet cars;
    for (std::size_t i = 0; i < train.size(); ++i)
        if (!train.background[i]) cars.push_back(train.annotations[i]);
    if (c.n_max >= 2 && c.contexts > 0) s.contexts = mine_layouts(cars, c.n_max, c.contexts, c.seed, c.car_height_cells);
    return s;
}

inline AssembleOptions assemble_options(const PipelineConfig& c) {
    AssembleOptions o;
    o.car_height_cells = c.car_height_cells;
    o.cell_size = c.cell_size;
    o.levels_per_octave = c.levels_per_octave;
    o.max_part_cells = c.max_part_cells;
    o.slot_deformation = c.slot_deformation;
    o.slot_radius = c.slot_radius;
    return o;
}

/// Cars grouped by aspect ratio into `views` equal-size components.
inline std::vector<double> aspect_components(const Dataset& d, int views, std::vector<std::vector<int>>* comp = nullptr) {
    std::vector<std::pair<double, std::pair<int, int>>> all;
    for (std::size_t i = 0; i < d.size(); ++i)
        for (std::size_t k = 0; k < d.annotations[i].boxes.size(); ++k) {
            const Box& b = d.annotations[i].boxes[k];
            all.push_back({b.w / b.h, {static_cast<int>(i), static_cast<int>(k)}});
        }
    ANDOR_REQUIRE(!all.empty(), "no cars to group by aspect ratio");
    std::stable_sort(all.begin(), all.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
    std::vector<double> mean(static_cast<std::size_t>(views), 0.0);
    std::vector<int> count(static_cast<std::size_t>(views), 0);
    if (comp) {
        comp->assign(d.size(), {});
        for (std::size_t i = 0; i < d.size(); ++i) (*comp)[i].assign(d.annotations[i].boxes.size(), 0);
    }
    for (std::size_t r = 0; r < all.size(); ++r) {
        const auto v = std::min<std::size_t>(static_cast<std::size_t>(views) - 1, r * static_cast<std::size_t>(views) / all.size());
        mean[v] += all[r].first;
        ++count[v];
        if (comp) (*comp)[static_cast<std::size_t>(all[r].second.first)][static_cast<std::size_t>(all[r].second.second)] = static_cast<int>(v);
    }
    for (std::size_t v = 0; v < mean.size(); ++v) mean[v] = count[v] ? mean[v] / count[v] : 1.0;
    return mean;
}

/// Skeleton of a model variant: and-or-structure keeps only the 1-car
/// pattern; aog-greedy has one root-only branch per aspect component.
inline AndOrGraph build_skeleton(Variant v, const PipelineConfig& c, const Structure& s, const Dataset& train) {
    AssembleOptions o = assemble_options(c);
    const std::vector<ContextPattern> none;
    switch (v) {
        case Variant::AndOrStructure: return assemble_model(none, s.occlusion, default_part_dictionary(), c.views, o);
        case Variant::AogCad: return assemble_model(s.contexts, s.occlusion, default_part_dictionary(), c.views, o);
        case Variant::AogGreedy: {
            OcclusionStructure flat;
            flat.views = c.views;
            const auto aspect = aspect_components(train, c.views);
            for (int k = 0; k < c.views; ++k) {
                ViewStructure vs;
                vs.view = k;
                vs.clusters = {0};
                vs.support = {1};
                vs.root = {0, 0, aspect[static_cast<std::size_t>(k)], 1};
                flat.per_view.push_back(vs);
                flat.lambda.push_back(c.lambda_c);
                flat.trace.emplace_back();
            }
            o.parts = false;
            return assemble_model(s.contexts, flat, default_part_dictionary(), c.views, o);
        }
    }
    throw ContractError("unknown variant");
}

/// Adds `parts` square part filters to every single-car branch at twice the
/// root resolution, placed greedily on the highest positive-weight energy of
/// the root filter and initialised from its upsampled weights.
inline AndOrGraph add_greedy_parts(const AndOrGraph& in, int parts, int max_part_cells,
                                   std::array<double, 4> def = {0.05, 0.0, 0.05, 0.0}) {
    AndOrGraph g = in;
    for (NodeId car : in.nodes_with_role(NodeRole::SingleCar)) {
        const Edge re = in.edge(in.node(car).children.front());
        const Filter rf = in.filters[static_cast<std::size_t>(in.node(re.child).filter)];
        const int W = 2 * rf.width, H = 2 * rf.height;
        const auto rw = in.filter_weights(in.node(re.child).filter);
        auto root_w = [&](int x2, int y2, int ch) {
            return rw[static_cast<std::size_t>(((y2 / 2) * rf.width + x2 / 2) * kHogChannels + ch)];
        };
        Grid<double> energy(W, H, 0.0);
        for (int y = 0; y < H; ++y)
            for (int x = 0; x < W; ++x)
                for (int ch = 0; ch < kHogChannels; ++ch) energy(x, y) += std::pow(std::max(0.0, root_w(x, y, ch)), 2);
        const int side = std::clamp(static_cast<int>(std::lround(std::sqrt(0.8 * W * H / std::max(1, parts)))), 1,
                                    std::min({max_part_cells, W, H}));
        for (int k = 0; k < parts; ++k) {
            double best = -1;
            Point at;
            for (int y = 0; y + side <= H; ++y)
                for (int x = 0; x + side <= W; ++x) {
                    double e = 0;
                    for (int dy = 0; dy < side; ++dy)
                        for (int dx = 0; dx < side; ++dx) e += energy(x + dx, y + dy);
                    if (e > best) {
                        best = e;
                        at = {x, y};
                    }
                }
            for (int dy = 0; dy < side; ++dy)
                for (int dx = 0; dx < side; ++dx) energy(at.x + dx, at.y + dy) = 0;
            const FilterId f = g.add_filter(side, side);
            auto w = g.filter_weights(f);
            for (int dy = 0; dy < side; ++dy)
                for (int dx = 0; dx < side; ++dx)
                    for (int ch = 0; ch < kHogChannels; ++ch)
                        w[static_cast<std::size_t>((dy * side + dx) * kHogChannels + ch)] = root_w(at.x + dx, at.y + dy, ch);
            const NodeId t = g.add_terminal(f, in.node(car).label + "_part" + std::to_string(k));
            g.add_edge(car, t, {2 * re.anchor.x + at.x, 2 * re.anchor.y + at.y}, 1, true, def);
        }
    }
    require_valid(g);
    return g;
}

// ------ training data -------

namespace detail {

inline NodeId car_node(const AndOrGraph& g, int view, int config) {
    for (NodeId n : g.nodes_with_role(NodeRole::SingleCar))
        if (g.node(n).view == view && g.node(n).config == config) return n;
    return -1;
}

/// Single-car branch whose occlusion config is nearest to the visible parts.
inline NodeId supervised_car(const AndOrGraph& g, const OcclusionStructure& occ, const CarLabel& l) {
    const ViewStructure* vs = occ.find(l.view);
    if (!vs) return -1;
    int best = -1, dist = 1 << 30;
    for (int c = 0; c < vs->configs(); ++c) {
        const int d = std::popcount(vs->config_mask(c) ^ l.visible);
        if (d < dist) {
            dist = d;
            best = c;
        }
    }
    return car_node(g, l.view, best);
}

/// Pattern whose slot offsets are nearest to the sample's layout, in cells.
inline int nearest_pattern(const AndOrGraph& g, const std::vector<Box>& boxes, int hc) {
    int best = -1;
    double dist = kInf;
    for (NodeId p : g.nodes_with_role(NodeRole::Pattern)) {
        const Node& n = g.node(p);
        if (n.children.size() != boxes.size()) continue;
        double d = 0;
        const Point a0 = g.edge(n.children[0]).anchor;
        for (std::size_t j = 1; j < boxes.size(); ++j) {
            const Point a = g.edge(n.children[j]).anchor;
            const double ox = (boxes[j].cx() - boxes[0].cx()) / boxes[0].h * hc;
            const double oy = (boxes[j].cy() - boxes[0].cy()) / boxes[0].h * hc;
            d += std::pow(ox - (a.x - a0.x), 2) + std::pow(oy - (a.y - a0.y), 2);
        }
        if (d < dist) {
            dist = d;
            best = n.pattern;
        }
    }
    return best;
}

inline int single_pattern(const AndOrGraph& g) {
    for (NodeId p : g.nodes_with_role(NodeRole::Pattern))
        if (g.node(p).children.size() == 1) return g.node(p).pattern;
    return -1;
}

}  // namespace detail

/// With multi-car patterns the positives are the positive sets: lone cars
/// that touch no other box and the N-car samples. Without them every car is
/// a positive on its own. Background images are the negatives. Each
/// positive names its pattern. `car_of(image, car)` gives the branch for
/// supervised training, -1 to leave it latent.
inline TrainingData training_data(const AndOrGraph& g, const Dataset& d, int n_max, int hc,
                                  const std::function<NodeId(int, int)>& car_of = {}) {
    TrainingData t;
    t.images = d.images;
    const int single = detail::single_pattern(g);
    bool multi = false;
    for (NodeId p : g.nodes_with_role(NodeRole::Pattern)) multi = multi || g.node(p).children.size() > 1;
    auto sup_cars = [&](int image, const std::vector<int>& members) {
        std::vector<NodeId> cars;
        if (!car_of) return cars;
        for (int k : members) {
            const NodeId n = car_of(image, k);
            if (n < 0) return std::vector<NodeId>{};
            cars.push_back(n);
        }
        return cars;
    };
    AnnotationSet cars;
    std::vector<int> source;
    for (std::size_t i = 0; i < d.size(); ++i) {
        if (d.background[i]) {
            t.backgrounds.push_back(static_cast<int>(i));
            continue;
        }
        cars.push_back(d.annotations[i]);
        source.push_back(static_cast<int>(i));
    }
    auto add = [&](int image, const std::vector<int>& members, const std::vector<Box>& boxes, int pat) {
        TrainingSample s;
        s.image = image;
        s.y = boxes;
        s.sup.pattern = pat;
        s.sup.cars = sup_cars(image, members);
        t.positives.push_back(std::move(s));
    };
    if (!multi || n_max < 2) {
        for (std::size_t j = 0; j < cars.size(); ++j)
            for (std::size_t k = 0; k < cars[j].boxes.size(); ++k)
                add(source[j], {static_cast<int>(k)}, {cars[j].boxes[k]}, single);
        return t;
    }
    // overlapping cars only appear inside N-car samples
    const auto sets = gen_positive_sets(cars, n_max);
    for (int n = 1; n <= n_max; ++n)
        for (const auto& smp : sets[static_cast<std::size_t>(n - 1)]) {
            const int pat = n == 1 ? single : detail::nearest_pattern(g, smp.boxes, hc);
            if (pat < 0) continue;
            add(source[static_cast<std::size_t>(smp.image)], smp.members, smp.boxes, pat);
        }
    return t;
}

inline TrainOptions train_options(const PipelineConfig& c, int epochs, std::ostream* log) {
    TrainOptions o;
    o.C = c.C;
    o.epochs = epochs;
    o.inner_epochs = c.inner_epochs;
    o.eta0 = c.eta0;
    o.cache_capacity = static_cast<std::size_t>(c.cache_capacity);
    o.negatives_per_image = c.negatives_per_image;
    o.max_levels = c.max_levels;
    o.augment.slot_radius = c.slot_radius;
    o.seed = c.seed;
    o.threads = c.threads;
    o.log = log;
    return o;
}

struct TrainReport {
    std::vector<TrainResult> stages;
};

/// aog-cad and and-or-structure: Step 0 with view and occlusion supervision,
/// then Step 1 with only the layout pattern known. aog-greedy: supervised
/// root-only training on aspect components, greedy parts, then Step 1.
inline TrainReport train_variant(Variant v, AndOrGraph& g, const PipelineConfig& c, const Structure& s,
                                 const Dataset& train, std::ostream* log = nullptr) {
    TrainReport rep;
    std::function<NodeId(int, int)> car_of;
    std::vector<std::vector<int>> comp;
    if (v == Variant::AogGreedy) {
        aspect_components(train, c.views, &comp);
        car_of = [&](int i, int k) {
            return detail::car_node(g, comp[static_cast<std::size_t>(i)][static_cast<std::size_t>(k)], 0);
        };
    } else {
        car_of = [&](int i, int k) {
            return detail::supervised_car(g, s.occlusion, train.labels[static_cast<std::size_t>(i)][static_cast<std::size_t>(k)]);
        };
    }
    if (log) *log << "# " << variant_name(v) << " step 0\n";
    TrainingData sup = training_data(g, train, c.n_max, c.car_height_cells, car_of);
    rep.stages.push_back(init_step0(g, sup, train_options(c, c.step0_epochs, log)));
    if (v == Variant::AogGreedy) g = add_greedy_parts(g, c.greedy_parts, c.max_part_cells);
    if (log) *log << "# " << variant_name(v) << " step 1\n";
    TrainingData weak = training_data(g, train, c.n_max, c.car_height_cells);
    rep.stages.push_back(wlssvm_train(g, weak, train_options(c, c.epochs, log)));
    return rep;
}

// ------ detection -------

/// Detections after multi-car suppression, image by image; FinalBox::image
/// indexes `images`.
inline std::vector<FinalBox> detect_all(const AndOrGraph& g, const std::vector<Image>& images, const PipelineConfig& c,
                                        const std::vector<std::size_t>& subset = {}) {
    std::vector<std::size_t> idx = subset;
    if (idx.empty())
        for (std::size_t i = 0; i < images.size(); ++i) idx.push_back(i);
    std::vector<std::vector<FinalBox>> per(idx.size());
    parallel_for(
        idx.size(),
        [&](std::size_t k) {
            DetectOptions o;
            o.threshold = c.threshold;
            o.max_levels = c.max_levels;
            o.threads = 1;
            auto dets = detect(g, images[idx[k]], o);
            for (auto& d : dets) d.image = static_cast<int>(idx[k]);
            NmsOptions n;
            n.iou = c.nms_iou;
            per[k] = multi_car_nms(dets, n);
        },
        c.threads);
    std::vector<FinalBox> out;
    for (auto& p : per) out.insert(out.end(), p.begin(), p.end());
    return out;
}

/// One line per box: `image score x y w h view config pattern`.
inline void write_detections(std::ostream& out, const std::vector<FinalBox>& dets, const Dataset* names = nullptr) {
    out << "# image score x y w h view config pattern\n";
    for (const auto& d : dets) {
        std::string name = std::to_string(d.image);
        if (names) {
            name = names->annotations[static_cast<std::size_t>(d.image)].image;
            if (!name.ends_with(".pgm")) name += ".pgm";
        }
        out << name << " " << detail::fmt17(d.score) << " " << detail::fmt17(d.box.x) << " " << detail::fmt17(d.box.y)
            << " " << detail::fmt17(d.box.w) << " " << detail::fmt17(d.box.h) << " " << d.view << " " << d.config
            << " " << d.pattern << "\n";
    }
}

inline std::vector<FinalBox> read_detections(std::istream& in, const std::map<std::string, int>& image_index) {
    std::vector<FinalBox> out;
    std::string line;
    int n = 0;
    while (std::getline(in, line)) {
        ++n;
        if (line.empty() || line[0] == '#') continue;
        std::istringstream s(line);
        std::string name;
        FinalBox d;
        if (!(s >> name >> d.score >> d.box.x >> d.box.y >> d.box.w >> d.box.h >> d.view >> d.config >> d.pattern))
            throw ParseError("expected 9 detection fields", n);
        const auto it = image_index.find(name);
        if (it == image_index.end()) throw ParseError("unknown image " + name, n);
        d.image = it->second;
        out.push_back(d);
    }
    return out;
}

}  // namespace andor
