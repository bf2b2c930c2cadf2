#include <CLI11.hpp>

#include <fstream>
#include <iostream>

#include "andor/pipeline.hpp"

using namespace andor;

namespace {

struct Common {
    std::string config;
    std::vector<std::string> set;
    std::uint64_t seed = 0;
    bool seed_given = false;
};

PipelineConfig load(const Common& o) {
    PipelineConfig c = o.config.empty() ? PipelineConfig{} : read_config(o.config);
    for (const auto& kv : o.set) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) throw ParseError("--set expects key=value, got '" + kv + "'", 0);
        set_config_value(c, kv.substr(0, eq), kv.substr(eq + 1));
    }
    if (o.seed_given) c.seed = o.seed;
    return c;
}

void add_common(CLI::App* app, Common& o) {
    app->add_option("--config", o.config, "key = value config file")->check(CLI::ExistingFile);
    app->add_option("--set", o.set, "override one config key, key=value");
    app->add_option("--seed", o.seed, "random seed")->each([&o](const std::string&) { o.seed_given = true; });
}

std::map<std::string, int> image_index(const Dataset& d) {
    std::map<std::string, int> m;
    for (std::size_t i = 0; i < d.size(); ++i) m[d.annotations[i].image] = static_cast<int>(i);
    return m;
}

void print_model(std::ostream& out, const AndOrGraph& g) {
    std::map<NodeRole, int> roles;
    for (const auto& n : g.nodes) ++roles[n.role];
    out << "nodes " << g.nodes.size() << "\nedges " << g.edges.size() << "\nfilters " << g.filters.size()
        << "\nparameters " << g.theta.size() << "\nviews " << g.meta.views << "\ncell_size " << g.meta.cell_size
        << "\nlevels_per_octave " << g.meta.levels_per_octave << "\n";
    out << "patterns " << roles[NodeRole::Pattern] << "\nsingle_cars " << roles[NodeRole::SingleCar] << "\nterminals "
        << roles[NodeRole::Terminal] << "\n";
    for (NodeId p : g.nodes_with_role(NodeRole::Pattern)) {
        out << "pattern " << g.node(p).pattern << " slots";
        for (EdgeId e : g.node(p).children) out << " (" << g.edge(e).anchor.x << "," << g.edge(e).anchor.y << ")";
        out << "\n";
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Car detection with and-or grammars of occlusion and context"};
    app.require_subcommand(1);

    Common synth_o;
    std::string synth_out;
    int scenes = -1, backgrounds = -1;
    bool test_split = false;
    auto* synth = app.add_subcommand("synth", "render a synthetic street-scene dataset");
    add_common(synth, synth_o);
    synth->add_option("--out", synth_out, "output directory")->required();
    synth->add_option("--scenes", scenes, "car scenes (default train_scenes or test_scenes)");
    synth->add_option("--backgrounds", backgrounds, "car-free images (default backgrounds, 0 for test)");
    synth->add_flag("--test", test_split, "draw the test split");

    Common mine_o;
    std::string mine_data, mine_out;
    auto* mine = app.add_subcommand("mine", "learn occlusion configurations and multi-car layouts");
    add_common(mine, mine_o);
    mine->add_option("--data", mine_data, "training directory")->required()->check(CLI::ExistingDirectory);
    mine->add_option("--out", mine_out, "structure report")->required();

    Common train_o;
    std::string train_data, train_out, variant = "aog-cad", train_log;
    auto* train = app.add_subcommand("train", "learn a model");
    add_common(train, train_o);
    train->add_option("--data", train_data, "training directory")->required()->check(CLI::ExistingDirectory);
    train->add_option("--variant", variant, "aog-cad, and-or-structure or aog-greedy")
        ->check(CLI::IsMember({"aog-cad", "and-or-structure", "aog-greedy"}));
    train->add_option("--out", train_out, "model file")->required();
    train->add_option("--log", train_log, "per-iteration training log");

    Common det_o;
    std::string det_model, det_data, det_out;
    auto* det = app.add_subcommand("detect", "run a model over a directory of images");
    add_common(det, det_o);
    det->add_option("--model", det_model, "model file")->required()->check(CLI::ExistingFile);
    det->add_option("--data", det_data, "image directory with annotations.txt")->required()->check(CLI::ExistingDirectory);
    det->add_option("--out", det_out, "detections file")->required();

    Common eval_o;
    std::string eval_data, eval_dets, eval_out, eval_pr;
    bool eval_views = false;
    auto* eval = app.add_subcommand("eval", "score detections against annotations");
    add_common(eval, eval_o);
    eval->add_option("--data", eval_data, "directory with annotations.txt")->required()->check(CLI::ExistingDirectory);
    eval->add_option("--detections", eval_dets, "detections file")->required()->check(CLI::ExistingFile);
    eval->add_option("--out", eval_out, "report file, stdout if absent");
    eval->add_option("--pr", eval_pr, "precision/recall curve file");
    eval->add_flag("--views", eval_views, "also report view confusion, MPPE and AVP");

    std::string inspect_model;
    auto* inspect = app.add_subcommand("inspect", "summarise a model file");
    inspect->add_option("--model", inspect_model, "model file")->required()->check(CLI::ExistingFile);

    CLI11_PARSE(app, argc, argv);

    try {
        if (synth->parsed()) {
            const PipelineConfig c = load(synth_o);
            const int n = scenes >= 0 ? scenes : (test_split ? c.test_scenes : c.train_scenes);
            const int b = backgrounds >= 0 ? backgrounds : (test_split ? 0 : c.backgrounds);
            write_dataset(synthesize(c, n, b, test_split ? test_seed(c) : c.seed), synth_out);
            std::cout << "wrote " << n + b << " images to " << synth_out << "\n";
        } else if (mine->parsed()) {
            const PipelineConfig c = load(mine_o);
            const Structure s = mine_structure(c, read_dataset(mine_data));
            std::ofstream out(mine_out);
            if (!out) throw Error("cannot write " + mine_out);
            write_structure(out, s.occlusion, default_part_dictionary());
            out << "contexts " << s.contexts.size() << "\n";
            for (const auto& p : s.contexts) {
                out << "  context support " << p.support << " anchors";
                for (const auto& a : p.anchors) out << " " << a.x << " " << a.y;
                out << "\n";
            }
        } else if (train->parsed()) {
            const PipelineConfig c = load(train_o);
            const Variant v = parse_variant(variant);
            const Dataset d = read_dataset(train_data);
            const Structure s = mine_structure(c, d);
            AndOrGraph g = build_skeleton(v, c, s, d);
            std::ofstream log;
            if (!train_log.empty()) {
                log.open(train_log);
                if (!log) throw Error("cannot write " + train_log);
            }
            train_variant(v, g, c, s, d, train_log.empty() ? nullptr : &log);
            save_model(g, train_out);
        } else if (det->parsed()) {
            const PipelineConfig c = load(det_o);
            const AndOrGraph g = load_model(det_model);
            const Dataset d = read_dataset(det_data);
            std::ofstream out(det_out);
            if (!out) throw Error("cannot write " + det_out);
            write_detections(out, detect_all(g, d.images, c), &d);
        } else if (eval->parsed()) {
            const PipelineConfig c = load(eval_o);
            Dataset d;
            d.annotations = read_annotations(eval_data + "/annotations.txt");
            d.images.resize(d.annotations.size());
            std::ifstream in(eval_dets);
            const auto dets = read_detections(in, image_index(d));
            EvalOptions o;
            o.iou = c.eval_iou;
            o.min_height = c.min_height;
            o.eleven_point = c.eleven_point;
            o.views = eval_views ? c.views : 0;
            const EvalResult r = evaluate(dets, ground_truth(d), o);
            if (eval_out.empty()) {
                write_eval(std::cout, r);
            } else {
                std::ofstream out(eval_out);
                if (!out) throw Error("cannot write " + eval_out);
                write_eval(out, r);
            }
            if (!eval_pr.empty()) write_pr_curve(eval_pr, r);
        } else if (inspect->parsed()) {
            print_model(std::cout, load_model(inspect_model));
        }
    } catch (const std::exception& e) {
        std::cerr << "andor: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
