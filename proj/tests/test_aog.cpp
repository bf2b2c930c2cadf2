#include <gtest/gtest.h>

#include <cstdio>
#include <fstream>
#include <random>

#include "andor/infer.hpp"
#include "andor/model_io.hpp"
#include "random_graph.hpp"

using namespace andor;

namespace {

AndOrGraph tiny_chain() {
    AndOrGraph g;
    g.meta.levels_per_octave = 1;
    g.root = g.add_node(NodeRole::RootOr);
    const NodeId car = g.add_node(NodeRole::SingleCar);
    g.add_edge(g.root, car);
    g.add_edge(car, g.add_terminal(g.add_filter(2, 2)));
    return g;
}

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), {}};
}

}  // namespace

TEST(Validate, MinimalChainIsValid) {
    const auto d = validate(tiny_chain());
    EXPECT_TRUE(d.empty()) << (d.empty() ? "" : d.front().message);
}

TEST(Validate, AndUnderAndAtLayoutLayer) {
    AndOrGraph g;
    g.root = g.add_node(NodeRole::RootOr);
    const NodeId pat = g.add_node(NodeRole::Pattern), car = g.add_node(NodeRole::SingleCar);
    g.add_edge(g.root, pat);
    g.add_edge(pat, car);
    g.add_edge(car, g.add_terminal(g.add_filter(1, 1)));
    const auto d = validate(g);
    ASSERT_TRUE(has_diagnostic(d, Diagnostic::Kind::WrongChildType));
    for (const auto& x : d)
        if (x.kind == Diagnostic::Kind::WrongChildType) {
            EXPECT_EQ(x.nodes, (std::vector<NodeId>{pat, car}));
        }
}

TEST(Validate, TwoCycleReported) {
    AndOrGraph g;
    g.root = g.add_node(NodeRole::RootOr);
    const NodeId cl = g.add_node(NodeRole::PartCluster), grp = g.add_node(NodeRole::PartGroup);
    const NodeId car = g.add_node(NodeRole::SingleCar);
    g.add_edge(g.root, car);
    g.add_edge(car, cl);
    g.add_edge(cl, grp);
    g.add_edge(grp, cl);
    EXPECT_TRUE(has_diagnostic(validate(g), Diagnostic::Kind::Cycle));
}

TEST(Validate, OrphanAndClampDiagnostics) {
    auto g = tiny_chain();
    g.add_filter(1, 1);
    EXPECT_TRUE(has_diagnostic(validate(g), Diagnostic::Kind::OrphanParameter));

    auto h = tiny_chain();
    const NodeId car = 1;
    const EdgeId e = h.add_edge(car, h.add_terminal(h.add_filter(1, 1)), {0, 0}, 1, true, {0.0005, 0, 0.2, 0});
    EXPECT_TRUE(has_diagnostic(validate(h), Diagnostic::Kind::Clamp));
    clamp_deformation(h);
    EXPECT_TRUE(validate(h).empty());
    EXPECT_DOUBLE_EQ(h.deformation(e)[0], 0.001);
    EXPECT_DOUBLE_EQ(h.deformation(e)[2], 0.2);
}

TEST(Validate, RandomInstancesAreValid) {
    std::mt19937_64 rng(77);
    for (int i = 0; i < 50; ++i) {
        const auto inst = testutil::random_instance(rng);
        EXPECT_TRUE(validate(inst.g).empty());
        EXPECT_LE(inst.g.nodes.size(), 20u);
    }
}

TEST(Features, SingleBiasGivesUnitScore) {
    auto g = tiny_chain();
    std::fill(g.theta.begin(), g.theta.end(), 0.0);
    g.bias(1) = 1.0;
    std::mt19937_64 rng(1);
    const auto pyr = testutil::random_pyramid(rng, 4, 4, 1, 1, 0);
    auto maps = bottom_up(g, pyr, 1);
    const auto pt = top_down(maps, {0, 1, 1});
    EXPECT_DOUBLE_EQ(pt.score, 1.0);
    const auto phi = parse_tree_features(g, pyr, pt);
    const auto dense = phi.dense(g.theta.size());
    EXPECT_DOUBLE_EQ(dense[static_cast<std::size_t>(g.node(1).bias_offset)], 1.0);
    EXPECT_DOUBLE_EQ(phi.dot(g.theta), 1.0);
}

TEST(Features, ZeroDisplacementGivesZeroDeformationBlock) {
    std::mt19937_64 rng(3);
    const auto inst = testutil::random_instance(rng);
    auto maps = bottom_up(inst.g, inst.pyr, 1);
    for (int l = 0; l < inst.pyr.num_levels(); ++l) {
        const auto& m = maps.node_map(inst.g.root, l);
        for (int y = 0; y < m.height; ++y)
            for (int x = 0; x < m.width; ++x) {
                if (m(x, y) == kNegInf) continue;
                auto pt = top_down(maps, {l, x, y});
                for (auto& pn : pt.nodes) pn.delta = {};
                const auto phi = parse_tree_features(inst.g, inst.pyr, pt);
                const auto dense = phi.dense(inst.g.theta.size());
                for (int off : inst.g.deformation_offsets())
                    for (int k = 0; k < 4; ++k) EXPECT_EQ(dense[static_cast<std::size_t>(off + k)], 0.0);
            }
    }
}

TEST(Features, SharedFilterUsesOneOffset) {
    AndOrGraph g;
    g.meta.levels_per_octave = 1;
    g.root = g.add_node(NodeRole::RootOr);
    const NodeId a = g.add_node(NodeRole::SingleCar), b = g.add_node(NodeRole::SingleCar);
    const NodeId part = g.add_terminal(g.add_filter(1, 1));
    g.add_edge(g.root, a);
    g.add_edge(g.root, b);
    g.add_edge(a, part, {0, 0}, 0, true);
    g.add_edge(b, part, {1, 0}, 0, true);
    EXPECT_TRUE(validate(g).empty());
    std::mt19937_64 rng(4);
    testutil::randomize_theta(g, rng);
    const auto pyr = testutil::random_pyramid(rng, 5, 5, 1, 1, 0);
    auto m1 = bottom_up(g, pyr, 1);
    const auto before = m1.extract(a, {0, 2, 2});
    auto g2 = g;
    g2.filter_weights(0)[3] += 1.0;
    // the same placement now scores differently through both parents
    const auto fa = parse_tree_features(g, pyr, before);
    EXPECT_NEAR(fa.dot(g2.theta) - fa.dot(g.theta), pyr.levels[0].at(before.nodes[1].pos.x, before.nodes[1].pos.y, 3),
                1e-12);
}

TEST(Boxes, LevelScaling) {
    AndOrGraph g;
    g.meta.cell_size = 8;
    g.meta.levels_per_octave = 5;
    g.root = g.add_node(NodeRole::RootOr);
    const NodeId car = g.add_node(NodeRole::SingleCar);
    g.node(car).model_box = {0, 0, 12, 6};
    g.node(car).view = 3;
    g.node(car).config = 2;
    ParseTree pt;
    pt.nodes.push_back({g.root, {0, 4, 7}, -1, -1, {}, 0});
    pt.nodes.push_back({car, {0, 4, 7}, 0, 0, {}, -1});
    auto boxes = parse_tree_boxes(g, pt);
    ASSERT_EQ(boxes.size(), 1u);
    EXPECT_EQ(boxes[0].box, (Box{32, 56, 96, 48}));
    pt.nodes[0].pos.level = pt.nodes[1].pos.level = 5;
    boxes = parse_tree_boxes(g, pt);
    EXPECT_EQ(boxes[0].box, (Box{64, 112, 192, 96}));
    EXPECT_EQ(viewpoint_of(g, pt), std::vector<int>{3});
    EXPECT_EQ(occlusion_config_of(g, pt), std::vector<int>{2});
}

TEST(Boxes, TwoCarTreeHasUnion) {
    AndOrGraph g;
    g.meta.cell_size = 4;
    g.meta.levels_per_octave = 1;
    g.meta.views = 8;
    g.root = g.add_node(NodeRole::RootOr);
    const NodeId pat = g.add_node(NodeRole::Pattern), slot = g.add_node(NodeRole::CarSlot);
    NodeId cars[2];
    for (int k = 0; k < 2; ++k) {
        cars[k] = g.add_node(NodeRole::SingleCar);
        g.node(cars[k]).model_box = {-2, -1, 4, 2};
        g.node(cars[k]).view = k == 0 ? 7 : 1;
        g.node(cars[k]).config = k;
        g.add_edge(cars[k], g.add_terminal(g.add_filter(1, 1)));
        g.add_edge(slot, cars[k]);
    }
    g.add_edge(g.root, pat);
    const EdgeId e1 = g.add_edge(pat, slot, {0, 0});
    const EdgeId e2 = g.add_edge(pat, slot, {3, 1});
    ParseTree pt;
    pt.nodes.push_back({g.root, {0, 5, 5}, -1, -1, {}, 0});
    pt.nodes.push_back({pat, {0, 5, 5}, 0, 0, {}, -1});
    pt.nodes.push_back({slot, {0, 5, 5}, 1, e1, {}, 3});
    pt.nodes.push_back({slot, {0, 8, 6}, 1, e2, {}, 4});
    pt.nodes.push_back({cars[0], {0, 5, 5}, 2, 3, {}, -1});
    pt.nodes.push_back({cars[1], {0, 8, 6}, 3, 4, {}, -1});
    const auto boxes = parse_tree_boxes(g, pt);
    ASSERT_EQ(boxes.size(), 3u);
    EXPECT_EQ(boxes[0].role, BoxRole::SingleCar);
    EXPECT_EQ(boxes[1].role, BoxRole::SingleCar);
    EXPECT_EQ(boxes[2].role, BoxRole::Union);
    EXPECT_EQ(boxes[2].box, union_box(boxes[0].box, boxes[1].box));
    EXPECT_EQ(viewpoint_of(g, pt), (std::vector<int>{7, 1}));
    EXPECT_EQ(occlusion_config_of(g, pt), (std::vector<int>{0, 1}));
}

TEST(Boxes, NoCarIsAStructuralError) {
    AndOrGraph g;
    g.root = g.add_node(NodeRole::RootOr);
    ParseTree pt;
    pt.nodes.push_back({g.root, {0, 0, 0}, -1, -1, {}, -1});
    EXPECT_THROW(viewpoint_of(g, pt), ContractError);
}

TEST(ModelIo, SaveLoadSaveIsByteIdentical) {
    std::mt19937_64 rng(5);
    for (int i = 0; i < 10; ++i) {
        auto inst = testutil::random_instance(rng);
        inst.g.node(1).label = "part_a";
        const std::string p1 = ::testing::TempDir() + "/m1.txt", p2 = ::testing::TempDir() + "/m2.txt";
        save_model(inst.g, p1);
        const auto back = load_model(p1);
        save_model(back, p2);
        EXPECT_EQ(slurp(p1), slurp(p2));
        EXPECT_EQ(back.theta, inst.g.theta);
        EXPECT_TRUE(validate(back).empty());
    }
}

TEST(ModelIo, TruncatedFileReportsLine) {
    const auto text = model_to_string(tiny_chain());
    const auto cut = text.substr(0, text.find("edges"));
    try {
        model_from_string(cut);
        FAIL() << "expected a parse error";
    } catch (const ParseError& e) {
        EXPECT_GT(e.line(), 10);
        EXPECT_NE(std::string(e.what()).find("line"), std::string::npos);
    }
}

TEST(ModelIo, VersionMismatch) {
    auto text = model_to_string(tiny_chain());
    text.replace(0, text.find('\n'), "andor-model 99");
    EXPECT_THROW(model_from_string(text), VersionError);
}

TEST(ModelIo, MalformedValue) {
    auto text = model_to_string(tiny_chain());
    const auto pos = text.find("theta\n") + 6;
    text.replace(pos, text.find('\n', pos) - pos, "abc");
    EXPECT_THROW(model_from_string(text), ParseError);
}
