#include <gtest/gtest.h>

#include <random>

#include "andor/feature.hpp"
#include "oracle.hpp"

using namespace andor;

namespace {

Image random_image(int w, int h, unsigned seed) {
    std::mt19937 rng(seed);
    std::uniform_real_distribution<double> u(0, 255);
    Image img(w, h);
    for (auto& p : img.pixels) p = u(rng);
    return gaussian_blur(img, 1.0);
}

}  // namespace

TEST(ComputeCells, ConstantImageHasNoOrientationEnergy) {
    const auto g = compute_cells(Image(40, 32, 123.0), 8);
    EXPECT_EQ(g.width, 5);
    EXPECT_EQ(g.height, 4);
    for (int y = 0; y < g.height; ++y)
        for (int x = 0; x < g.width; ++x)
            for (int c = 0; c < kHogChannels; ++c) EXPECT_EQ(g.at(x, y, c), 0.0);
}

TEST(ComputeCells, VerticalStepPicksHorizontalGradientBin) {
    Image img(64, 32);
    for (int y = 0; y < 32; ++y)
        for (int x = 32; x < 64; ++x) img.at(x, y) = 255;
    const auto g = compute_cells(img, 8);
    const auto ref = oracle::insensitive_hist(img.pixels, 64, 28, 9, 8);
    int ref_bin = 0;
    for (int b = 1; b < 9; ++b)
        if (ref[b] > ref[ref_bin]) ref_bin = b;
    ASSERT_EQ(ref_bin, 0);
    // cells 3 and 4 straddle the edge at x = 32
    for (int cx : {3, 4})
        for (int cy = 1; cy < g.height - 1; ++cy) {
            int best = 0;
            for (int b = 1; b < 9; ++b)
                if (g.at(cx, cy, 18 + b) > g.at(cx, cy, 18 + best)) best = b;
            EXPECT_EQ(best, ref_bin) << "cell " << cx << "," << cy;
            EXPECT_GT(g.at(cx, cy, 18), 0.0);
        }
}

TEST(ComputeCells, IntensityScaleInvariance) {
    const auto img = random_image(48, 40, 3);
    Image scaled = img;
    for (auto& p : scaled.pixels) p *= 2.0;
    Image tiny = img;
    for (auto& p : tiny.pixels) p *= 0.013;
    const auto a = compute_cells(img, 8), b = compute_cells(scaled, 8), c = compute_cells(tiny, 8);
    ASSERT_EQ(a.values.size(), b.values.size());
    for (std::size_t i = 0; i < a.values.size(); ++i) {
        EXPECT_NEAR(a.values[i], b.values[i], 1e-9);
        EXPECT_NEAR(a.values[i], c.values[i], 1e-9);
    }
}

TEST(ComputeCells, ValuesFiniteAndTextureNonNegative) {
    const auto g = compute_cells(random_image(80, 56, 5), 8);
    for (int y = 0; y < g.height; ++y)
        for (int x = 0; x < g.width; ++x)
            for (int c = 0; c < kHogChannels; ++c) {
                EXPECT_TRUE(std::isfinite(g.at(x, y, c)));
                EXPECT_GE(g.at(x, y, c), 0.0);
            }
}

TEST(ComputeCells, TooSmallImageThrows) {
    EXPECT_THROW(compute_cells(Image(15, 40), 8), DimensionError);
    EXPECT_THROW(compute_cells(Image(40, 10), 8), DimensionError);
    EXPECT_NO_THROW(compute_cells(Image(16, 16), 8));
}

TEST(BuildPyramid, OctaveHalvesGrid) {
    const auto img = random_image(320, 240, 9);
    PyramidOptions opt;
    opt.levels_per_octave = 5;
    opt.cell_size = 8;
    const auto pyr = build_pyramid(img, opt);
    ASSERT_GT(pyr.num_levels(), 5);
    EXPECT_NEAR(pyr.levels[5].width, pyr.levels[0].width / 2.0, 1.0);
    EXPECT_NEAR(pyr.levels[5].height, pyr.levels[0].height / 2.0, 1.0);
    EXPECT_DOUBLE_EQ(pyr.scale_of_level(0), 1.0);
    for (int l = 0; l < pyr.num_levels(); ++l) {
        const double s = pyr.scale_of_level(l);
        EXPECT_NEAR(pyr.levels[l].width, std::floor(320 * s / 8), 1.0);
        EXPECT_NEAR(pyr.levels[l].height, std::floor(240 * s / 8), 1.0);
        if (l > 0) {
            EXPECT_LT(s, pyr.scale_of_level(l - 1));
        }
    }
}

TEST(BuildPyramid, OneLevelPerOctave) {
    PyramidOptions opt;
    opt.levels_per_octave = 1;
    opt.cell_size = 4;
    const auto pyr = build_pyramid(random_image(128, 96, 2), opt);
    ASSERT_GE(pyr.num_levels(), 3);
    for (int l = 1; l < pyr.num_levels(); ++l) {
        EXPECT_DOUBLE_EQ(pyr.scale_of_level(l) * 2, pyr.scale_of_level(l - 1));
        EXPECT_NEAR(pyr.levels[l].width, pyr.levels[l - 1].width / 2.0, 1.0);
    }
}

TEST(BuildPyramid, PaddingIsZero) {
    PyramidOptions opt;
    opt.levels_per_octave = 2;
    opt.cell_size = 8;
    opt.padding = 2;
    const auto pyr = build_pyramid(random_image(64, 64, 4), opt);
    const auto& l0 = pyr.levels[0];
    EXPECT_EQ(l0.width, 8 + 4);
    for (int x = 0; x < l0.width; ++x)
        for (int c = 0; c < kHogChannels; ++c) {
            EXPECT_EQ(l0.at(x, 0, c), 0.0);
            EXPECT_EQ(l0.at(x, 1, c), 0.0);
            EXPECT_EQ(l0.at(x, l0.height - 1, c), 0.0);
        }
    EXPECT_THROW(build_pyramid(Image(64, 64), PyramidOptions{0, 8, 0, 1, 1, 0}), ContractError);
}

TEST(Image, PgmRoundTripAndResize) {
    Image img(10, 6);
    for (int i = 0; i < 60; ++i) img.pixels[i] = i * 4;
    const std::string path = ::testing::TempDir() + "/rt.pgm";
    write_pgm(img, path);
    const auto back = read_image(path);
    ASSERT_EQ(back.width, 10);
    ASSERT_EQ(back.height, 6);
    for (int i = 0; i < 60; ++i) EXPECT_DOUBLE_EQ(back.pixels[i], i * 4);
    const auto half = resize_area(img, 0.5);
    EXPECT_EQ(half.width, 5);
    EXPECT_EQ(half.height, 3);
    EXPECT_DOUBLE_EQ(half.at(0, 0), (0 + 4 + 40 + 44) / 4.0);
}
