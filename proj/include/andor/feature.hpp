#pragma once

#include <array>
#include <cmath>
#include <numbers>
#include <vector>

#include "andor/common.hpp"
#include "andor/image.hpp"

namespace andor {

inline constexpr int kHogChannels = 31;

/// Dense grid of 31-channel HOG cell descriptors, laid out (y, x, channel).
struct FeatureGrid {
    int width = 0;
    int height = 0;
    std::vector<double> values;

    FeatureGrid() = default;
    FeatureGrid(int w, int h) : width(w), height(h), values(static_cast<std::size_t>(w) * h * kHogChannels, 0.0) {}

    double* cell(int x, int y) { return values.data() + (static_cast<std::size_t>(y) * width + x) * kHogChannels; }
    const double* cell(int x, int y) const {
        return values.data() + (static_cast<std::size_t>(y) * width + x) * kHogChannels;
    }
    double at(int x, int y, int c) const { return cell(x, y)[c]; }
};

/// HOG descriptor per cell: 18 contrast-sensitive orientation bins, 9
/// contrast-insensitive bins and 4 texture-energy channels. Gradients are
/// centered differences (replicated border); each pixel votes into two
/// neighbouring orientation bins and four neighbouring cells. Each cell is
/// normalised by the energies of the four 2x2 blocks containing it, with
/// truncation at 0.2. Border blocks reuse the nearest in-range cell energy.
inline FeatureGrid compute_cells(const Image& img, int cell_size) {
    ANDOR_REQUIRE(cell_size >= 1, "cell size must be positive");
    if (img.width < 2 * cell_size || img.height < 2 * cell_size)
        throw DimensionError("image " + std::to_string(img.width) + "x" + std::to_string(img.height) +
                             " smaller than two cells of " + std::to_string(cell_size) + " px");
    const int cw = img.width / cell_size, ch = img.height / cell_size;
    constexpr int kBins = 18;
    std::vector<double> hist(static_cast<std::size_t>(cw) * ch * kBins, 0.0);
    const double bin_width = 2.0 * std::numbers::pi / kBins;

    for (int y = 0; y < img.height; ++y) {
        const int ym = std::max(0, y - 1), yp = std::min(img.height - 1, y + 1);
        const double yc = (y + 0.5) / cell_size - 0.5;
        const int iy = static_cast<int>(std::floor(yc));
        const double vy1 = yc - iy, vy0 = 1.0 - vy1;
        for (int x = 0; x < img.width; ++x) {
            const int xm = std::max(0, x - 1), xp = std::min(img.width - 1, x + 1);
            const double dx = img.at(xp, y) - img.at(xm, y);
            const double dy = img.at(x, yp) - img.at(x, ym);
            const double mag = std::sqrt(dx * dx + dy * dy);
            if (mag == 0.0) continue;
            double angle = std::atan2(dy, dx);
            if (angle < 0) angle += 2.0 * std::numbers::pi;
            const double o = angle / bin_width;
            int o0 = static_cast<int>(std::floor(o));
            const double wo1 = o - o0, wo0 = 1.0 - wo1;
            o0 %= kBins;
            const int o1 = (o0 + 1) % kBins;

            const double xc = (x + 0.5) / cell_size - 0.5;
            const int ix = static_cast<int>(std::floor(xc));
            const double vx1 = xc - ix, vx0 = 1.0 - vx1;
            const int cx[2] = {ix, ix + 1};
            const int cy[2] = {iy, iy + 1};
            const double wx[2] = {vx0, vx1};
            const double wy[2] = {vy0, vy1};
            for (int a = 0; a < 2; ++a) {
                if (cy[a] < 0 || cy[a] >= ch) continue;
                for (int b = 0; b < 2; ++b) {
                    if (cx[b] < 0 || cx[b] >= cw) continue;
                    double* hcell = &hist[(static_cast<std::size_t>(cy[a]) * cw + cx[b]) * kBins];
                    const double w = mag * wx[b] * wy[a];
                    hcell[o0] += w * wo0;
                    hcell[o1] += w * wo1;
                }
            }
        }
    }

    std::vector<double> energy(static_cast<std::size_t>(cw) * ch, 0.0);
    for (std::size_t c = 0; c < energy.size(); ++c) {
        const double* hcell = &hist[c * kBins];
        double e = 0;
        for (int o = 0; o < 9; ++o) {
            const double s = hcell[o] + hcell[o + 9];
            e += s * s;
        }
        energy[c] = e;
    }
    auto cell_energy = [&](int x, int y) {
        x = std::clamp(x, 0, cw - 1);
        y = std::clamp(y, 0, ch - 1);
        return energy[static_cast<std::size_t>(y) * cw + x];
    };
    auto inv_norm = [](double e) { return e > 0 ? 1.0 / std::sqrt(e) : 0.0; };

    FeatureGrid out(cw, ch);
    for (int y = 0; y < ch; ++y) {
        for (int x = 0; x < cw; ++x) {
            std::array<double, 4> n{};
            int k = 0;
            for (int by = y - 1; by <= y; ++by)
                for (int bx = x - 1; bx <= x; ++bx)
                    n[k++] = inv_norm(cell_energy(bx, by) + cell_energy(bx + 1, by) + cell_energy(bx, by + 1) +
                                      cell_energy(bx + 1, by + 1));
            const double* hcell = &hist[(static_cast<std::size_t>(y) * cw + x) * kBins];
            double* f = out.cell(x, y);
            std::array<double, 4> texture{};
            for (int o = 0; o < kBins; ++o) {
                double sum = 0;
                for (int j = 0; j < 4; ++j) {
                    const double hv = std::min(hcell[o] * n[j], 0.2);
                    sum += hv;
                    texture[j] += hv;
                }
                f[o] = 0.5 * sum;
            }
            for (int o = 0; o < 9; ++o) {
                const double s = hcell[o] + hcell[o + 9];
                double sum = 0;
                for (int j = 0; j < 4; ++j) sum += std::min(s * n[j], 0.2);
                f[18 + o] = 0.5 * sum;
            }
            for (int j = 0; j < 4; ++j) f[27 + j] = 0.2357 * texture[j];
        }
    }
    return out;
}

/// Multi-scale HOG pyramid. Level l is computed from the image resampled by
/// 2^(-l/lambda) and zero-padded by `padding` cells on every side.
struct FeaturePyramid {
    std::vector<FeatureGrid> levels;
    int levels_per_octave = 1;
    int cell_size = 8;
    int padding = 0;
    int image_width = 0;
    int image_height = 0;

    double scale_of_level(int l) const { return std::exp2(-static_cast<double>(l) / levels_per_octave); }
    int num_levels() const { return static_cast<int>(levels.size()); }
};

struct PyramidOptions {
    int levels_per_octave = 5;
    int cell_size = 8;
    int padding = 0;
    /// Levels stop once the unpadded grid is smaller than this.
    int min_width = 1;
    int min_height = 1;
    /// 0 means unbounded.
    int max_levels = 0;
};

inline FeatureGrid pad_grid(const FeatureGrid& g, int padding) {
    if (padding == 0) return g;
    FeatureGrid out(g.width + 2 * padding, g.height + 2 * padding);
    for (int y = 0; y < g.height; ++y)
        std::copy(g.cell(0, y), g.cell(0, y) + static_cast<std::size_t>(g.width) * kHogChannels,
                  out.cell(padding, y + padding));
    return out;
}

inline FeaturePyramid build_pyramid(const Image& img, const PyramidOptions& opt) {
    ANDOR_REQUIRE(opt.levels_per_octave >= 1, "levels per octave must be >= 1");
    ANDOR_REQUIRE(opt.padding >= 0, "padding must be non-negative");
    FeaturePyramid pyr;
    pyr.levels_per_octave = opt.levels_per_octave;
    pyr.cell_size = opt.cell_size;
    pyr.padding = opt.padding;
    pyr.image_width = img.width;
    pyr.image_height = img.height;
    for (int l = 0; opt.max_levels <= 0 || l < opt.max_levels; ++l) {
        const double scale = pyr.scale_of_level(l);
        const int w = static_cast<int>(std::floor(img.width * scale + 1e-9));
        const int h = static_cast<int>(std::floor(img.height * scale + 1e-9));
        if (w < 2 * opt.cell_size || h < 2 * opt.cell_size) break;
        if (w / opt.cell_size < opt.min_width || h / opt.cell_size < opt.min_height) break;
        pyr.levels.push_back(pad_grid(compute_cells(resize_area(img, scale), opt.cell_size), opt.padding));
    }
    return pyr;
}

}  // namespace andor
