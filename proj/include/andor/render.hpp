#pragma once

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include "andor/image.hpp"
#include "andor/positives.hpp"
#include "andor/simulator.hpp"

namespace andor {

struct RenderOptions {
    double car_px = 48;       // pixel height of a type-scale-1 car
    int margin = 16;
    double blur = 0.8;
    double noise = 3.0;
    int clutter = 4;          // textured background rectangles
    double min_car_visible = 0.3;  // redraw scenes hiding more of any car
    int max_attempts = 64;
};

/// One rendered image. `occluded` flags cars with a part under the occlusion threshold.
struct SynthImage {
    Image image;
    Annotation annotation;
    std::vector<bool> occluded;
    SceneConfig scene;
    bool background_only = false;

    double occluded_fraction() const {
        if (occluded.empty()) return 0;
        int n = 0;
        for (bool o : occluded) n += o;
        return static_cast<double>(n) / static_cast<double>(occluded.size());
    }
};

namespace detail {

inline void fill_stripes(Image& img, const Box& r, const PartTexture& t) {
    const int x0 = std::max(0, static_cast<int>(std::floor(r.x))), y0 = std::max(0, static_cast<int>(std::floor(r.y)));
    const int x1 = std::min(img.width, static_cast<int>(std::ceil(r.x2())));
    const int y1 = std::min(img.height, static_cast<int>(std::ceil(r.y2())));
    const double a = t.angle_deg * kPi / 180.0, ca = std::cos(a), sa = std::sin(a);
    for (int y = y0; y < y1; ++y)
        for (int x = x0; x < x1; ++x) {
            const double cov = std::clamp(std::min(x + 1.0, r.x2()) - std::max<double>(x, r.x), 0.0, 1.0) *
                               std::clamp(std::min(y + 1.0, r.y2()) - std::max<double>(y, r.y), 0.0, 1.0);
            if (cov <= 0) continue;
            const double u = (x - r.x) * ca + (y - r.y) * sa;
            const double v = t.mean + t.contrast * std::sin(2 * kPi * u / t.period);
            img.at(x, y) = (1 - cov) * img.at(x, y) + cov * v;
        }
}

inline Image background(int w, int h, std::mt19937_64& rng, const RenderOptions& opt) {
    std::uniform_real_distribution<double> U(0.0, 1.0);
    Image img(w, h, 90 + 60 * U(rng));
    for (int k = 0; k < 3; ++k) {
        const double fx = (U(rng) - 0.5) / 40, fy = (U(rng) - 0.5) / 40, ph = U(rng) * 2 * kPi, amp = 10 + 20 * U(rng);
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) img.at(x, y) += amp * std::sin(2 * kPi * (fx * x + fy * y) + ph);
    }
    for (int k = 0; k < opt.clutter; ++k) {
        const double bw = 6 + 30 * U(rng), bh = 6 + 30 * U(rng);
        const Box r{U(rng) * (w - bw), U(rng) * (h - bh), bw, bh};
        fill_stripes(img, r, {U(rng) * 180, 4 + 8 * U(rng), 60 + 130 * U(rng), 10 + 30 * U(rng)});
    }
    return img;
}

inline void finish(Image& img, std::mt19937_64& rng, const RenderOptions& opt) {
    img = gaussian_blur(img, opt.blur);
    std::normal_distribution<double> N(0.0, opt.noise);
    for (double& v : img.pixels) v += N(rng);
    quantize_8bit(img);
}

inline double car_visible_fraction(const SceneConfig& cfg, std::size_t i) {
    return visible_fraction(cfg.cars[i].box, occluders_of(cfg, i));
}

}  // namespace detail

/// Draws cars far to near over a cluttered background: body, outline, then
/// the striped parts facing the camera. Boxes are amodal.
inline SynthImage render_scene(const SceneConfig& cfg, const SimOptions& sim, const RenderOptions& opt,
                               std::mt19937_64& rng, const PartDictionary& dict) {
    std::vector<Box> boxes;
    for (const auto& c : cfg.cars) boxes.push_back(c.box);
    const Box u = union_box(boxes);
    const double s = opt.car_px;
    const int w = static_cast<int>(std::ceil(u.w * s)) + 2 * opt.margin;
    const int h = static_cast<int>(std::ceil(u.h * s)) + 2 * opt.margin;
    auto to_px = [&](const Box& b) {
        return Box{(b.x - u.x) * s + opt.margin, (b.y - u.y) * s + opt.margin, b.w * s, b.h * s};
    };
    SynthImage out;
    out.scene = cfg;
    out.image = detail::background(w, h, rng, opt);
    std::vector<std::size_t> order{0, 1, 2};
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return cfg.cars[a].depth < cfg.cars[b].depth; });
    for (std::size_t i : order) {
        const SimCar& car = cfg.cars[i];
        const Box cb = to_px(car.box);
        const double body = 70 + 60.0 * car.type / std::max(1, sim.types - 1);
        detail::fill_stripes(out.image, cb, {0, 1e9, 30, 0});
        detail::fill_stripes(out.image, {cb.x + 2, cb.y + 2, cb.w - 4, cb.h - 4}, {0, 1e9, body, 0});
        for (const UnitRect& r : dict.layout(car.view, sim.views).visible)
            detail::fill_stripes(out.image, to_px(part_box(car, r.part, sim.views, dict)),
                                 dict.textures[static_cast<std::size_t>(r.part)]);
    }
    detail::finish(out.image, rng, opt);
    for (std::size_t i = 0; i < 3; ++i) {
        out.annotation.boxes.push_back(to_px(cfg.cars[i].box));
        out.annotation.views.push_back(cfg.cars[i].view);
        const auto vis = part_visibility(cfg, i, sim.views, dict);
        bool occ = false;
        for (double v : vis)
            if (v >= 0 && v < sim.occluded_below) occ = true;
        out.occluded.push_back(occ);
    }
    return out;
}

inline SynthImage render_background(int w, int h, std::mt19937_64& rng, const RenderOptions& opt) {
    SynthImage out;
    out.background_only = true;
    out.image = detail::background(w, h, rng, opt);
    detail::finish(out.image, rng, opt);
    return out;
}

/// Scene image i is drawn from (seed, i) alone, redrawing scenes in which a
/// car is less than min_car_visible visible. Background images follow.
inline std::vector<SynthImage> synth_dataset(int scenes, int backgrounds, const SimOptions& sim,
                                             const RenderOptions& opt, std::uint64_t seed,
                                             const PartDictionary& dict = default_part_dictionary(),
                                             unsigned threads = default_threads()) {
    std::vector<SynthImage> out(static_cast<std::size_t>(scenes + backgrounds));
    parallel_for(
        out.size(),
        [&](std::size_t i) {
            if (i >= static_cast<std::size_t>(scenes)) {
                auto rng = scene_rng(seed ^ 0x5bd1e995u, i);
                out[i] = render_background(320, 200, rng, opt);
                out[i].annotation.image = "bg_" + std::to_string(i - static_cast<std::size_t>(scenes));
                return;
            }
            SceneConfig cfg;
            std::mt19937_64 rng;
            for (int a = 0; a < opt.max_attempts; ++a) {
                rng = scene_rng(seed + static_cast<std::uint64_t>(a) * 0x9E3779B97F4A7C15ull, i);
                cfg = sample_scene(rng, sim, dict);
                bool ok = true;
                for (std::size_t c = 0; c < 3; ++c)
                    if (detail::car_visible_fraction(cfg, c) < opt.min_car_visible) ok = false;
                if (ok) break;
            }
            out[i] = render_scene(cfg, sim, opt, rng, dict);
            out[i].annotation.image = "scene_" + std::to_string(i);
        },
        threads);
    return out;
}

/// Writes `<dir>/<name>.pgm` per image and `<dir>/annotations.txt`; image paths
/// in the annotation file are relative to `dir`. Also writes `<dir>/occlusion.txt`
/// with `name cars occluded` per scene image.
inline void write_dataset(const std::vector<SynthImage>& set, const std::string& dir) {
    std::filesystem::create_directories(dir);
    AnnotationSet ann;
    std::ofstream occ(dir + "/occlusion.txt");
    if (!occ) throw Error("cannot write " + dir + "/occlusion.txt");
    for (const auto& s : set) {
        Annotation a = s.annotation;
        a.image += ".pgm";
        write_pgm(s.image, dir + "/" + a.image);
        if (!s.background_only) {
            int n = 0;
            for (bool o : s.occluded) n += o;
            occ << a.image << " " << s.occluded.size() << " " << n << "\n";
        }
        ann.push_back(std::move(a));
    }
    write_annotations(dir + "/annotations.txt", ann);
}

}  // namespace andor
