#pragma once

#include <array>
#include <cmath>
#include <ostream>
#include <random>
#include <vector>

#include "andor/common.hpp"
#include "andor/parts.hpp"

namespace andor {

inline constexpr double kPi = 3.14159265358979323846;

/// Knobs of the 2.5-D grid simulator. Lengths are in car heights.
struct SimOptions {
    int views = 8;
    int types = 4;                // car types; type t scales height in [0.9, 1.1]
    double jitter = 0.3;          // |dx|, |dz| bound around the nominal grid point
    double spacing = 2.6;         // grid pitch on the ground plane
    double foreshorten = 0.55;    // ground x -> image x
    double depth_drop = 0.25;     // image y shift per unit depth at elevation 0
    double elevation_drop = 0.6;  // extra shift per unit depth, times sin(elevation)
    double occluded_below = 0.4;  // visible fraction under which a part is occluded
};

struct SimCar {
    int type = 0;
    bool rear = false;
    int col = 1, row = 1;
    double dx = 0, dz = 0;
    int view = 0;
    double depth = 0;  // larger is nearer to the camera
    Box box;           // image plane, car-height units
};

/// cars[0] is the car in the centre cell.
struct SceneConfig {
    std::array<SimCar, 3> cars;
    double azimuth = 0, elevation = 0;
    int view_bin = 0;
};

struct SimScene {
    SceneConfig config;
    std::array<double, kNumParts> visible{};  // centre car; -1 = faces away
};

inline int azimuth_bin(double azimuth, int views) {
    const int b = static_cast<int>(std::floor(azimuth / (2 * kPi / views)));
    return std::clamp(b, 0, views - 1);
}

inline int car_view(int camera_bin, bool rear, int views) { return (camera_bin + (rear ? views / 2 : 0)) % views; }

inline double type_height(int type, int types) { return types <= 1 ? 1.0 : 0.9 + 0.2 * type / (types - 1); }

/// Image-plane rectangle of `part` on `car`, or an empty box if the part faces away.
inline Box part_box(const SimCar& car, int part, int views, const PartDictionary& dict) {
    const UnitRect* r = dict.layout(car.view, views).find(part);
    if (!r) return {};
    const Box& b = car.box;
    return {b.x + r->x0 * b.w, b.y + r->y0 * b.h, (r->x1 - r->x0) * b.w, (r->y1 - r->y0) * b.h};
}

/// Fraction of `p` not covered by the union of `occluders`, by inclusion-exclusion.
inline double visible_fraction(const Box& p, const std::vector<Box>& occluders) {
    ANDOR_REQUIRE(p.area() > 0, "part rectangle has no area");
    ANDOR_REQUIRE(occluders.size() < 16, "too many occluders");
    const std::size_t n = occluders.size();
    double covered = 0;
    for (std::size_t mask = 1; mask < (std::size_t{1} << n); ++mask) {
        Box c = p;
        int bits = 0;
        for (std::size_t j = 0; j < n; ++j) {
            if (!(mask >> j & 1)) continue;
            ++bits;
            const Box& o = occluders[j];
            const double x0 = std::max(c.x, o.x), y0 = std::max(c.y, o.y);
            const double x1 = std::min(c.x2(), o.x2()), y1 = std::min(c.y2(), o.y2());
            c = {x0, y0, std::max(0.0, x1 - x0), std::max(0.0, y1 - y0)};
        }
        covered += (bits % 2 ? 1 : -1) * c.area();
    }
    const double f = 1.0 - covered / p.area();
    if (f < 1e-12) return 0.0;
    return std::min(1.0, f);
}

/// Places the cars of `cfg` on the image plane from their grid cells, jitter, type and view.
inline void project_scene(SceneConfig& cfg, const SimOptions& opt, const PartDictionary& dict) {
    const double ca = std::cos(cfg.azimuth), sa = std::sin(cfg.azimuth);
    const double drop = opt.depth_drop + opt.elevation_drop * std::sin(cfg.elevation);
    for (auto& c : cfg.cars) {
        const double gx = (c.col - 1) * opt.spacing + c.dx, gz = (c.row - 1) * opt.spacing + c.dz;
        const double u = gx * ca + gz * sa;
        c.depth = -gx * sa + gz * ca;
        c.view = car_view(cfg.view_bin, c.rear, opt.views);
        const double h = type_height(c.type, opt.types);
        const double w = dict.layout(c.view, opt.views).aspect * h;
        const double cx = u * opt.foreshorten, bottom = c.depth * drop;
        c.box = {cx - w / 2, bottom - h, w, h};
    }
}

/// Boxes of cars strictly nearer than car `i`.
inline std::vector<Box> occluders_of(const SceneConfig& cfg, std::size_t i) {
    std::vector<Box> o;
    for (std::size_t j = 0; j < cfg.cars.size(); ++j)
        if (j != i && cfg.cars[j].depth > cfg.cars[i].depth) o.push_back(cfg.cars[j].box);
    return o;
}

inline std::array<double, kNumParts> part_visibility(const SceneConfig& cfg, std::size_t car, int views,
                                                    const PartDictionary& dict) {
    std::array<double, kNumParts> vis;
    const auto occ = occluders_of(cfg, car);
    for (int p = 0; p < kNumParts; ++p) {
        const Box pb = part_box(cfg.cars[car], p, views, dict);
        vis[static_cast<std::size_t>(p)] = pb.area() > 0 ? visible_fraction(pb, occ) : -1.0;
    }
    return vis;
}

/// Draws one scene: centre cell plus two other cells of the 3x3 grid.
inline SceneConfig sample_scene(std::mt19937_64& rng, const SimOptions& opt, const PartDictionary& dict) {
    ANDOR_REQUIRE(opt.views >= 1, "view bins must be >= 1");
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    SceneConfig cfg;
    cfg.azimuth = unit(rng) * 2 * kPi;
    cfg.elevation = unit(rng) * kPi / 4;
    cfg.view_bin = azimuth_bin(cfg.azimuth, opt.views);
    std::vector<int> cells{0, 1, 2, 3, 5, 6, 7, 8};
    std::array<int, 3> chosen{4, 0, 0};
    for (int k = 1; k < 3; ++k) {
        const auto i = std::uniform_int_distribution<std::size_t>(0, cells.size() - 1)(rng);
        chosen[static_cast<std::size_t>(k)] = cells[i];
        cells.erase(cells.begin() + static_cast<std::ptrdiff_t>(i));
    }
    for (std::size_t k = 0; k < 3; ++k) {
        SimCar& c = cfg.cars[k];
        c.col = chosen[k] % 3;
        c.row = chosen[k] / 3;
        c.type = std::uniform_int_distribution<int>(0, std::max(0, opt.types - 1))(rng);
        c.rear = unit(rng) < 0.5;
        c.dx = (2 * unit(rng) - 1) * opt.jitter;
        c.dz = (2 * unit(rng) - 1) * opt.jitter;
    }
    project_scene(cfg, opt, dict);
    return cfg;
}

inline std::mt19937_64 scene_rng(std::uint64_t seed, std::uint64_t index) {
    std::seed_seq s{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32)};
    return std::mt19937_64(s);
}

/// Scene i depends only on (seed, i).
inline std::vector<SimScene> simulate_scenes(int count, const SimOptions& opt, std::uint64_t seed,
                                             const PartDictionary& dict = default_part_dictionary(),
                                             unsigned threads = default_threads()) {
    ANDOR_REQUIRE(opt.views >= 1, "view bins must be >= 1");
    ANDOR_REQUIRE(count >= 0, "scene count must be >= 0");
    std::vector<SimScene> out(static_cast<std::size_t>(count));
    parallel_for(
        out.size(),
        [&](std::size_t i) {
            auto rng = scene_rng(seed, i);
            out[i].config = sample_scene(rng, opt, dict);
            out[i].visible = part_visibility(out[i].config, 0, opt.views, dict);
        },
        threads);
    return out;
}

// ------ data matrix -------

/// v: rows x (17 * B) visibility bits. b: rows x (18 * B * 4) boxes, slot 0 the
/// root and slot 1 + p part p, in car-height units from the car's top-left corner.
struct OcclusionDataMatrix {
    int views = 1;
    int rows = 0;
    std::vector<std::uint8_t> v;
    std::vector<double> b;
    std::vector<int> row_view;

    int v_cols() const { return kNumParts * views; }
    int b_cols() const { return (1 + kNumParts) * views * 4; }
    std::uint8_t& vis(int r, int view, int part) {
        return v[static_cast<std::size_t>(r) * static_cast<std::size_t>(v_cols()) +
                 static_cast<std::size_t>(view * kNumParts + part)];
    }
    std::uint8_t vis(int r, int view, int part) const {
        return v[static_cast<std::size_t>(r) * static_cast<std::size_t>(v_cols()) +
                 static_cast<std::size_t>(view * kNumParts + part)];
    }
    /// slot 0 = root, 1 + p = part p.
    double* geom(int r, int view, int slot) {
        return &b[static_cast<std::size_t>(r) * static_cast<std::size_t>(b_cols()) +
                  static_cast<std::size_t>((view * (1 + kNumParts) + slot) * 4)];
    }
    const double* geom(int r, int view, int slot) const {
        return &b[static_cast<std::size_t>(r) * static_cast<std::size_t>(b_cols()) +
                  static_cast<std::size_t>((view * (1 + kNumParts) + slot) * 4)];
    }
    void resize(int n) {
        rows = n;
        v.assign(static_cast<std::size_t>(n) * static_cast<std::size_t>(v_cols()), 0);
        b.assign(static_cast<std::size_t>(n) * static_cast<std::size_t>(b_cols()), 0.0);
        row_view.assign(static_cast<std::size_t>(n), 0);
    }
};

inline OcclusionDataMatrix build_data_matrix(const std::vector<SimScene>& scenes, const SimOptions& opt,
                                             const PartDictionary& dict = default_part_dictionary()) {
    ANDOR_REQUIRE(!scenes.empty(), "data matrix needs at least one scene");
    OcclusionDataMatrix D;
    D.views = opt.views;
    D.resize(static_cast<int>(scenes.size()));
    parallel_for(scenes.size(), [&](std::size_t i) {
        const int r = static_cast<int>(i);
        const SimCar& car = scenes[i].config.cars[0];
        const int view = car.view;
        D.row_view[i] = view;
        const SectorLayout& L = dict.layout(view, opt.views);
        double* root = D.geom(r, view, 0);
        root[0] = 0;
        root[1] = 0;
        root[2] = L.aspect;
        root[3] = 1;
        for (const UnitRect& u : L.visible) {
            const double f = scenes[i].visible[static_cast<std::size_t>(u.part)];
            if (f < opt.occluded_below) continue;
            D.vis(r, view, u.part) = 1;
            double* g = D.geom(r, view, 1 + u.part);
            g[0] = u.x0 * L.aspect;
            g[1] = u.y0;
            g[2] = (u.x1 - u.x0) * L.aspect;
            g[3] = u.y1 - u.y0;
        }
    });
    return D;
}

inline void write_scenes(std::ostream& out, const std::vector<SimScene>& scenes) {
    out << "andor-scenes 1\ncount " << scenes.size() << "\n";
    out.precision(6);
    for (std::size_t i = 0; i < scenes.size(); ++i) {
        const auto& c = scenes[i].config;
        out << "scene " << i << " azimuth " << c.azimuth << " elevation " << c.elevation << " bin " << c.view_bin
            << "\n";
        for (const auto& car : c.cars)
            out << "  car type " << car.type << " " << (car.rear ? "rear" : "frontal") << " cell " << car.col << " "
                << car.row << " d " << car.dx << " " << car.dz << " view " << car.view << " depth " << car.depth
                << " box " << car.box.x << " " << car.box.y << " " << car.box.w << " " << car.box.h << "\n";
        out << "  visible";
        for (double v : scenes[i].visible) out << " " << v;
        out << "\n";
    }
}

inline void write_data_matrix(std::ostream& out, const OcclusionDataMatrix& D) {
    out << "andor-occlusion-matrix 1\nviews " << D.views << "\nrows " << D.rows << "\n";
    for (int r = 0; r < D.rows; ++r) {
        out << D.row_view[static_cast<std::size_t>(r)] << " ";
        for (int p = 0; p < kNumParts; ++p) out << int(D.vis(r, D.row_view[static_cast<std::size_t>(r)], p));
        out << "\n";
    }
}

}  // namespace andor
