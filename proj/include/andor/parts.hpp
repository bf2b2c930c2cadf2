#pragma once

#include <array>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "andor/common.hpp"

#ifndef ANDOR_DATA_DIR
#define ANDOR_DATA_DIR "data"
#endif

namespace andor {

inline constexpr int kNumParts = 17;
inline constexpr int kNumSectors = 8;
inline constexpr int kPartsFormatVersion = 1;

/// Stripe texture used when rendering a part.
struct PartTexture {
    double angle_deg = 0;
    double period = 5;
    double mean = 128;
    double contrast = 40;
};

/// Part rectangle in the unit car box, corners (x0,y0)-(x1,y1).
struct UnitRect {
    int part = -1;
    double x0 = 0, y0 = 0, x1 = 0, y1 = 0;
};

/// Appearance of a car seen from one 45 degree azimuth sector.
struct SectorLayout {
    double aspect = 1;  // width / height
    std::vector<UnitRect> visible;

    const UnitRect* find(int part) const {
        for (const auto& r : visible)
            if (r.part == part) return &r;
        return nullptr;
    }
};

struct PartDictionary {
    std::vector<std::string> names;
    std::vector<PartTexture> textures;
    std::array<SectorLayout, kNumSectors> sectors;

    /// Canonical sector for view bin b of B: floor(((b + 0.5) * 360 / B) / 45).
    static int sector_of_view(int b, int views) {
        ANDOR_REQUIRE(views >= 1 && b >= 0 && b < views, "view bin out of range");
        const double centre = (b + 0.5) * 360.0 / views;
        return static_cast<int>(centre / 45.0) % kNumSectors;
    }
    const SectorLayout& layout(int b, int views) const { return sectors[sector_of_view(b, views)]; }
};

inline PartDictionary read_part_dictionary(std::istream& in) {
    int line_no = 0;
    auto next = [&]() {
        std::string line;
        while (std::getline(in, line)) {
            ++line_no;
            if (auto h = line.find('#'); h != std::string::npos) line.erase(h);
            if (line.find_first_not_of(" \t\r") != std::string::npos) return std::istringstream(line);
        }
        throw ParseError("unexpected end of part dictionary", line_no + 1);
    };
    auto fail = [&](const std::string& m) -> void { throw ParseError(m, line_no); };
    PartDictionary d;
    {
        auto s = next();
        std::string magic;
        int version = 0;
        if (!(s >> magic >> version) || magic != "andor-parts") fail("not a part dictionary");
        if (version != kPartsFormatVersion)
            throw VersionError("part dictionary version " + std::to_string(version) + ", expected " +
                               std::to_string(kPartsFormatVersion));
    }
    {
        auto s = next();
        std::string k;
        int n = 0;
        if (!(s >> k >> n) || k != "parts" || n != kNumParts) fail("expected 'parts 17'");
    }
    for (int i = 0; i < kNumParts; ++i) {
        auto s = next();
        std::string k, name;
        int id = -1;
        PartTexture t;
        if (!(s >> k >> id >> name >> t.angle_deg >> t.period >> t.mean >> t.contrast) || k != "part" || id != i)
            fail("malformed part line");
        d.names.push_back(name);
        d.textures.push_back(t);
    }
    {
        auto s = next();
        std::string k;
        int n = 0;
        if (!(s >> k >> n) || k != "sectors" || n != kNumSectors) fail("expected 'sectors 8'");
    }
    for (int k = 0; k < kNumSectors; ++k) {
        auto s = next();
        std::string w1, w2, w3;
        int id = -1, n = 0;
        SectorLayout& L = d.sectors[static_cast<std::size_t>(k)];
        if (!(s >> w1 >> id >> w2 >> L.aspect >> w3 >> n) || w1 != "sector" || id != k || w2 != "aspect" ||
            w3 != "visible" || n < 0 || n > kNumParts || !(L.aspect > 0))
            fail("malformed sector line");
        for (int j = 0; j < n; ++j) {
            auto r = next();
            UnitRect u;
            if (!(r >> u.part >> u.x0 >> u.y0 >> u.x1 >> u.y1) || u.part < 0 || u.part >= kNumParts ||
                !(u.x1 > u.x0) || !(u.y1 > u.y0) || u.x0 < 0 || u.y0 < 0 || u.x1 > 1 + 1e-9 || u.y1 > 1 + 1e-9)
                fail("malformed part rectangle");
            if (L.find(u.part)) fail("part listed twice in a sector");
            L.visible.push_back(u);
        }
    }
    return d;
}

inline PartDictionary load_part_dictionary(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open part dictionary " + path);
    return read_part_dictionary(in);
}

inline std::string default_part_dictionary_path() { return std::string(ANDOR_DATA_DIR) + "/car_parts_v1.txt"; }

inline const PartDictionary& default_part_dictionary() {
    static const PartDictionary d = load_part_dictionary(default_part_dictionary_path());
    return d;
}

}  // namespace andor
