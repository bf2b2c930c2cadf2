#pragma once

// Independent brute-force references used by the tests. Nothing here calls
// the library's algorithms; only plain data types are shared.

#include <array>
#include <cmath>
#include <limits>
#include <vector>

namespace oracle {

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();

struct NaiveDT {
    std::vector<double> value;
    std::vector<int> dx, dy;
};

/// O(n^2) max over every source cell; scanning dx then dy ascending with a
/// strict comparison keeps the lexicographically smallest displacement.
inline NaiveDT naive_dt(const std::vector<double>& src, int w, int h, const std::array<double, 4>& def) {
    NaiveDT out{std::vector<double>(src.size(), kNegInf), std::vector<int>(src.size(), 0),
                std::vector<int>(src.size(), 0)};
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            double best = kNegInf;
            int bx = 0, by = 0;
            for (int sx = 0; sx < w; ++sx)
                for (int sy = 0; sy < h; ++sy) {
                    const double s = src[static_cast<std::size_t>(sy) * w + sx];
                    if (s == kNegInf) continue;
                    const int dx = sx - x, dy = sy - y;
                    const double v = s - (def[0] * dx * dx + def[1] * dx + def[2] * dy * dy + def[3] * dy);
                    if (v > best) {
                        best = v;
                        bx = dx;
                        by = dy;
                    }
                }
            const std::size_t i = static_cast<std::size_t>(y) * w + x;
            out.value[i] = best;
            out.dx[i] = bx;
            out.dy[i] = by;
        }
    return out;
}

/// Gradient of one interior pixel by centered differences.
inline std::array<double, 2> pixel_gradient(const std::vector<double>& img, int w, int x, int y) {
    const auto at = [&](int xx, int yy) { return img[static_cast<std::size_t>(yy) * w + xx]; };
    return {at(x + 1, y) - at(x - 1, y), at(x, y + 1) - at(x, y - 1)};
}

/// Contrast-insensitive 9-bin histogram of a block of interior pixels, using
/// nearest-bin voting. Enough to tell which orientation dominates.
inline std::array<double, 9> insensitive_hist(const std::vector<double>& img, int w, int x0, int y0, int size) {
    std::array<double, 9> hist{};
    const double pi = std::acos(-1.0);
    for (int y = y0; y < y0 + size; ++y)
        for (int x = x0; x < x0 + size; ++x) {
            const auto g = pixel_gradient(img, w, x, y);
            const double mag = std::hypot(g[0], g[1]);
            if (mag == 0) continue;
            double a = std::atan2(g[1], g[0]);
            if (a < 0) a += pi;
            if (a >= pi) a -= pi;
            int bin = static_cast<int>(std::lround(a / (pi / 9))) % 9;
            hist[static_cast<std::size_t>(bin)] += mag;
        }
    return hist;
}

}  // namespace oracle

// ------ exhaustive grammar scoring -------

#include <map>
#include <tuple>

#include "andor/aog.hpp"
#include "andor/feature.hpp"

namespace oracle {

/// Scores a node at a lattice position by trying every placement of every
/// deformable child across the whole child level. Only the graph and
/// pyramid data are read; anchors and correlations are recomputed here.
class BruteForce {
public:
    BruteForce(const andor::AndOrGraph& g, const andor::FeaturePyramid& pyr) : g_(g), pyr_(pyr) {}

    double value(int n, int l, int x, int y) {
        if (l < 0 || l >= static_cast<int>(pyr_.levels.size())) return kNegInf;
        const auto& lv = pyr_.levels[static_cast<std::size_t>(l)];
        if (x < 0 || y < 0 || x >= lv.width || y >= lv.height) return kNegInf;
        const auto key = std::make_tuple(n, l, x, y);
        if (auto it = memo_.find(key); it != memo_.end()) return it->second;
        const auto& nd = g_.nodes[static_cast<std::size_t>(n)];
        double v = kNegInf;
        if (nd.kind() == andor::NodeKind::Terminal) {
            const auto& f = g_.filters[static_cast<std::size_t>(nd.filter)];
            if (x + f.width <= lv.width && y + f.height <= lv.height) {
                v = 0;
                for (int fy = 0; fy < f.height; ++fy)
                    for (int fx = 0; fx < f.width; ++fx)
                        for (int c = 0; c < andor::kHogChannels; ++c)
                            v += lv.at(x + fx, y + fy, c) *
                                 g_.theta[static_cast<std::size_t>(f.offset + (fy * f.width + fx) * andor::kHogChannels + c)];
            }
        } else if (nd.kind() == andor::NodeKind::Or) {
            for (int e : nd.children) v = std::max(v, value(g_.edges[static_cast<std::size_t>(e)].child, l, x, y));
        } else {
            v = g_.theta[static_cast<std::size_t>(nd.bias_offset)];
            for (int e : nd.children) {
                const double c = edge_best(e, l, x, y);
                if (c == kNegInf) {
                    v = kNegInf;
                    break;
                }
                v += c;
            }
        }
        memo_[key] = v;
        return v;
    }

    /// Best contribution of an edge for a parent at (l, x, y).
    double edge_best(int e, int l, int x, int y) {
        const auto& ed = g_.edges[static_cast<std::size_t>(e)];
        const int lc = l - ed.scale * g_.meta.levels_per_octave;
        if (lc < 0 || lc >= static_cast<int>(pyr_.levels.size())) return kNegInf;
        const int f = ed.scale ? 2 : 1;
        const int pad = g_.meta.padding;
        const int ax = f * (x - pad) + pad + ed.anchor.x, ay = f * (y - pad) + pad + ed.anchor.y;
        const auto& lv = pyr_.levels[static_cast<std::size_t>(lc)];
        if (ax < 0 || ay < 0 || ax >= lv.width || ay >= lv.height) return kNegInf;
        if (ed.deform_offset < 0) return value(ed.child, lc, ax, ay);
        const double* d = &g_.theta[static_cast<std::size_t>(ed.deform_offset)];
        double best = kNegInf;
        for (int cy = 0; cy < lv.height; ++cy)
            for (int cx = 0; cx < lv.width; ++cx) {
                const double s = value(ed.child, lc, cx, cy);
                if (s == kNegInf) continue;
                const int dx = cx - ax, dy = cy - ay;
                best = std::max(best, s - (d[0] * dx * dx + d[1] * dx + d[2] * dy * dy + d[3] * dy));
            }
        return best;
    }

private:
    const andor::AndOrGraph& g_;
    const andor::FeaturePyramid& pyr_;
    std::map<std::tuple<int, int, int, int>, double> memo_;
};

}  // namespace oracle
