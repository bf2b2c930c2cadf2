#pragma once

#include <array>
#include <vector>

#include "andor/common.hpp"

namespace andor {

/// Row-major 2-D array.
template <class T>
struct Grid {
    int width = 0;
    int height = 0;
    std::vector<T> data;

    Grid() = default;
    Grid(int w, int h, T fill = T{}) : width(w), height(h), data(static_cast<std::size_t>(w) * h, fill) {}

    T& operator()(int x, int y) { return data[static_cast<std::size_t>(y) * width + x]; }
    const T& operator()(int x, int y) const { return data[static_cast<std::size_t>(y) * width + x]; }
    bool contains(int x, int y) const { return x >= 0 && y >= 0 && x < width && y < height; }
    bool empty() const { return width == 0 || height == 0; }
};

using ScoreGrid = Grid<double>;

/// Deformed scores plus the displacement that achieved each one.
struct DeformedGrid {
    ScoreGrid values;
    Grid<int> dx;
    Grid<int> dy;
};

inline double deformation_cost(const std::array<double, 4>& def, int dx, int dy) {
    return def[0] * dx * dx + def[1] * dx + def[2] * dy * dy + def[3] * dy;
}

namespace detail {

// out[q] = max_p f[p] - a (p-q)^2 - b (p-q), argmax p returned in arg[q].
// Ties resolve to the smallest p. Sources equal to -inf are skipped.
inline void dt1d(const double* f, std::ptrdiff_t fstride, int n, double a, double b, double* out,
                 std::ptrdiff_t ostride, int* arg, std::ptrdiff_t astride, std::vector<int>& v,
                 std::vector<double>& z) {
    v.resize(static_cast<std::size_t>(n));
    z.resize(static_cast<std::size_t>(n) + 1);
    auto g = [&](int p) { return -f[p * fstride]; };
    auto meet = [&](int p, int r) {
        return (g(p) - g(r) + a * (static_cast<double>(p) * p - static_cast<double>(r) * r) + b * (p - r)) /
               (2.0 * a * (p - r));
    };
    int k = -1;
    for (int p = 0; p < n; ++p) {
        if (f[p * fstride] == kNegInf) continue;
        if (k < 0) {
            k = 0;
            v[0] = p;
            z[0] = kNegInf;
            z[1] = kInf;
            continue;
        }
        double s = meet(p, v[k]);
        while (k > 0 && s <= z[k]) {
            --k;
            s = meet(p, v[k]);
        }
        if (k == 0 && s <= z[0]) {
            v[0] = p;
            z[1] = kInf;
            continue;
        }
        ++k;
        v[k] = p;
        z[k] = s;
        z[k + 1] = kInf;
    }
    if (k < 0) {
        for (int q = 0; q < n; ++q) {
            out[q * ostride] = kNegInf;
            arg[q * astride] = q;
        }
        return;
    }
    int j = 0;
    for (int q = 0; q < n; ++q) {
        while (z[j + 1] < q) ++j;
        const int p = v[j];
        const double d = p - q;
        out[q * ostride] = f[p * fstride] - a * d * d - b * d;
        arg[q * astride] = p;
    }
}

}  // namespace detail

/// Generalised distance transform over the full lattice:
///   out(x, y) = max_{dx,dy} src(x+dx, y+dy) - def . [dx^2, dx, dy^2, dy]
/// Exact ties go to the smallest dx, then the smallest dy. Cells with no
/// finite source stay -inf with zero displacement.
inline DeformedGrid distance_transform(const ScoreGrid& src, const std::array<double, 4>& def) {
    if (!(def[0] > 0) || !(def[2] > 0))
        throw ContractError("distance transform needs positive quadratic coefficients");
    const int w = src.width, h = src.height;
    DeformedGrid out{ScoreGrid(w, h), Grid<int>(w, h), Grid<int>(w, h)};
    if (w == 0 || h == 0) return out;
    ScoreGrid tmp(w, h);
    Grid<int> iy(w, h);
    std::vector<int> v;
    std::vector<double> z;
    for (int x = 0; x < w; ++x)
        detail::dt1d(&src.data[x], w, h, def[2], def[3], &tmp.data[x], w, &iy.data[x], w, v, z);
    Grid<int> ix(w, h);
    for (int y = 0; y < h; ++y)
        detail::dt1d(&tmp(0, y), 1, w, def[0], def[1], &out.values(0, y), 1, &ix(0, y), 1, v, z);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const int sx = ix(x, y);
            const int sy = iy(sx, y);
            const int dx = sx - x, dy = sy - y;
            if (out.values(x, y) == kNegInf) {
                out.dx(x, y) = 0;
                out.dy(x, y) = 0;
                continue;
            }
            out.dx(x, y) = dx;
            out.dy(x, y) = dy;
            out.values(x, y) = src(sx, sy) - deformation_cost(def, dx, dy);
        }
    return out;
}

/// Same maximisation with |dx|, |dy| <= radius, by direct search. Ties go to
/// the smallest dx, then the smallest dy.
inline DeformedGrid bounded_distance_transform(const ScoreGrid& src, const std::array<double, 4>& def, int radius) {
    const int w = src.width, h = src.height;
    DeformedGrid out{ScoreGrid(w, h, kNegInf), Grid<int>(w, h, 0), Grid<int>(w, h, 0)};
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (int dx = -radius; dx <= radius; ++dx) {
                if (x + dx < 0 || x + dx >= w) continue;
                for (int dy = -radius; dy <= radius; ++dy) {
                    if (y + dy < 0 || y + dy >= h) continue;
                    const double f = src(x + dx, y + dy);
                    if (f == kNegInf) continue;
                    const double v = f - deformation_cost(def, dx, dy);
                    if (v > out.values(x, y)) {
                        out.values(x, y) = v;
                        out.dx(x, y) = dx;
                        out.dy(x, y) = dy;
                    }
                }
            }
    return out;
}

}  // namespace andor
