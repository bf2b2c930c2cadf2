#pragma once

#include <cctype>
#include <csetjmp>
#include <cstdio>
#include <fstream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include <png.h>

#include "andor/common.hpp"

namespace andor {

/// Single-channel intensity image, row-major, values nominally in [0, 255].
struct Image {
    int width = 0;
    int height = 0;
    std::vector<double> pixels;

    Image() = default;
    Image(int w, int h, double fill = 0.0)
        : width(w), height(h), pixels(static_cast<std::size_t>(w) * h, fill) {}

    double& at(int x, int y) { return pixels[static_cast<std::size_t>(y) * width + x]; }
    double at(int x, int y) const { return pixels[static_cast<std::size_t>(y) * width + x]; }
    bool empty() const { return width == 0 || height == 0; }
};

/// Fixed luma weights (ITU-R BT.601).
inline double luma(double r, double g, double b) { return 0.299 * r + 0.587 * g + 0.114 * b; }

namespace detail {

inline int read_pnm_int(std::istream& in) {
    int c = in.peek();
    while (c != EOF) {
        if (c == '#') {
            std::string skip;
            std::getline(in, skip);
        } else if (std::isspace(c)) {
            in.get();
        } else {
            break;
        }
        c = in.peek();
    }
    int v = 0;
    if (!(in >> v)) throw ParseError("malformed PNM header", 0);
    return v;
}

inline Image read_pnm(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open image " + path);
    std::string magic;
    in >> magic;
    if (magic != "P2" && magic != "P5" && magic != "P3" && magic != "P6")
        throw ParseError("unsupported PNM magic '" + magic + "' in " + path, 0);
    const int w = read_pnm_int(in), h = read_pnm_int(in), maxval = read_pnm_int(in);
    if (w <= 0 || h <= 0 || maxval <= 0 || maxval > 65535)
        throw ParseError("bad PNM dimensions in " + path, 0);
    const bool color = magic == "P3" || magic == "P6";
    const bool binary = magic == "P5" || magic == "P6";
    const double scale = 255.0 / maxval;
    Image img(w, h);
    const int ch = color ? 3 : 1;
    std::vector<double> px(static_cast<std::size_t>(ch));
    if (binary) in.get();
    for (std::size_t i = 0; i < img.pixels.size(); ++i) {
        for (int c = 0; c < ch; ++c) {
            if (binary) {
                int v = in.get();
                if (maxval > 255) v = (v << 8) | in.get();
                if (!in) throw ParseError("truncated PNM data in " + path, 0);
                px[c] = v * scale;
            } else {
                px[c] = read_pnm_int(in) * scale;
            }
        }
        img.pixels[i] = color ? luma(px[0], px[1], px[2]) : px[0];
    }
    return img;
}

inline Image read_png(const std::string& path) {
    std::unique_ptr<FILE, int (*)(FILE*)> fp(std::fopen(path.c_str(), "rb"), &std::fclose);
    if (!fp) throw Error("cannot open image " + path);
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) throw Error("libpng initialisation failed");
    Image img;
    std::vector<png_byte> data;
    std::vector<png_bytep> rows;
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw ParseError("corrupt PNG " + path, 0);
    }
    png_init_io(png, fp.get());
    png_read_info(png, info);
    png_set_strip_16(png);
    png_set_strip_alpha(png);
    png_set_packing(png);
    png_set_palette_to_rgb(png);
    png_set_expand_gray_1_2_4_to_8(png);
    png_read_update_info(png, info);
    const int w = static_cast<int>(png_get_image_width(png, info));
    const int h = static_cast<int>(png_get_image_height(png, info));
    const int ch = png_get_channels(png, info);
    const std::size_t stride = png_get_rowbytes(png, info);
    data.resize(stride * h);
    rows.resize(h);
    for (int y = 0; y < h; ++y) rows[y] = data.data() + y * stride;
    png_read_image(png, rows.data());
    png_destroy_read_struct(&png, &info, nullptr);
    img = Image(w, h);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const png_byte* p = rows[y] + static_cast<std::size_t>(x) * ch;
            img.at(x, y) = ch >= 3 ? luma(p[0], p[1], p[2]) : p[0];
        }
    return img;
}

}  // namespace detail

/// Reads 8-bit grayscale or RGB PGM/PPM/PNG; color is reduced to luma.
inline Image read_image(const std::string& path) {
    std::ifstream probe(path, std::ios::binary);
    if (!probe) throw Error("cannot open image " + path);
    unsigned char sig[8] = {};
    probe.read(reinterpret_cast<char*>(sig), 8);
    if (probe.gcount() == 8 && png_sig_cmp(sig, 0, 8) == 0) return detail::read_png(path);
    return detail::read_pnm(path);
}

/// Writes a binary 8-bit PGM, rounding and clamping to [0, 255].
inline void write_pgm(const Image& img, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write image " + path);
    out << "P5\n" << img.width << " " << img.height << "\n255\n";
    std::vector<unsigned char> buf(img.pixels.size());
    for (std::size_t i = 0; i < buf.size(); ++i)
        buf[i] = static_cast<unsigned char>(std::clamp(std::lround(img.pixels[i]), 0L, 255L));
    out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
}

/// Rounds to 8-bit levels in place, the same quantisation write_pgm applies.
inline void quantize_8bit(Image& img) {
    for (double& v : img.pixels) v = static_cast<double>(std::clamp(std::lround(v), 0L, 255L));
}

namespace detail {

// Area-averaging weights for one axis: output pixel i covers source [i/s, (i+1)/s).
struct AxisWeights {
    std::vector<int> first;
    std::vector<std::vector<double>> weights;
};

inline AxisWeights area_weights(int src, int dst, double scale) {
    AxisWeights aw;
    aw.first.resize(dst);
    aw.weights.resize(dst);
    const double inv = 1.0 / scale;
    for (int i = 0; i < dst; ++i) {
        const double a = i * inv, b = std::min((i + 1) * inv, static_cast<double>(src));
        const int j0 = static_cast<int>(std::floor(a));
        const int j1 = std::min(src - 1, static_cast<int>(std::ceil(b)) - 1);
        aw.first[i] = j0;
        double total = 0;
        for (int j = j0; j <= j1; ++j) {
            const double cover = std::min(b, j + 1.0) - std::max(a, static_cast<double>(j));
            aw.weights[i].push_back(std::max(0.0, cover));
            total += std::max(0.0, cover);
        }
        for (double& w : aw.weights[i]) w /= total;
    }
    return aw;
}

}  // namespace detail

/// Area-averaging resample by `scale` (<= 1 downsamples). Output dims are
/// floor(dim * scale), at least 1.
inline Image resize_area(const Image& src, double scale) {
    ANDOR_REQUIRE(scale > 0, "resize scale must be positive");
    if (scale == 1.0) return src;
    const int w = std::max(1, static_cast<int>(std::floor(src.width * scale + 1e-9)));
    const int h = std::max(1, static_cast<int>(std::floor(src.height * scale + 1e-9)));
    const auto ax = detail::area_weights(src.width, w, scale);
    const auto ay = detail::area_weights(src.height, h, scale);
    Image tmp(w, src.height);
    for (int y = 0; y < src.height; ++y)
        for (int x = 0; x < w; ++x) {
            double acc = 0;
            const auto& ws = ax.weights[x];
            for (std::size_t k = 0; k < ws.size(); ++k) acc += ws[k] * src.at(ax.first[x] + static_cast<int>(k), y);
            tmp.at(x, y) = acc;
        }
    Image out(w, h);
    for (int y = 0; y < h; ++y) {
        const auto& ws = ay.weights[y];
        for (int x = 0; x < w; ++x) {
            double acc = 0;
            for (std::size_t k = 0; k < ws.size(); ++k) acc += ws[k] * tmp.at(x, ay.first[y] + static_cast<int>(k));
            out.at(x, y) = acc;
        }
    }
    return out;
}

inline Image flip_horizontal(const Image& src) {
    Image out(src.width, src.height);
    for (int y = 0; y < src.height; ++y)
        for (int x = 0; x < src.width; ++x) out.at(x, y) = src.at(src.width - 1 - x, y);
    return out;
}

/// Separable Gaussian blur with replicated borders.
inline Image gaussian_blur(const Image& src, double sigma) {
    if (sigma <= 0) return src;
    const int r = std::max(1, static_cast<int>(std::ceil(3 * sigma)));
    std::vector<double> k(2 * r + 1);
    double total = 0;
    for (int i = -r; i <= r; ++i) total += k[i + r] = std::exp(-0.5 * i * i / (sigma * sigma));
    for (double& v : k) v /= total;
    Image tmp(src.width, src.height), out(src.width, src.height);
    for (int y = 0; y < src.height; ++y)
        for (int x = 0; x < src.width; ++x) {
            double acc = 0;
            for (int i = -r; i <= r; ++i) acc += k[i + r] * src.at(std::clamp(x + i, 0, src.width - 1), y);
            tmp.at(x, y) = acc;
        }
    for (int y = 0; y < src.height; ++y)
        for (int x = 0; x < src.width; ++x) {
            double acc = 0;
            for (int i = -r; i <= r; ++i) acc += k[i + r] * tmp.at(x, std::clamp(y + i, 0, src.height - 1));
            out.at(x, y) = acc;
        }
    return out;
}

}  // namespace andor
