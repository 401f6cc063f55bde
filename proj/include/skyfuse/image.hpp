#pragma once

#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "skyfuse/core.hpp"

namespace skyfuse {

// Row-major grayscale image with intensities in [0, 1].
struct GrayImage {
    int width = 0;
    int height = 0;
    std::vector<double> px;

    GrayImage() = default;
    GrayImage(int w, int h, double fill = 0.0) : width(w), height(h), px(size_t(w) * h, fill) {}

    double& at(int x, int y) { return px[size_t(y) * width + x]; }
    double at(int x, int y) const { return px[size_t(y) * width + x]; }
};

// Row-major binary mask, 0 or 1 per pixel.
struct BinaryImage {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> px;

    BinaryImage() = default;
    BinaryImage(int w, int h, std::uint8_t fill = 0)
        : width(w), height(h), px(size_t(w) * h, fill) {}

    std::uint8_t& at(int x, int y) { return px[size_t(y) * width + x]; }
    std::uint8_t at(int x, int y) const { return px[size_t(y) * width + x]; }
};

namespace detail {

inline void skip_pnm_junk(std::istream& in) {
    while (true) {
        const int c = in.peek();
        if (c == '#') {
            std::string line;
            std::getline(in, line);
        } else if (std::isspace(c)) {
            in.get();
        } else {
            return;
        }
    }
}

}  // namespace detail

// 8-bit binary PGM (P5).
inline GrayImage load_pgm(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw SchemaError("cannot open pgm: " + path);
    std::string magic;
    in >> magic;
    if (magic != "P5") throw SchemaError("not a P5 pgm: " + path);
    int w = 0, h = 0, maxv = 0;
    detail::skip_pnm_junk(in);
    in >> w;
    detail::skip_pnm_junk(in);
    in >> h;
    detail::skip_pnm_junk(in);
    in >> maxv;
    if (!in || w <= 0 || h <= 0 || maxv != 255)
        throw SchemaError("unsupported pgm header: " + path);
    in.get();  // single whitespace after maxval
    std::vector<std::uint8_t> raw(size_t(w) * h);
    in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    if (!in) throw SchemaError("truncated pgm: " + path);
    GrayImage img(w, h);
    for (size_t i = 0; i < raw.size(); ++i) img.px[i] = raw[i] / 255.0;
    return img;
}

inline void save_pgm(const GrayImage& img, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw SchemaError("cannot write pgm: " + path);
    out << "P5\n" << img.width << " " << img.height << "\n255\n";
    std::vector<std::uint8_t> raw(img.px.size());
    for (size_t i = 0; i < raw.size(); ++i) {
        const double v = std::min(1.0, std::max(0.0, img.px[i]));
        raw[i] = static_cast<std::uint8_t>(v * 255.0 + 0.5);
    }
    out.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
}

// Packed binary PBM (P4). PBM marks ink as 1, which we read as mask = 1.
inline BinaryImage load_pbm(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw SchemaError("cannot open pbm: " + path);
    std::string magic;
    in >> magic;
    if (magic != "P4") throw SchemaError("not a P4 pbm: " + path);
    int w = 0, h = 0;
    detail::skip_pnm_junk(in);
    in >> w;
    detail::skip_pnm_junk(in);
    in >> h;
    if (!in || w <= 0 || h <= 0) throw SchemaError("unsupported pbm header: " + path);
    in.get();
    const int stride = (w + 7) / 8;
    std::vector<std::uint8_t> raw(size_t(stride) * h);
    in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    if (!in) throw SchemaError("truncated pbm: " + path);
    BinaryImage img(w, h);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            img.at(x, y) = (raw[size_t(y) * stride + x / 8] >> (7 - x % 8)) & 1;
    return img;
}

inline void save_pbm(const BinaryImage& img, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw SchemaError("cannot write pbm: " + path);
    out << "P4\n" << img.width << " " << img.height << "\n";
    const int stride = (img.width + 7) / 8;
    std::vector<std::uint8_t> raw(size_t(stride) * img.height, 0);
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x)
            if (img.at(x, y)) raw[size_t(y) * stride + x / 8] |= std::uint8_t(1 << (7 - x % 8));
    out.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
}

}  // namespace skyfuse
