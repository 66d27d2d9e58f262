#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <stdexcept>
#include <string>

#include "rar/tensor.hpp"

namespace rar {

// Pixel-space image: H x W x 3, reals in [0,1].
using Image = Tensor<float>;

inline Image make_image(int h, int w) { return Image({h, w, 3}); }

inline float clamp01(float v) { return v < 0.0f ? 0.0f : (v > 1.0f ? 1.0f : v); }

// Binary PPM (P6, maxval 255).
inline void write_ppm(const std::string& path, const Image& img) {
    if (img.rank() != 3 || img.shape[2] != 3)
        throw std::invalid_argument("write_ppm: need HxWx3 image, got " + shape_str(img.shape));
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("write_ppm: cannot open '" + path + "'");
    os << "P6\n" << img.shape[1] << " " << img.shape[0] << "\n255\n";
    std::vector<unsigned char> row(static_cast<std::size_t>(img.shape[1]) * 3);
    const int H = img.shape[0], W = img.shape[1];
    for (int y = 0; y < H; ++y) {
        for (int x = 0; x < W; ++x)
            for (int c = 0; c < 3; ++c) {
                const float v = clamp01(img[(static_cast<std::size_t>(y) * W + x) * 3 + c]);
                row[static_cast<std::size_t>(x) * 3 + c] =
                    static_cast<unsigned char>(std::lround(v * 255.0f));
            }
        os.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(row.size()));
    }
    if (!os) throw std::runtime_error("write_ppm: write failed for '" + path + "'");
}

inline Image read_ppm(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("read_ppm: cannot open '" + path + "'");
    std::string magic;
    is >> magic;
    if (magic != "P6") throw std::runtime_error("read_ppm: '" + path + "' is not a binary PPM (P6)");
    auto next_token = [&is, &path]() {
        // headers may contain '#' comments
        std::string tok;
        while (is >> tok) {
            if (tok[0] == '#') {
                std::string rest;
                std::getline(is, rest);
                continue;
            }
            return tok;
        }
        throw std::runtime_error("read_ppm: truncated header in '" + path + "'");
    };
    const int w = std::stoi(next_token());
    const int h = std::stoi(next_token());
    const int maxval = std::stoi(next_token());
    if (maxval != 255) throw std::runtime_error("read_ppm: only maxval 255 supported");
    is.get();  // single whitespace after maxval
    Image img = make_image(h, w);
    std::vector<unsigned char> buf(static_cast<std::size_t>(w) * h * 3);
    is.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    if (!is) throw std::runtime_error("read_ppm: truncated pixel data in '" + path + "'");
    for (std::size_t i = 0; i < buf.size(); ++i) img[i] = static_cast<float>(buf[i]) / 255.0f;
    return img;
}

}  // namespace rar
