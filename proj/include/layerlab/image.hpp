// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace layerlab {

// Small float image, channels interleaved row-major, values in [0,1].
// c = 3 for RGB, 4 for RGBA.
struct Raster {
    int h = 0, w = 0, c = 0;
    std::vector<double> px;

    Raster() = default;
    Raster(int h_, int w_, int c_, double fill = 0.0)
        : h(h_), w(w_), c(c_),
          px(static_cast<std::size_t>(h_) * w_ * c_, fill) {}

    double& at(int y, int x, int ch) {
        return px[(static_cast<std::size_t>(y) * w + x) * c + ch];
    }
    double at(int y, int x, int ch) const {
        return px[(static_cast<std::size_t>(y) * w + x) * c + ch];
    }
    std::size_t size() const { return px.size(); }
};

Raster resize_nearest(const Raster& src, int out_h, int out_w);

// Rasterises decimal digits with an embedded 3x5 glyph set, scaled up by
// `scale`, drawing `value` into every channel under the glyph pixels.
void draw_digits(Raster& img, int x, int y, const std::string& digits,
                 int scale, double value = 0.0);
int digits_width(const std::string& digits, int scale);
int digits_height(int scale);

// 8-bit PNG (color type 2 or 6, zlib-compressed, filter 0 on every line).
std::vector<std::uint8_t> png_bytes(const Raster& img);
void write_png(const Raster& img, const std::filesystem::path& path);
// Reads back only what png_bytes emits; used by tests and file tooling.
Raster read_png_bytes(const std::vector<std::uint8_t>& bytes);
Raster read_png(const std::filesystem::path& path);

std::string base64_encode(const std::vector<std::uint8_t>& bytes);

}  // namespace layerlab
