// SPDX-License-Identifier: Apache-2.0
#include "layerlab/image.hpp"

#include <zlib.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

#include "layerlab/common.hpp"

namespace layerlab {

Raster resize_nearest(const Raster& src, int out_h, int out_w) {
    if (src.h <= 0 || src.w <= 0)
        throw NumericError("resize_nearest: empty source");
    Raster out(out_h, out_w, src.c);
    for (int y = 0; y < out_h; ++y) {
        const int sy = std::min(src.h - 1, y * src.h / out_h);
        for (int x = 0; x < out_w; ++x) {
            const int sx = std::min(src.w - 1, x * src.w / out_w);
            for (int ch = 0; ch < src.c; ++ch)
                out.at(y, x, ch) = src.at(sy, sx, ch);
        }
    }
    return out;
}

namespace {

// 3x5 digit glyphs, row-major bits, MSB = left pixel.
constexpr std::uint8_t kGlyphs[10][5] = {
    {0b111, 0b101, 0b101, 0b101, 0b111},  // 0
    {0b010, 0b110, 0b010, 0b010, 0b111},  // 1
    {0b111, 0b001, 0b111, 0b100, 0b111},  // 2
    {0b111, 0b001, 0b111, 0b001, 0b111},  // 3
    {0b101, 0b101, 0b111, 0b001, 0b001},  // 4
    {0b111, 0b100, 0b111, 0b001, 0b111},  // 5
    {0b111, 0b100, 0b111, 0b101, 0b111},  // 6
    {0b111, 0b001, 0b010, 0b010, 0b010},  // 7
    {0b111, 0b101, 0b111, 0b101, 0b111},  // 8
    {0b111, 0b101, 0b111, 0b001, 0b111},  // 9
};

}  // namespace

int digits_width(const std::string& digits, int scale) {
    const int n = static_cast<int>(digits.size());
    return n * 3 * scale + (n - 1) * scale;
}

int digits_height(int scale) { return 5 * scale; }

void draw_digits(Raster& img, int x, int y, const std::string& digits,
                 int scale, double value) {
    int cx = x;
    for (char ch : digits) {
        if (ch < '0' || ch > '9')
            throw NumericError("draw_digits: only decimal digits are renderable");
        const std::uint8_t* glyph = kGlyphs[ch - '0'];
        for (int gy = 0; gy < 5; ++gy) {
            for (int gx = 0; gx < 3; ++gx) {
                if (!(glyph[gy] & (1 << (2 - gx)))) continue;
                for (int sy = 0; sy < scale; ++sy) {
                    for (int sx = 0; sx < scale; ++sx) {
                        const int py = y + gy * scale + sy;
                        const int px = cx + gx * scale + sx;
                        if (py < 0 || py >= img.h || px < 0 || px >= img.w) continue;
                        for (int c = 0; c < img.c; ++c) img.at(py, px, c) = value;
                    }
                }
            }
        }
        cx += 4 * scale;  // 3-wide glyph plus 1 column gap
    }
}

namespace {

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    out.push_back(static_cast<std::uint8_t>(v >> 24));
    out.push_back(static_cast<std::uint8_t>(v >> 16));
    out.push_back(static_cast<std::uint8_t>(v >> 8));
    out.push_back(static_cast<std::uint8_t>(v));
}

void put_chunk(std::vector<std::uint8_t>& out, const char type[4],
               const std::vector<std::uint8_t>& data) {
    put_u32(out, static_cast<std::uint32_t>(data.size()));
    const std::size_t crc_start = out.size();
    out.insert(out.end(), type, type + 4);
    out.insert(out.end(), data.begin(), data.end());
    const uLong crc = ::crc32(0, out.data() + crc_start,
                              static_cast<uInt>(out.size() - crc_start));
    put_u32(out, static_cast<std::uint32_t>(crc));
}

std::uint8_t to_byte(double v) {
    return static_cast<std::uint8_t>(std::clamp(std::lround(v * 255.0), 0L, 255L));
}

std::uint32_t get_u32(const std::vector<std::uint8_t>& b, std::size_t off) {
    return (static_cast<std::uint32_t>(b[off]) << 24) |
           (static_cast<std::uint32_t>(b[off + 1]) << 16) |
           (static_cast<std::uint32_t>(b[off + 2]) << 8) |
           static_cast<std::uint32_t>(b[off + 3]);
}

constexpr std::uint8_t kPngSig[8] = {0x89, 'P', 'N', 'G', 0x0d, 0x0a, 0x1a, 0x0a};

}  // namespace

std::vector<std::uint8_t> png_bytes(const Raster& img) {
    if (img.c != 3 && img.c != 4)
        throw NumericError("png_bytes: only RGB/RGBA rasters supported");
    if (img.h <= 0 || img.w <= 0) throw NumericError("png_bytes: empty raster");

    std::vector<std::uint8_t> out(kPngSig, kPngSig + 8);

    std::vector<std::uint8_t> ihdr;
    put_u32(ihdr, static_cast<std::uint32_t>(img.w));
    put_u32(ihdr, static_cast<std::uint32_t>(img.h));
    ihdr.push_back(8);                                  // bit depth
    ihdr.push_back(img.c == 3 ? 2 : 6);                 // color type
    ihdr.push_back(0);
    ihdr.push_back(0);
    ihdr.push_back(0);
    put_chunk(out, "IHDR", ihdr);

    const std::size_t stride = static_cast<std::size_t>(img.w) * img.c;
    std::vector<std::uint8_t> raw((stride + 1) * img.h);
    for (int y = 0; y < img.h; ++y) {
        std::uint8_t* line = raw.data() + static_cast<std::size_t>(y) * (stride + 1);
        line[0] = 0;  // filter: none
        for (int x = 0; x < img.w; ++x)
            for (int c = 0; c < img.c; ++c)
                line[1 + static_cast<std::size_t>(x) * img.c + c] =
                    to_byte(img.at(y, x, c));
    }
    uLongf bound = ::compressBound(static_cast<uLong>(raw.size()));
    std::vector<std::uint8_t> idat(bound);
    if (::compress2(idat.data(), &bound, raw.data(),
                    static_cast<uLong>(raw.size()), 6) != Z_OK)
        throw NumericError("png_bytes: zlib compression failed");
    idat.resize(bound);
    put_chunk(out, "IDAT", idat);
    put_chunk(out, "IEND", {});
    return out;
}

void write_png(const Raster& img, const std::filesystem::path& path) {
    const std::vector<std::uint8_t> bytes = png_bytes(img);
    std::ofstream f(path, std::ios::binary);
    if (!f) throw ConfigError("cannot write " + path.string());
    f.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
}

Raster read_png_bytes(const std::vector<std::uint8_t>& bytes) {
    if (bytes.size() < 8 || std::memcmp(bytes.data(), kPngSig, 8) != 0)
        throw ConfigError("read_png: bad signature");
    std::size_t off = 8;
    int w = 0, h = 0, channels = 0;
    std::vector<std::uint8_t> idat;
    while (off + 8 <= bytes.size()) {
        const std::uint32_t len = get_u32(bytes, off);
        const std::string type(bytes.begin() + off + 4, bytes.begin() + off + 8);
        const std::size_t data = off + 8;
        if (type == "IHDR") {
            w = static_cast<int>(get_u32(bytes, data));
            h = static_cast<int>(get_u32(bytes, data + 4));
            const int color = bytes[data + 9];
            if (bytes[data + 8] != 8 || (color != 2 && color != 6))
                throw ConfigError("read_png: unsupported format");
            channels = color == 2 ? 3 : 4;
        } else if (type == "IDAT") {
            idat.insert(idat.end(), bytes.begin() + data, bytes.begin() + data + len);
        } else if (type == "IEND") {
            break;
        }
        off = data + len + 4;
    }
    if (w <= 0 || h <= 0 || idat.empty()) throw ConfigError("read_png: truncated");
    const std::size_t stride = static_cast<std::size_t>(w) * channels;
    std::vector<std::uint8_t> raw((stride + 1) * h);
    uLongf raw_len = static_cast<uLongf>(raw.size());
    if (::uncompress(raw.data(), &raw_len, idat.data(),
                     static_cast<uLong>(idat.size())) != Z_OK ||
        raw_len != raw.size())
        throw ConfigError("read_png: inflate failed");
    Raster img(h, w, channels);
    for (int y = 0; y < h; ++y) {
        const std::uint8_t* line = raw.data() + static_cast<std::size_t>(y) * (stride + 1);
        if (line[0] != 0) throw ConfigError("read_png: unsupported filter");
        for (int x = 0; x < w; ++x)
            for (int c = 0; c < channels; ++c)
                img.at(y, x, c) =
                    line[1 + static_cast<std::size_t>(x) * channels + c] / 255.0;
    }
    return img;
}

Raster read_png(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw ConfigError("cannot read " + path.string());
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)),
                                    std::istreambuf_iterator<char>());
    return read_png_bytes(bytes);
}

std::string base64_encode(const std::vector<std::uint8_t>& bytes) {
    static const char* alphabet =
        "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
    std::string out;
    out.reserve((bytes.size() + 2) / 3 * 4);
    for (std::size_t i = 0; i < bytes.size(); i += 3) {
        std::uint32_t v = static_cast<std::uint32_t>(bytes[i]) << 16;
        if (i + 1 < bytes.size()) v |= static_cast<std::uint32_t>(bytes[i + 1]) << 8;
        if (i + 2 < bytes.size()) v |= bytes[i + 2];
        out.push_back(alphabet[(v >> 18) & 63]);
        out.push_back(alphabet[(v >> 12) & 63]);
        out.push_back(i + 1 < bytes.size() ? alphabet[(v >> 6) & 63] : '=');
        out.push_back(i + 2 < bytes.size() ? alphabet[v & 63] : '=');
    }
    return out;
}

}  // namespace layerlab
