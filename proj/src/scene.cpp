// SPDX-License-Identifier: Apache-2.0
#include "layerlab/scene.hpp"

#include <algorithm>
#include <cmath>

#include "layerlab/common.hpp"
#include "layerlab/rng.hpp"

namespace layerlab {

Raster LayerStack::layer_rgba(int layer) const {
    Raster out(h, w, 4);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (int ch = 0; ch < 4; ++ch)
                out.at(y, x, ch) = at(layer, ch, y, x);
    return out;
}

bool SceneShape::covers(int y, int x) const {
    const int dy = y - cy, dx = x - cx;
    switch (kind) {
        case ShapeKind::Disc:
            return dy * dy + dx * dx <= size * size;
        case ShapeKind::Rect:
            return std::abs(dy) <= size && std::abs(dx) <= size;
        case ShapeKind::Ring: {
            const int r2 = dy * dy + dx * dx;
            return r2 <= size * size && r2 >= inner * inner;
        }
    }
    return false;
}

double quantize_channel(double v) {
    return std::clamp(std::round(v * 256.0), 0.0, 256.0) / 256.0;
}

Raster background_raster(const ToyScene& scene) {
    const int n = scene.canvas;
    Raster bg(n, n, 3);
    for (int y = 0; y < n; ++y) {
        const double f = n > 1 ? static_cast<double>(y) / (n - 1) : 0.0;
        const bool stripe = scene.stripes && (y % scene.stripe_period) == 0;
        for (int x = 0; x < n; ++x) {
            for (int c = 0; c < 3; ++c) {
                const double v = stripe ? scene.stripe_color[c]
                                        : (1.0 - f) * scene.bg_top[c] +
                                              f * scene.bg_bottom[c];
                bg.at(y, x, c) = quantize_channel(v);
            }
        }
    }
    return bg;
}

std::vector<std::vector<std::uint8_t>> shape_masks(const ToyScene& scene) {
    std::vector<std::vector<std::uint8_t>> masks;
    for (const SceneShape& s : scene.shapes) {
        std::vector<std::uint8_t> m(static_cast<std::size_t>(scene.canvas) *
                                    scene.canvas);
        for (int y = 0; y < scene.canvas; ++y)
            for (int x = 0; x < scene.canvas; ++x)
                m[static_cast<std::size_t>(y) * scene.canvas + x] =
                    s.covers(y, x) ? 1 : 0;
        masks.push_back(std::move(m));
    }
    return masks;
}

namespace {

std::array<double, 3> random_color(Rng& rng) {
    return {quantize_channel(rng.uniform()), quantize_channel(rng.uniform()),
            quantize_channel(rng.uniform())};
}

// Fraction of shape k's area left visible given the shapes stacked above it.
double visible_fraction(const ToyScene& scene,
                        const std::vector<std::vector<std::uint8_t>>& masks,
                        std::size_t k) {
    const auto& mine = masks[k];
    std::size_t total = 0, visible = 0;
    for (std::size_t i = 0; i < mine.size(); ++i) {
        if (!mine[i]) continue;
        ++total;
        bool covered = false;
        for (std::size_t j = k + 1; j < masks.size(); ++j) {
            if (masks[j][i]) {
                covered = true;
                break;
            }
        }
        if (!covered) ++visible;
    }
    return total == 0 ? 0.0 : static_cast<double>(visible) / total;
}

SceneShape random_shape(Rng& rng, int canvas) {
    SceneShape s;
    s.kind = static_cast<ShapeKind>(rng.uniform_int(0, 2));
    // Sizes stay within a narrow band so per-layer alpha masses are
    // comparable (keeps the mass distribution's entropy high).
    const int lo = std::max(2, canvas / 8);
    const int hi = std::max(lo, canvas / 5);
    s.size = rng.uniform_int(lo, hi);
    if (s.kind == ShapeKind::Ring) s.inner = std::max(1, s.size / 2);
    // one clear pixel of border keeps every shape strictly inside the canvas
    s.cx = rng.uniform_int(s.size + 1, canvas - 2 - s.size);
    s.cy = rng.uniform_int(s.size + 1, canvas - 2 - s.size);
    s.color = random_color(rng);
    return s;
}

}  // namespace

GeneratedScene generate_scene(uint64_t seed, int layer_count, int canvas) {
    if (layer_count < kMinLayers || layer_count > kMaxLayers)
        throw ConfigError(strfmt("generate_scene: layer count %d outside [%d,%d]",
                                 layer_count, kMinLayers, kMaxLayers));
    if (canvas < 8) throw ConfigError("generate_scene: canvas too small");

    Rng rng(seed * 0x9e3779b97f4a7c15ULL + static_cast<uint64_t>(layer_count));
    ToyScene scene;
    scene.seed = seed;
    scene.layer_count = layer_count;
    scene.canvas = canvas;
    scene.bg_top = random_color(rng);
    scene.bg_bottom = random_color(rng);
    scene.stripes = rng.uniform() < 0.5;
    scene.stripe_color = random_color(rng);
    scene.stripe_period = rng.uniform_int(4, 8);

    const int shapes_needed = layer_count - 1;
    for (int k = 0; k < shapes_needed; ++k) {
        for (int attempt = 0;; ++attempt) {
            if (attempt >= 200)
                throw NumericError("generate_scene: could not place a visible shape");
            scene.shapes.push_back(random_shape(rng, canvas));
            auto masks = shape_masks(scene);
            bool ok = true;
            for (std::size_t j = 0; j + 1 < masks.size(); ++j) {
                if (visible_fraction(scene, masks, j) < 0.2) {
                    ok = false;
                    break;
                }
            }
            if (ok) break;
            scene.shapes.pop_back();
        }
    }

    LayerStack truth(layer_count, canvas, canvas);
    const Raster bg = background_raster(scene);
    for (int y = 0; y < canvas; ++y) {
        for (int x = 0; x < canvas; ++x) {
            for (int c = 0; c < 3; ++c) truth.at(0, c, y, x) = bg.at(y, x, c);
            truth.at(0, 3, y, x) = 1.0;
        }
    }
    for (int k = 0; k < shapes_needed; ++k) {
        const SceneShape& s = scene.shapes[k];
        for (int y = 0; y < canvas; ++y) {
            for (int x = 0; x < canvas; ++x) {
                const bool inside = s.covers(y, x);
                for (int c = 0; c < 3; ++c)
                    truth.at(k + 1, c, y, x) = inside ? s.color[c] : 0.0;
                truth.at(k + 1, 3, y, x) = inside ? 1.0 : 0.0;
            }
        }
    }
    GeneratedScene out;
    out.scene = std::move(scene);
    out.composite = composite(truth);
    out.truth = std::move(truth);
    return out;
}

Raster composite(const LayerStack& stack) {
    if (stack.layers < 1) throw NumericError("composite: empty stack");
    for (int y = 0; y < stack.h; ++y)
        for (int x = 0; x < stack.w; ++x)
            if (stack.at(0, 3, y, x) != 1.0)
                throw NumericError("composite: background alpha must be 1");
    Raster out(stack.h, stack.w, 3);
    for (int y = 0; y < stack.h; ++y)
        for (int x = 0; x < stack.w; ++x)
            for (int c = 0; c < 3; ++c) out.at(y, x, c) = stack.at(0, c, y, x);
    for (int l = 1; l < stack.layers; ++l) {
        for (int y = 0; y < stack.h; ++y) {
            for (int x = 0; x < stack.w; ++x) {
                const double a = stack.at(l, 3, y, x);
                if (a < 0.0 || a > 1.0)
                    throw NumericError("composite: alpha outside [0,1]");
                for (int c = 0; c < 3; ++c)
                    out.at(y, x, c) =
                        stack.at(l, c, y, x) * a + out.at(y, x, c) * (1.0 - a);
            }
        }
    }
    return out;
}

Tensor pack(const LayerStack& stack) {
    Tensor out = Tensor::zeros({stack.packed_dim()});
    for (std::size_t i = 0; i < stack.data.size(); ++i)
        out.data[i] = 2.0 * stack.data[i] - 1.0;
    return out;
}

LayerStack unpack(const Tensor& flat, int layers, int h, int w) {
    LayerStack stack(layers, h, w);
    if (flat.numel() != stack.data.size())
        throw NumericError(strfmt("unpack: expected %zu values, got %zu",
                                  stack.data.size(), flat.numel()));
    for (std::size_t i = 0; i < stack.data.size(); ++i)
        stack.data[i] = std::clamp((flat.data[i] + 1.0) / 2.0, 0.0, 1.0);
    // Opaque-background convention: the model's layer-0 alpha is ignored.
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) stack.at(0, 3, y, x) = 1.0;
    return stack;
}

void export_stack(const LayerStack& stack, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    for (int l = 0; l < stack.layers; ++l)
        write_png(stack.layer_rgba(l), dir / strfmt("layer_%d.png", l));
    write_png(composite(stack), dir / "composite.png");
}

}  // namespace layerlab
