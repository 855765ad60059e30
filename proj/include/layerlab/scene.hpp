// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "layerlab/image.hpp"
#include "layerlab/tensor.hpp"

namespace layerlab {

inline constexpr int kMinLayers = 2;
inline constexpr int kMaxLayers = 5;

// Ordered RGBA stack: data laid out [layer][channel][y][x], channels are
// non-premultiplied RGB plus alpha, values in [0,1]. Layer 0 is the
// background and keeps alpha identically 1.
struct LayerStack {
    int layers = 0, h = 0, w = 0;
    std::vector<double> data;

    LayerStack() = default;
    LayerStack(int layers_, int h_, int w_)
        : layers(layers_), h(h_), w(w_),
          data(static_cast<std::size_t>(layers_) * 4 * h_ * w_, 0.0) {}

    double& at(int layer, int ch, int y, int x) {
        return data[((static_cast<std::size_t>(layer) * 4 + ch) * h + y) * w + x];
    }
    double at(int layer, int ch, int y, int x) const {
        return data[((static_cast<std::size_t>(layer) * 4 + ch) * h + y) * w + x];
    }
    int packed_dim() const { return layers * 4 * h * w; }
    // Per-layer views
    Raster layer_rgba(int layer) const;
};

enum class ShapeKind { Disc, Rect, Ring };

struct SceneShape {
    ShapeKind kind = ShapeKind::Disc;
    int cx = 0, cy = 0;
    int size = 0;   // disc/ring outer radius, rect half-extent
    int inner = 0;  // ring inner radius
    std::array<double, 3> color{};
    bool covers(int y, int x) const;
};

// Generator parameters for one synthetic scene. Foreground shape k sits on
// truth layer k+1; shapes never fully occlude one another.
struct ToyScene {
    uint64_t seed = 0;
    int layer_count = 0;
    int canvas = 0;
    std::array<double, 3> bg_top{}, bg_bottom{};
    bool stripes = false;
    std::array<double, 3> stripe_color{};
    int stripe_period = 4;
    std::vector<SceneShape> shapes;
};

struct GeneratedScene {
    ToyScene scene;
    LayerStack truth;
    Raster composite;  // alpha-over of the truth stack
};

// Deterministic in (seed, layer_count). Channel values are quantised to the
// 1/256 grid so the pack/unpack model-range mapping is exact.
GeneratedScene generate_scene(uint64_t seed, int layer_count, int canvas = 32);

// Back-to-front alpha-over starting from the opaque background layer.
Raster composite(const LayerStack& stack);

// The true background as an RGB raster (truth layer 0).
Raster background_raster(const ToyScene& scene);
// Full (unoccluded) coverage mask of each shape.
std::vector<std::vector<std::uint8_t>> shape_masks(const ToyScene& scene);

// Model-range mapping: pack scales [0,1] -> [-1,1]; unpack maps back,
// clamping to [0,1] and restoring the opaque background convention. The
// round trip is exact for stacks on the generator's quantised grid.
Tensor pack(const LayerStack& stack);
LayerStack unpack(const Tensor& flat, int layers, int h, int w);

double quantize_channel(double v);  // snap to the 1/256 grid

// PNG dump: layer_{k}.png for each layer plus composite.png.
void export_stack(const LayerStack& stack, const std::filesystem::path& dir);

}  // namespace layerlab
