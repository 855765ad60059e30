// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <set>

#include "layerlab/common.hpp"
#include "layerlab/rng.hpp"
#include "layerlab/scene.hpp"

using namespace layerlab;

TEST_CASE("generate_scene is deterministic in the seed") {
    GeneratedScene a = generate_scene(42, 3);
    GeneratedScene b = generate_scene(42, 3);
    CHECK(a.truth.data == b.truth.data);
    CHECK(a.composite.px == b.composite.px);
    CHECK(a.scene.shapes.size() == b.scene.shapes.size());
    GeneratedScene c = generate_scene(43, 3);
    CHECK(a.truth.data != c.truth.data);
}

TEST_CASE("layer-count bounds") {
    GeneratedScene minimal = generate_scene(7, 2);
    CHECK(minimal.truth.layers == 2);
    CHECK(minimal.scene.shapes.size() == 1);
    CHECK_THROWS_AS((void)generate_scene(7, 1), ConfigError);
    CHECK_THROWS_AS((void)generate_scene(7, 6), ConfigError);
}

TEST_CASE("ground truth structure: one shape per foreground layer, inside canvas") {
    for (uint64_t seed = 0; seed < 25; ++seed) {
        const int layers = 2 + static_cast<int>(seed % 4);
        GeneratedScene g = generate_scene(seed, layers);
        REQUIRE(static_cast<int>(g.scene.shapes.size()) == layers - 1);
        // background is opaque
        for (int y = 0; y < g.truth.h; ++y)
            for (int x = 0; x < g.truth.w; ++x)
                CHECK(g.truth.at(0, 3, y, x) == 1.0);
        // shapes fully inside the canvas: alpha on the border is 0
        for (int l = 1; l < g.truth.layers; ++l) {
            for (int i = 0; i < g.truth.w; ++i) {
                CHECK(g.truth.at(l, 3, 0, i) == 0.0);
                CHECK(g.truth.at(l, 3, g.truth.h - 1, i) == 0.0);
                CHECK(g.truth.at(l, 3, i, 0) == 0.0);
                CHECK(g.truth.at(l, 3, i, g.truth.w - 1) == 0.0);
            }
        }
        // every shape keeps at least 20% visible area
        auto masks = shape_masks(g.scene);
        for (std::size_t k = 0; k < masks.size(); ++k) {
            std::size_t total = 0, visible = 0;
            for (std::size_t i = 0; i < masks[k].size(); ++i) {
                if (!masks[k][i]) continue;
                ++total;
                bool covered = false;
                for (std::size_t j = k + 1; j < masks.size(); ++j)
                    if (masks[j][i]) covered = true;
                if (!covered) ++visible;
            }
            CHECK(total > 0);
            CHECK(static_cast<double>(visible) / total >= 0.2);
        }
    }
}

TEST_CASE("composite over operator") {
    // all foreground alpha = 0 leaves the background
    LayerStack s(2, 4, 4);
    for (int y = 0; y < 4; ++y)
        for (int x = 0; x < 4; ++x) {
            s.at(0, 0, y, x) = 0.25;
            s.at(0, 1, y, x) = 0.5;
            s.at(0, 2, y, x) = 0.75;
            s.at(0, 3, y, x) = 1.0;
        }
    Raster r = composite(s);
    CHECK(r.at(1, 2, 0) == 0.25);
    CHECK(r.at(1, 2, 2) == 0.75);

    // fully opaque top layer wins
    for (int y = 0; y < 4; ++y)
        for (int x = 0; x < 4; ++x) {
            s.at(1, 0, y, x) = 1.0;
            s.at(1, 3, y, x) = 1.0;
        }
    r = composite(s);
    CHECK(r.at(2, 2, 0) == 1.0);
    CHECK(r.at(2, 2, 1) == 0.0);

    // half-transparent black over white gives mid grey
    LayerStack g(2, 2, 2);
    for (int y = 0; y < 2; ++y)
        for (int x = 0; x < 2; ++x) {
            for (int c = 0; c < 3; ++c) g.at(0, c, y, x) = 1.0;
            g.at(0, 3, y, x) = 1.0;
            g.at(1, 3, y, x) = 0.5;
        }
    r = composite(g);
    CHECK(r.at(0, 0, 0) == doctest::Approx(0.5));

    // alpha outside [0,1] rejected
    g.at(1, 3, 0, 0) = 1.5;
    CHECK_THROWS_AS((void)composite(g), NumericError);
    // non-opaque background rejected
    LayerStack bad(2, 2, 2);
    bad.at(0, 3, 0, 0) = 0.5;
    CHECK_THROWS_AS((void)composite(bad), NumericError);
}

TEST_CASE("stored composite reproduces recomputation bit-for-bit") {
    for (uint64_t seed = 100; seed < 110; ++seed) {
        GeneratedScene g = generate_scene(seed, 4);
        CHECK(composite(g.truth).px == g.composite.px);
    }
}

TEST_CASE("pack/unpack round trip and packed dimensionality") {
    GeneratedScene g = generate_scene(5, 5);
    CHECK(g.truth.packed_dim() == 5 * 4 * 32 * 32);
    CHECK(g.truth.packed_dim() == 20480);
    Tensor flat = pack(g.truth);
    LayerStack back = unpack(flat, 5, 32, 32);
    CHECK(back.data == g.truth.data);

    // random stacks on the generator's quantised grid round-trip exactly
    Rng rng(9);
    LayerStack rnd(3, 8, 8);
    for (double& v : rnd.data) v = quantize_channel(rng.uniform());
    for (int y = 0; y < 8; ++y)
        for (int x = 0; x < 8; ++x) rnd.at(0, 3, y, x) = 1.0;
    LayerStack rnd_back = unpack(pack(rnd), 3, 8, 8);
    CHECK(rnd_back.data == rnd.data);

    // out-of-range model outputs clamp on unpack
    Tensor out = Tensor::zeros({2 * 4 * 8 * 8});
    out.data[0] = -1.2;   // maps to -0.1 then clamps to 0
    out.data[1] = 3.0;    // maps to 2.0 then clamps to 1
    LayerStack clamped = unpack(out, 2, 8, 8);
    CHECK(clamped.data[0] == 0.0);
    CHECK(clamped.data[1] == 1.0);
    // opaque-background convention restored
    CHECK(clamped.at(0, 3, 3, 3) == 1.0);

    CHECK_THROWS_AS((void)unpack(out, 3, 8, 8), NumericError);
}

TEST_CASE("uniform layer sampling hits every count") {
    Rng rng(2024);
    std::set<int> seen;
    for (int i = 0; i < 1000; ++i) seen.insert(rng.uniform_int(2, 5));
    CHECK(seen == std::set<int>{2, 3, 4, 5});
}

TEST_CASE("png round trip and stack export naming") {
    GeneratedScene g = generate_scene(77, 3, 16);
    auto bytes = png_bytes(g.composite);
    Raster back = read_png_bytes(bytes);
    REQUIRE(back.h == 16);
    REQUIRE(back.w == 16);
    for (std::size_t i = 0; i < back.px.size(); ++i)
        CHECK(std::abs(back.px[i] - g.composite.px[i]) <= 0.5 / 255.0 + 1e-12);

    const auto dir = std::filesystem::temp_directory_path() / "llab_export_test";
    std::filesystem::remove_all(dir);
    export_stack(g.truth, dir);
    CHECK(std::filesystem::exists(dir / "layer_0.png"));
    CHECK(std::filesystem::exists(dir / "layer_2.png"));
    CHECK(std::filesystem::exists(dir / "composite.png"));
    Raster rgba = read_png(dir / "layer_1.png");
    CHECK(rgba.c == 4);
    std::filesystem::remove_all(dir);
}
