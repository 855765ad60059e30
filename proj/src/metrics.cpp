// SPDX-License-Identifier: Apache-2.0
#include "layerlab/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "layerlab/common.hpp"
#include "layerlab/judge.hpp"

namespace layerlab {

namespace {

double alpha_mass(const LayerStack& stack, int layer) {
    double acc = 0.0;
    for (int y = 0; y < stack.h; ++y)
        for (int x = 0; x < stack.w; ++x) acc += stack.at(layer, 3, y, x);
    return acc / static_cast<double>(stack.h * stack.w);
}

}  // namespace

int bad_layer_count(const LayerStack& stack, double blank_thresh,
                    double glaze_band) {
    if (!(blank_thresh > 0.0 && blank_thresh < 1.0) ||
        !(glaze_band > 0.0 && glaze_band < 1.0))
        throw ConfigError("bad_layer_count: thresholds must lie in (0,1)");
    int bad = 0;
    for (int l = 1; l < stack.layers; ++l) {
        if (alpha_mass(stack, l) < blank_thresh) {
            ++bad;  // blank
            continue;
        }
        int mid = 0;
        for (int y = 0; y < stack.h; ++y)
            for (int x = 0; x < stack.w; ++x) {
                const double a = stack.at(l, 3, y, x);
                if (a > 0.2 && a < 0.8) ++mid;
            }
        if (static_cast<double>(mid) / (stack.h * stack.w) > glaze_band) ++bad;
    }
    return bad;
}

double distribution_evenness(const LayerStack& stack) {
    const int fg = stack.layers - 1;
    if (fg <= 0) throw NumericError("distribution_evenness: no foreground layers");
    if (fg == 1) return 1.0;
    std::vector<double> masses;
    for (int l = 1; l < stack.layers; ++l) masses.push_back(alpha_mass(stack, l));
    const double total = std::accumulate(masses.begin(), masses.end(), 0.0);
    if (total <= 0.0) {
        std::fprintf(stderr,
                     "distribution_evenness: all foreground masses are zero\n");
        return 0.0;
    }
    double h = 0.0;
    for (double m : masses) {
        if (m <= 0.0) continue;
        const double p = m / total;
        h -= p * std::log(p);
    }
    return h / std::log(static_cast<double>(fg));
}

double layer0_quality(const Raster& predicted_layer0,
                      const Raster& true_background) {
    if (predicted_layer0.h != true_background.h ||
        predicted_layer0.w != true_background.w ||
        predicted_layer0.c != true_background.c)
        throw NumericError("layer0_quality: shape mismatch");
    double acc = 0.0;
    for (std::size_t i = 0; i < predicted_layer0.px.size(); ++i)
        acc += std::abs(predicted_layer0.px[i] - true_background.px[i]);
    acc /= static_cast<double>(predicted_layer0.px.size());
    return std::clamp(1.0 - acc, 0.0, 1.0);
}

double ssim(const Raster& a, const Raster& b) {
    constexpr int kWindow = 7;
    constexpr double kC1 = 0.01 * 0.01;
    constexpr double kC2 = 0.03 * 0.03;
    if (a.h != b.h || a.w != b.w || a.c != b.c)
        throw NumericError("ssim: shape mismatch");
    if (a.h < kWindow || a.w < kWindow)
        throw NumericError("ssim: raster smaller than the window");
    const double n = kWindow * kWindow;
    double acc = 0.0;
    long windows = 0;
    for (int c = 0; c < a.c; ++c) {
        for (int y = 0; y + kWindow <= a.h; ++y) {
            for (int x = 0; x + kWindow <= a.w; ++x) {
                double sa = 0, sb = 0, saa = 0, sbb = 0, sab = 0;
                for (int wy = 0; wy < kWindow; ++wy) {
                    for (int wx = 0; wx < kWindow; ++wx) {
                        const double va = a.at(y + wy, x + wx, c);
                        const double vb = b.at(y + wy, x + wx, c);
                        sa += va;
                        sb += vb;
                        saa += va * va;
                        sbb += vb * vb;
                        sab += va * vb;
                    }
                }
                const double ma = sa / n, mb = sb / n;
                const double va = saa / n - ma * ma;
                const double vb = sbb / n - mb * mb;
                const double cov = sab / n - ma * mb;
                acc += (2.0 * ma * mb + kC1) * (2.0 * cov + kC2) /
                       ((ma * ma + mb * mb + kC1) * (va + vb + kC2));
                ++windows;
            }
        }
    }
    return acc / static_cast<double>(windows);
}

namespace {

double white_l1(const Raster& a, const Raster& b) {
    double acc = 0.0;
    for (std::size_t i = 0; i < a.px.size(); ++i)
        acc += std::abs(a.px[i] - b.px[i]);
    return acc / static_cast<double>(a.px.size());
}

}  // namespace

BestMatchResult best_match_l1(const LayerStack& pred, const LayerStack& gt,
                              MatchDirection direction) {
    if (pred.layers < 1 || gt.layers < 1)
        throw NumericError("best_match_l1: empty stack");
    if (pred.h != gt.h || pred.w != gt.w)
        throw NumericError("best_match_l1: raster size mismatch");
    const std::vector<Raster> pw = white_layer_views(pred);
    const std::vector<Raster> gw = white_layer_views(gt);
    const auto& sources = direction == MatchDirection::PredToGt ? pw : gw;
    const auto& targets = direction == MatchDirection::PredToGt ? gw : pw;
    BestMatchResult out;
    for (const Raster& src : sources) {
        double best = std::numeric_limits<double>::infinity();
        for (const Raster& dst : targets) best = std::min(best, white_l1(src, dst));
        out.per_slot.push_back(best);
    }
    out.mean = std::accumulate(out.per_slot.begin(), out.per_slot.end(), 0.0) /
               static_cast<double>(out.per_slot.size());
    return out;
}

double fixed_index_l1(const LayerStack& pred, const LayerStack& gt) {
    if (pred.layers != gt.layers)
        throw NumericError("fixed_index_l1: layer counts differ");
    const std::vector<Raster> pw = white_layer_views(pred);
    const std::vector<Raster> gw = white_layer_views(gt);
    double acc = 0.0;
    for (int l = 0; l < pred.layers; ++l) acc += white_l1(pw[l], gw[l]);
    return acc / static_cast<double>(pred.layers);
}

namespace {

Aggregate aggregate(const std::vector<double>& values) {
    Aggregate a;
    if (values.empty()) return a;
    a.mean = std::accumulate(values.begin(), values.end(), 0.0) /
             static_cast<double>(values.size());
    double var = 0.0;
    for (double v : values) var += (v - a.mean) * (v - a.mean);
    a.stdev = std::sqrt(var / static_cast<double>(values.size()));
    return a;
}

}  // namespace

EvalSummary summarize(const std::vector<EvalRecord>& records) {
    EvalSummary s;
    s.n = static_cast<int>(records.size());
    std::vector<double> bad, distrib, layer0, ssim_vals, best;
    for (const EvalRecord& r : records) {
        bad.push_back(r.bad_layers);
        distrib.push_back(r.distrib);
        layer0.push_back(r.layer0);
        ssim_vals.push_back(r.ssim);
        best.push_back(r.best_match_mean);
    }
    s.bad_layers = aggregate(bad);
    s.distrib = aggregate(distrib);
    s.layer0 = aggregate(layer0);
    s.ssim = aggregate(ssim_vals);
    s.best_match = aggregate(best);
    return s;
}

}  // namespace layerlab
