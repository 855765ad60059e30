// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <vector>

#include "layerlab/image.hpp"
#include "layerlab/scene.hpp"

namespace layerlab {

// Counts foreground layers that are blank (alpha mass below blank_thresh)
// or glazed (fraction of alpha in (0.2, 0.8) above glaze_band); a layer is
// counted at most once.
int bad_layer_count(const LayerStack& stack, double blank_thresh = 0.01,
                    double glaze_band = 0.6);

// Normalised entropy of the per-foreground-layer alpha-mass distribution;
// defined as 1 for a single foreground layer, 0 (with a warning) when all
// masses vanish.
double distribution_evenness(const LayerStack& stack);

// 1 - mean absolute error, clamped into [0,1].
double layer0_quality(const Raster& predicted_layer0, const Raster& true_background);

// Mean local structural similarity over 7x7 windows and channels, with the
// standard stabilising constants for unit dynamic range.
double ssim(const Raster& a, const Raster& b);

enum class MatchDirection { PredToGt, GtToPred };

struct BestMatchResult {
    double mean = 0.0;
    std::vector<double> per_slot;
};

// Per-layer L1 between white composites, each source layer scored against
// its closest counterpart (index-free). PredToGt scores each predicted
// layer against its best ground-truth match; GtToPred scores each
// ground-truth layer against its best prediction.
BestMatchResult best_match_l1(const LayerStack& pred, const LayerStack& gt,
                              MatchDirection direction = MatchDirection::PredToGt);

// Fixed-index variant used as the best-match upper bound.
double fixed_index_l1(const LayerStack& pred, const LayerStack& gt);

struct EvalRecord {
    uint64_t seed = 0;
    int layer_count = 0;
    int bad_layers = 0;
    double distrib = 0.0;
    double layer0 = 0.0;
    double ssim = 0.0;
    double best_match_mean = 0.0;
    std::vector<double> best_match_slots;
};

struct Aggregate {
    double mean = 0.0;
    double stdev = 0.0;
};

struct EvalSummary {
    int n = 0;
    Aggregate bad_layers, distrib, layer0, ssim, best_match;
};

EvalSummary summarize(const std::vector<EvalRecord>& records);

}  // namespace layerlab
