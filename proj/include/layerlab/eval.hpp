// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <vector>

#include "layerlab/config.hpp"
#include "layerlab/metrics.hpp"
#include "layerlab/policy.hpp"

namespace layerlab {

// Deterministic held-out evaluation: scenes come from a fixed seed block
// (disjoint from training seeds), samples are drawn with the deterministic
// ODE integrator at t-eval steps, and every metric of the record is
// computed against the known ground truth.
struct HeldOutEval {
    std::vector<EvalRecord> records;
    EvalSummary summary;
    std::vector<LayerStack> stacks;          // decoded predictions
    std::vector<GeneratedScene> scenes;
};

HeldOutEval evaluate_policy(const VelocityNet& net, bool adapters,
                            const RunConfig& cfg, int n_scenes);

}  // namespace layerlab
