// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "layerlab/tape.hpp"
#include "layerlab/tensor.hpp"

namespace layerlab {

using ParamMap = std::map<std::string, Tensor*>;

struct AdamWConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.0;
    double clip_norm = 1.0;  // global gradient norm cap, applied jointly
};

// Decoupled-weight-decay adaptive optimizer with global-norm gradient
// clipping. Moments are keyed by parameter name and shaped like their
// parameter; the step counter strictly increases.
class AdamW {
  public:
    explicit AdamW(AdamWConfig cfg) : cfg_(cfg) {}

    // Clips the gradients jointly to cfg.clip_norm, then updates every
    // parameter present in `grads`. Missing moments are zero-initialised.
    void step(const ParamMap& params, const GradMap& grads);

    int64_t step_count() const { return step_; }
    const AdamWConfig& config() const { return cfg_; }

    // Serialisation for resumable runs.
    std::map<std::string, Tensor> moments() const;
    void restore(std::map<std::string, Tensor> m1,
                 std::map<std::string, Tensor> m2, int64_t step);

    // Returns the scale factor applied to gradients (<= 1).
    static double global_clip_scale(const GradMap& grads, double max_norm);

  private:
    AdamWConfig cfg_;
    int64_t step_ = 0;
    std::map<std::string, Tensor> m1_, m2_;
};

}  // namespace layerlab
