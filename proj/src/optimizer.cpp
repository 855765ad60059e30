// SPDX-License-Identifier: Apache-2.0
#include "layerlab/optimizer.hpp"

#include <cmath>

#include "layerlab/common.hpp"

namespace layerlab {

double AdamW::global_clip_scale(const GradMap& grads, double max_norm) {
    double sq = 0.0;
    for (const auto& [name, g] : grads)
        for (double v : g.data) sq += v * v;
    const double norm = std::sqrt(sq);
    if (norm <= max_norm || norm == 0.0) return 1.0;
    return max_norm / norm;
}

void AdamW::step(const ParamMap& params, const GradMap& grads) {
    for (const auto& [name, g] : grads) {
        auto it = params.find(name);
        if (it == params.end())
            throw NumericError("optimizer: gradient for unknown parameter " + name);
        if (!g.same_shape(*it->second))
            throw NumericError("optimizer: shape mismatch for " + name);
        g.check_finite("gradient of " + name);
    }
    const double scale = global_clip_scale(grads, cfg_.clip_norm);
    ++step_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(step_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(step_));
    for (const auto& [name, g] : grads) {
        Tensor& p = *params.at(name);
        Tensor& m = m1_.try_emplace(name, Tensor::zeros(p.shape)).first->second;
        Tensor& v = m2_.try_emplace(name, Tensor::zeros(p.shape)).first->second;
        for (std::size_t i = 0; i < p.numel(); ++i) {
            const double gi = g.data[i] * scale;
            m.data[i] = cfg_.beta1 * m.data[i] + (1.0 - cfg_.beta1) * gi;
            v.data[i] = cfg_.beta2 * v.data[i] + (1.0 - cfg_.beta2) * gi * gi;
            const double mhat = m.data[i] / bc1;
            const double vhat = v.data[i] / bc2;
            p.data[i] -= cfg_.lr * (mhat / (std::sqrt(vhat) + cfg_.eps) +
                                    cfg_.weight_decay * p.data[i]);
        }
        p.check_finite("parameter " + name + " after update");
    }
}

std::map<std::string, Tensor> AdamW::moments() const {
    std::map<std::string, Tensor> out;
    for (const auto& [name, t] : m1_) out["m1." + name] = t;
    for (const auto& [name, t] : m2_) out["m2." + name] = t;
    return out;
}

void AdamW::restore(std::map<std::string, Tensor> m1,
                    std::map<std::string, Tensor> m2, int64_t step) {
    m1_ = std::move(m1);
    m2_ = std::move(m2);
    step_ = step;
}

}  // namespace layerlab
