// SPDX-License-Identifier: Apache-2.0
//
// Shared helpers for the GRPO property tests and the acceptance suite.
#pragma once

#include <cmath>
#include <vector>

#include "layerlab/grpo.hpp"
#include "layerlab/kernels.hpp"
#include "layerlab/policy.hpp"
#include "layerlab/rng.hpp"

namespace layerlab::testutil {

inline PolicyConfig micro_policy_config(int canvas = 4, int max_layers = 2) {
    PolicyConfig cfg;
    cfg.canvas = canvas;
    cfg.min_layers = 2;
    cfg.max_layers = max_layers;
    cfg.hidden_width = 8;
    cfg.hidden_layers = 2;
    cfg.cond_embed = 4;
    cfg.lora_rank = 1;
    cfg.lora_alpha = 1.0;
    return cfg;
}

inline Condition flat_condition(const VelocityNet& net, int layer_count,
                                double tone = 0.5) {
    return Condition{Raster(net.config().canvas, net.config().canvas, 3, tone),
                     layer_count, {}};
}

// Random adapter values; `scale` multiplies a 1/sqrt(in)-style draw.
inline void perturb_adapters(VelocityNet& net, double scale, uint64_t seed) {
    Rng rng(seed);
    for (auto& [name, t] : net.adapter_params()) {
        const double in = static_cast<double>(t->shape.back());
        for (double& v : t->data) v += scale * rng.normal() / std::sqrt(in);
    }
}

// Rescales adapter B matrices so the induced transition-mean shift has the
// requested rms on a probe batch; this is the "fixed adapter perturbation"
// used by the dimension-scaling checks.
inline void normalize_perturbation(VelocityNet& net, const Condition& cond,
                                   double target_rms, uint64_t probe_seed) {
    Rng rng(probe_seed);
    const int d = net.packed_dim(cond.layer_count);
    double acc = 0.0;
    std::size_t count = 0;
    for (int probe = 0; probe < 8; ++probe) {
        Tensor x = rng.normal_tensor({d});
        Tensor von = net.forward(x, 0.5, cond, true);
        Tensor voff = net.forward(x, 0.5, cond, false);
        for (std::size_t i = 0; i < von.numel(); ++i) {
            const double dv = von.data[i] - voff.data[i];
            acc += dv * dv;
            ++count;
        }
    }
    const double rms = std::sqrt(acc / static_cast<double>(count));
    if (rms == 0.0) return;
    const double factor = target_rms / rms;
    for (auto& [name, t] : net.adapter_params())
        if (name.ends_with(".b"))
            for (double& v : t->data) v *= factor;
}

// Max relative error between the surrogate's tape gradient and central
// finite differences over every adapter coordinate.
inline double surrogate_fd_error(VelocityNet& net, const GroupRollout& rollout,
                                 const std::vector<int>& subset,
                                 const GrpoConfig& cfg, double h = 1e-4) {
    GradMap analytic;
    {
        Tape tape;
        Tape::NodeId loss = surrogate_loss(tape, rollout, subset, net, cfg);
        analytic = tape.backward(loss);
    }
    auto eval = [&]() {
        Tape tape;
        return tape.value(surrogate_loss(tape, rollout, subset, net, cfg)).item();
    };
    double worst = 0.0;
    for (auto& [name, t] : net.adapter_params()) {
        const Tensor& g = analytic.at(name);
        for (std::size_t i = 0; i < t->numel(); ++i) {
            const double orig = t->data[i];
            t->data[i] = orig + h;
            const double fp = eval();
            t->data[i] = orig - h;
            const double fm = eval();
            t->data[i] = orig;
            const double numeric = (fp - fm) / (2.0 * h);
            const double rel =
                std::abs(g.data[i] - numeric) / (std::abs(g.data[i]) + 1e-8);
            worst = std::max(worst, rel);
        }
    }
    return worst;
}

inline double stddev(const std::vector<double>& v) {
    double mean = 0.0;
    for (double x : v) mean += x;
    mean /= static_cast<double>(v.size());
    double var = 0.0;
    for (double x : v) var += (x - mean) * (x - mean);
    return std::sqrt(var / static_cast<double>(v.size()));
}

// Least-squares slope of log(y) against log(x).
inline double loglog_slope(const std::vector<double>& x,
                           const std::vector<double>& y) {
    const int n = static_cast<int>(x.size());
    double mx = 0.0, my = 0.0;
    std::vector<double> lx(n), ly(n);
    for (int i = 0; i < n; ++i) {
        lx[i] = std::log(x[i]);
        ly[i] = std::log(y[i]);
        mx += lx[i];
        my += ly[i];
    }
    mx /= n;
    my /= n;
    double num = 0.0, den = 0.0;
    for (int i = 0; i < n; ++i) {
        num += (lx[i] - mx) * (ly[i] - my);
        den += (lx[i] - mx) * (lx[i] - mx);
    }
    return num / den;
}

// Raw log-ratio samples between the adapter-on policy and the adapter-off
// behaviour policy at one denoising step, for the dimension-scaling law.
struct RatioScalingSample {
    std::vector<double> sum_rescale;
    std::vector<double> spatial_mean;
};

inline RatioScalingSample ratio_scaling_samples(const VelocityNet& net,
                                                const Condition& cond,
                                                int draws, uint64_t seed) {
    RatioScalingSample out;
    Rng rng(seed);
    const int d = net.packed_dim(cond.layer_count);
    const double t = 0.5, dt = 0.125;
    const double sigma = sigma_for(0.7, t);
    const double s = transition_scale(sigma, dt);
    for (int i = 0; i < draws; ++i) {
        Tensor x = rng.normal_tensor({d});
        const Tensor v_old = net.forward(x, t, cond, false);
        const Tensor v_new = net.forward(x, t, cond, true);
        const Tensor mu_old = sde_mean(x, v_old, t, dt, sigma);
        const Tensor mu_new = sde_mean(x, v_new, t, dt, sigma);
        Tensor eps = rng.normal_tensor({d});
        Tensor x_next = Tensor::zeros({d});
        kernels::lincomb(static_cast<std::size_t>(d), 1.0, mu_old.data.data(), s,
                         eps.data.data(), x_next.data.data());
        const auto lnew = transition_log_prob_elements(x_next, mu_new, sigma, dt);
        const auto lold = transition_log_prob_elements(x_next, mu_old, sigma, dt);
        out.sum_rescale.push_back(
            normalized_log_ratio(lnew, lold, RatioMode::SumRescale));
        out.spatial_mean.push_back(
            normalized_log_ratio(lnew, lold, RatioMode::SpatialMean));
    }
    return out;
}

}  // namespace layerlab::testutil
