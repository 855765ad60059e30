// SPDX-License-Identifier: Apache-2.0
#include "layerlab/flow.hpp"

#include <algorithm>
#include <cmath>

#include "layerlab/common.hpp"
#include "layerlab/kernels.hpp"

namespace layerlab {

namespace k = kernels;

double sigma_for(double a, double t) {
    if (t <= 0.0 || t >= 1.0)
        throw NumericError("sigma_for: t must lie strictly inside (0,1)");
    return a * std::sqrt(t / (1.0 - t));
}

NoiseSchedule build_schedule(int steps, double a, double t_lo, double t_hi) {
    if (steps < 1) throw NumericError("build_schedule: need at least one step");
    if (!(0.0 < t_lo && t_lo < t_hi && t_hi < 1.0))
        throw NumericError("build_schedule: clamp bounds must satisfy 0 < lo < hi < 1");
    if (a <= 0.0) throw NumericError("build_schedule: coefficient must be positive");
    NoiseSchedule s;
    s.a = a;
    s.t.resize(steps + 1);
    s.dt.resize(steps);
    s.sigma.resize(steps + 1);
    for (int i = 0; i <= steps; ++i) {
        const double raw = static_cast<double>(steps - i) / steps;
        s.t[i] = std::clamp(raw, t_lo, t_hi);
        s.sigma[i] = sigma_for(a, s.t[i]);
    }
    for (int i = 0; i < steps; ++i) {
        const double raw_i = static_cast<double>(steps - i) / steps;
        const double raw_next = static_cast<double>(steps - i - 1) / steps;
        s.dt[i] = raw_i - raw_next;
    }
    return s;
}

SdeCoeffs sde_coeffs(double t, double dt, double sigma) {
    if (t <= 0.0) throw NumericError("sde_coeffs: t must be positive");
    if (dt <= 0.0) throw NumericError("sde_coeffs: dt must be positive");
    const double s2 = sigma * sigma;
    return {1.0 - s2 * dt / (2.0 * t), (1.0 + s2 * (1.0 - t) / (2.0 * t)) * dt};
}

double transition_scale(double sigma, double dt) {
    return sigma * std::sqrt(dt);
}

Tensor interpolate(const Tensor& x0, const Tensor& x1, double t) {
    if (!x0.same_shape(x1))
        throw NumericError("interpolate: shape mismatch");
    if (t < 0.0 || t > 1.0)
        throw NumericError("interpolate: t must lie in [0,1]");
    Tensor out = Tensor::zeros(x0.shape);
    k::lincomb(x0.numel(), 1.0 - t, x0.data.data(), t, x1.data.data(),
               out.data.data());
    return out;
}

double fm_loss(const std::function<Tensor(const Tensor&, double)>& model,
               const Tensor& x0, const Tensor& x1, double t) {
    const Tensor xt = interpolate(x0, x1, t);
    const Tensor v = model(xt, t);
    if (!v.same_shape(x0))
        throw NumericError("fm_loss: model output shape mismatch");
    double acc = 0.0;
    for (std::size_t i = 0; i < v.numel(); ++i) {
        const double r = v.data[i] - (x1.data[i] - x0.data[i]);
        acc += r * r;
    }
    return acc / static_cast<double>(v.numel());
}

Tensor ode_step(const Tensor& x, const Tensor& v, double t, double dt) {
    (void)t;
    if (!x.same_shape(v)) throw NumericError("ode_step: shape mismatch");
    if (dt <= 0.0) throw NumericError("ode_step: dt must be positive");
    Tensor out = Tensor::zeros(x.shape);
    k::lincomb(x.numel(), 1.0, x.data.data(), dt, v.data.data(),
               out.data.data());
    return out;
}

Tensor sde_mean(const Tensor& x, const Tensor& v, double t, double dt,
                double sigma) {
    if (!x.same_shape(v)) throw NumericError("sde_mean: shape mismatch");
    const SdeCoeffs c = sde_coeffs(t, dt, sigma);
    Tensor out = Tensor::zeros(x.shape);
    k::lincomb(x.numel(), c.c1, x.data.data(), -c.c2, v.data.data(),
               out.data.data());
    return out;
}

double transition_log_prob(const Tensor& x_next, const Tensor& mu,
                           double sigma, double dt) {
    if (!x_next.same_shape(mu))
        throw NumericError("transition_log_prob: shape mismatch");
    const double s = transition_scale(sigma, dt);
    if (s <= 0.0)
        throw NumericError("transition_log_prob: scale must be positive");
    double out = 0.0;
    const int n = static_cast<int>(x_next.numel());
    k::gauss_logpdf_rows(1, n, n, x_next.data.data(), mu.data.data(), s, &out);
    return out;
}

std::vector<double> transition_log_prob_elements(const Tensor& x_next,
                                                 const Tensor& mu,
                                                 double sigma, double dt) {
    if (!x_next.same_shape(mu))
        throw NumericError("transition_log_prob: shape mismatch");
    const double s = transition_scale(sigma, dt);
    if (s <= 0.0)
        throw NumericError("transition_log_prob: scale must be positive");
    const double inv_two_var = 1.0 / (2.0 * s * s);
    const double log_norm = std::log(s) + 0.5 * std::log(2.0 * 3.141592653589793238462643383279502884);
    std::vector<double> out(x_next.numel());
    for (std::size_t i = 0; i < out.size(); ++i) {
        const double dev = x_next.data[i] - mu.data[i];
        out[i] = -dev * dev * inv_two_var - log_norm;
    }
    return out;
}

SdeStepResult sde_step(const Tensor& x, const Tensor& v, double t, double dt,
                       double sigma, const Tensor& eps) {
    if (sigma <= 0.0) throw NumericError("sde_step: sigma must be positive");
    if (!x.same_shape(eps)) throw NumericError("sde_step: noise shape mismatch");
    const Tensor mu = sde_mean(x, v, t, dt, sigma);
    const double s = transition_scale(sigma, dt);
    Tensor x_next = Tensor::zeros(x.shape);
    k::lincomb(x.numel(), 1.0, mu.data.data(), s, eps.data.data(),
               x_next.data.data());
    return {x_next, transition_log_prob(x_next, mu, sigma, dt)};
}

}  // namespace layerlab
