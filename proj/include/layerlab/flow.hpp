// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "layerlab/tape.hpp"
#include "layerlab/tensor.hpp"

namespace layerlab {

// Discretised denoising schedule. Timesteps run from 1 down to 0 on a uniform
// grid; each grid point is clamped into (t_lo, t_hi) before the diffusion
// coefficient sigma_t = a*sqrt(t/(1-t)) is evaluated, while the step sizes
// keep the unclamped spacing. The clamp bounds exist because sigma diverges
// at t=1 and the transition mean divides by t.
struct NoiseSchedule {
    double a = 0.7;
    std::vector<double> t;      // clamped, size T+1
    std::vector<double> dt;     // unclamped spacing, size T
    std::vector<double> sigma;  // sigma at clamped t, size T+1

    int steps() const { return static_cast<int>(dt.size()); }
};

double sigma_for(double a, double t);

NoiseSchedule build_schedule(int steps, double a, double t_lo = 1e-3,
                             double t_hi = 0.96);

// Transition-mean coefficients of the marginal-preserving SDE:
// mu = c1 * x_t - c2 * v. Shared by the eager and taped paths so replayed
// means are bitwise identical.
struct SdeCoeffs {
    double c1, c2;
};
SdeCoeffs sde_coeffs(double t, double dt, double sigma);

// sigma_t * sqrt(dt), the per-transition noise scale.
double transition_scale(double sigma, double dt);

// (1-t)*x0 + t*x1
Tensor interpolate(const Tensor& x0, const Tensor& x1, double t);

// Mean squared residual between the model velocity at x_t and the target
// (x1 - x0). `model` maps (x_t, t) to a velocity of x-shape.
double fm_loss(const std::function<Tensor(const Tensor&, double)>& model,
               const Tensor& x0, const Tensor& x1, double t);

// x_t + v*dt. The learned field points from data to noise, so samplers
// stepping t -> t-dt pass the negated model velocity.
Tensor ode_step(const Tensor& x, const Tensor& v, double t, double dt);

Tensor sde_mean(const Tensor& x, const Tensor& v, double t, double dt,
                double sigma);

// Full log-density of x_next under N(mu, (sigma^2 dt) I), summed over
// elements. The per-element terms are exposed separately for the
// spatial-mean ablation and the brute-force oracle.
double transition_log_prob(const Tensor& x_next, const Tensor& mu,
                           double sigma, double dt);
std::vector<double> transition_log_prob_elements(const Tensor& x_next,
                                                 const Tensor& mu,
                                                 double sigma, double dt);

struct SdeStepResult {
    Tensor x_next;
    double log_prob;
};

// x_next = sde_mean + sigma*sqrt(dt)*eps, with its transition log-prob.
SdeStepResult sde_step(const Tensor& x, const Tensor& v, double t, double dt,
                       double sigma, const Tensor& eps);

// One stored SDE transition. x is the state the step started from; the next
// state reconstructs exactly as mean + sigma*sqrt(dt)*noise.
struct TrajectoryStep {
    double t = 0.0;      // clamped timestep the coefficients used
    double dt = 0.0;
    double sigma = 0.0;
    Tensor x;
    Tensor mean;
    Tensor noise;
    double log_prob_old = 0.0;
};

struct Trajectory {
    Tensor z_init;
    std::vector<TrajectoryStep> steps;
    Tensor x_final;
    uint64_t scene_seed = 0;  // condition reference
    int layer_count = 0;
};

}  // namespace layerlab
