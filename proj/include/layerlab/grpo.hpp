// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <span>
#include <vector>

#include "layerlab/flow.hpp"
#include "layerlab/judge.hpp"
#include "layerlab/optimizer.hpp"
#include "layerlab/policy.hpp"
#include "layerlab/rng.hpp"

namespace layerlab {

enum class RatioMode { SumRescale, SpatialMean };

struct GrpoConfig {
    int group_size = 16;
    double clip_eps = 0.2;    // ratio clip
    double kl_beta = 1e-3;    // reference-policy penalty weight
    double adv_nu = 1e-4;     // advantage denominator stabiliser
    double adv_clip = 5.0;
    int ppo_epochs = 1;
    int minibatches = 2;
    RatioMode ratio_mode = RatioMode::SumRescale;
    double scale_floor = 1e-6;  // per-step centring scale floor
    double post_scale = 1.0;    // multiplier on the centred log-ratio

    void validate() const;
};

// One condition, G stored rollouts, and (after scoring) rewards and
// group-standardised advantages.
struct GroupRollout {
    uint64_t scene_seed = 0;
    int layer_count = 0;
    Condition cond;
    std::vector<Trajectory> trajectories;
    std::vector<double> rewards;
    std::vector<double> advantages;
    double reward_mean = 0.0;
    double reward_std = 0.0;

    bool scored() const { return !rewards.empty(); }
    void set_rewards(std::vector<double> r, const GrpoConfig& cfg);
};

// G independent SDE rollouts against a fixed policy snapshot, batched in
// lockstep over the schedule; gradients stay off. Errors name the
// trajectory and step if a state goes non-finite.
GroupRollout collect_group(const VelocityNet& policy, const Condition& cond,
                           const NoiseSchedule& schedule, int group_size,
                           Rng& rng, uint64_t scene_seed = 0);

// clip((r - mean) / (population std + nu), -c, c)
std::vector<double> advantages(const std::vector<double>& rewards, double nu,
                               double clip);

// Reduce per-element log-prob vectors into one raw log-ratio. Sum-rescale
// divides the summed difference by sqrt(D); spatial-mean divides by D (the
// ablation whose std collapses as 1/sqrt(D)).
double normalized_log_ratio(std::span<const double> lnew,
                            std::span<const double> lold, RatioMode mode);

// Per-step centring across the group: (x - mean) / max(std, floor); a
// degenerate all-equal step yields exact zeros (ratio identically 1).
std::vector<double> center_per_step(std::span<const double> raw, double floor);

struct SurrogateStats {
    double loss = 0.0;
    double ratio_mean = 0.0;
    double clip_frac = 0.0;  // fraction of ratios outside the clip window
    double kl = 0.0;         // mean normalised log-prob gap to the reference
    std::vector<std::vector<double>> raws_per_step;    // [T][B] pre-centring
    std::vector<std::vector<double>> ratios_per_step;  // [T][B]
};

// Clipped-surrogate loss over a subset of the rollout's trajectories,
// replayed against the current policy (gradients into adapters) and the
// adapter-free reference. Per-step terms are reweighted by 1/dt; the KL
// estimate uses the same sum-and-rescale reduction as the ratio path.
// Centring statistics are computed across the given subset.
Tape::NodeId surrogate_loss(Tape& tape, const GroupRollout& rollout,
                            std::span<const int> subset,
                            const VelocityNet& policy, const GrpoConfig& cfg,
                            SurrogateStats* stats = nullptr);

struct RoundMetrics {
    int round = 0;
    double reward_mean = 0.0;
    double reward_std = 0.0;
    double ratio_mean = 1.0;
    double clip_frac = 0.0;
    double kl = 0.0;
    double loss = 0.0;
    std::vector<double> ratio_std_per_step;
    bool calibration_fallback = false;
};

// Generate -> Score -> Train. Rollouts run against the pre-update snapshot;
// the optimizer touches adapter parameters only.
class GrpoTrainer {
  public:
    GrpoTrainer(VelocityNet& net, AdamW& opt, Judge& judge, GrpoConfig cfg,
                RewardSettings reward, NoiseSchedule schedule, uint64_t seed);

    RoundMetrics round(const GeneratedScene& scene);

    int rounds_done() const { return rounds_; }
    const GroupReport& last_report() const { return last_report_; }
    const Raster& last_grid() const { return last_grid_; }

  private:
    VelocityNet& net_;
    AdamW& opt_;
    Judge& judge_;
    GrpoConfig cfg_;
    RewardSettings reward_;
    NoiseSchedule schedule_;
    Rng rng_;
    int rounds_ = 0;
    GroupReport last_report_;
    Raster last_grid_;
};

}  // namespace layerlab
