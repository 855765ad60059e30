// SPDX-License-Identifier: Apache-2.0
#include "layerlab/grpo.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "layerlab/common.hpp"
#include "layerlab/kernels.hpp"

namespace layerlab {

void GrpoConfig::validate() const {
    if (group_size < 1) throw ConfigError("group size must be >= 1");
    if (!(clip_eps > 0.0 && clip_eps < 1.0))
        throw ConfigError("ratio clip must lie in (0,1)");
    if (adv_nu <= 0.0) throw ConfigError("advantage stabiliser must be > 0");
    if (adv_clip <= 0.0) throw ConfigError("advantage clip must be > 0");
    if (ppo_epochs < 1) throw ConfigError("need at least one update epoch");
    if (minibatches < 1) throw ConfigError("need at least one minibatch");
    if (scale_floor <= 0.0) throw ConfigError("scale floor must be > 0");
    if (post_scale <= 0.0) throw ConfigError("post scale must be > 0");
    if (kl_beta < 0.0) throw ConfigError("kl weight must be >= 0");
}

void GroupRollout::set_rewards(std::vector<double> r, const GrpoConfig& cfg) {
    if (static_cast<int>(r.size()) != static_cast<int>(trajectories.size()))
        throw NumericError("set_rewards: reward count does not match group");
    rewards = std::move(r);
    reward_mean = std::accumulate(rewards.begin(), rewards.end(), 0.0) /
                  static_cast<double>(rewards.size());
    double var = 0.0;
    for (double v : rewards) var += (v - reward_mean) * (v - reward_mean);
    reward_std = std::sqrt(var / static_cast<double>(rewards.size()));
    advantages = layerlab::advantages(rewards, cfg.adv_nu, cfg.adv_clip);
}

GroupRollout collect_group(const VelocityNet& policy, const Condition& cond,
                           const NoiseSchedule& schedule, int group_size,
                           Rng& rng, uint64_t scene_seed) {
    if (group_size < 1) throw ConfigError("collect_group: group size must be >= 1");
    const int d = policy.packed_dim(cond.layer_count);
    const int dmax = policy.max_packed_dim();

    GroupRollout rollout;
    rollout.scene_seed = scene_seed;
    rollout.layer_count = cond.layer_count;
    rollout.cond = cond;
    rollout.trajectories.resize(group_size);

    std::vector<Tensor> xs;
    xs.reserve(group_size);
    for (int g = 0; g < group_size; ++g) {
        Trajectory& traj = rollout.trajectories[g];
        traj.scene_seed = scene_seed;
        traj.layer_count = cond.layer_count;
        traj.z_init = rng.normal_tensor({d});
        xs.push_back(traj.z_init);
    }

    std::vector<const Condition*> cond_rows(group_size, &cond);
    const Tensor cond_flat = policy.assemble_cond(cond_rows);
    const Tensor onehot = policy.assemble_onehot(
        std::vector<int>(group_size, cond.layer_count));

    for (int i = 0; i < schedule.steps(); ++i) {
        const double t = schedule.t[i];
        const double dt = schedule.dt[i];
        const double sigma = schedule.sigma[i];
        const SdeCoeffs c = sde_coeffs(t, dt, sigma);
        const double s = transition_scale(sigma, dt);

        std::vector<const Tensor*> rows;
        rows.reserve(group_size);
        for (const Tensor& x : xs) rows.push_back(&x);
        const std::vector<double> ts(group_size, t);
        const Tensor v = policy.forward_batch(policy.assemble_x_and_t(rows, ts),
                                              cond_flat, onehot, ts, true);

        for (int g = 0; g < group_size; ++g) {
            Trajectory& traj = rollout.trajectories[g];
            TrajectoryStep step;
            step.t = t;
            step.dt = dt;
            step.sigma = sigma;
            step.x = xs[g];
            step.mean = Tensor::zeros({d});
            kernels::lincomb(static_cast<std::size_t>(d), c.c1, xs[g].data.data(),
                             -c.c2,
                             v.data.data() + static_cast<std::size_t>(g) * dmax,
                             step.mean.data.data());
            step.noise = rng.normal_tensor({d});
            Tensor x_next = Tensor::zeros({d});
            kernels::lincomb(static_cast<std::size_t>(d), 1.0,
                             step.mean.data.data(), s, step.noise.data.data(),
                             x_next.data.data());
            for (double val : x_next.data) {
                if (!std::isfinite(val))
                    throw NumericError(strfmt(
                        "collect_group: non-finite state in trajectory %d at step %d",
                        g, i));
            }
            kernels::gauss_logpdf_rows(1, d, d, x_next.data.data(),
                                       step.mean.data.data(), s,
                                       &step.log_prob_old);
            traj.steps.push_back(std::move(step));
            xs[g] = std::move(x_next);
        }
    }
    for (int g = 0; g < group_size; ++g)
        rollout.trajectories[g].x_final = xs[g];
    return rollout;
}

std::vector<double> advantages(const std::vector<double>& rewards, double nu,
                               double clip) {
    if (rewards.empty()) throw NumericError("advantages: empty group");
    for (double r : rewards)
        if (!std::isfinite(r)) throw NumericError("advantages: non-finite reward");
    const double mean = std::accumulate(rewards.begin(), rewards.end(), 0.0) /
                        static_cast<double>(rewards.size());
    double var = 0.0;
    for (double r : rewards) var += (r - mean) * (r - mean);
    const double sd = std::sqrt(var / static_cast<double>(rewards.size()));
    std::vector<double> out(rewards.size());
    for (std::size_t i = 0; i < rewards.size(); ++i)
        out[i] = std::clamp((rewards[i] - mean) / (sd + nu), -clip, clip);
    return out;
}

double normalized_log_ratio(std::span<const double> lnew,
                            std::span<const double> lold, RatioMode mode) {
    if (lnew.empty()) throw NumericError("normalized_log_ratio: empty vectors");
    if (lnew.size() != lold.size())
        throw NumericError("normalized_log_ratio: length mismatch");
    const double diff = kernels::reduce_sum(lnew.size(), lnew.data()) -
                        kernels::reduce_sum(lold.size(), lold.data());
    const double d = static_cast<double>(lnew.size());
    return mode == RatioMode::SumRescale ? diff / std::sqrt(d) : diff / d;
}

std::vector<double> center_per_step(std::span<const double> raw, double floor) {
    if (raw.empty()) throw NumericError("center_per_step: empty group");
    const double mean = std::accumulate(raw.begin(), raw.end(), 0.0) /
                        static_cast<double>(raw.size());
    double var = 0.0;
    bool all_equal = true;
    for (double v : raw) {
        var += (v - mean) * (v - mean);
        if (v != raw[0]) all_equal = false;
    }
    const double sd = std::sqrt(var / static_cast<double>(raw.size()));
    std::vector<double> out(raw.size());
    if (sd < floor && all_equal) return out;  // ratio identically 1
    const double scale = std::max(sd, floor);
    for (std::size_t i = 0; i < raw.size(); ++i)
        out[i] = (raw[i] - mean) / scale;
    return out;
}

Tape::NodeId surrogate_loss(Tape& tape, const GroupRollout& rollout,
                            std::span<const int> subset,
                            const VelocityNet& policy, const GrpoConfig& cfg,
                            SurrogateStats* stats) {
    cfg.validate();
    if (!rollout.scored() ||
        rollout.advantages.size() != rollout.trajectories.size())
        throw NumericError("surrogate_loss: advantages missing");
    if (subset.empty()) throw NumericError("surrogate_loss: empty subset");
    const int batch = static_cast<int>(subset.size());
    const int steps = static_cast<int>(rollout.trajectories[0].steps.size());
    const int d = policy.packed_dim(rollout.cond.layer_count);
    const int dmax = policy.max_packed_dim();
    const double divisor = cfg.ratio_mode == RatioMode::SumRescale
                               ? std::sqrt(static_cast<double>(d))
                               : static_cast<double>(d);
    const double term_norm = 1.0 / static_cast<double>(batch * steps);

    PolicyBinding binding = policy.bind(tape, TrainScope::Adapters);
    std::vector<const Condition*> cond_rows(batch, &rollout.cond);
    const Tensor cond_flat = policy.assemble_cond(cond_rows);
    const Tensor onehot = policy.assemble_onehot(
        std::vector<int>(batch, rollout.cond.layer_count));
    const Tape::NodeId cond_node = tape.constant(cond_flat);
    const Tape::NodeId onehot_node = tape.constant(onehot);

    Tensor adv = Tensor::zeros({batch});
    for (int b = 0; b < batch; ++b)
        adv.data[b] = rollout.advantages[subset[b]];
    const Tape::NodeId adv_node = tape.constant(adv);

    if (stats) *stats = SurrogateStats{};
    Tape::NodeId total = -1;
    double kl_acc = 0.0, ratio_acc = 0.0;
    int clip_count = 0;

    for (int i = 0; i < steps; ++i) {
        const TrajectoryStep& ref_step = rollout.trajectories[subset[0]].steps[i];
        const double t = ref_step.t, dt = ref_step.dt, sigma = ref_step.sigma;
        const SdeCoeffs c = sde_coeffs(t, dt, sigma);
        const double s = transition_scale(sigma, dt);

        std::vector<const Tensor*> x_rows;
        Tensor x_next = Tensor::zeros({batch, dmax});
        Tensor lold = Tensor::zeros({batch});
        for (int b = 0; b < batch; ++b) {
            const Trajectory& traj = rollout.trajectories[subset[b]];
            const TrajectoryStep& st = traj.steps[i];
            x_rows.push_back(&st.x);
            const Tensor& nx =
                i + 1 < steps ? traj.steps[i + 1].x : traj.x_final;
            std::copy(nx.data.begin(), nx.data.end(),
                      x_next.data.begin() + static_cast<std::size_t>(b) * dmax);
            lold.data[b] = st.log_prob_old;
        }
        const std::vector<double> ts(batch, t);
        const Tensor x_and_t = policy.assemble_x_and_t(x_rows, ts);
        const Tape::NodeId x_and_t_node = tape.constant(x_and_t);

        Tape::NodeId v_new = policy.forward_nodes(tape, binding, x_and_t_node,
                                                  cond_node, onehot_node, ts, true);
        Tape::NodeId x_slice = tape.cols_slice(x_and_t_node, dmax);
        Tape::NodeId mu_new = tape.lincomb(x_slice, c.c1, v_new, -c.c2);
        const Tape::NodeId x_next_node = tape.constant(x_next);
        Tape::NodeId lnew = tape.gauss_row_logpdf(x_next_node, mu_new, s, d);

        // reference policy (adapters off): plain values, no gradients
        const Tensor v_ref =
            policy.forward_batch(x_and_t, cond_flat, onehot, ts, false);
        Tensor mu_ref = Tensor::zeros({batch, dmax});
        for (int b = 0; b < batch; ++b)
            kernels::lincomb(static_cast<std::size_t>(dmax), c.c1,
                             x_and_t.data.data() +
                                 static_cast<std::size_t>(b) * x_and_t.cols(),
                             -c.c2,
                             v_ref.data.data() + static_cast<std::size_t>(b) * dmax,
                             mu_ref.data.data() + static_cast<std::size_t>(b) * dmax);
        Tensor lref = Tensor::zeros({batch});
        kernels::gauss_logpdf_rows(batch, dmax, d, x_next.data.data(),
                                   mu_ref.data.data(), s, lref.data.data());

        Tape::NodeId raw =
            tape.scale(tape.sub(lnew, tape.constant(lold)), 1.0 / divisor);

        // per-step centring across the subset
        Tape::NodeId mu_i = tape.mean(raw);
        Tape::NodeId dev = tape.sub_scalar(raw, mu_i);
        Tape::NodeId var_node = tape.mean(tape.mul(dev, dev));
        const double sd = std::sqrt(tape.value(var_node).item());
        Tape::NodeId centred =
            sd >= cfg.scale_floor
                ? tape.div_scalar(dev, tape.sqrt(var_node))
                : tape.scale(dev, 1.0 / cfg.scale_floor);
        if (cfg.post_scale != 1.0) centred = tape.scale(centred, cfg.post_scale);

        Tape::NodeId rho = tape.exp(centred);
        for (double v : tape.value(rho).data)
            if (!std::isfinite(v))
                throw NumericError(strfmt("surrogate_loss: non-finite ratio at step %d", i));

        Tape::NodeId unclipped = tape.mul(rho, adv_node);
        Tape::NodeId clipped = tape.mul(
            tape.clip(rho, 1.0 - cfg.clip_eps, 1.0 + cfg.clip_eps), adv_node);
        Tape::NodeId policy_term = tape.scale(
            tape.sum(tape.min(unclipped, clipped)), -term_norm / dt);

        Tape::NodeId kl_raw =
            tape.scale(tape.sub(lnew, tape.constant(lref)), 1.0 / divisor);
        Tape::NodeId step_loss =
            cfg.kl_beta != 0.0
                ? tape.add(policy_term,
                           tape.scale(tape.sum(kl_raw), cfg.kl_beta * term_norm))
                : policy_term;

        total = total < 0 ? step_loss : tape.add(total, step_loss);

        if (stats) {
            stats->raws_per_step.push_back(tape.value(raw).data);
            stats->ratios_per_step.push_back(tape.value(rho).data);
            for (double v : tape.value(rho).data) {
                ratio_acc += v;
                if (v < 1.0 - cfg.clip_eps || v > 1.0 + cfg.clip_eps) ++clip_count;
            }
            kl_acc += kernels::reduce_sum(static_cast<std::size_t>(batch),
                                          tape.value(kl_raw).data.data());
        }
    }
    if (stats) {
        stats->loss = tape.value(total).item();
        stats->ratio_mean = ratio_acc / static_cast<double>(batch * steps);
        stats->clip_frac = static_cast<double>(clip_count) /
                           static_cast<double>(batch * steps);
        stats->kl = kl_acc / static_cast<double>(batch * steps);
    }
    return total;
}

GrpoTrainer::GrpoTrainer(VelocityNet& net, AdamW& opt, Judge& judge,
                         GrpoConfig cfg, RewardSettings reward,
                         NoiseSchedule schedule, uint64_t seed)
    : net_(net), opt_(opt), judge_(judge), cfg_(cfg), reward_(reward),
      schedule_(std::move(schedule)), rng_(seed) {
    cfg_.validate();
}

RoundMetrics GrpoTrainer::round(const GeneratedScene& scene) {
    Condition cond{scene.composite, scene.scene.layer_count, {}};
    GroupRollout rollout = collect_group(net_, cond, schedule_, cfg_.group_size,
                                         rng_, scene.scene.seed);

    std::vector<LayerStack> stacks;
    stacks.reserve(rollout.trajectories.size());
    for (const Trajectory& traj : rollout.trajectories)
        stacks.push_back(unpack(traj.x_final, cond.layer_count,
                                net_.config().canvas, net_.config().canvas));

    ScoredGroup scored;
    try {
        scored = score_group(judge_, stacks, &scene.scene, reward_);
    } catch (const JudgeError& e) {
        throw JudgeError(strfmt("round %d aborted: %s", rounds_, e.what()));
    }
    last_report_ = scored.report;
    last_grid_ = scored.grid;
    rollout.set_rewards(scored.report.rewards(), cfg_);

    ParamMap adapters = net_.adapter_params();
    const int group = cfg_.group_size;
    std::vector<int> order(group);
    std::iota(order.begin(), order.end(), 0);

    RoundMetrics metrics;
    metrics.round = rounds_;
    metrics.reward_mean = rollout.reward_mean;
    metrics.reward_std = rollout.reward_std;
    metrics.calibration_fallback = scored.report.fallback_used;
    const int steps = schedule_.steps();
    std::vector<std::vector<double>> ratios_by_step(steps);
    double loss_acc = 0.0, kl_acc = 0.0, ratio_acc = 0.0, clip_acc = 0.0;
    int passes = 0;

    for (int epoch = 0; epoch < cfg_.ppo_epochs; ++epoch) {
        // deterministic shuffle per epoch
        for (int i = group - 1; i > 0; --i)
            std::swap(order[i], order[rng_.uniform_int(0, i)]);
        const int chunks = std::min(cfg_.minibatches, group);
        for (int chunk = 0; chunk < chunks; ++chunk) {
            std::vector<int> subset;
            for (int i = chunk; i < group; i += chunks) subset.push_back(order[i]);
            if (subset.empty()) continue;
            Tape tape;
            SurrogateStats stats;
            Tape::NodeId loss =
                surrogate_loss(tape, rollout, subset, net_, cfg_, &stats);
            GradMap grads = tape.backward(loss);
            GradMap lora;
            for (auto& [name, g] : grads)
                if (name.rfind("lora.", 0) == 0) lora[name] = std::move(g);
            opt_.step(adapters, lora);

            loss_acc += stats.loss;
            kl_acc += stats.kl;
            ratio_acc += stats.ratio_mean;
            clip_acc += stats.clip_frac;
            for (int i = 0; i < steps; ++i)
                ratios_by_step[i].insert(ratios_by_step[i].end(),
                                         stats.ratios_per_step[i].begin(),
                                         stats.ratios_per_step[i].end());
            ++passes;
        }
    }
    metrics.loss = loss_acc / passes;
    metrics.kl = kl_acc / passes;
    metrics.ratio_mean = ratio_acc / passes;
    metrics.clip_frac = clip_acc / passes;
    metrics.ratio_std_per_step.resize(steps, 0.0);
    for (int i = 0; i < steps; ++i) {
        const auto& rs = ratios_by_step[i];
        const double mean = std::accumulate(rs.begin(), rs.end(), 0.0) /
                            static_cast<double>(rs.size());
        double var = 0.0;
        for (double v : rs) var += (v - mean) * (v - mean);
        metrics.ratio_std_per_step[i] =
            std::sqrt(var / static_cast<double>(rs.size()));
    }
    ++rounds_;
    return metrics;
}

}  // namespace layerlab
