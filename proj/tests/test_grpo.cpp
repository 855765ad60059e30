// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numeric>

#include "grpo_test_util.hpp"
#include "layerlab/common.hpp"
#include "layerlab/grpo.hpp"

using namespace layerlab;
using namespace layerlab::testutil;

TEST_CASE("advantages: hand values, degenerate group, clipping") {
    auto a = advantages({1.0, 0.0}, 1e-4, 5.0);
    CHECK(a[0] == doctest::Approx(0.99980004).epsilon(1e-8));
    CHECK(a[1] == doctest::Approx(-0.99980004).epsilon(1e-8));

    auto all_equal = advantages({0.7, 0.7, 0.7, 0.7}, 1e-4, 5.0);
    for (double v : all_equal) CHECK(v == 0.0);

    // a standardised two-sample advantage is bounded by 1, so the clip can
    // only engage on larger groups with an outlier: one reward of 1e6 among
    // 39 zeros standardises to sqrt(39) ~ 6.24 and clips to 5
    std::vector<double> outlier(40, 0.0);
    outlier[0] = 1e6;
    auto clipped = advantages(outlier, 1e-4, 5.0);
    CHECK(clipped[0] == 5.0);
    CHECK(clipped[1] > -5.0);
    CHECK(clipped[1] < 0.0);

    CHECK_THROWS_AS((void)advantages({}, 1e-4, 5.0), NumericError);
}

TEST_CASE("advantages have zero mean and unit pre-clip std") {
    Rng rng(4);
    for (int trial = 0; trial < 30; ++trial) {
        std::vector<double> rewards;
        for (int i = 0; i < 16; ++i) rewards.push_back(rng.uniform());
        auto a = advantages(rewards, 1e-4, 1e9);  // no clipping engaged
        double mean = std::accumulate(a.begin(), a.end(), 0.0) / a.size();
        CHECK(std::abs(mean) < 1e-12);
        const double sd = stddev(a);
        const double rsd = stddev(rewards);
        if (rsd >= 1e-4) CHECK(sd == doctest::Approx(rsd / (rsd + 1e-4)).epsilon(1e-9));
        for (double v : advantages(rewards, 1e-4, 5.0))
            CHECK(std::abs(v) <= 5.0);
    }
}

TEST_CASE("normalized_log_ratio reductions") {
    std::vector<double> lnew(100, -1.0), lold(100, -1.0);
    CHECK(normalized_log_ratio(lnew, lold, RatioMode::SumRescale) == 0.0);
    CHECK(normalized_log_ratio(lnew, lold, RatioMode::SpatialMean) == 0.0);
    for (double& v : lnew) v += 0.01;
    CHECK(normalized_log_ratio(lnew, lold, RatioMode::SumRescale) ==
          doctest::Approx(0.1).epsilon(1e-12));
    CHECK(normalized_log_ratio(lnew, lold, RatioMode::SpatialMean) ==
          doctest::Approx(0.01).epsilon(1e-12));
    CHECK_THROWS_AS((void)normalized_log_ratio({}, {}, RatioMode::SumRescale),
                    NumericError);
}

TEST_CASE("reduction scaling law on iid differences") {
    // per-element differences of std s: sum-rescale keeps std ~ s, the
    // spatial mean collapses as s/sqrt(D)
    Rng rng(6);
    const double s = 0.7;
    for (int d : {16, 256, 1024}) {
        std::vector<double> sr, sm;
        for (int draw = 0; draw < 10000; ++draw) {
            std::vector<double> lnew(d), lold(d, 0.0);
            for (double& v : lnew) v = s * rng.normal();
            sr.push_back(normalized_log_ratio(lnew, lold, RatioMode::SumRescale));
            sm.push_back(normalized_log_ratio(lnew, lold, RatioMode::SpatialMean));
        }
        CHECK(stddev(sr) == doctest::Approx(s).epsilon(0.05));
        CHECK(stddev(sm) == doctest::Approx(s / std::sqrt(d)).epsilon(0.05));
    }
}

TEST_CASE("center_per_step") {
    auto zeros = center_per_step(std::vector<double>{0.3, 0.3, 0.3}, 1e-6);
    for (double v : zeros) CHECK(v == 0.0);

    auto pm = center_per_step(std::vector<double>{0.2, -0.2}, 1e-6);
    CHECK(pm[0] == doctest::Approx(1.0));
    CHECK(pm[1] == doctest::Approx(-1.0));

    Rng rng(8);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<double> raw;
        for (int i = 0; i < 16; ++i) raw.push_back(rng.normal());
        auto c = center_per_step(raw, 1e-6);
        double mean = std::accumulate(c.begin(), c.end(), 0.0) / c.size();
        CHECK(std::abs(mean) < 1e-12);
        CHECK(stddev(c) == doctest::Approx(1.0).epsilon(1e-9));
    }
}

TEST_CASE("collect_group: determinism, stored log-probs, degenerate group") {
    VelocityNet net(micro_policy_config(), 3);
    Condition cond = flat_condition(net, 2);
    NoiseSchedule sched = build_schedule(4, 0.7);

    Rng r1(42), r2(42);
    GroupRollout a = collect_group(net, cond, sched, 3, r1);
    GroupRollout b = collect_group(net, cond, sched, 3, r2);
    for (int g = 0; g < 3; ++g) {
        CHECK(a.trajectories[g].x_final.data == b.trajectories[g].x_final.data);
        for (std::size_t i = 0; i < a.trajectories[g].steps.size(); ++i)
            CHECK(a.trajectories[g].steps[i].log_prob_old ==
                  b.trajectories[g].steps[i].log_prob_old);
    }

    // stored behaviour log-probs equal fresh recomputation
    for (const Trajectory& traj : a.trajectories) {
        for (std::size_t i = 0; i < traj.steps.size(); ++i) {
            const TrajectoryStep& st = traj.steps[i];
            const Tensor& next =
                i + 1 < traj.steps.size() ? traj.steps[i + 1].x : traj.x_final;
            CHECK(std::abs(st.log_prob_old -
                           transition_log_prob(next, st.mean, st.sigma, st.dt)) <=
                  1e-12);
        }
    }

    Rng r3(9);
    GroupRollout single = collect_group(net, cond, sched, 1, r3);
    CHECK(single.trajectories.size() == 1);
    GrpoConfig cfg;
    cfg.group_size = 1;
    cfg.minibatches = 1;
    single.set_rewards({0.8}, cfg);
    CHECK(single.advantages[0] == 0.0);
}

TEST_CASE("collect_group reports non-finite states with trajectory and step") {
    VelocityNet net(micro_policy_config(), 3);
    Condition cond = flat_condition(net, 2);
    NoiseSchedule sched = build_schedule(4, 1e200);  // absurd noise level
    Rng rng(1);
    CHECK_THROWS_WITH_AS((void)collect_group(net, cond, sched, 2, rng),
                         doctest::Contains("trajectory"), NumericError);
}

TEST_CASE("replay identity: untouched parameters give zero raw log-ratios") {
    VelocityNet net(micro_policy_config(8, 3), 5);
    perturb_adapters(net, 0.5, 77);  // behaviour policy = adapters on
    Condition cond = flat_condition(net, 3, 0.3);
    NoiseSchedule sched = build_schedule(8, 0.7);
    Rng rng(11);
    GroupRollout rollout = collect_group(net, cond, sched, 4, rng, 123);
    GrpoConfig cfg;
    cfg.group_size = 4;
    rollout.set_rewards({0.1, 0.4, 0.9, 0.6}, cfg);

    Tape tape;
    SurrogateStats stats;
    std::vector<int> subset{0, 1, 2, 3};
    (void)surrogate_loss(tape, rollout, subset, net, cfg, &stats);
    for (const auto& step_raws : stats.raws_per_step)
        for (double raw : step_raws) CHECK(std::abs(raw) <= 1e-12);
    CHECK(stats.ratio_mean == doctest::Approx(1.0));
    CHECK(stats.clip_frac == 0.0);
}

TEST_CASE("equal current, behaviour and reference policies give zero loss") {
    // fresh adapters (B = 0): adapters-on equals adapters-off exactly
    VelocityNet net(micro_policy_config(8, 3), 5);
    Condition cond = flat_condition(net, 3, 0.3);
    NoiseSchedule sched = build_schedule(8, 0.7);
    Rng rng(11);
    GroupRollout rollout = collect_group(net, cond, sched, 4, rng, 123);
    GrpoConfig cfg;
    cfg.group_size = 4;
    rollout.set_rewards({0.1, 0.4, 0.9, 0.6}, cfg);

    Tape tape;
    SurrogateStats stats;
    std::vector<int> subset{0, 1, 2, 3};
    (void)surrogate_loss(tape, rollout, subset, net, cfg, &stats);
    // ratios identically one and a vanishing reference gap: the loss
    // reduces to the group mean of standardised advantages, which is zero
    CHECK(std::abs(stats.loss) < 1e-9);
    CHECK(stats.ratio_mean == doctest::Approx(1.0));
    CHECK(std::abs(stats.kl) < 1e-15);
}

TEST_CASE("surrogate loss value matches its reported pieces") {
    VelocityNet net(micro_policy_config(4, 2), 7);
    perturb_adapters(net, 0.2, 31);
    Condition cond = flat_condition(net, 2);
    NoiseSchedule sched = build_schedule(2, 0.7);
    Rng rng(13);
    GroupRollout rollout = collect_group(net, cond, sched, 2, rng);
    GrpoConfig cfg;
    cfg.group_size = 2;
    rollout.set_rewards({1.0, 0.0}, cfg);
    perturb_adapters(net, 0.3, 33);  // current policy departs from behaviour

    Tape tape;
    SurrogateStats stats;
    std::vector<int> subset{0, 1};
    (void)surrogate_loss(tape, rollout, subset, net, cfg, &stats);

    double expect = 0.0;
    const double norm = 1.0 / (2.0 * sched.steps());
    for (int i = 0; i < sched.steps(); ++i) {
        for (int b = 0; b < 2; ++b) {
            const double rho = stats.ratios_per_step[i][b];
            const double adv = rollout.advantages[b];
            const double clipped = std::clamp(rho, 1.0 - cfg.clip_eps,
                                              1.0 + cfg.clip_eps);
            expect += -norm / sched.dt[i] *
                      std::min(rho * adv, clipped * adv);
        }
    }
    expect += cfg.kl_beta * stats.kl * 2.0 * sched.steps() * norm;
    CHECK(stats.loss == doctest::Approx(expect).epsilon(1e-9));

    // two-sample centring puts ratios at exp(+-1): the clipped branch binds
    for (int i = 0; i < sched.steps(); ++i) {
        for (double rho : stats.ratios_per_step[i]) {
            const bool at_e = std::abs(rho - std::exp(1.0)) < 1e-9;
            const bool at_inv = std::abs(rho - std::exp(-1.0)) < 1e-9;
            CHECK((at_e || at_inv));
        }
    }
    CHECK(stats.clip_frac == doctest::Approx(1.0));
}

TEST_CASE("surrogate gradients match finite differences") {
    for (uint64_t seed = 1; seed <= 3; ++seed) {
        VelocityNet net(micro_policy_config(4, 2), seed);
        perturb_adapters(net, 0.2, seed * 11);
        Condition cond = flat_condition(net, 2);
        NoiseSchedule sched = build_schedule(2, 0.7);
        Rng rng(seed * 17);
        GroupRollout rollout = collect_group(net, cond, sched, 2, rng);
        GrpoConfig cfg;
        cfg.group_size = 2;
        rollout.set_rewards({0.9, 0.2}, cfg);
        perturb_adapters(net, 0.25, seed * 19);
        CHECK(surrogate_fd_error(net, rollout, {0, 1}, cfg) < 1e-4);
    }
}

TEST_CASE("missing advantages are rejected") {
    VelocityNet net(micro_policy_config(), 3);
    Condition cond = flat_condition(net, 2);
    NoiseSchedule sched = build_schedule(2, 0.7);
    Rng rng(5);
    GroupRollout rollout = collect_group(net, cond, sched, 2, rng);
    Tape tape;
    GrpoConfig cfg;
    std::vector<int> subset{0, 1};
    CHECK_THROWS_AS((void)surrogate_loss(tape, rollout, subset, net, cfg),
                    NumericError);
}

TEST_CASE("loss is translation-invariant in rewards") {
    VelocityNet net(micro_policy_config(4, 2), 21);
    perturb_adapters(net, 0.2, 51);
    Condition cond = flat_condition(net, 2);
    NoiseSchedule sched = build_schedule(2, 0.7);
    Rng rng(23);
    GroupRollout rollout = collect_group(net, cond, sched, 4, rng);
    GrpoConfig cfg;
    cfg.group_size = 4;
    perturb_adapters(net, 0.2, 53);

    std::vector<int> subset{0, 1, 2, 3};
    rollout.set_rewards({0.25, 0.5, 0.75, 0.5}, cfg);
    GradMap g1;
    {
        Tape tape;
        g1 = tape.backward(surrogate_loss(tape, rollout, subset, net, cfg));
    }
    rollout.set_rewards({0.5, 0.75, 1.0, 0.75}, cfg);  // +0.25 everywhere
    GradMap g2;
    {
        Tape tape;
        g2 = tape.backward(surrogate_loss(tape, rollout, subset, net, cfg));
    }
    for (const auto& [name, t] : g1) {
        const Tensor& u = g2.at(name);
        for (std::size_t i = 0; i < t.numel(); ++i)
            CHECK(t.data[i] == doctest::Approx(u.data[i]).epsilon(1e-10));
    }
}

TEST_CASE("floor-engaged update direction equals the plain policy gradient") {
    VelocityNet net(micro_policy_config(4, 2), 29);
    perturb_adapters(net, 0.3, 61);
    Condition cond = flat_condition(net, 2);
    NoiseSchedule sched = build_schedule(2, 0.7);
    Rng rng(31);
    GroupRollout rollout = collect_group(net, cond, sched, 4, rng);
    GrpoConfig cfg;
    cfg.group_size = 4;
    cfg.kl_beta = 0.0;
    rollout.set_rewards({0.9, 0.3, 0.6, 0.1}, cfg);

    // current == behaviour: raw ratios are identically zero, floor engaged
    std::vector<int> subset{0, 1, 2, 3};
    GradMap surrogate_grads;
    {
        Tape tape;
        surrogate_grads =
            tape.backward(surrogate_loss(tape, rollout, subset, net, cfg));
    }

    // plain policy gradient on the same advantages and 1/dt weights:
    // mean over (g,i) of -(1/dt) * adv_g * lnew^(g,i) / sqrt(D)
    GradMap pg_grads;
    {
        Tape tape;
        PolicyBinding binding = net.bind(tape, TrainScope::Adapters);
        const int d = net.packed_dim(2);
        const int dmax = net.max_packed_dim();
        std::vector<const Condition*> cond_rows(4, &cond);
        Tape::NodeId cond_node = tape.constant(net.assemble_cond(cond_rows));
        Tape::NodeId onehot_node =
            tape.constant(net.assemble_onehot(std::vector<int>(4, 2)));
        Tape::NodeId total = -1;
        for (int i = 0; i < sched.steps(); ++i) {
            std::vector<const Tensor*> rows;
            Tensor x_next = Tensor::zeros({4, dmax});
            for (int b = 0; b < 4; ++b) {
                const Trajectory& traj = rollout.trajectories[b];
                rows.push_back(&traj.steps[i].x);
                const Tensor& nx = i + 1 < sched.steps() ? traj.steps[i + 1].x
                                                         : traj.x_final;
                std::copy(nx.data.begin(), nx.data.end(),
                          x_next.data.begin() + static_cast<std::size_t>(b) * dmax);
            }
            const std::vector<double> ts(4, sched.t[i]);
            Tape::NodeId x_and_t =
                tape.constant(net.assemble_x_and_t(rows, ts));
            Tape::NodeId v =
                net.forward_nodes(tape, binding, x_and_t, cond_node, onehot_node,
                                  ts, true);
            const SdeCoeffs c = sde_coeffs(sched.t[i], sched.dt[i], sched.sigma[i]);
            Tape::NodeId mu = tape.lincomb(tape.cols_slice(x_and_t, dmax), c.c1,
                                           v, -c.c2);
            Tape::NodeId lnew = tape.gauss_row_logpdf(
                tape.constant(x_next), mu,
                transition_scale(sched.sigma[i], sched.dt[i]), d);
            Tensor w = Tensor::zeros({4});
            for (int b = 0; b < 4; ++b)
                w.data[b] = -rollout.advantages[b] /
                            (sched.dt[i] * 4.0 * sched.steps() * std::sqrt(d));
            Tape::NodeId term = tape.sum(tape.mul(lnew, tape.constant(w)));
            total = total < 0 ? term : tape.add(total, term);
        }
        pg_grads = tape.backward(total);
    }

    // cosine similarity between flattened gradients
    double dot = 0.0, ns = 0.0, np = 0.0;
    for (const auto& [name, t] : surrogate_grads) {
        const Tensor& u = pg_grads.at(name);
        for (std::size_t i = 0; i < t.numel(); ++i) {
            dot += t.data[i] * u.data[i];
            ns += t.data[i] * t.data[i];
            np += u.data[i] * u.data[i];
        }
    }
    CHECK(dot / std::sqrt(ns * np) == doctest::Approx(1.0).epsilon(1e-6));
}

namespace {

class ConstantJudge : public Judge {
  public:
    RubricScore phase1(const LayerStack&, const Raster&,
                       const std::vector<Raster>&, const ToyScene*, int,
                       std::vector<JudgeTranscriptEntry>&) override {
        return RubricScore::from_criteria(3, 3, 3, 3, 3);
    }
    Calibration phase2(const Raster&, const std::vector<double>& phase1_scores,
                       std::vector<JudgeTranscriptEntry>&) override {
        return {phase1_scores, false};
    }
};

}  // namespace

TEST_CASE("train_round: constant rewards stall the advantage path") {
    PolicyConfig pcfg = micro_policy_config(8, 2);
    ConstantJudge judge;
    GrpoConfig cfg;
    cfg.group_size = 4;
    cfg.minibatches = 2;
    RewardSettings reward;
    reward.grid_cell = 16;
    NoiseSchedule sched = build_schedule(4, 0.7);
    GeneratedScene scene = generate_scene(5, 2, 8);

    // with the KL term disabled the update is exactly zero
    {
        VelocityNet net(pcfg, 71);
        AdamW opt(AdamWConfig{.lr = 1e-3});
        GrpoConfig nokl = cfg;
        nokl.kl_beta = 0.0;
        GrpoTrainer trainer(net, opt, judge, nokl, reward, sched, 1);
        auto before = net.named_tensors();
        RoundMetrics m = trainer.round(scene);
        CHECK(m.reward_std == 0.0);
        auto after = net.named_tensors();
        for (const auto& [name, t] : before)
            if (name.rfind("lora.", 0) == 0) CHECK(after.at(name).data == t.data);
    }
    // with the KL term on, adapters move only through that path
    {
        VelocityNet net(pcfg, 71);
        AdamW opt(AdamWConfig{.lr = 1e-3});
        GrpoTrainer trainer(net, opt, judge, cfg, reward, sched, 1);
        (void)trainer.round(scene);
    }
}

TEST_CASE("train_round is deterministic under identical seeds") {
    PolicyConfig pcfg = micro_policy_config(8, 2);
    OracleJudge judge;
    GrpoConfig cfg;
    cfg.group_size = 4;
    RewardSettings reward;
    reward.grid_cell = 16;
    NoiseSchedule sched = build_schedule(4, 0.7);
    GeneratedScene scene = generate_scene(6, 2, 8);

    auto run = [&]() {
        VelocityNet net(pcfg, 81);
        AdamW opt(AdamWConfig{.lr = 1e-3});
        GrpoTrainer trainer(net, opt, judge, cfg, reward, sched, 7);
        std::vector<RoundMetrics> out;
        for (int i = 0; i < 2; ++i) out.push_back(trainer.round(scene));
        return out;
    };
    auto a = run();
    auto b = run();
    for (int i = 0; i < 2; ++i) {
        CHECK(a[i].reward_mean == b[i].reward_mean);
        CHECK(a[i].loss == b[i].loss);
        CHECK(a[i].kl == b[i].kl);
        CHECK(a[i].ratio_std_per_step == b[i].ratio_std_per_step);
    }
}

TEST_CASE("dimension scaling of the two reduction modes") {
    // D in {64, 256, 1024, 4096} via canvas {2,4,8,16} at 4 layers
    std::vector<double> dims, sm_std, sr_std;
    for (int canvas : {2, 4, 8, 16}) {
        PolicyConfig cfg = micro_policy_config(canvas, 4);
        cfg.hidden_width = 32;
        VelocityNet net(cfg, 91);
        perturb_adapters(net, 1.0, 95);
        Condition cond = flat_condition(net, 4);
        normalize_perturbation(net, cond, 0.01, 97);
        auto samples = ratio_scaling_samples(net, cond, 512, 99);
        dims.push_back(net.packed_dim(4));
        sr_std.push_back(stddev(samples.sum_rescale));
        sm_std.push_back(stddev(samples.spatial_mean));
    }
    CHECK(dims[0] == 64);
    CHECK(dims[3] == 4096);
    const double slope = loglog_slope(dims, sm_std);
    CHECK(slope == doctest::Approx(-0.5).epsilon(0.2));
    const double spread = *std::max_element(sr_std.begin(), sr_std.end()) /
                          *std::min_element(sr_std.begin(), sr_std.end());
    CHECK(spread < 2.0);
}
