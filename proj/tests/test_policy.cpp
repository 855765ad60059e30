// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "layerlab/common.hpp"
#include "layerlab/policy.hpp"
#include "layerlab/rng.hpp"

using namespace layerlab;

namespace {

PolicyConfig tiny_config() {
    PolicyConfig cfg;
    cfg.canvas = 8;
    cfg.hidden_width = 32;
    cfg.hidden_layers = 2;
    cfg.cond_embed = 8;
    cfg.lora_rank = 2;
    cfg.lora_alpha = 2.0;
    return cfg;
}

Condition scene_condition(const GeneratedScene& g) {
    return Condition{g.composite, g.scene.layer_count, {}};
}

}  // namespace

TEST_CASE("adapters at initialisation are exactly inert") {
    VelocityNet net(tiny_config(), 11);
    GeneratedScene g = generate_scene(3, 3, 8);
    Condition cond = scene_condition(g);
    Rng rng(5);
    Tensor x = rng.normal_tensor({net.packed_dim(3)});
    Tensor on = net.forward(x, 0.4, cond, true);
    Tensor off = net.forward(x, 0.4, cond, false);
    CHECK(on.data == off.data);  // B = 0 at init, bitwise equal

    // perturbing only A with B still zero changes nothing
    ParamMap adapters = net.adapter_params();
    for (auto& [name, t] : adapters)
        if (name.ends_with(".a"))
            for (double& v : t->data) v += 0.37;
    Tensor on2 = net.forward(x, 0.4, cond, true);
    CHECK(on2.data == off.data);
}

TEST_CASE("adapter-off output is invariant under any adapter update") {
    VelocityNet net(tiny_config(), 13);
    GeneratedScene g = generate_scene(5, 2, 8);
    Condition cond = scene_condition(g);
    Rng rng(6);
    Tensor x = rng.normal_tensor({net.packed_dim(2)});
    Tensor ref = net.forward(x, 0.7, cond, false);
    ParamMap adapters = net.adapter_params();
    for (auto& [name, t] : adapters)
        for (double& v : t->data) v += rng.normal();
    CHECK(net.forward(x, 0.7, cond, false).data == ref.data);
    CHECK(net.forward(x, 0.7, cond, true).data != ref.data);
}

TEST_CASE("forward is deterministic") {
    VelocityNet net(tiny_config(), 17);
    GeneratedScene g = generate_scene(8, 4, 8);
    Condition cond = scene_condition(g);
    Rng rng(7);
    Tensor x = rng.normal_tensor({net.packed_dim(4)});
    CHECK(net.forward(x, 0.25, cond, true).data ==
          net.forward(x, 0.25, cond, true).data);
}

TEST_CASE("layer-count mismatch between input and condition is rejected") {
    VelocityNet net(tiny_config(), 19);
    GeneratedScene g = generate_scene(9, 3, 8);
    Condition cond = scene_condition(g);
    Rng rng(8);
    Tensor wrong = rng.normal_tensor({net.packed_dim(2)});
    CHECK_THROWS_AS((void)net.forward(wrong, 0.5, cond, true), NumericError);
}

TEST_CASE("adapter contribution is (alpha/r) * B * A * h on a width-1 net") {
    PolicyConfig cfg = tiny_config();
    cfg.hidden_width = 1;
    cfg.hidden_layers = 1;
    cfg.lora_rank = 1;
    cfg.lora_alpha = 2.0;
    VelocityNet net(cfg, 23);
    GeneratedScene g = generate_scene(2, 2, 8);
    Condition cond = scene_condition(g);
    Rng rng(9);
    Tensor x = rng.normal_tensor({net.packed_dim(2)});

    // put a nonzero adapter only on the output head
    ParamMap adapters = net.adapter_params();
    adapters.at("lora.wout.a")->data[0] = 0.7;
    Tensor& lb = *adapters.at("lora.wout.b");
    for (std::size_t i = 0; i < lb.numel(); ++i)
        lb.data[i] = 0.01 * static_cast<double>(i % 17) - 0.05;

    const double t = 0.3;
    Tensor off = net.forward(x, t, cond, false);
    Tensor on = net.forward(x, t, cond, true);

    // recover the single hidden activation from the base denoised prediction
    std::map<std::string, Tensor> named = net.named_tensors();
    const Tensor& wout = named.at("base.wout");
    const Tensor& bout = named.at("base.wout.b");
    const double x0_hat0 = x.data[0] - off.data[0] * t;
    const double h = (x0_hat0 - bout.data[0]) / wout.data[0];
    const double scale = cfg.lora_alpha / cfg.lora_rank;
    for (std::size_t d = 0; d < off.numel(); ++d) {
        // the adapter shifts x0_hat by scale*lb*la*h, hence v by its negative/t
        const double expect = -scale * lb.data[d] * 0.7 * h / t;
        CHECK(on.data[d] - off.data[d] == doctest::Approx(expect).epsilon(1e-9));
    }
}

TEST_CASE("GRPO scope: gradients reach adapters only") {
    VelocityNet net(tiny_config(), 29);
    GeneratedScene g = generate_scene(4, 3, 8);
    Condition cond = scene_condition(g);
    Rng rng(10);
    Tensor x = rng.normal_tensor({net.packed_dim(3)});
    Tape tape;
    PolicyBinding binding = net.bind(tape, TrainScope::Adapters);
    std::vector<const Tensor*> rows{&x};
    Tape::NodeId out = net.forward_nodes(
        tape, binding, tape.constant(net.assemble_x_and_t(rows, {0.5})),
        tape.constant(net.assemble_cond({&cond})),
        tape.constant(net.assemble_onehot({3})), {0.5}, true);
    GradMap grads = tape.backward(tape.mean(out));
    bool any_adapter_nonzero = false;
    for (const auto& [name, gt] : grads) {
        CHECK(name.rfind("lora.", 0) == 0);  // base weights are frozen constants
        for (double v : gt.data)
            if (v != 0.0) any_adapter_nonzero = true;
    }
    CHECK(any_adapter_nonzero);
}

TEST_CASE("pretrain with zero steps leaves weights at initialisation") {
    VelocityNet net(tiny_config(), 31);
    auto before = net.named_tensors();
    Rng seeds(1);
    SceneSource src = [&]() {
        return generate_scene(seeds.raw() % 1000, seeds.uniform_int(2, 5), 8);
    };
    AdamW opt(AdamWConfig{});
    PretrainConfig pcfg;
    pcfg.steps = 0;
    PretrainResult res = pretrain(net, src, opt, pcfg);
    CHECK(res.loss_curve.empty());
    auto after = net.named_tensors();
    for (const auto& [name, t] : before) CHECK(after.at(name).data == t.data);
}

TEST_CASE("fm loss decreases over the first 100 steps (median of 5 seeds)") {
    std::vector<double> early, late;
    for (uint64_t seed = 1; seed <= 5; ++seed) {
        VelocityNet net(tiny_config(), seed);
        Rng scene_rng(900 + seed);
        SceneSource src = [&]() {
            return generate_scene(scene_rng.raw() % 4096,
                                  scene_rng.uniform_int(2, 5), 8);
        };
        AdamWConfig ocfg;
        ocfg.lr = 2e-3;
        AdamW opt(ocfg);
        PretrainConfig pcfg;
        pcfg.steps = 100;
        pcfg.batch = 4;
        pcfg.seed = seed;
        PretrainResult res = pretrain(net, src, opt, pcfg);
        REQUIRE(res.loss_curve.size() == 100);
        double e = 0.0, l = 0.0;
        for (int i = 0; i < 10; ++i) {
            e += res.loss_curve[i];
            l += res.loss_curve[90 + i];
        }
        early.push_back(e / 10.0);
        late.push_back(l / 10.0);
    }
    std::sort(early.begin(), early.end());
    std::sort(late.begin(), late.end());
    CHECK(late[2] < early[2]);
}

TEST_CASE("overfit on one scene reproduces its stack under ODE sampling") {
    PolicyConfig cfg = tiny_config();
    cfg.hidden_width = 64;
    VelocityNet net(cfg, 37);
    GeneratedScene fixed = generate_scene(123, 2, 8);
    SceneSource src = [&]() { return fixed; };
    AdamWConfig ocfg;
    ocfg.lr = 2e-3;
    AdamW opt(ocfg);
    PretrainConfig pcfg;
    pcfg.steps = 1200;
    pcfg.batch = 4;
    pcfg.seed = 99;
    pretrain(net, src, opt, pcfg);

    NoiseSchedule sched = build_schedule(50, 0.7);
    Condition cond = scene_condition(fixed);
    Rng rng(55);
    Tensor z = rng.normal_tensor({net.packed_dim(2)});
    Tensor x0 = sample_ode(net, cond, sched, z, false);
    LayerStack decoded = unpack(x0, 2, 8, 8);
    double l1 = 0.0;
    for (std::size_t i = 0; i < decoded.data.size(); ++i)
        l1 += std::abs(decoded.data[i] - fixed.truth.data[i]);
    l1 /= static_cast<double>(decoded.data.size());
    CHECK(l1 < 0.1);
}

TEST_CASE("checkpoint round trip preserves the net and prefixes split cleanly") {
    VelocityNet net(tiny_config(), 41);
    Rng rng(12);
    ParamMap adapters = net.adapter_params();
    for (auto& [name, t] : adapters)
        for (double& v : t->data) v = 0.01 * rng.normal();
    Checkpoint ck;
    net.save(ck);
    ck.counters["step"] = 5;

    // adapters ship separately from base weights
    auto lora_only = ck.take_prefix("lora.");
    auto base_only = ck.take_prefix("base.");
    CHECK(!lora_only.empty());
    CHECK(!base_only.empty());
    CHECK(lora_only.size() + base_only.size() == ck.tensors.size());

    VelocityNet other(tiny_config(), 999);
    other.load(ck);
    auto a = net.named_tensors();
    auto b = other.named_tensors();
    REQUIRE(a.size() == b.size());
    for (const auto& [name, t] : a) {
        CHECK(b.at(name).shape == t.shape);
        CHECK(b.at(name).data == t.data);
    }
}
