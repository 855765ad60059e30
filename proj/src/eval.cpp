// SPDX-License-Identifier: Apache-2.0
#include "layerlab/eval.hpp"

#include "layerlab/common.hpp"
#include "layerlab/rng.hpp"

namespace layerlab {

HeldOutEval evaluate_policy(const VelocityNet& net, bool adapters,
                            const RunConfig& cfg, int n_scenes) {
    if (n_scenes < 1) throw ConfigError("evaluation needs at least one scene");
    HeldOutEval out;
    NoiseSchedule schedule =
        build_schedule(cfg.t_eval, cfg.noise_a, cfg.t_clamp_lo, cfg.t_clamp_hi);

    std::vector<Condition> conds;
    std::vector<Tensor> inits;
    for (int k = 0; k < n_scenes; ++k) {
        const uint64_t seed = cfg.eval_seed_base + static_cast<uint64_t>(k);
        Rng scene_rng(seed);
        const int layers = scene_rng.uniform_int(cfg.min_layers, cfg.max_layers);
        out.scenes.push_back(generate_scene(seed, layers, cfg.canvas));
        conds.push_back(Condition{out.scenes.back().composite, layers,
                                  cfg.condition_prompt});
        Rng init_rng(seed ^ 0x5eedf00dULL);
        inits.push_back(init_rng.normal_tensor({net.packed_dim(layers)}));
    }

    const std::vector<Tensor> samples =
        sample_ode_batch(net, conds, schedule, inits, adapters);

    for (int k = 0; k < n_scenes; ++k) {
        const GeneratedScene& scene = out.scenes[k];
        LayerStack stack = unpack(samples[k], scene.scene.layer_count,
                                  cfg.canvas, cfg.canvas);
        EvalRecord rec;
        rec.seed = scene.scene.seed;
        rec.layer_count = scene.scene.layer_count;
        rec.bad_layers = bad_layer_count(stack, cfg.blank_thresh, cfg.glaze_band);
        rec.distrib = distribution_evenness(stack);
        Raster layer0(cfg.canvas, cfg.canvas, 3);
        for (int y = 0; y < cfg.canvas; ++y)
            for (int x = 0; x < cfg.canvas; ++x)
                for (int c = 0; c < 3; ++c) layer0.at(y, x, c) = stack.at(0, c, y, x);
        const Raster truth_bg = background_raster(scene.scene);
        rec.layer0 = layer0_quality(layer0, truth_bg);
        rec.ssim = ssim(layer0, truth_bg);
        BestMatchResult bm = best_match_l1(stack, scene.truth);
        rec.best_match_mean = bm.mean;
        rec.best_match_slots = std::move(bm.per_slot);
        out.records.push_back(std::move(rec));
        out.stacks.push_back(std::move(stack));
    }
    out.summary = summarize(out.records);
    return out;
}

}  // namespace layerlab
