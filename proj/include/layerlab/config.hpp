// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "layerlab/grpo.hpp"
#include "layerlab/policy.hpp"

namespace layerlab {

// Every tunable of the lab. Loaded from a flat key = value file (kebab-case
// keys, '#' comments) and mirrored one-to-one by CLI flags. Unknown keys are
// rejected; validation enforces the preconditions of the modules each value
// feeds.
struct RunConfig {
    // scene family / policy
    int canvas = 32;
    int min_layers = 2;
    int max_layers = 5;
    int hidden_width = 256;
    int hidden_layers = 3;
    int cond_embed = 64;
    int lora_rank = 4;
    double lora_alpha = 4.0;

    // flow / schedules
    double noise_a = 0.7;
    int t_train = 8;
    int t_eval = 50;
    double t_clamp_lo = 1e-3;
    double t_clamp_hi = 0.96;

    // group-relative optimisation
    int group_size = 16;
    double clip_eps = 0.2;
    double kl_beta = 1e-3;
    double adv_nu = 1e-4;
    double adv_clip = 5.0;
    int ppo_epochs = 1;
    int minibatches = 2;
    std::string ratio_mode = "sum-rescale";  // or "spatial-mean"
    double scale_floor = 1e-6;
    double post_scale = 1.0;

    // reward pipeline
    bool calibration = true;
    std::string judge = "oracle";  // oracle | oracle-compressed | remote
    int grid_cell = 64;
    int grid_margin = 4;
    double blank_thresh = 0.01;
    double glaze_band = 0.6;
    std::string judge_url;
    std::string judge_model = "judge-1";
    double judge_timeout = 30.0;
    int judge_retries = 3;
    std::string prompt_system_path;  // empty = embedded defaults
    std::string prompt_phase1_path;
    std::string prompt_phase2_path;
    std::string condition_prompt = "basic";  // basic | detailed

    // optimisation
    int rounds = 200;
    double adapter_lr = 1e-4;
    double weight_decay = 0.0;
    int pretrain_steps = 1500;
    int pretrain_batch = 8;
    double pretrain_lr = 1e-3;

    // run plumbing
    uint64_t seed = 1;
    int eval_scenes = 64;
    uint64_t eval_seed_base = 900000;
    int eval_interval = 0;  // 0 = initial and final evals only
    int checkpoint_interval = 50;
    std::string out_dir = "runs/default";
    std::string base_checkpoint;  // empty = <out-dir>/base.ckpt

    void validate() const;

    GrpoConfig grpo() const;
    PolicyConfig policy() const;
    RewardSettings reward() const;
};

struct ConfigKey {
    enum class Type { Int, Double, Bool, String, U64 };
    std::string name;  // kebab-case
    Type type;
    std::size_t offset;
    const char* help;
};

const std::vector<ConfigKey>& config_keys();

// Parse "value" into the field named "key" (kebab-case). Unknown keys and
// unparsable values raise ConfigError.
void apply_config_value(RunConfig& cfg, const std::string& key,
                        const std::string& value);

RunConfig parse_config_text(const std::string& text,
                            RunConfig base = RunConfig{});
RunConfig load_config_file(const std::filesystem::path& path,
                           RunConfig base = RunConfig{});

// Emit the full configuration as parseable key = value lines (the run
// snapshot format).
std::string render_config(const RunConfig& cfg);

// Exclusive ownership of a run directory via an O_EXCL lock file.
class RunLock {
  public:
    explicit RunLock(const std::filesystem::path& dir);
    ~RunLock();
    RunLock(const RunLock&) = delete;
    RunLock& operator=(const RunLock&) = delete;

  private:
    std::filesystem::path path_;
    int fd_ = -1;
};

}  // namespace layerlab
