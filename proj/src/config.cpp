// SPDX-License-Identifier: Apache-2.0
#include "layerlab/config.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <cstddef>
#include <fstream>
#include <sstream>

#include "layerlab/common.hpp"
#include "layerlab/scene.hpp"

namespace layerlab {

namespace {

#define LLAB_KEY(name, field, type, help) \
    ConfigKey { name, ConfigKey::Type::type, offsetof(RunConfig, field), help }

const std::vector<ConfigKey> kKeys = {
    LLAB_KEY("canvas", canvas, Int, "square canvas size in pixels"),
    LLAB_KEY("min-layers", min_layers, Int, "minimum layer count"),
    LLAB_KEY("max-layers", max_layers, Int, "maximum layer count"),
    LLAB_KEY("hidden-width", hidden_width, Int, "trunk width"),
    LLAB_KEY("hidden-layers", hidden_layers, Int, "trunk depth"),
    LLAB_KEY("cond-embed", cond_embed, Int, "condition embedding size"),
    LLAB_KEY("lora-rank", lora_rank, Int, "adapter rank"),
    LLAB_KEY("lora-alpha", lora_alpha, Double, "adapter scale numerator"),
    LLAB_KEY("noise-a", noise_a, Double, "diffusion coefficient level"),
    LLAB_KEY("t-train", t_train, Int, "denoising steps during training"),
    LLAB_KEY("t-eval", t_eval, Int, "denoising steps at evaluation"),
    LLAB_KEY("t-clamp-lo", t_clamp_lo, Double, "lower timestep clamp"),
    LLAB_KEY("t-clamp-hi", t_clamp_hi, Double, "upper timestep clamp"),
    LLAB_KEY("group-size", group_size, Int, "rollouts per condition"),
    LLAB_KEY("clip-eps", clip_eps, Double, "ratio clip width"),
    LLAB_KEY("kl-beta", kl_beta, Double, "reference penalty weight"),
    LLAB_KEY("adv-nu", adv_nu, Double, "advantage denominator stabiliser"),
    LLAB_KEY("adv-clip", adv_clip, Double, "advantage clip bound"),
    LLAB_KEY("ppo-epochs", ppo_epochs, Int, "update epochs per round"),
    LLAB_KEY("minibatches", minibatches, Int, "minibatches per epoch"),
    LLAB_KEY("ratio-mode", ratio_mode, String,
             "log-ratio reduction: sum-rescale | spatial-mean"),
    LLAB_KEY("scale-floor", scale_floor, Double, "per-step centring floor"),
    LLAB_KEY("post-scale", post_scale, Double, "centred log-ratio multiplier"),
    LLAB_KEY("calibration", calibration, Bool, "enable grid calibration"),
    LLAB_KEY("judge", judge, String, "oracle | oracle-compressed | remote"),
    LLAB_KEY("grid-cell", grid_cell, Int, "grid cell size in pixels"),
    LLAB_KEY("grid-margin", grid_margin, Int, "grid margin in pixels"),
    LLAB_KEY("blank-thresh", blank_thresh, Double, "blank-layer alpha mass"),
    LLAB_KEY("glaze-band", glaze_band, Double, "glaze mid-alpha fraction"),
    LLAB_KEY("judge-url", judge_url, String, "remote judge endpoint"),
    LLAB_KEY("judge-model", judge_model, String, "remote judge model id"),
    LLAB_KEY("judge-timeout", judge_timeout, Double, "remote judge timeout (s)"),
    LLAB_KEY("judge-retries", judge_retries, Int, "remote judge retry limit"),
    LLAB_KEY("prompt-system-path", prompt_system_path, String,
             "system prompt template file"),
    LLAB_KEY("prompt-phase1-path", prompt_phase1_path, String,
             "phase-1 prompt template file"),
    LLAB_KEY("prompt-phase2-path", prompt_phase2_path, String,
             "phase-2 prompt template file"),
    LLAB_KEY("condition-prompt", condition_prompt, String,
             "condition prompt template id: basic | detailed"),
    LLAB_KEY("rounds", rounds, Int, "training rounds"),
    LLAB_KEY("adapter-lr", adapter_lr, Double, "adapter learning rate"),
    LLAB_KEY("weight-decay", weight_decay, Double, "decoupled weight decay"),
    LLAB_KEY("pretrain-steps", pretrain_steps, Int, "pretraining steps"),
    LLAB_KEY("pretrain-batch", pretrain_batch, Int, "pretraining batch size"),
    LLAB_KEY("pretrain-lr", pretrain_lr, Double, "pretraining learning rate"),
    LLAB_KEY("seed", seed, U64, "run seed"),
    LLAB_KEY("eval-scenes", eval_scenes, Int, "held-out scene count"),
    LLAB_KEY("eval-seed-base", eval_seed_base, U64,
             "first held-out seed (disjoint from training)"),
    LLAB_KEY("eval-interval", eval_interval, Int,
             "rounds between evals (0 = first and last only)"),
    LLAB_KEY("checkpoint-interval", checkpoint_interval, Int,
             "rounds between checkpoints"),
    LLAB_KEY("out-dir", out_dir, String, "run output directory"),
    LLAB_KEY("base-checkpoint", base_checkpoint, String,
             "pretrained base checkpoint (default <out-dir>/base.ckpt)"),
};

#undef LLAB_KEY

template <typename T>
T* field_ptr(RunConfig& cfg, std::size_t offset) {
    return reinterpret_cast<T*>(reinterpret_cast<char*>(&cfg) + offset);
}

std::string trim(const std::string& s) {
    const auto from = s.find_first_not_of(" \t\r\n");
    if (from == std::string::npos) return "";
    const auto to = s.find_last_not_of(" \t\r\n");
    return s.substr(from, to - from + 1);
}

}  // namespace

const std::vector<ConfigKey>& config_keys() { return kKeys; }

void apply_config_value(RunConfig& cfg, const std::string& key,
                        const std::string& value) {
    auto it = std::find_if(kKeys.begin(), kKeys.end(),
                           [&](const ConfigKey& k) { return k.name == key; });
    if (it == kKeys.end()) throw ConfigError("unknown config key: " + key);
    const std::string v = trim(value);
    try {
        switch (it->type) {
            case ConfigKey::Type::Int: {
                std::size_t used = 0;
                const int parsed = std::stoi(v, &used);
                if (used != v.size()) throw std::invalid_argument(v);
                *field_ptr<int>(cfg, it->offset) = parsed;
                break;
            }
            case ConfigKey::Type::Double: {
                std::size_t used = 0;
                const double parsed = std::stod(v, &used);
                if (used != v.size()) throw std::invalid_argument(v);
                *field_ptr<double>(cfg, it->offset) = parsed;
                break;
            }
            case ConfigKey::Type::U64: {
                std::size_t used = 0;
                const uint64_t parsed = std::stoull(v, &used);
                if (used != v.size()) throw std::invalid_argument(v);
                *field_ptr<uint64_t>(cfg, it->offset) = parsed;
                break;
            }
            case ConfigKey::Type::Bool: {
                bool parsed;
                if (v == "true" || v == "on" || v == "1") parsed = true;
                else if (v == "false" || v == "off" || v == "0") parsed = false;
                else throw std::invalid_argument(v);
                *field_ptr<bool>(cfg, it->offset) = parsed;
                break;
            }
            case ConfigKey::Type::String:
                *field_ptr<std::string>(cfg, it->offset) = v;
                break;
        }
    } catch (const std::exception&) {
        throw ConfigError(strfmt("bad value '%s' for config key %s", v.c_str(),
                                 key.c_str()));
    }
}

RunConfig parse_config_text(const std::string& text, RunConfig base) {
    std::istringstream is(text);
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError(strfmt("config line %d is not key = value", lineno));
        apply_config_value(base, trim(line.substr(0, eq)), line.substr(eq + 1));
    }
    return base;
}

RunConfig load_config_file(const std::filesystem::path& path, RunConfig base) {
    std::ifstream f(path);
    if (!f) throw ConfigError("cannot read config file " + path.string());
    std::ostringstream os;
    os << f.rdbuf();
    return parse_config_text(os.str(), std::move(base));
}

std::string render_config(const RunConfig& cfg) {
    std::ostringstream os;
    RunConfig& mut = const_cast<RunConfig&>(cfg);
    for (const ConfigKey& k : kKeys) {
        os << k.name << " = ";
        switch (k.type) {
            case ConfigKey::Type::Int:
                os << *field_ptr<int>(mut, k.offset);
                break;
            case ConfigKey::Type::Double: {
                char buf[32];
                std::snprintf(buf, sizeof(buf), "%.17g",
                              *field_ptr<double>(mut, k.offset));
                os << buf;
                break;
            }
            case ConfigKey::Type::U64:
                os << *field_ptr<uint64_t>(mut, k.offset);
                break;
            case ConfigKey::Type::Bool:
                os << (*field_ptr<bool>(mut, k.offset) ? "true" : "false");
                break;
            case ConfigKey::Type::String:
                os << *field_ptr<std::string>(mut, k.offset);
                break;
        }
        os << "\n";
    }
    return os.str();
}

void RunConfig::validate() const {
    if (canvas < 8) throw ConfigError("canvas must be at least 8");
    if (min_layers < kMinLayers || max_layers > kMaxLayers ||
        min_layers > max_layers)
        throw ConfigError(strfmt("layer range must sit inside [%d,%d]",
                                 kMinLayers, kMaxLayers));
    if (hidden_width < 1 || hidden_layers < 1 || cond_embed < 1)
        throw ConfigError("trunk sizes must be positive");
    if (lora_rank < 1 || lora_alpha <= 0.0)
        throw ConfigError("adapter rank and scale must be positive");
    if (noise_a <= 0.0) throw ConfigError("noise level must be positive");
    if (t_train < 1 || t_eval < 1)
        throw ConfigError("schedules need at least one step");
    if (!(0.0 < t_clamp_lo && t_clamp_lo < t_clamp_hi && t_clamp_hi < 1.0))
        throw ConfigError("timestep clamps must satisfy 0 < lo < hi < 1");
    grpo().validate();
    if (minibatches > group_size)
        throw ConfigError("more minibatches than group members");
    if (ratio_mode != "sum-rescale" && ratio_mode != "spatial-mean")
        throw ConfigError("ratio-mode must be sum-rescale or spatial-mean");
    if (judge != "oracle" && judge != "oracle-compressed" && judge != "remote")
        throw ConfigError("judge must be oracle, oracle-compressed or remote");
    if (judge == "remote" && judge_url.empty())
        throw ConfigError("remote judge requires judge-url");
    if (grid_cell < 16) throw ConfigError("grid cells below 16 px are unrenderable");
    if (grid_margin < 0) throw ConfigError("grid margin must be >= 0");
    if (!(blank_thresh > 0.0 && blank_thresh < 1.0))
        throw ConfigError("blank threshold must lie in (0,1)");
    if (!(glaze_band > 0.0 && glaze_band < 1.0))
        throw ConfigError("glaze band must lie in (0,1)");
    if (judge_retries < 0) throw ConfigError("judge retries must be >= 0");
    if (judge_timeout <= 0.0) throw ConfigError("judge timeout must be positive");
    if (condition_prompt != "basic" && condition_prompt != "detailed")
        throw ConfigError("condition-prompt must be basic or detailed");
    if (rounds < 0) throw ConfigError("rounds must be >= 0");
    if (adapter_lr <= 0.0 || pretrain_lr <= 0.0)
        throw ConfigError("learning rates must be positive");
    if (weight_decay < 0.0) throw ConfigError("weight decay must be >= 0");
    if (pretrain_steps < 0) throw ConfigError("pretrain steps must be >= 0");
    if (pretrain_batch < 1) throw ConfigError("pretrain batch must be >= 1");
    if (eval_scenes < 1) throw ConfigError("need at least one held-out scene");
    if (eval_interval < 0) throw ConfigError("eval interval must be >= 0");
    if (checkpoint_interval < 1)
        throw ConfigError("checkpoint interval must be >= 1");
    if (out_dir.empty()) throw ConfigError("out-dir must be set");
}

GrpoConfig RunConfig::grpo() const {
    GrpoConfig g;
    g.group_size = group_size;
    g.clip_eps = clip_eps;
    g.kl_beta = kl_beta;
    g.adv_nu = adv_nu;
    g.adv_clip = adv_clip;
    g.ppo_epochs = ppo_epochs;
    g.minibatches = minibatches;
    g.ratio_mode = ratio_mode == "spatial-mean" ? RatioMode::SpatialMean
                                                : RatioMode::SumRescale;
    g.scale_floor = scale_floor;
    g.post_scale = post_scale;
    return g;
}

PolicyConfig RunConfig::policy() const {
    PolicyConfig p;
    p.canvas = canvas;
    p.min_layers = min_layers;
    p.max_layers = max_layers;
    p.hidden_width = hidden_width;
    p.hidden_layers = hidden_layers;
    p.cond_embed = cond_embed;
    p.lora_rank = lora_rank;
    p.lora_alpha = lora_alpha;
    p.t_floor = t_clamp_lo;
    return p;
}

RewardSettings RunConfig::reward() const {
    RewardSettings r;
    r.calibration = calibration;
    r.grid_cell = grid_cell;
    r.grid_margin = grid_margin;
    return r;
}

RunLock::RunLock(const std::filesystem::path& dir) : path_(dir / "lock") {
    std::filesystem::create_directories(dir);
    fd_ = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
    if (fd_ < 0)
        throw ConfigError("run directory is locked by another run: " +
                          dir.string());
}

RunLock::~RunLock() {
    if (fd_ >= 0) {
        ::close(fd_);
        std::filesystem::remove(path_);
    }
}

}  // namespace layerlab
