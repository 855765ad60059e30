// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>
#include <map>
#include <string>
#include <vector>

#include "layerlab/checkpoint.hpp"
#include "layerlab/flow.hpp"
#include "layerlab/image.hpp"
#include "layerlab/optimizer.hpp"
#include "layerlab/scene.hpp"
#include "layerlab/tape.hpp"

namespace layerlab {

struct PolicyConfig {
    int canvas = 32;
    int min_layers = kMinLayers;
    int max_layers = kMaxLayers;
    int hidden_width = 256;
    int hidden_layers = 3;
    int cond_embed = 64;
    int lora_rank = 4;
    double lora_alpha = 4.0;
    int t_features = 8;   // sinusoidal embedding size, must be even
    double t_floor = 1e-3;  // clamp for the 1/t factor in the derived velocity
};

// Conditioning for one decomposition: the composite to decompose, the
// requested layer count, and an optional text-prompt template identifier
// (recorded for provenance; the toy net has no text pathway).
struct Condition {
    Raster composite;
    int layer_count = 0;
    std::string prompt_template;
};

enum class TrainScope { None, Base, Adapters };

// Node handles for one parameter binding on a tape. Parameters in the
// trainable scope are leaves; everything else is bound as constants.
struct PolicyBinding {
    TrainScope scope = TrainScope::None;
    std::map<std::string, Tape::NodeId> nodes;
};

// Velocity field over packed layer stacks. A tanh MLP on
// [x_padded | t-sinusoids | condition embedding | layer-count one-hot]
// predicts the denoised sample x0_hat, and the velocity is derived as
// (x_t - x0_hat) / max(t, t_floor). Deriving the velocity keeps the 1/t
// contraction full-rank, which a width-bounded head emitting velocity
// directly cannot represent. Rank-r adapter pairs (A: r x in, B: out x r,
// scale alpha/r) sit on every linear layer; with adapters disabled the
// output depends on base weights alone, and adapter B matrices start at
// zero so adapted and base outputs coincide at initialisation.
class VelocityNet {
  public:
    VelocityNet(PolicyConfig cfg, uint64_t init_seed);

    const PolicyConfig& config() const { return cfg_; }
    int packed_dim(int layer_count) const {
        return layer_count * 4 * cfg_.canvas * cfg_.canvas;
    }
    int max_packed_dim() const { return packed_dim(cfg_.max_layers); }
    int onehot_size() const { return cfg_.max_layers - cfg_.min_layers + 1; }
    int cond_dim() const { return 3 * cfg_.canvas * cfg_.canvas; }
    int trunk_in() const {
        return max_packed_dim() + cfg_.t_features + cfg_.cond_embed + onehot_size();
    }

    // Single-sample forward. x carries the actual packed dimensionality of
    // cond.layer_count; the returned velocity has the same shape.
    Tensor forward(const Tensor& x, double t, const Condition& cond,
                   bool adapters) const;

    // Batched forward over pre-assembled features; returns [B x Dmax].
    Tensor forward_batch(const Tensor& x_and_t, const Tensor& cond_flat,
                         const Tensor& onehot, const std::vector<double>& t_rows,
                         bool adapters) const;

    PolicyBinding bind(Tape& tape, TrainScope scope) const;
    // Taped forward; inputs are constants already on the tape. t_rows must
    // match the sinusoids baked into x_and_t.
    Tape::NodeId forward_nodes(Tape& tape, const PolicyBinding& binding,
                               Tape::NodeId x_and_t, Tape::NodeId cond_flat,
                               Tape::NodeId onehot,
                               const std::vector<double>& t_rows,
                               bool adapters) const;

    // Feature assembly ([x | sinusoids], condition raster in model range,
    // layer-count one-hot). Rows may carry different layer counts.
    Tensor assemble_x_and_t(const std::vector<const Tensor*>& x_rows,
                            const std::vector<double>& t_rows) const;
    Tensor assemble_cond(const std::vector<const Condition*>& conds) const;
    Tensor assemble_onehot(const std::vector<int>& layer_counts) const;

    ParamMap base_params();
    ParamMap adapter_params();
    std::map<std::string, Tensor> named_tensors() const;  // copies, full names
    void load_tensors(const std::map<std::string, Tensor>& tensors);

    void save(Checkpoint& ck) const;
    void load(const Checkpoint& ck);

  private:
    struct Linear {
        std::string name;
        Tensor w, b;      // [in x out], [out]
        Tensor la, lb;    // adapters: [r x in], [out x r]
    };

    Tape::NodeId linear_nodes(Tape& tape, const PolicyBinding& binding,
                              const Linear& lin, Tape::NodeId x,
                              bool adapters) const;

    PolicyConfig cfg_;
    Linear cond_proj_;
    std::vector<Linear> trunk_;  // hidden layers then the output head
};

using SceneSource = std::function<GeneratedScene()>;

struct PretrainConfig {
    int steps = 1500;
    int batch = 8;
    double lr = 1e-3;
    double weight_decay = 0.0;
    uint64_t seed = 1;
};

struct PretrainResult {
    std::vector<double> loss_curve;  // one entry per step
};

// Flow-matching pretraining of the base weights; adapters stay untouched.
// Throws NumericError naming the step if the loss goes non-finite.
PretrainResult pretrain(VelocityNet& net, const SceneSource& scenes,
                        AdamW& opt, const PretrainConfig& cfg);

// Deterministic ODE sampling (the learned field points data -> noise, so
// integration toward data subtracts it). z_inits rows are actual-D vectors.
std::vector<Tensor> sample_ode_batch(const VelocityNet& net,
                                     const std::vector<Condition>& conds,
                                     const NoiseSchedule& schedule,
                                     const std::vector<Tensor>& z_inits,
                                     bool adapters);
Tensor sample_ode(const VelocityNet& net, const Condition& cond,
                  const NoiseSchedule& schedule, const Tensor& z_init,
                  bool adapters);

}  // namespace layerlab
