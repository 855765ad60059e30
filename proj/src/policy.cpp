// SPDX-License-Identifier: Apache-2.0
#include "layerlab/policy.hpp"

#include <cmath>

#include "layerlab/common.hpp"
#include "layerlab/kernels.hpp"
#include "layerlab/rng.hpp"

namespace layerlab {

namespace {

constexpr double kPi = 3.141592653589793238462643383279502884;

Tensor init_weight(int in, int out, double gain, Rng& rng) {
    Tensor w = Tensor::zeros({in, out});
    const double std = gain / std::sqrt(static_cast<double>(in));
    for (double& v : w.data) v = std * rng.normal();
    return w;
}

}  // namespace

VelocityNet::VelocityNet(PolicyConfig cfg, uint64_t init_seed) : cfg_(cfg) {
    if (cfg_.t_features % 2 != 0)
        throw ConfigError("policy: t_features must be even");
    if (cfg_.hidden_layers < 1) throw ConfigError("policy: need a hidden layer");
    Rng rng(init_seed);
    auto make = [&](const std::string& name, int in, int out, double gain) {
        Linear lin;
        lin.name = name;
        lin.w = init_weight(in, out, gain, rng);
        lin.b = Tensor::zeros({out});
        lin.la = Tensor::zeros({cfg_.lora_rank, in});
        const double astd = 1.0 / std::sqrt(static_cast<double>(in));
        for (double& v : lin.la.data) v = astd * rng.normal();
        lin.lb = Tensor::zeros({out, cfg_.lora_rank});
        return lin;
    };
    cond_proj_ = make("wc", cond_dim(), cfg_.cond_embed, 1.0);
    trunk_.push_back(make("w1", trunk_in(), cfg_.hidden_width, 1.0));
    for (int i = 2; i <= cfg_.hidden_layers; ++i)
        trunk_.push_back(make(strfmt("w%d", i), cfg_.hidden_width,
                              cfg_.hidden_width, 1.0));
    trunk_.push_back(make("wout", cfg_.hidden_width, max_packed_dim(), 0.1));
}

PolicyBinding VelocityNet::bind(Tape& tape, TrainScope scope) const {
    PolicyBinding binding;
    binding.scope = scope;
    auto place = [&](const std::string& name, const Tensor& t, bool trainable) {
        binding.nodes[name] =
            trainable ? tape.leaf(t, name) : tape.constant(t);
    };
    auto place_linear = [&](const Linear& lin) {
        const bool base_train = scope == TrainScope::Base;
        const bool lora_train = scope == TrainScope::Adapters;
        place("base." + lin.name, lin.w, base_train);
        place("base." + lin.name + ".b", lin.b, base_train);
        place("lora." + lin.name + ".a", lin.la, lora_train);
        place("lora." + lin.name + ".b", lin.lb, lora_train);
    };
    place_linear(cond_proj_);
    for (const Linear& lin : trunk_) place_linear(lin);
    return binding;
}

Tape::NodeId VelocityNet::linear_nodes(Tape& tape, const PolicyBinding& binding,
                                       const Linear& lin, Tape::NodeId x,
                                       bool adapters) const {
    Tape::NodeId y = tape.add_rowvec(
        tape.matmul(x, binding.nodes.at("base." + lin.name)),
        binding.nodes.at("base." + lin.name + ".b"));
    if (adapters) {
        Tape::NodeId u =
            tape.matmul(x, binding.nodes.at("lora." + lin.name + ".a"), true);
        Tape::NodeId v =
            tape.matmul(u, binding.nodes.at("lora." + lin.name + ".b"), true);
        y = tape.lincomb(y, 1.0, v, cfg_.lora_alpha / cfg_.lora_rank);
    }
    return y;
}

Tape::NodeId VelocityNet::forward_nodes(Tape& tape, const PolicyBinding& binding,
                                        Tape::NodeId x_and_t,
                                        Tape::NodeId cond_flat,
                                        Tape::NodeId onehot,
                                        const std::vector<double>& t_rows,
                                        bool adapters) const {
    Tape::NodeId ce = linear_nodes(tape, binding, cond_proj_, cond_flat, adapters);
    Tape::NodeId h = tape.concat_cols(tape.concat_cols(x_and_t, ce), onehot);
    for (std::size_t i = 0; i + 1 < trunk_.size(); ++i)
        h = tape.tanh(linear_nodes(tape, binding, trunk_[i], h, adapters));
    Tape::NodeId x0_hat = linear_nodes(tape, binding, trunk_.back(), h, adapters);
    // velocity from the denoised-sample prediction
    Tape::NodeId x = tape.cols_slice(x_and_t, max_packed_dim());
    Tensor inv_t = Tensor::zeros({static_cast<int>(t_rows.size())});
    for (std::size_t i = 0; i < t_rows.size(); ++i)
        inv_t.data[i] = 1.0 / std::max(t_rows[i], cfg_.t_floor);
    return tape.row_scale(tape.sub(x, x0_hat), tape.constant(inv_t));
}

Tensor VelocityNet::assemble_x_and_t(const std::vector<const Tensor*>& x_rows,
                                     const std::vector<double>& t_rows) const {
    const int batch = static_cast<int>(x_rows.size());
    if (t_rows.size() != x_rows.size())
        throw NumericError("assemble_x_and_t: row count mismatch");
    const int dmax = max_packed_dim();
    Tensor out = Tensor::zeros({batch, dmax + cfg_.t_features});
    for (int i = 0; i < batch; ++i) {
        const Tensor& x = *x_rows[i];
        if (static_cast<int>(x.numel()) > dmax)
            throw NumericError("assemble_x_and_t: row longer than packed maximum");
        double* row = out.data.data() +
                      static_cast<std::size_t>(i) * (dmax + cfg_.t_features);
        std::copy(x.data.begin(), x.data.end(), row);
        for (int f = 0; f < cfg_.t_features / 2; ++f) {
            const double freq = std::pow(2.0, f) * kPi;
            row[dmax + 2 * f] = std::sin(freq * t_rows[i]);
            row[dmax + 2 * f + 1] = std::cos(freq * t_rows[i]);
        }
    }
    return out;
}

Tensor VelocityNet::assemble_cond(const std::vector<const Condition*>& conds) const {
    const int batch = static_cast<int>(conds.size());
    Tensor out = Tensor::zeros({batch, cond_dim()});
    for (int i = 0; i < batch; ++i) {
        const Raster& r = conds[i]->composite;
        if (r.h != cfg_.canvas || r.w != cfg_.canvas || r.c != 3)
            throw NumericError("assemble_cond: composite raster does not match canvas");
        double* row = out.data.data() + static_cast<std::size_t>(i) * cond_dim();
        for (std::size_t p = 0; p < r.px.size(); ++p)
            row[p] = 2.0 * r.px[p] - 1.0;  // same model-range mapping as pack()
    }
    return out;
}

Tensor VelocityNet::assemble_onehot(const std::vector<int>& layer_counts) const {
    const int batch = static_cast<int>(layer_counts.size());
    Tensor out = Tensor::zeros({batch, onehot_size()});
    for (int i = 0; i < batch; ++i) {
        const int l = layer_counts[i];
        if (l < cfg_.min_layers || l > cfg_.max_layers)
            throw ConfigError(strfmt("layer count %d outside [%d,%d]", l,
                                     cfg_.min_layers, cfg_.max_layers));
        out.at(i, l - cfg_.min_layers) = 1.0;
    }
    return out;
}

Tensor VelocityNet::forward_batch(const Tensor& x_and_t, const Tensor& cond_flat,
                                  const Tensor& onehot,
                                  const std::vector<double>& t_rows,
                                  bool adapters) const {
    Tape tape;
    PolicyBinding binding = bind(tape, TrainScope::None);
    Tape::NodeId out = forward_nodes(tape, binding, tape.constant(x_and_t),
                                     tape.constant(cond_flat),
                                     tape.constant(onehot), t_rows, adapters);
    return tape.value(out);
}

Tensor VelocityNet::forward(const Tensor& x, double t, const Condition& cond,
                            bool adapters) const {
    const int d = packed_dim(cond.layer_count);
    if (static_cast<int>(x.numel()) != d)
        throw NumericError(strfmt(
            "forward: packed input has %zu values but condition requests %d layers (%d)",
            x.numel(), cond.layer_count, d));
    Tensor full = forward_batch(assemble_x_and_t({&x}, {t}),
                                assemble_cond({&cond}),
                                assemble_onehot({cond.layer_count}), {t}, adapters);
    Tensor out = Tensor::zeros({d});
    std::copy(full.data.begin(), full.data.begin() + d, out.data.begin());
    return out;
}

ParamMap VelocityNet::base_params() {
    ParamMap out;
    auto put = [&](Linear& lin) {
        out["base." + lin.name] = &lin.w;
        out["base." + lin.name + ".b"] = &lin.b;
    };
    put(cond_proj_);
    for (Linear& lin : trunk_) put(lin);
    return out;
}

ParamMap VelocityNet::adapter_params() {
    ParamMap out;
    auto put = [&](Linear& lin) {
        out["lora." + lin.name + ".a"] = &lin.la;
        out["lora." + lin.name + ".b"] = &lin.lb;
    };
    put(cond_proj_);
    for (Linear& lin : trunk_) put(lin);
    return out;
}

std::map<std::string, Tensor> VelocityNet::named_tensors() const {
    std::map<std::string, Tensor> out;
    auto put = [&](const Linear& lin) {
        out["base." + lin.name] = lin.w;
        out["base." + lin.name + ".b"] = lin.b;
        out["lora." + lin.name + ".a"] = lin.la;
        out["lora." + lin.name + ".b"] = lin.lb;
    };
    put(cond_proj_);
    for (const Linear& lin : trunk_) put(lin);
    return out;
}

void VelocityNet::load_tensors(const std::map<std::string, Tensor>& tensors) {
    auto take = [&](const std::string& name, Tensor& into) {
        auto it = tensors.find(name);
        if (it == tensors.end()) return;  // partial checkpoints load what they have
        if (it->second.shape != into.shape)
            throw ConfigError("checkpoint tensor shape mismatch for " + name);
        into = it->second;
    };
    auto fill = [&](Linear& lin) {
        take("base." + lin.name, lin.w);
        take("base." + lin.name + ".b", lin.b);
        take("lora." + lin.name + ".a", lin.la);
        take("lora." + lin.name + ".b", lin.lb);
    };
    fill(cond_proj_);
    for (Linear& lin : trunk_) fill(lin);
}

void VelocityNet::save(Checkpoint& ck) const {
    for (auto& [name, t] : named_tensors()) ck.tensors[name] = std::move(t);
}

void VelocityNet::load(const Checkpoint& ck) { load_tensors(ck.tensors); }

PretrainResult pretrain(VelocityNet& net, const SceneSource& scenes,
                        AdamW& opt, const PretrainConfig& cfg) {
    PretrainResult result;
    Rng rng(cfg.seed);
    const int dmax = net.max_packed_dim();
    ParamMap params = net.base_params();
    for (int step = 0; step < cfg.steps; ++step) {
        std::vector<GeneratedScene> batch;
        batch.reserve(cfg.batch);
        for (int b = 0; b < cfg.batch; ++b) batch.push_back(scenes());

        std::vector<Tensor> x0s, x1s, xts;
        std::vector<double> ts;
        std::vector<const Condition*> conds;
        std::vector<Condition> cond_store;
        cond_store.reserve(batch.size());
        std::vector<int> layer_counts;
        double total_active = 0.0;
        for (const GeneratedScene& g : batch) {
            Tensor x0 = pack(g.truth);
            Tensor x1 = rng.normal_tensor({static_cast<int>(x0.numel())});
            // lower bound keeps the derived velocity's 1/t weighting finite
            const double t = rng.uniform(0.05, 1.0);
            xts.push_back(interpolate(x0, x1, t));
            ts.push_back(t);
            x0s.push_back(std::move(x0));
            x1s.push_back(std::move(x1));
            cond_store.push_back(Condition{g.composite, g.scene.layer_count, {}});
            layer_counts.push_back(g.scene.layer_count);
            total_active += static_cast<double>(g.truth.packed_dim());
        }
        for (const Condition& c : cond_store) conds.push_back(&c);

        Tensor target = Tensor::zeros({cfg.batch, dmax});
        Tensor mask = Tensor::zeros({cfg.batch, dmax});
        std::vector<const Tensor*> x_rows;
        for (int b = 0; b < cfg.batch; ++b) {
            const std::size_t d = x0s[b].numel();
            for (std::size_t i = 0; i < d; ++i) {
                target.at(b, static_cast<int>(i)) = x1s[b].data[i] - x0s[b].data[i];
                mask.at(b, static_cast<int>(i)) = 1.0;
            }
            x_rows.push_back(&xts[b]);
        }

        try {
            Tape tape;
            PolicyBinding binding = net.bind(tape, TrainScope::Base);
            Tape::NodeId v = net.forward_nodes(
                tape, binding, tape.constant(net.assemble_x_and_t(x_rows, ts)),
                tape.constant(net.assemble_cond(conds)),
                tape.constant(net.assemble_onehot(layer_counts)), ts, false);
            Tape::NodeId diff = tape.sub(v, tape.constant(target));
            Tape::NodeId masked = tape.mul(tape.mul(diff, diff), tape.constant(mask));
            Tape::NodeId loss = tape.scale(tape.sum(masked), 1.0 / total_active);
            result.loss_curve.push_back(tape.value(loss).item());
            GradMap grads = tape.backward(loss);
            GradMap base_only;
            for (auto& [name, g] : grads)
                if (name.rfind("base.", 0) == 0) base_only[name] = std::move(g);
            opt.step(params, base_only);
        } catch (const NumericError& e) {
            throw NumericError(strfmt("pretrain diverged at step %d: %s", step,
                                      e.what()));
        }
    }
    return result;
}

std::vector<Tensor> sample_ode_batch(const VelocityNet& net,
                                     const std::vector<Condition>& conds,
                                     const NoiseSchedule& schedule,
                                     const std::vector<Tensor>& z_inits,
                                     bool adapters) {
    const int batch = static_cast<int>(conds.size());
    if (z_inits.size() != conds.size())
        throw NumericError("sample_ode_batch: init count mismatch");
    const int dmax = net.max_packed_dim();
    std::vector<Tensor> xs = z_inits;
    std::vector<int> dims(batch);
    std::vector<int> layer_counts(batch);
    std::vector<const Condition*> cond_ptrs(batch);
    for (int b = 0; b < batch; ++b) {
        dims[b] = net.packed_dim(conds[b].layer_count);
        if (static_cast<int>(z_inits[b].numel()) != dims[b])
            throw NumericError("sample_ode_batch: init row has wrong packed length");
        layer_counts[b] = conds[b].layer_count;
        cond_ptrs[b] = &conds[b];
    }
    const Tensor cond_flat = net.assemble_cond(cond_ptrs);
    const Tensor onehot = net.assemble_onehot(layer_counts);
    for (int i = 0; i < schedule.steps(); ++i) {
        std::vector<const Tensor*> rows;
        for (int b = 0; b < batch; ++b) rows.push_back(&xs[b]);
        const std::vector<double> ts(batch, schedule.t[i]);
        const Tensor x_and_t = net.assemble_x_and_t(rows, ts);
        const Tensor v = net.forward_batch(x_and_t, cond_flat, onehot, ts, adapters);
        for (int b = 0; b < batch; ++b) {
            // integrate toward data: x <- x - v*dt on the live dims
            kernels::lincomb(static_cast<std::size_t>(dims[b]), 1.0,
                             xs[b].data.data(), -schedule.dt[i],
                             v.data.data() + static_cast<std::size_t>(b) * dmax,
                             xs[b].data.data());
        }
    }
    return xs;
}

Tensor sample_ode(const VelocityNet& net, const Condition& cond,
                  const NoiseSchedule& schedule, const Tensor& z_init,
                  bool adapters) {
    return sample_ode_batch(net, {cond}, schedule, {z_init}, adapters)[0];
}

}  // namespace layerlab
