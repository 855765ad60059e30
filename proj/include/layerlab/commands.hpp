// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>

#include "layerlab/config.hpp"

namespace layerlab {

struct PretrainOptions {
    bool force = false;
    bool resume = false;
};

struct EvalOptions {
    std::string checkpoint;  // empty = <out-dir>/checkpoint_final.ckpt
    int scenes = 0;          // 0 = config eval-scenes
    bool dump_png = false;
    bool use_adapters = true;
};

struct ScoreOptions {
    std::string checkpoint;
    uint64_t scene_seed = 0;
};

struct GridOptions {
    uint64_t seed_base = 0;
    int count = 16;
    std::string out_png = "grid.png";
};

struct PlotOptions {
    std::string log;       // metrics log (json-lines or csv)
    std::string eval_log;  // optional eval log for the metric panels
    std::string out_svg = "metrics.svg";
    std::string out_csv = "metrics.csv";
};

void cmd_pretrain(const RunConfig& cfg, const PretrainOptions& opts);
void cmd_train(const RunConfig& cfg);
void cmd_eval(const RunConfig& cfg, const EvalOptions& opts);
void cmd_score(const RunConfig& cfg, const ScoreOptions& opts);
void cmd_grid(const RunConfig& cfg, const GridOptions& opts);
void cmd_plot(const PlotOptions& opts);

}  // namespace layerlab
