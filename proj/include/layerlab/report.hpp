// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "layerlab/eval.hpp"
#include "layerlab/grpo.hpp"
#include "layerlab/judge.hpp"

namespace layerlab {

// Per-round training metrics, one structured-text record per line on disk.
void append_metrics_row(const std::filesystem::path& log,
                        const RoundMetrics& row);
// Reads either the JSON-lines log or its CSV projection.
std::vector<RoundMetrics> load_metrics_log(const std::filesystem::path& log);
std::string metrics_csv(const std::vector<RoundMetrics>& rows);

struct EvalLogRow {
    int round = 0;
    EvalSummary summary;
};
void append_eval_row(const std::filesystem::path& log, int round,
                     const EvalSummary& summary);
std::vector<EvalLogRow> load_eval_log(const std::filesystem::path& log);

// Held-out evaluation report: per-scene records plus one aggregate block,
// with a CSV projection for plotting.
void write_eval_report(const std::filesystem::path& jsonl,
                       const std::filesystem::path& csv, const HeldOutEval& eval);

// Mean curve with a +-1 sigma band, the unit the plot renders.
struct BandSeries {
    std::string name;
    std::vector<double> x;
    std::vector<double> mean;
    std::vector<double> stdev;  // half-width of the band
};

BandSeries reward_series(const std::vector<RoundMetrics>& rows);
std::vector<BandSeries> eval_series(const std::vector<EvalLogRow>& rows);

// One panel per series: mean polyline plus shaded band.
std::string plot_svg(const std::vector<BandSeries>& series);

// Judge transcript persistence for audit.
void write_transcript(const std::filesystem::path& path, int round,
                      const GroupReport& report, const std::string& grid_file);

}  // namespace layerlab
