// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <optional>
#include <string>
#include <vector>

#include "layerlab/image.hpp"
#include "layerlab/scene.hpp"

namespace layerlab {

// Phase-1 rubric: five criteria on a 0-5 integer scale, total in [0,25].
struct RubricScore {
    int semantic_separation = 0;
    int alpha_cleanliness = 0;
    int background_inpainting = 0;
    int feature_distribution = 0;
    int content_validity = 0;
    int total = 0;

    static RubricScore from_criteria(int sep, int clean, int inpaint,
                                     int distrib, int valid);
    bool valid() const;                 // each in 0..5 and total == sum
    double normalized() const { return total / 25.0; }
};

// Composite one RGBA layer onto solid white: rgb*a + (1-a)*white.
Raster white_composite(const Raster& rgba_layer);
std::vector<Raster> white_layer_views(const LayerStack& stack);

// Labelled comparison grid: ceil(sqrt(G)) columns, left-to-right then
// top-to-bottom, white canvas, uniform margins, index digits in each cell's
// top-left corner.
struct GridSpec {
    int count = 0, cols = 0, rows = 0, cell = 0, margin = 0;
    int width() const { return cols * cell + (cols + 1) * margin; }
    int height() const { return rows * cell + (rows + 1) * margin; }
    std::pair<int, int> cell_origin(int index) const;  // (x, y)
    int index_at(int x, int y) const;                  // -1 in margins
};
GridSpec grid_layout(int count, int cell, int margin = 4);
Raster build_grid(const std::vector<Raster>& composites, int cell,
                  int margin = 4);

struct JudgeTranscriptEntry {
    std::string phase;     // "phase1" | "phase2"
    int sample = -1;       // phase1 sample index
    int attempt = 0;
    std::string request;   // prompt text (images summarised, not embedded)
    std::string response;
    bool accepted = false;
};

class Judge {
  public:
    struct Calibration {
        std::vector<double> scores;
        bool fallback = false;
    };

    virtual ~Judge() = default;
    virtual void begin_group(int group_size) { (void)group_size; }
    virtual RubricScore phase1(const LayerStack& stack, const Raster& composite,
                               const std::vector<Raster>& white_layers,
                               const ToyScene* truth, int sample_index,
                               std::vector<JudgeTranscriptEntry>& transcript) = 0;
    virtual Calibration phase2(const Raster& grid,
                               const std::vector<double>& phase1_scores,
                               std::vector<JudgeTranscriptEntry>& transcript) = 0;
    virtual bool parallel_phase1() const { return true; }
};

// Deterministic programmatic judge with ground-truth access. The plain mode
// scores the five criteria directly; the compress-then-rank mode squeezes
// Phase-1 totals into a 0.05-wide band while Phase-2 returns normalised
// true-quality ranks, reproducing the score-compression scenario.
class OracleJudge : public Judge {
  public:
    enum class Mode { Plain, Compressed };

    explicit OracleJudge(Mode mode = Mode::Plain) : mode_(mode) {}

    void begin_group(int group_size) override;
    RubricScore phase1(const LayerStack& stack, const Raster& composite,
                       const std::vector<Raster>& white_layers,
                       const ToyScene* truth, int sample_index,
                       std::vector<JudgeTranscriptEntry>& transcript) override;
    Calibration phase2(const Raster& grid,
                       const std::vector<double>& phase1_scores,
                       std::vector<JudgeTranscriptEntry>& transcript) override;

    double blank_threshold = 0.01;  // alpha-mass fraction below which a layer is blank
    double clean_tolerance = 0.1;   // distance to {0,1} counted as clean alpha
    double compress_pivot = 0.7;    // quality split inside the compressed band

  private:
    Mode mode_;
    std::vector<double> group_quality_;  // true qualities cached per group
};

// The five criteria computed programmatically against the ground truth.
RubricScore oracle_judge(const Raster& composite, const LayerStack& stack,
                         const ToyScene& truth, double blank_threshold = 0.01,
                         double clean_tolerance = 0.1);

// Reply validators. Phase 1 expects the JSON rubric object (leniently
// extracted from surrounding chatter); phase 2 expects exactly
// `group_size` comma-separated decimals in [0,1].
std::optional<RubricScore> parse_phase1_reply(const std::string& text);
std::optional<std::vector<double>> parse_phase2_reply(const std::string& text,
                                                      int group_size);

// Editable prompt templates; defaults are embedded and can be loaded from
// files. Validation requires the placeholders each phase substitutes.
struct PromptTemplates {
    std::string system;
    std::string phase1;  // uses {num_layers}
    std::string phase2;  // uses {G}, {Gm1}, {scores_csv}

    static PromptTemplates defaults();
    static PromptTemplates load(const std::string& system_path,
                                const std::string& phase1_path,
                                const std::string& phase2_path);
    void validate() const;
};

std::string fill_placeholder(std::string text, const std::string& key,
                             const std::string& value);

// Free-function forms of the two phases (phase-2 falls back to the Phase-1
// scores when the judge reports persistent parse failure).
RubricScore phase1_score(Judge& judge, const Raster& composite,
                         const std::vector<Raster>& white_layers,
                         const LayerStack& stack, const ToyScene* truth,
                         std::vector<JudgeTranscriptEntry>& transcript,
                         int sample_index = 0);
Judge::Calibration phase2_calibrate(Judge& judge, const Raster& grid,
                                    const std::vector<double>& phase1_scores,
                                    std::vector<JudgeTranscriptEntry>& transcript);

// Group scoring pipeline: Phase-1 each sample (optionally in parallel),
// build the grid, then one Phase-2 pass. With calibration disabled the
// calibrated scores equal the Phase-1 scores.
struct RewardSettings {
    bool calibration = true;
    int grid_cell = 64;
    int grid_margin = 4;
};

struct GroupReport {
    std::vector<double> phase1;          // r_ind, normalised
    std::vector<double> phase2;          // r_cal
    std::vector<RubricScore> rubrics;
    bool calibrated = true;
    bool fallback_used = false;
    std::vector<JudgeTranscriptEntry> transcript;

    const std::vector<double>& rewards() const {
        return calibrated ? phase2 : phase1;
    }
};

struct ScoredGroup {
    GroupReport report;
    Raster grid;  // empty when calibration is disabled
};

ScoredGroup score_group(Judge& judge, const std::vector<LayerStack>& stacks,
                        const ToyScene* truth, const RewardSettings& settings);

}  // namespace layerlab
