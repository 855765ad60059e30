// SPDX-License-Identifier: Apache-2.0
#include "layerlab/judge.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "layerlab/common.hpp"

namespace layerlab {

RubricScore RubricScore::from_criteria(int sep, int clean, int inpaint,
                                       int distrib, int valid) {
    RubricScore r;
    r.semantic_separation = sep;
    r.alpha_cleanliness = clean;
    r.background_inpainting = inpaint;
    r.feature_distribution = distrib;
    r.content_validity = valid;
    r.total = sep + clean + inpaint + distrib + valid;
    return r;
}

bool RubricScore::valid() const {
    auto in_range = [](int v) { return v >= 0 && v <= 5; };
    return in_range(semantic_separation) && in_range(alpha_cleanliness) &&
           in_range(background_inpainting) && in_range(feature_distribution) &&
           in_range(content_validity) &&
           total == semantic_separation + alpha_cleanliness +
                        background_inpainting + feature_distribution +
                        content_validity;
}

Raster white_composite(const Raster& rgba_layer) {
    if (rgba_layer.c != 4)
        throw NumericError("white_composite: expected an RGBA raster");
    Raster out(rgba_layer.h, rgba_layer.w, 3);
    for (int y = 0; y < rgba_layer.h; ++y) {
        for (int x = 0; x < rgba_layer.w; ++x) {
            const double a = rgba_layer.at(y, x, 3);
            if (a < 0.0 || a > 1.0)
                throw NumericError("white_composite: alpha outside [0,1]");
            for (int c = 0; c < 3; ++c)
                out.at(y, x, c) = rgba_layer.at(y, x, c) * a + (1.0 - a);
        }
    }
    return out;
}

std::vector<Raster> white_layer_views(const LayerStack& stack) {
    std::vector<Raster> out;
    out.reserve(stack.layers);
    for (int l = 0; l < stack.layers; ++l)
        out.push_back(white_composite(stack.layer_rgba(l)));
    return out;
}

GridSpec grid_layout(int count, int cell, int margin) {
    if (count < 1) throw ConfigError("grid_layout: need at least one cell");
    if (cell < 16) throw ConfigError("grid_layout: cells below 16 px leave labels unrenderable");
    if (margin < 0) throw ConfigError("grid_layout: negative margin");
    GridSpec spec;
    spec.count = count;
    spec.cell = cell;
    spec.margin = margin;
    spec.cols = static_cast<int>(std::ceil(std::sqrt(static_cast<double>(count))));
    spec.rows = (count + spec.cols - 1) / spec.cols;
    return spec;
}

std::pair<int, int> GridSpec::cell_origin(int index) const {
    const int col = index % cols;
    const int row = index / cols;
    return {margin + col * (cell + margin), margin + row * (cell + margin)};
}

int GridSpec::index_at(int x, int y) const {
    const int pitch = cell + margin;
    const int col = (x - margin) / pitch;
    const int row = (y - margin) / pitch;
    if (x < margin || y < margin || col >= cols || row >= rows) return -1;
    if ((x - margin) % pitch >= cell || (y - margin) % pitch >= cell) return -1;
    const int index = row * cols + col;
    return index < count ? index : -1;
}

Raster build_grid(const std::vector<Raster>& composites, int cell, int margin) {
    const GridSpec spec = grid_layout(static_cast<int>(composites.size()), cell, margin);
    Raster grid(spec.height(), spec.width(), 3, 1.0);
    const int label_scale = std::clamp(cell / 16, 1, 4);
    for (int g = 0; g < spec.count; ++g) {
        const auto [ox, oy] = spec.cell_origin(g);
        Raster scaled = resize_nearest(composites[g], cell, cell);
        for (int y = 0; y < cell; ++y)
            for (int x = 0; x < cell; ++x)
                for (int c = 0; c < 3; ++c)
                    grid.at(oy + y, ox + x, c) = scaled.at(y, x, c);
        const std::string label = std::to_string(g);
        // white backing pad so the index reads as dark digits on white
        const int lw = digits_width(label, label_scale) + 2 * label_scale;
        const int lh = digits_height(label_scale) + 2 * label_scale;
        for (int y = 0; y < lh && oy + y < grid.h; ++y)
            for (int x = 0; x < lw && ox + x < grid.w; ++x)
                for (int c = 0; c < 3; ++c) grid.at(oy + y, ox + x, c) = 1.0;
        draw_digits(grid, ox + label_scale, oy + label_scale, label, label_scale, 0.05);
    }
    return grid;
}

namespace {

int quantize05(double v) {
    return std::clamp(static_cast<int>(std::floor(v * 5.0 + 0.5)), 0, 5);
}

double layer_alpha_mass(const LayerStack& stack, int layer) {
    double acc = 0.0;
    for (int y = 0; y < stack.h; ++y)
        for (int x = 0; x < stack.w; ++x) acc += stack.at(layer, 3, y, x);
    return acc / static_cast<double>(stack.h * stack.w);
}

double normalized_entropy(const std::vector<double>& masses) {
    const double total = std::accumulate(masses.begin(), masses.end(), 0.0);
    if (total <= 0.0) return 0.0;
    if (masses.size() == 1) return 1.0;
    double h = 0.0;
    for (double m : masses) {
        if (m <= 0.0) continue;
        const double p = m / total;
        h -= p * std::log(p);
    }
    return h / std::log(static_cast<double>(masses.size()));
}

// Soft IoU between a binary shape mask and a foreground layer's alpha map.
double soft_iou(const std::vector<std::uint8_t>& mask, const LayerStack& stack,
                int layer) {
    double inter = 0.0, uni = 0.0;
    for (int y = 0; y < stack.h; ++y) {
        for (int x = 0; x < stack.w; ++x) {
            const double a = stack.at(layer, 3, y, x);
            const double m = mask[static_cast<std::size_t>(y) * stack.w + x];
            inter += std::min(a, m);
            uni += std::max(a, m);
        }
    }
    return uni <= 0.0 ? 0.0 : inter / uni;
}

std::string rubric_json(const RubricScore& r) {
    std::ostringstream os;
    os << "{\"semantic_separation\":" << r.semantic_separation
       << ", \"alpha_cleanliness\":" << r.alpha_cleanliness
       << ", \"background_inpainting\":" << r.background_inpainting
       << ", \"feature_distribution\":" << r.feature_distribution
       << ", \"content_validity\":" << r.content_validity
       << ", \"total\":" << r.total << "}";
    return os.str();
}

// Fractional ranks (ties averaged) normalised into [0,1].
std::vector<double> normalized_ranks(const std::vector<double>& values) {
    const int n = static_cast<int>(values.size());
    if (n == 1) return {0.5};
    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](int a, int b) { return values[a] < values[b]; });
    std::vector<double> ranks(n, 0.0);
    int i = 0;
    while (i < n) {
        int j = i;
        while (j + 1 < n && values[order[j + 1]] == values[order[i]]) ++j;
        const double avg = 0.5 * (i + j);
        for (int k = i; k <= j; ++k) ranks[order[k]] = avg;
        i = j + 1;
    }
    for (double& r : ranks) r /= static_cast<double>(n - 1);
    return ranks;
}

}  // namespace

RubricScore oracle_judge(const Raster& composite, const LayerStack& stack,
                         const ToyScene& truth, double blank_threshold,
                         double clean_tolerance) {
    (void)composite;
    if (stack.layers != truth.layer_count)
        throw JudgeError(strfmt("oracle_judge: stack has %d layers, scene has %d",
                                stack.layers, truth.layer_count));
    const int fg = stack.layers - 1;

    std::vector<double> masses;
    for (int l = 1; l < stack.layers; ++l)
        masses.push_back(layer_alpha_mass(stack, l));

    int non_blank = 0;
    for (double m : masses)
        if (m >= blank_threshold) ++non_blank;
    const double validity = fg > 0 ? static_cast<double>(non_blank) / fg : 0.0;

    const double distribution = normalized_entropy(masses);

    double clean = 0.0;
    std::size_t alpha_count = 0;
    for (int l = 1; l < stack.layers; ++l) {
        for (int y = 0; y < stack.h; ++y) {
            for (int x = 0; x < stack.w; ++x) {
                const double a = stack.at(l, 3, y, x);
                if (a <= clean_tolerance || a >= 1.0 - clean_tolerance) clean += 1.0;
                ++alpha_count;
            }
        }
    }
    clean = alpha_count ? clean / static_cast<double>(alpha_count) : 0.0;

    const Raster bg = background_raster(truth);
    double l1 = 0.0;
    for (int y = 0; y < stack.h; ++y)
        for (int x = 0; x < stack.w; ++x)
            for (int c = 0; c < 3; ++c)
                l1 += std::abs(stack.at(0, c, y, x) - bg.at(y, x, c));
    l1 /= static_cast<double>(3 * stack.h * stack.w);
    const double inpainting = std::clamp(1.0 - l1, 0.0, 1.0);

    // best bijective shape-to-layer assignment under soft IoU
    const auto masks = shape_masks(truth);
    double separation = 0.0;
    if (!masks.empty()) {
        std::vector<std::vector<double>> iou(masks.size(),
                                             std::vector<double>(fg, 0.0));
        for (std::size_t s = 0; s < masks.size(); ++s)
            for (int l = 0; l < fg; ++l)
                iou[s][l] = soft_iou(masks[s], stack, l + 1);
        std::vector<int> perm(fg);
        std::iota(perm.begin(), perm.end(), 0);
        double best = 0.0;
        do {
            double acc = 0.0;
            for (std::size_t s = 0; s < masks.size(); ++s) acc += iou[s][perm[s]];
            best = std::max(best, acc / static_cast<double>(masks.size()));
        } while (std::next_permutation(perm.begin(), perm.end()));
        separation = best;
    }

    return RubricScore::from_criteria(quantize05(separation), quantize05(clean),
                                      quantize05(inpainting),
                                      quantize05(distribution),
                                      quantize05(validity));
}

void OracleJudge::begin_group(int group_size) {
    group_quality_.assign(static_cast<std::size_t>(group_size), 0.0);
}

RubricScore OracleJudge::phase1(const LayerStack& stack, const Raster& composite,
                                const std::vector<Raster>& white_layers,
                                const ToyScene* truth, int sample_index,
                                std::vector<JudgeTranscriptEntry>& transcript) {
    (void)white_layers;
    if (!truth) throw JudgeError("oracle judge needs the ground-truth scene");
    RubricScore plain = oracle_judge(composite, stack, *truth, blank_threshold,
                                     clean_tolerance);
    RubricScore result = plain;
    if (mode_ == Mode::Compressed) {
        // squeeze the rubric into a narrow band: totals 17 or 18
        result = plain.normalized() >= compress_pivot
                     ? RubricScore::from_criteria(4, 4, 4, 3, 3)
                     : RubricScore::from_criteria(4, 4, 4, 3, 2);
    }
    if (sample_index >= 0 &&
        sample_index < static_cast<int>(group_quality_.size()))
        group_quality_[sample_index] = plain.normalized();
    JudgeTranscriptEntry entry;
    entry.phase = "phase1";
    entry.sample = sample_index;
    entry.attempt = 1;
    entry.request = strfmt("oracle rubric, %d layers, scene seed %llu",
                           stack.layers,
                           static_cast<unsigned long long>(truth->seed));
    entry.response = rubric_json(result);
    entry.accepted = true;
    transcript.push_back(entry);
    return result;
}

Judge::Calibration OracleJudge::phase2(
    const Raster& grid, const std::vector<double>& phase1_scores,
    std::vector<JudgeTranscriptEntry>& transcript) {
    (void)grid;
    Calibration cal;
    if (mode_ == Mode::Plain) {
        // the oracle is already calibrated; relative re-scoring is a no-op
        cal.scores = phase1_scores;
    } else {
        if (group_quality_.size() != phase1_scores.size())
            throw JudgeError("oracle phase2: group size mismatch");
        cal.scores = normalized_ranks(group_quality_);
    }
    JudgeTranscriptEntry entry;
    entry.phase = "phase2";
    entry.attempt = 1;
    entry.request = strfmt("oracle calibration over %zu samples",
                           phase1_scores.size());
    std::ostringstream os;
    for (std::size_t i = 0; i < cal.scores.size(); ++i)
        os << (i ? ", " : "") << cal.scores[i];
    entry.response = os.str();
    entry.accepted = true;
    transcript.push_back(entry);
    return cal;
}

std::optional<RubricScore> parse_phase1_reply(const std::string& text) {
    const std::size_t open = text.find('{');
    const std::size_t close = text.rfind('}');
    if (open == std::string::npos || close == std::string::npos || close < open)
        return std::nullopt;
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(text.substr(open, close - open + 1));
    } catch (const nlohmann::json::exception&) {
        return std::nullopt;
    }
    const char* keys[6] = {"semantic_separation", "alpha_cleanliness",
                           "background_inpainting", "feature_distribution",
                           "content_validity", "total"};
    int values[6];
    for (int i = 0; i < 6; ++i) {
        if (!doc.contains(keys[i]) || !doc[keys[i]].is_number_integer())
            return std::nullopt;
        values[i] = doc[keys[i]].get<int>();
    }
    RubricScore r = RubricScore::from_criteria(values[0], values[1], values[2],
                                               values[3], values[4]);
    // the reply's own total must match the criterion sum
    if (values[5] != r.total || !r.valid()) return std::nullopt;
    return r;
}

std::optional<std::vector<double>> parse_phase2_reply(const std::string& text,
                                                      int group_size) {
    std::vector<double> out;
    std::string token;
    std::istringstream is(text);
    while (std::getline(is, token, ',')) {
        const char* begin = token.c_str();
        char* end = nullptr;
        const double v = std::strtod(begin, &end);
        if (end == begin) return std::nullopt;
        while (*end == ' ' || *end == '\n' || *end == '\r' || *end == '\t') ++end;
        if (*end != '\0') return std::nullopt;
        if (!std::isfinite(v) || v < 0.0 || v > 1.0) return std::nullopt;
        out.push_back(v);
    }
    if (static_cast<int>(out.size()) != group_size) return std::nullopt;
    return out;
}

namespace {

const char* kSystemPrompt =
    "You are an expert image compositor evaluating layer decomposition "
    "quality. You will see an original composite image and its decomposition "
    "into separate layers. Layer 0 is ALWAYS the background flat. The "
    "remaining layers are foreground elements.\n\n"
    "Score ONLY based on what you see. Be harsh and discriminating -- give "
    "different scores to samples that genuinely differ in quality. Do NOT "
    "give identical scores to all samples. Respond ONLY with valid JSON, no "
    "other text.";

const char* kPhase1Prompt =
    "Score this {num_layers}-layer decomposition. Layer 0 is the background; "
    "layers 1+ are foreground.\n\n"
    "CRITERIA (score each 0-5):\n\n"
    "1. semantic_separation (0-5): Each foreground layer should contain ONE "
    "distinct, complete object or semantic element (e.g. a person, a car, a "
    "tree). Score 0 if a single object is arbitrarily split across multiple "
    "layers or if layers contain random crops/slices of the scene rather "
    "than meaningful elements. Score 5 if every foreground layer isolates a "
    "complete, distinct object and no object is split across layers.\n\n"
    "2. alpha_cleanliness (0-5): Foreground layers should have crisp, "
    "binary-like alpha with clean edges. Score 0 if layers show a "
    "semi-transparent haze, ghosting, colour bleed, or a milky/glazed wash "
    "over areas that should be fully transparent. Transparent regions must "
    "be FULLY transparent with zero colour residue. Score 5 if alpha masks "
    "are sharp, edges are clean, and transparent regions are completely "
    "clear with no residual colour or haze.\n\n"
    "3. background_inpainting (0-5): Layer 0 (the background) should look "
    "like a plausible complete scene with foreground objects removed and "
    "their regions filled in convincingly. Score 0 if the background is "
    "blurry, has obvious holes, smeared patches, or copy-paste artifacts "
    "where foreground objects were removed. Score 5 if the inpainted "
    "regions blend seamlessly with the surrounding background, maintaining "
    "consistent texture, lighting, and detail.\n\n"
    "4. feature_distribution (0-5): Visual content should be meaningfully "
    "spread across layers. Score 0 if most content is crammed into one "
    "layer while others are blank or near-empty. Score 5 if layers have a "
    "balanced, meaningful distribution of the scene's content.\n\n"
    "5. content_validity (0-5): Penalize blank, empty, or noise-only "
    "layers. Score 0 if most layers are blank or contain only noise/blur. "
    "Score 5 if all layers have clear, recognizable content.\n\n"
    "- total (0-25): Sum of all five scores.\n\n"
    "Return ONLY valid JSON:\n"
    "{\"semantic_separation\":X, \"alpha_cleanliness\":Y, "
    "\"background_inpainting\":Z, \"feature_distribution\":W, "
    "\"content_validity\":V, \"total\":T}";

const char* kPhase2Prompt =
    "The grid shows {G} layer-decomposition samples arranged left-to-right, "
    "top-to-bottom, labeled 0-{Gm1}.\n\n"
    "Initial individual scores: {scores_csv}\n\n"
    "Re-score each sample RELATIVE to the others. Give higher scores to "
    "better decompositions and lower to worse ones. Be discriminating -- "
    "spread the scores. Pay special attention to:\n\n"
    "- Which samples keep whole objects on single layers vs. splitting "
    "them?\n\n"
    "- Which samples have that semi-transparent glaze/ghosting vs. clean "
    "alpha?\n\n"
    "- Which samples have convincing background inpainting vs. blurry "
    "fills?\n\n"
    "Reply with ONLY {G} comma-separated decimal values in [0,1], one per "
    "sample in order:";

std::string read_text_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ConfigError("cannot read prompt template " + path);
    std::ostringstream os;
    os << f.rdbuf();
    return os.str();
}

}  // namespace

PromptTemplates PromptTemplates::defaults() {
    return {kSystemPrompt, kPhase1Prompt, kPhase2Prompt};
}

PromptTemplates PromptTemplates::load(const std::string& system_path,
                                      const std::string& phase1_path,
                                      const std::string& phase2_path) {
    PromptTemplates t;
    t.system = read_text_file(system_path);
    t.phase1 = read_text_file(phase1_path);
    t.phase2 = read_text_file(phase2_path);
    t.validate();
    return t;
}

void PromptTemplates::validate() const {
    auto need = [](const std::string& text, const char* key, const char* which) {
        if (text.find(key) == std::string::npos)
            throw ConfigError(strfmt("%s template is missing the %s placeholder",
                                     which, key));
    };
    need(phase1, "{num_layers}", "phase-1");
    need(phase2, "{G}", "phase-2");
    need(phase2, "{Gm1}", "phase-2");
    need(phase2, "{scores_csv}", "phase-2");
}

std::string fill_placeholder(std::string text, const std::string& key,
                             const std::string& value) {
    const std::string needle = "{" + key + "}";
    std::size_t pos = 0;
    while ((pos = text.find(needle, pos)) != std::string::npos) {
        text.replace(pos, needle.size(), value);
        pos += value.size();
    }
    return text;
}

RubricScore phase1_score(Judge& judge, const Raster& composite,
                         const std::vector<Raster>& white_layers,
                         const LayerStack& stack, const ToyScene* truth,
                         std::vector<JudgeTranscriptEntry>& transcript,
                         int sample_index) {
    return judge.phase1(stack, composite, white_layers, truth, sample_index,
                        transcript);
}

Judge::Calibration phase2_calibrate(Judge& judge, const Raster& grid,
                                    const std::vector<double>& phase1_scores,
                                    std::vector<JudgeTranscriptEntry>& transcript) {
    Judge::Calibration cal = judge.phase2(grid, phase1_scores, transcript);
    if (cal.scores.size() != phase1_scores.size())
        throw JudgeError("phase2 returned a wrong-sized calibration");
    for (double v : cal.scores)
        if (!(v >= 0.0 && v <= 1.0))
            throw JudgeError("phase2 returned an out-of-range calibration");
    return cal;
}

ScoredGroup score_group(Judge& judge, const std::vector<LayerStack>& stacks,
                        const ToyScene* truth, const RewardSettings& settings) {
    const int group = static_cast<int>(stacks.size());
    if (group < 1) throw JudgeError("score_group: empty group");
    judge.begin_group(group);

    ScoredGroup out;
    out.report.rubrics.resize(group);
    out.report.phase1.resize(group);
    std::vector<std::vector<JudgeTranscriptEntry>> transcripts(group);
    std::vector<Raster> composites(group);
    std::string failure;

#pragma omp parallel for schedule(dynamic) if (judge.parallel_phase1())
    for (int g = 0; g < group; ++g) {
        try {
            composites[g] = composite(stacks[g]);
            const std::vector<Raster> whites = white_layer_views(stacks[g]);
            RubricScore r = judge.phase1(stacks[g], composites[g], whites, truth,
                                         g, transcripts[g]);
            if (!r.valid()) throw JudgeError("judge returned an invalid rubric");
            out.report.rubrics[g] = r;
            out.report.phase1[g] = r.normalized();
        } catch (const std::exception& e) {
#pragma omp critical
            failure = strfmt("phase1 failed for sample %d: %s", g, e.what());
        }
    }
    for (auto& t : transcripts)
        out.report.transcript.insert(out.report.transcript.end(), t.begin(),
                                     t.end());
    if (!failure.empty()) throw JudgeError(failure);

    out.report.calibrated = settings.calibration;
    if (settings.calibration) {
        out.grid = build_grid(composites, settings.grid_cell, settings.grid_margin);
        Judge::Calibration cal = phase2_calibrate(
            judge, out.grid, out.report.phase1, out.report.transcript);
        out.report.phase2 = std::move(cal.scores);
        out.report.fallback_used = cal.fallback;
    } else {
        out.report.phase2 = out.report.phase1;
    }
    return out;
}

}  // namespace layerlab
