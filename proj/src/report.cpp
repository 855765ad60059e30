// SPDX-License-Identifier: Apache-2.0
#include "layerlab/report.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

#include "layerlab/common.hpp"

namespace layerlab {

namespace {

using nlohmann::json;

std::string fmt_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

std::ofstream open_append(const std::filesystem::path& path) {
    if (path.has_parent_path())
        std::filesystem::create_directories(path.parent_path());
    std::ofstream f(path, std::ios::app);
    if (!f) throw ConfigError("cannot append to " + path.string());
    return f;
}

json aggregate_json(const Aggregate& a) {
    return json{{"mean", a.mean}, {"std", a.stdev}};
}

Aggregate aggregate_from(const json& j) {
    return Aggregate{j.at("mean").get<double>(), j.at("std").get<double>()};
}

}  // namespace

void append_metrics_row(const std::filesystem::path& log,
                        const RoundMetrics& row) {
    json j{{"round", row.round},
           {"reward_mean", row.reward_mean},
           {"reward_std", row.reward_std},
           {"ratio_mean", row.ratio_mean},
           {"clip_frac", row.clip_frac},
           {"kl", row.kl},
           {"loss", row.loss},
           {"ratio_std_per_step", row.ratio_std_per_step}};
    open_append(log) << j.dump() << "\n";
}

std::string metrics_csv(const std::vector<RoundMetrics>& rows) {
    std::ostringstream os;
    os << "round,reward_mean,reward_std,ratio_mean,clip_frac,kl,loss,"
          "ratio_std_per_step\n";
    for (const RoundMetrics& r : rows) {
        os << r.round << ',' << fmt_double(r.reward_mean) << ','
           << fmt_double(r.reward_std) << ',' << fmt_double(r.ratio_mean) << ','
           << fmt_double(r.clip_frac) << ',' << fmt_double(r.kl) << ','
           << fmt_double(r.loss) << ',';
        for (std::size_t i = 0; i < r.ratio_std_per_step.size(); ++i)
            os << (i ? ";" : "") << fmt_double(r.ratio_std_per_step[i]);
        os << "\n";
    }
    return os.str();
}

namespace {

std::vector<RoundMetrics> parse_metrics_csv(std::istream& in) {
    std::vector<RoundMetrics> rows;
    std::string line;
    std::getline(in, line);  // header
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream ls(line);
        std::string field;
        RoundMetrics r;
        std::getline(ls, field, ',');
        r.round = std::stoi(field);
        std::getline(ls, field, ',');
        r.reward_mean = std::stod(field);
        std::getline(ls, field, ',');
        r.reward_std = std::stod(field);
        std::getline(ls, field, ',');
        r.ratio_mean = std::stod(field);
        std::getline(ls, field, ',');
        r.clip_frac = std::stod(field);
        std::getline(ls, field, ',');
        r.kl = std::stod(field);
        std::getline(ls, field, ',');
        r.loss = std::stod(field);
        if (std::getline(ls, field)) {
            std::istringstream ss(field);
            std::string part;
            while (std::getline(ss, part, ';'))
                if (!part.empty()) r.ratio_std_per_step.push_back(std::stod(part));
        }
        rows.push_back(std::move(r));
    }
    return rows;
}

}  // namespace

std::vector<RoundMetrics> load_metrics_log(const std::filesystem::path& log) {
    std::ifstream f(log);
    if (!f) throw ConfigError("cannot read metrics log " + log.string());
    std::string first;
    std::getline(f, first);
    f.seekg(0);
    if (first.rfind("round,", 0) == 0) return parse_metrics_csv(f);

    std::vector<RoundMetrics> rows;
    std::string line;
    while (std::getline(f, line)) {
        if (line.empty()) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::exception& e) {
            throw ConfigError(strfmt("bad metrics line: %s", e.what()));
        }
        RoundMetrics r;
        r.round = j.at("round").get<int>();
        r.reward_mean = j.at("reward_mean").get<double>();
        r.reward_std = j.at("reward_std").get<double>();
        r.ratio_mean = j.value("ratio_mean", 1.0);
        r.clip_frac = j.at("clip_frac").get<double>();
        r.kl = j.at("kl").get<double>();
        r.loss = j.at("loss").get<double>();
        r.ratio_std_per_step =
            j.value("ratio_std_per_step", std::vector<double>{});
        rows.push_back(std::move(r));
    }
    return rows;
}

void append_eval_row(const std::filesystem::path& log, int round,
                     const EvalSummary& summary) {
    json j{{"round", round},
           {"n", summary.n},
           {"bad_layers", aggregate_json(summary.bad_layers)},
           {"distrib", aggregate_json(summary.distrib)},
           {"layer0", aggregate_json(summary.layer0)},
           {"ssim", aggregate_json(summary.ssim)},
           {"best_match", aggregate_json(summary.best_match)}};
    open_append(log) << j.dump() << "\n";
}

std::vector<EvalLogRow> load_eval_log(const std::filesystem::path& log) {
    std::ifstream f(log);
    if (!f) throw ConfigError("cannot read eval log " + log.string());
    std::vector<EvalLogRow> rows;
    std::string line;
    while (std::getline(f, line)) {
        if (line.empty()) continue;
        json j = json::parse(line);
        EvalLogRow r;
        r.round = j.at("round").get<int>();
        r.summary.n = j.at("n").get<int>();
        r.summary.bad_layers = aggregate_from(j.at("bad_layers"));
        r.summary.distrib = aggregate_from(j.at("distrib"));
        r.summary.layer0 = aggregate_from(j.at("layer0"));
        r.summary.ssim = aggregate_from(j.at("ssim"));
        r.summary.best_match = aggregate_from(j.at("best_match"));
        rows.push_back(std::move(r));
    }
    return rows;
}

void write_eval_report(const std::filesystem::path& jsonl,
                       const std::filesystem::path& csv,
                       const HeldOutEval& eval) {
    {
        std::ofstream f(jsonl);
        if (!f) throw ConfigError("cannot write " + jsonl.string());
        for (const EvalRecord& r : eval.records) {
            json j{{"seed", r.seed},          {"layers", r.layer_count},
                   {"bad_layers", r.bad_layers}, {"distrib", r.distrib},
                   {"layer0", r.layer0},      {"ssim", r.ssim},
                   {"best_match_mean", r.best_match_mean},
                   {"best_match_slots", r.best_match_slots}};
            f << j.dump() << "\n";
        }
        json agg{{"aggregate",
                  json{{"n", eval.summary.n},
                       {"bad_layers", aggregate_json(eval.summary.bad_layers)},
                       {"distrib", aggregate_json(eval.summary.distrib)},
                       {"layer0", aggregate_json(eval.summary.layer0)},
                       {"ssim", aggregate_json(eval.summary.ssim)},
                       {"best_match", aggregate_json(eval.summary.best_match)}}}};
        f << agg.dump() << "\n";
    }
    {
        std::ofstream f(csv);
        if (!f) throw ConfigError("cannot write " + csv.string());
        f << "seed,layers,bad_layers,distrib,layer0,ssim,best_match_mean\n";
        for (const EvalRecord& r : eval.records) {
            f << r.seed << ',' << r.layer_count << ',' << r.bad_layers << ','
              << fmt_double(r.distrib) << ',' << fmt_double(r.layer0) << ','
              << fmt_double(r.ssim) << ',' << fmt_double(r.best_match_mean)
              << "\n";
        }
    }
}

BandSeries reward_series(const std::vector<RoundMetrics>& rows) {
    BandSeries s;
    s.name = "reward";
    for (const RoundMetrics& r : rows) {
        s.x.push_back(r.round);
        s.mean.push_back(r.reward_mean);
        s.stdev.push_back(r.reward_std);
    }
    return s;
}

std::vector<BandSeries> eval_series(const std::vector<EvalLogRow>& rows) {
    BandSeries bad{"bad_layers", {}, {}, {}};
    BandSeries distrib{"distribution_evenness", {}, {}, {}};
    BandSeries layer0{"layer0_quality", {}, {}, {}};
    BandSeries sim{"ssim", {}, {}, {}};
    for (const EvalLogRow& r : rows) {
        bad.x.push_back(r.round);
        bad.mean.push_back(r.summary.bad_layers.mean);
        bad.stdev.push_back(r.summary.bad_layers.stdev);
        distrib.x.push_back(r.round);
        distrib.mean.push_back(r.summary.distrib.mean);
        distrib.stdev.push_back(r.summary.distrib.stdev);
        layer0.x.push_back(r.round);
        layer0.mean.push_back(r.summary.layer0.mean);
        layer0.stdev.push_back(r.summary.layer0.stdev);
        sim.x.push_back(r.round);
        sim.mean.push_back(r.summary.ssim.mean);
        sim.stdev.push_back(r.summary.ssim.stdev);
    }
    return {bad, distrib, layer0, sim};
}

namespace {

constexpr int kPanelW = 640, kPanelH = 180, kPad = 40;

void render_panel(std::ostringstream& os, const BandSeries& s, int panel) {
    if (s.x.empty()) return;
    double xmin = s.x.front(), xmax = s.x.back();
    if (xmax == xmin) xmax = xmin + 1.0;
    double ymin = 1e300, ymax = -1e300;
    for (std::size_t i = 0; i < s.x.size(); ++i) {
        ymin = std::min(ymin, s.mean[i] - s.stdev[i]);
        ymax = std::max(ymax, s.mean[i] + s.stdev[i]);
    }
    if (ymax == ymin) {
        ymax += 0.5;
        ymin -= 0.5;
    }
    const int top = panel * (kPanelH + kPad) + kPad;
    auto sx = [&](double x) {
        return kPad + (x - xmin) / (xmax - xmin) * (kPanelW - 2 * kPad);
    };
    auto sy = [&](double y) {
        return top + (ymax - y) / (ymax - ymin) * (kPanelH - kPad);
    };
    os << "<text x=\"" << kPad << "\" y=\"" << top - 6 << "\" font-size=\"12\">"
       << s.name << "</text>\n";
    // band polygon: upper edge left to right, lower edge back
    os << "<polygon fill=\"#9ecae1\" fill-opacity=\"0.5\" stroke=\"none\" points=\"";
    for (std::size_t i = 0; i < s.x.size(); ++i)
        os << sx(s.x[i]) << ',' << sy(s.mean[i] + s.stdev[i]) << ' ';
    for (std::size_t i = s.x.size(); i-- > 0;)
        os << sx(s.x[i]) << ',' << sy(s.mean[i] - s.stdev[i]) << ' ';
    os << "\"/>\n";
    os << "<polyline fill=\"none\" stroke=\"#08519c\" stroke-width=\"1.5\" points=\"";
    for (std::size_t i = 0; i < s.x.size(); ++i)
        os << sx(s.x[i]) << ',' << sy(s.mean[i]) << ' ';
    os << "\"/>\n";
    os << "<line x1=\"" << kPad << "\" y1=\"" << top + kPanelH - kPad
       << "\" x2=\"" << kPanelW - kPad << "\" y2=\"" << top + kPanelH - kPad
       << "\" stroke=\"#444\"/>\n";
}

}  // namespace

std::string plot_svg(const std::vector<BandSeries>& series) {
    if (series.empty()) throw ConfigError("plot: nothing to draw");
    std::ostringstream os;
    const int height = static_cast<int>(series.size()) * (kPanelH + kPad) + kPad;
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kPanelW
       << "\" height=\"" << height << "\">\n";
    int panel = 0;
    for (const BandSeries& s : series) render_panel(os, s, panel++);
    os << "</svg>\n";
    return os.str();
}

void write_transcript(const std::filesystem::path& path, int round,
                      const GroupReport& report, const std::string& grid_file) {
    json entries = json::array();
    for (const JudgeTranscriptEntry& e : report.transcript) {
        entries.push_back(json{{"phase", e.phase},
                               {"sample", e.sample},
                               {"attempt", e.attempt},
                               {"request", e.request},
                               {"response", e.response},
                               {"accepted", e.accepted}});
    }
    json j{{"round", round},
           {"phase1", report.phase1},
           {"phase2", report.phase2},
           {"calibrated", report.calibrated},
           {"fallback_used", report.fallback_used},
           {"grid_image", grid_file},
           {"exchanges", entries}};
    if (path.has_parent_path())
        std::filesystem::create_directories(path.parent_path());
    std::ofstream f(path);
    if (!f) throw ConfigError("cannot write transcript " + path.string());
    f << j.dump(2) << "\n";
}

}  // namespace layerlab
