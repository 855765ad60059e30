// SPDX-License-Identifier: Apache-2.0
#include "layerlab/remote_judge.hpp"

#include <cstdlib>
#include <sstream>

#include <httplib.h>
#include <json.hpp>

#include "layerlab/common.hpp"

namespace layerlab {

RemoteJudge::RemoteJudge(JudgeEndpoint endpoint) : ep_(std::move(endpoint)) {
    ep_.templates.validate();
    if (ep_.max_retries < 0) throw ConfigError("judge retries must be >= 0");
    const std::size_t scheme = ep_.url.find("://");
    if (scheme == std::string::npos)
        throw ConfigError("judge url must include a scheme: " + ep_.url);
    const std::size_t slash = ep_.url.find('/', scheme + 3);
    if (slash == std::string::npos) {
        base_ = ep_.url;
        path_ = "/";
    } else {
        base_ = ep_.url.substr(0, slash);
        path_ = ep_.url.substr(slash);
    }
}

std::optional<std::string> RemoteJudge::post(
    const std::string& prompt, const std::vector<const Raster*>& images,
    std::string* error) const {
    nlohmann::json body;
    body["model"] = ep_.model;
    body["system"] = ep_.templates.system;
    body["prompt"] = prompt;
    auto& imgs = body["images"] = nlohmann::json::array();
    for (const Raster* r : images)
        imgs.push_back({{"png_base64", base64_encode(png_bytes(*r))}});

    httplib::Client client(base_);
    client.set_connection_timeout(static_cast<time_t>(ep_.timeout_s),
                                  static_cast<time_t>(ep_.timeout_s * 1e6) % 1000000);
    client.set_read_timeout(static_cast<time_t>(ep_.timeout_s), 0);
    httplib::Headers headers;
    if (const char* key = std::getenv(ep_.api_key_env.c_str()); key && *key)
        headers.emplace("Authorization", std::string("Bearer ") + key);

    auto res = client.Post(path_, headers, body.dump(), "application/json");
    if (!res) {
        *error = "transport error: " + httplib::to_string(res.error());
        return std::nullopt;
    }
    if (res->status != 200) {
        *error = strfmt("http status %d", res->status);
        return std::nullopt;
    }
    return res->body;
}

RubricScore RemoteJudge::phase1(const LayerStack& stack, const Raster& composite,
                                const std::vector<Raster>& white_layers,
                                const ToyScene* truth, int sample_index,
                                std::vector<JudgeTranscriptEntry>& transcript) {
    (void)truth;
    const std::string prompt = fill_placeholder(
        ep_.templates.phase1, "num_layers", std::to_string(stack.layers));
    std::vector<const Raster*> images{&composite};
    for (const Raster& w : white_layers) images.push_back(&w);

    std::string last_error = "no attempts made";
    for (int attempt = 1; attempt <= ep_.max_retries + 1; ++attempt) {
        JudgeTranscriptEntry entry;
        entry.phase = "phase1";
        entry.sample = sample_index;
        entry.attempt = attempt;
        entry.request = prompt;
        std::string error;
        auto body = post(prompt, images, &error);
        if (!body) {
            entry.response = error;
            transcript.push_back(entry);
            last_error = error;
            continue;
        }
        entry.response = *body;
        if (auto parsed = parse_phase1_reply(*body)) {
            entry.accepted = true;
            transcript.push_back(entry);
            return *parsed;
        }
        transcript.push_back(entry);
        last_error = "malformed rubric reply";
    }
    throw JudgeError(strfmt("phase1 scoring failed after %d attempts: %s",
                            ep_.max_retries + 1, last_error.c_str()));
}

Judge::Calibration RemoteJudge::phase2(
    const Raster& grid, const std::vector<double>& phase1_scores,
    std::vector<JudgeTranscriptEntry>& transcript) {
    const int group = static_cast<int>(phase1_scores.size());
    std::ostringstream csv;
    csv.setf(std::ios::fixed);
    csv.precision(2);
    for (int i = 0; i < group; ++i) csv << (i ? ", " : "") << phase1_scores[i];
    std::string prompt = ep_.templates.phase2;
    prompt = fill_placeholder(prompt, "G", std::to_string(group));
    prompt = fill_placeholder(prompt, "Gm1", std::to_string(group - 1));
    prompt = fill_placeholder(prompt, "scores_csv", csv.str());

    for (int attempt = 1; attempt <= ep_.max_retries + 1; ++attempt) {
        JudgeTranscriptEntry entry;
        entry.phase = "phase2";
        entry.attempt = attempt;
        entry.request = prompt;
        std::string error;
        auto body = post(prompt, {&grid}, &error);
        if (!body) {
            entry.response = error;
            transcript.push_back(entry);
            continue;
        }
        entry.response = *body;
        if (auto parsed = parse_phase2_reply(*body, group)) {
            entry.accepted = true;
            transcript.push_back(entry);
            return {*parsed, false};
        }
        transcript.push_back(entry);
    }
    // persistent parse failure: fall back to the Phase-1 scores
    JudgeTranscriptEntry note;
    note.phase = "phase2";
    note.attempt = ep_.max_retries + 1;
    note.request = "(fallback)";
    note.response = "calibration failed; using phase-1 scores";
    transcript.push_back(note);
    return {phase1_scores, true};
}

}  // namespace layerlab
