// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

#include "layerlab/judge.hpp"

namespace layerlab {

// A scoring endpoint speaking structured text over HTTP: one POST per
// scoring call with the prompt and base-64 PNG attachments, the reply body
// is free text handled by the reply validators. The bearer credential is
// read from the environment, never from config files.
struct JudgeEndpoint {
    std::string url;    // e.g. http://127.0.0.1:8700/score
    std::string model;  // opaque identifier forwarded with each request
    double timeout_s = 30.0;
    int max_retries = 3;
    std::string api_key_env = "JUDGE_API_KEY";
    PromptTemplates templates = PromptTemplates::defaults();
};

class RemoteJudge : public Judge {
  public:
    explicit RemoteJudge(JudgeEndpoint endpoint);

    RubricScore phase1(const LayerStack& stack, const Raster& composite,
                       const std::vector<Raster>& white_layers,
                       const ToyScene* truth, int sample_index,
                       std::vector<JudgeTranscriptEntry>& transcript) override;
    Calibration phase2(const Raster& grid,
                       const std::vector<double>& phase1_scores,
                       std::vector<JudgeTranscriptEntry>& transcript) override;

    const JudgeEndpoint& endpoint() const { return ep_; }

  private:
    // Returns the reply body or an empty optional with `error` filled.
    std::optional<std::string> post(const std::string& prompt,
                                    const std::vector<const Raster*>& images,
                                    std::string* error) const;

    JudgeEndpoint ep_;
    std::string base_;  // scheme://host:port
    std::string path_;
};

}  // namespace layerlab
