#pragma once

// Inference-time OOD scores and the local-aware ID classifier.
//   MCM   - max softmax over global-prompt similarities of the global feature
//   GLMCM - MCM + best softmax over (region, class) against the global prompts
//   RMCM  - MCM + top-k mean over regions of the best ID-class probability,
//           with local prompts in the numerator and local + negative prompts
//           in the denominator

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "localprompt/feature_store.hpp"
#include "localprompt/prompt_bank.hpp"

namespace lp {

enum class ScoreKind { Mcm, GlMcm, RMcm };

std::string_view to_string(ScoreKind kind) noexcept;
ScoreKind parse_score_kind(std::string_view text);

struct ScoreSpec {
    ScoreKind kind = ScoreKind::RMcm;
    double temperature = 1.0;
    std::size_t k_eval = 10;
    // RMCM only: top-k over all (region, class) ratios instead of per-region best class.
    bool joint_topk = false;
};

double score_mcm(const FeatureRecord& rec, const PromptBank& bank, double temperature);
double score_glmcm(const FeatureRecord& rec, const PromptBank& bank, double temperature);
double score_rmcm(const FeatureRecord& rec, const PromptBank& bank, double temperature,
                  std::size_t k_eval, bool joint_topk = false);

// argmax_i cos(z^g, global_i) * topk_mean_h exp(cos(z^l_h, local_i) / T),
// lowest index on ties.
std::int32_t classify_id(const FeatureRecord& rec, const PromptBank& bank, double temperature,
                         std::size_t k_eval);

double score(const FeatureRecord& rec, const PromptBank& bank, const ScoreSpec& spec);

struct ScoredSample {
    std::string image_id;
    double score = 0.0;
    std::int32_t predicted_class = 0;
    bool is_id_truth = false;

    bool operator==(const ScoredSample&) const = default;
};

std::vector<ScoredSample> score_store(const FeatureStore& store, const PromptBank& bank,
                                      const ScoreSpec& spec, bool is_id_truth,
                                      std::size_t jobs = 1);

// true = ID (score >= gamma).
std::vector<bool> discriminate(std::span<const ScoredSample> scores, double gamma);

// CSV columns: image_id,score_kind,score,predicted_class,is_id_truth
void write_scores_csv(const std::filesystem::path& path, ScoreKind kind,
                      std::span<const ScoredSample> samples);

struct ScoreTable {
    ScoreKind kind = ScoreKind::Mcm;
    std::vector<ScoredSample> samples;
};
ScoreTable read_scores_csv(const std::filesystem::path& path);

}  // namespace lp
