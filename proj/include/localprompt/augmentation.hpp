#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "localprompt/feature_store.hpp"
#include "localprompt/prompt_bank.hpp"

namespace lp {

struct AugmentedBatchItem {
    std::vector<FeatureRecord> positives;  // most similar to the class prompt, best first
    std::vector<FeatureRecord> negatives;  // least similar, least similar first
    std::int32_t label = 0;
};

// Candidate indices ranked by cosine(candidate.global, global_prompts[label]),
// most similar first; ties keep candidate order.
std::vector<std::size_t> rank_candidates(const CropCandidateSet& crops, const PromptBank& bank);

// Top m1 ranked candidates become positives, bottom m2 hard negatives.
// Throws NotEnoughCandidates when m1 + m2 exceeds the candidate count and
// InvalidLabel when the set's label has no global prompt.
AugmentedBatchItem select_augmented(const CropCandidateSet& crops, const PromptBank& bank,
                                    std::size_t m1, std::size_t m2);

}  // namespace lp
