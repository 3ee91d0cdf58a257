#include "localprompt/augmentation.hpp"

#include <algorithm>
#include <numeric>

#include "localprompt/error.hpp"

namespace lp {

std::vector<std::size_t> rank_candidates(const CropCandidateSet& crops, const PromptBank& bank) {
    if (crops.label < 0 || static_cast<std::size_t>(crops.label) >= bank.n_classes()) {
        fail(ErrorCode::InvalidLabel, "crop set '" + crops.parent_image_id + "': label out of range");
    }
    const auto prompt = bank.global.row(static_cast<std::size_t>(crops.label));
    std::vector<double> sims(crops.candidates.size());
    for (std::size_t i = 0; i < sims.size(); ++i) {
        sims[i] = cosine_sim(crops.candidates[i].global, prompt);
    }
    std::vector<std::size_t> order(sims.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return sims[a] > sims[b]; });
    return order;
}

AugmentedBatchItem select_augmented(const CropCandidateSet& crops, const PromptBank& bank,
                                    std::size_t m1, std::size_t m2) {
    const std::size_t m = crops.candidates.size();
    if (m1 + m2 > m) {
        fail(ErrorCode::NotEnoughCandidates, "crop set '" + crops.parent_image_id + "' has " +
                                                 std::to_string(m) + " candidates, need m1+m2=" +
                                                 std::to_string(m1 + m2));
    }
    const auto order = rank_candidates(crops, bank);
    AugmentedBatchItem item;
    item.label = crops.label;
    for (std::size_t i = 0; i < m1; ++i) {
        item.positives.push_back(crops.candidates[order[i]]);
    }
    for (std::size_t i = 0; i < m2; ++i) {
        item.negatives.push_back(crops.candidates[order[m - 1 - i]]);
    }
    return item;
}

}  // namespace lp
