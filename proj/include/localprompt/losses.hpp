#pragma once

// Regional regularization losses over local token features:
//   L_pos   - top-k local evidence of the true class against all local and
//             negative prompts (positive crops)
//   L_neg   - share of evidence captured by negative prompts (hard-negative crops)
//   L_reg   - mean pairwise cosine similarity among negative prompts
//   L_total = L_pos + lambda_neg * L_neg + lambda_reg * L_reg
// "Evidence" of a prompt is the sum over the k best tokens of exp(cos/T).

#include <cstddef>
#include <cstdint>
#include <span>

#include "localprompt/augmentation.hpp"
#include "localprompt/numerics.hpp"
#include "localprompt/prompt_bank.hpp"

namespace lp {

struct LossConfig {
    double lambda_neg = 5.0;
    double lambda_reg = 0.5;
    double temperature = 1.0;
    std::size_t k = 50;
};

struct LossBreakdown {
    double l_pos = 0.0;
    double l_neg = 0.0;
    double l_reg = 0.0;
    double total = 0.0;
    double lambda_neg = 0.0;
    double lambda_reg = 0.0;
};

double class_evidence(const Matrix& locals, std::span<const double> prompt, std::size_t k,
                      double temperature);

double loss_pos(const Matrix& locals, std::int32_t label, const PromptBank& bank, std::size_t k,
                double temperature);

// Throws NoNegativePrompts when the bank has none.
double loss_neg(const Matrix& neg_locals, const PromptBank& bank, std::size_t k,
                double temperature);

// Throws TooFewNegativePrompts when the bank has fewer than two.
double loss_reg(const PromptBank& bank);

// Means over all positive crops and over all negative crops of the batch.
// Terms that need negative prompts contribute zero when the bank has too few
// of them (L_neg needs one, L_reg two). Throws EmptyInput on an empty batch.
LossBreakdown loss_total(std::span<const AugmentedBatchItem> batch, const PromptBank& bank,
                         const LossConfig& config);

// Exact gradient of loss_total with the top-k supports held fixed.
GradientBank grad_total(std::span<const AugmentedBatchItem> batch, const PromptBank& bank,
                        const LossConfig& config);

struct LossAndGradient {
    LossBreakdown loss;
    GradientBank grad;
};

// Both at once; items may be evaluated on `jobs` threads. The reduction runs
// in item order, so the result is bit-identical for every value of jobs.
LossAndGradient loss_and_grad(std::span<const AugmentedBatchItem> batch, const PromptBank& bank,
                              const LossConfig& config, std::size_t jobs = 1);

}  // namespace lp
