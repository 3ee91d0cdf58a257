#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "localprompt/feature_store.hpp"
#include "localprompt/losses.hpp"
#include "localprompt/prompt_bank.hpp"

namespace lp {

// Defaults are the few-shot recipe: 30 epochs of plain SGD, batch 256,
// lr 2e-3 on a cosine schedule, lambda_neg 5, lambda_reg 0.5, T 1,
// k_train 50, 24 crops with 8 positives / 1 hard negative, 300 negative prompts.
struct TrainConfig {
    std::size_t shots = 16;
    std::size_t epochs = 30;
    std::size_t batch_size = 256;
    double lr0 = 2e-3;
    double lambda_neg = 5.0;
    double lambda_reg = 0.5;
    double temperature = 1.0;
    std::size_t k_train = 50;
    std::size_t m = 24;
    std::size_t m1 = 8;
    std::size_t m2 = 1;
    std::size_t n_neg = 300;
    std::uint64_t seed = 0;

    LossConfig loss_config() const { return {lambda_neg, lambda_reg, temperature, k_train}; }

    bool operator==(const TrainConfig&) const = default;
};

// Throws InvalidConfig.
void validate(const TrainConfig& config);

// Applies one key=value assignment (keys are the field names). Throws
// InvalidConfig for unknown keys or unparsable values.
void set_config_value(TrainConfig& config, std::string_view key, std::string_view value);
// Flat key=value lines; '#' starts a comment; blank lines ignored.
TrainConfig parse_config(std::string_view text, TrainConfig base = {});
TrainConfig load_config(const std::filesystem::path& path, TrainConfig base = {});
std::string format_config(const TrainConfig& config);

// lr0 * 0.5 * (1 + cos(pi * step / total_steps)). Throws StepOutOfRange.
double cosine_lr(std::size_t step, std::size_t total_steps, double lr0);

struct EpochRecord {
    std::size_t epoch = 0;
    LossBreakdown loss;  // mean over the epoch's batches, before each update
    double lr = 0.0;     // learning rate of the epoch's first step
    double seconds = 0.0;
};

struct TrainLog {
    std::vector<EpochRecord> epochs;
};

struct TrainResult {
    PromptBank bank;
    TrainLog log;
};

// Global-prompt-guided crop selection for every training image (fixed for
// the whole run since the global prompts are frozen).
std::vector<AugmentedBatchItem> select_training_items(const FeatureStore& store,
                                                      const PromptBank& bank,
                                                      const TrainConfig& config);

// One SGD step: prompt -= lr * gradient, rounded to binary32 storage.
void apply_sgd(PromptBank& bank, const GradientBank& grad, double lr);

// Throws MissingCropSets, ShapeMismatch, InvalidConfig.
TrainResult train(const DatasetSplit& split, const PromptBank& bank, const TrainConfig& config,
                  std::size_t jobs = 1);

// Loss of the whole training set for a bank, without updating it.
LossBreakdown training_loss(const DatasetSplit& split, const PromptBank& bank,
                            const TrainConfig& config);

// CSV columns: epoch,l_pos,l_neg,l_reg,total,lr,seconds
void write_log_csv(const std::filesystem::path& path, const TrainLog& log);

}  // namespace lp
