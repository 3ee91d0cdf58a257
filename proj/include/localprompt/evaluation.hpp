#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "localprompt/feature_store.hpp"
#include "localprompt/prompt_bank.hpp"
#include "localprompt/scoring.hpp"
#include "localprompt/trainer.hpp"

namespace lp {

// P(id > ood) + 0.5 P(id == ood), exact via mid-rank statistics.
// Throws EmptySet.
double auroc(std::span<const double> id_scores, std::span<const double> ood_scores);

// FPR on OOD at the largest observed ID score gamma with
// #(id >= gamma) / n_id >= tpr_target; no interpolation.
// Throws EmptySet, InvalidConfig (tpr_target outside (0, 1]).
double fpr_at_tpr(std::span<const double> id_scores, std::span<const double> ood_scores,
                  double tpr_target = 0.95);

// Fraction of records whose classify_id matches the label. Throws EmptySet.
double id_accuracy(const DatasetSplit& split, const PromptBank& bank, double temperature,
                   std::size_t k_eval, std::size_t jobs = 1);

struct HistogramRow {
    double bin_lo = 0.0;
    double bin_hi = 0.0;
    double id_density = 0.0;
    double ood_density = 0.0;
};

// Shared-range histograms; each side's densities are probability masses
// summing to 1. Throws EmptySet, InvalidConfig (bins == 0).
std::vector<HistogramRow> density_hist(std::span<const double> id_scores,
                                       std::span<const double> ood_scores, std::size_t bins);
void write_hist_csv(const std::filesystem::path& path, std::span<const HistogramRow> rows);

struct EvalReport {
    double auroc = 0.0;
    double fpr95 = 0.0;
    std::size_t n_id = 0;
    std::size_t n_ood = 0;
    ScoreSpec score;
    std::optional<double> id_accuracy;
};

std::vector<double> score_values(std::span<const ScoredSample> samples);

// Splits samples by is_id_truth; id_accuracy is left empty.
EvalReport evaluate_scores(std::span<const ScoredSample> samples, const ScoreSpec& spec);

// CSV columns: score_kind,k_eval,auroc,fpr95,n_id,n_ood,id_accuracy
void write_report_csv(const std::filesystem::path& path, std::span<const EvalReport> reports);

// Everything needed to train and score one configuration.
struct ExperimentData {
    DatasetSplit train;
    FeatureStore id_test;
    FeatureStore ood_test;
    Matrix global_prompts;
};

struct ExperimentResult {
    PromptBank bank;
    TrainLog log;
    EvalReport report;
};

// Subsamples to config.shots, initializes a bank from config.seed, trains,
// then scores ID and OOD test stores and fills AUROC, FPR95 and ID accuracy.
ExperimentResult train_and_evaluate(const ExperimentData& data, const TrainConfig& config,
                                    const ScoreSpec& spec, std::size_t jobs = 1);
EvalReport evaluate_bank(const ExperimentData& data, const PromptBank& bank,
                         const ScoreSpec& spec, std::size_t jobs = 1);

enum class SweepAxis { KTrain, KEval, LambdaNeg, LambdaReg, NNeg, M1, M2, Shots };

std::string_view to_string(SweepAxis axis) noexcept;
// Throws UnknownAxis.
SweepAxis parse_sweep_axis(std::string_view name);

struct SweepRow {
    SweepAxis axis = SweepAxis::KEval;
    double value = 0.0;
    std::uint64_t seed = 0;
    EvalReport report;
    double final_loss = 0.0;
};

// Training axes retrain once per value with seed base.seed + index; the
// k_eval axis trains once and rescores per value.
std::vector<SweepRow> sweep(const ExperimentData& data, const TrainConfig& base,
                            const ScoreSpec& spec, SweepAxis axis, std::span<const double> values,
                            std::size_t jobs = 1);

// CSV columns: axis,value,seed,score_kind,k_eval,auroc,fpr95,id_accuracy,final_loss
void write_sweep_csv(const std::filesystem::path& path, std::span<const SweepRow> rows);

}  // namespace lp
