#include "localprompt/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <utility>

#include "localprompt/error.hpp"
#include "localprompt/parallel.hpp"

namespace lp {

namespace {

void require_nonempty(std::span<const double> a, std::span<const double> b, const char* what) {
    if (a.empty() || b.empty()) {
        fail(ErrorCode::EmptySet, std::string(what) + ": ID and OOD score sets must be nonempty");
    }
}

std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

}  // namespace

double auroc(std::span<const double> id_scores, std::span<const double> ood_scores) {
    require_nonempty(id_scores, ood_scores, "auroc");
    std::vector<std::pair<double, bool>> all;
    all.reserve(id_scores.size() + ood_scores.size());
    for (double s : id_scores) all.emplace_back(s, true);
    for (double s : ood_scores) all.emplace_back(s, false);
    std::sort(all.begin(), all.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });

    // Twice the mid-rank of a tie group occupying 1-based ranks a+1..b is a+1+b,
    // an integer, so the Mann-Whitney statistic stays exact.
    std::uint64_t twice_rank_sum = 0;
    for (std::size_t a = 0; a < all.size();) {
        std::size_t b = a + 1;
        while (b < all.size() && all[b].first == all[a].first) {
            ++b;
        }
        const std::uint64_t twice_mid = a + 1 + b;
        for (std::size_t i = a; i < b; ++i) {
            if (all[i].second) {
                twice_rank_sum += twice_mid;
            }
        }
        a = b;
    }
    const std::uint64_t n_id = id_scores.size();
    const std::uint64_t n_ood = ood_scores.size();
    const std::uint64_t twice_u = twice_rank_sum - n_id * (n_id + 1);
    return static_cast<double>(twice_u) / (2.0 * static_cast<double>(n_id) * static_cast<double>(n_ood));
}

double fpr_at_tpr(std::span<const double> id_scores, std::span<const double> ood_scores,
                  double tpr_target) {
    require_nonempty(id_scores, ood_scores, "fpr_at_tpr");
    if (!(tpr_target > 0.0 && tpr_target <= 1.0)) {
        fail(ErrorCode::InvalidConfig, "fpr_at_tpr: tpr_target must lie in (0, 1]");
    }
    std::vector<double> id(id_scores.begin(), id_scores.end());
    std::sort(id.begin(), id.end(), std::greater<>());
    const auto n_id = static_cast<double>(id.size());

    double gamma = id.back();
    for (std::size_t j = 0; j < id.size();) {
        std::size_t end = j + 1;
        while (end < id.size() && id[end] == id[j]) {
            ++end;
        }
        if (static_cast<double>(end) / n_id >= tpr_target) {
            gamma = id[j];
            break;
        }
        j = end;
    }
    std::size_t false_pos = 0;
    for (double s : ood_scores) {
        if (s >= gamma) {
            ++false_pos;
        }
    }
    return static_cast<double>(false_pos) / static_cast<double>(ood_scores.size());
}

double id_accuracy(const DatasetSplit& split, const PromptBank& bank, double temperature,
                   std::size_t k_eval, std::size_t jobs) {
    const auto& records = split.store.records;
    if (records.empty()) {
        fail(ErrorCode::EmptySet, "id_accuracy: no records");
    }
    std::vector<char> correct(records.size());
    parallel_for(records.size(), jobs, [&](std::size_t i) {
        correct[i] = classify_id(records[i], bank, temperature, k_eval) == records[i].label;
    });
    const auto hits = std::count(correct.begin(), correct.end(), char{1});
    return static_cast<double>(hits) / static_cast<double>(records.size());
}

std::vector<HistogramRow> density_hist(std::span<const double> id_scores,
                                       std::span<const double> ood_scores, std::size_t bins) {
    require_nonempty(id_scores, ood_scores, "density_hist");
    if (bins == 0) {
        fail(ErrorCode::InvalidConfig, "density_hist: bins must be >= 1");
    }
    const auto [id_lo, id_hi] = std::minmax_element(id_scores.begin(), id_scores.end());
    const auto [ood_lo, ood_hi] = std::minmax_element(ood_scores.begin(), ood_scores.end());
    const double lo = std::min(*id_lo, *ood_lo);
    const double hi = std::max(*id_hi, *ood_hi);
    const double width = (hi - lo) / static_cast<double>(bins);

    std::vector<HistogramRow> rows(bins);
    for (std::size_t b = 0; b < bins; ++b) {
        rows[b].bin_lo = lo + width * static_cast<double>(b);
        rows[b].bin_hi = b + 1 == bins ? hi : lo + width * static_cast<double>(b + 1);
    }
    const auto bin_of = [&](double x) -> std::size_t {
        if (width <= 0.0) {
            return 0;
        }
        const double pos = (x - lo) / width;
        return std::min(bins - 1, static_cast<std::size_t>(pos));
    };
    for (double s : id_scores) rows[bin_of(s)].id_density += 1.0;
    for (double s : ood_scores) rows[bin_of(s)].ood_density += 1.0;
    for (auto& r : rows) {
        r.id_density /= static_cast<double>(id_scores.size());
        r.ood_density /= static_cast<double>(ood_scores.size());
    }
    return rows;
}

void write_hist_csv(const std::filesystem::path& path, std::span<const HistogramRow> rows) {
    std::ofstream out(path, std::ios::trunc);
    out << "bin_lo,bin_hi,id_density,ood_density\n";
    for (const auto& r : rows) {
        out << fmt(r.bin_lo) << ',' << fmt(r.bin_hi) << ',' << fmt(r.id_density) << ','
            << fmt(r.ood_density) << '\n';
    }
    if (!out) {
        fail(ErrorCode::IoFailure, "cannot write " + path.string());
    }
}

std::vector<double> score_values(std::span<const ScoredSample> samples) {
    std::vector<double> v;
    v.reserve(samples.size());
    for (const auto& s : samples) {
        v.push_back(s.score);
    }
    return v;
}

EvalReport evaluate_scores(std::span<const ScoredSample> samples, const ScoreSpec& spec) {
    std::vector<double> id, ood;
    for (const auto& s : samples) {
        (s.is_id_truth ? id : ood).push_back(s.score);
    }
    EvalReport r;
    r.auroc = auroc(id, ood);
    r.fpr95 = fpr_at_tpr(id, ood, 0.95);
    r.n_id = id.size();
    r.n_ood = ood.size();
    r.score = spec;
    return r;
}

void write_report_csv(const std::filesystem::path& path, std::span<const EvalReport> reports) {
    std::ofstream out(path, std::ios::trunc);
    out << "score_kind,k_eval,auroc,fpr95,n_id,n_ood,id_accuracy\n";
    for (const auto& r : reports) {
        out << to_string(r.score.kind) << ',' << r.score.k_eval << ',' << fmt(r.auroc) << ','
            << fmt(r.fpr95) << ',' << r.n_id << ',' << r.n_ood << ','
            << (r.id_accuracy ? fmt(*r.id_accuracy) : std::string()) << '\n';
    }
    if (!out) {
        fail(ErrorCode::IoFailure, "cannot write " + path.string());
    }
}

EvalReport evaluate_bank(const ExperimentData& data, const PromptBank& bank,
                         const ScoreSpec& spec, std::size_t jobs) {
    auto samples = score_store(data.id_test, bank, spec, true, jobs);
    const auto ood = score_store(data.ood_test, bank, spec, false, jobs);
    samples.insert(samples.end(), ood.begin(), ood.end());
    EvalReport report = evaluate_scores(samples, spec);
    report.id_accuracy =
        id_accuracy({SplitRole::IdTest, data.id_test}, bank, spec.temperature, spec.k_eval, jobs);
    return report;
}

ExperimentResult train_and_evaluate(const ExperimentData& data, const TrainConfig& config,
                                    const ScoreSpec& spec, std::size_t jobs) {
    validate(config);
    const DatasetSplit train_split{SplitRole::IdTrain,
                                   few_shot_subsample(data.train.store, config.shots, config.seed)};
    const PromptBank init = init_bank(data.global_prompts, data.train.store.n_classes,
                                      data.train.store.d, config.n_neg, config.seed);
    auto trained = train(train_split, init, config, jobs);
    ExperimentResult out{std::move(trained.bank), std::move(trained.log), {}};
    out.report = evaluate_bank(data, out.bank, spec, jobs);
    return out;
}

std::string_view to_string(SweepAxis axis) noexcept {
    switch (axis) {
        case SweepAxis::KTrain: return "k_train";
        case SweepAxis::KEval: return "k_eval";
        case SweepAxis::LambdaNeg: return "lambda_neg";
        case SweepAxis::LambdaReg: return "lambda_reg";
        case SweepAxis::NNeg: return "n_neg";
        case SweepAxis::M1: return "m1";
        case SweepAxis::M2: return "m2";
        case SweepAxis::Shots: return "shots";
    }
    return "unknown";
}

SweepAxis parse_sweep_axis(std::string_view name) {
    for (auto axis : {SweepAxis::KTrain, SweepAxis::KEval, SweepAxis::LambdaNeg,
                      SweepAxis::LambdaReg, SweepAxis::NNeg, SweepAxis::M1, SweepAxis::M2,
                      SweepAxis::Shots}) {
        if (name == to_string(axis)) {
            return axis;
        }
    }
    if (name == "N_neg") {
        return SweepAxis::NNeg;
    }
    fail(ErrorCode::UnknownAxis, "unknown sweep axis '" + std::string(name) + "'");
}

namespace {

std::size_t as_count(SweepAxis axis, double v) {
    if (!(v >= 0.0) || std::floor(v) != v) {
        fail(ErrorCode::InvalidConfig, "sweep value " + fmt(v) + " is not a count for axis " +
                                           std::string(to_string(axis)));
    }
    return static_cast<std::size_t>(v);
}

}  // namespace

std::vector<SweepRow> sweep(const ExperimentData& data, const TrainConfig& base,
                            const ScoreSpec& spec, SweepAxis axis, std::span<const double> values,
                            std::size_t jobs) {
    std::vector<SweepRow> rows(values.size());
    if (values.empty()) {
        return rows;
    }
    if (axis == SweepAxis::KEval) {
        for (double v : values) {
            if (as_count(axis, v) == 0) {
                fail(ErrorCode::InvalidConfig, "k_eval must be >= 1");
            }
        }
        const auto trained = train_and_evaluate(data, base, spec, jobs);
        const double final_loss = trained.log.epochs.empty() ? 0.0 : trained.log.epochs.back().loss.total;
        for (std::size_t i = 0; i < values.size(); ++i) {
            ScoreSpec s = spec;
            s.k_eval = as_count(axis, values[i]);
            rows[i] = {axis, values[i], base.seed, evaluate_bank(data, trained.bank, s, jobs), final_loss};
        }
        return rows;
    }

    std::vector<TrainConfig> configs(values.size(), base);
    for (std::size_t i = 0; i < values.size(); ++i) {
        TrainConfig& c = configs[i];
        c.seed = base.seed + i;
        const double v = values[i];
        switch (axis) {
            case SweepAxis::KTrain: c.k_train = as_count(axis, v); break;
            case SweepAxis::LambdaNeg: c.lambda_neg = v; break;
            case SweepAxis::LambdaReg: c.lambda_reg = v; break;
            case SweepAxis::NNeg: c.n_neg = as_count(axis, v); break;
            case SweepAxis::M1: c.m1 = as_count(axis, v); break;
            case SweepAxis::M2: c.m2 = as_count(axis, v); break;
            case SweepAxis::Shots: c.shots = as_count(axis, v); break;
            case SweepAxis::KEval: break;
        }
        validate(c);
    }
    const std::size_t outer = std::min(jobs, values.size());
    const std::size_t inner = std::max<std::size_t>(1, jobs / std::max<std::size_t>(outer, 1));
    parallel_for(values.size(), outer, [&](std::size_t i) {
        const auto r = train_and_evaluate(data, configs[i], spec, inner);
        rows[i] = {axis, values[i], configs[i].seed, r.report,
                   r.log.epochs.empty() ? 0.0 : r.log.epochs.back().loss.total};
    });
    return rows;
}

void write_sweep_csv(const std::filesystem::path& path, std::span<const SweepRow> rows) {
    std::ofstream out(path, std::ios::trunc);
    out << "axis,value,seed,score_kind,k_eval,auroc,fpr95,id_accuracy,final_loss\n";
    for (const auto& r : rows) {
        out << to_string(r.axis) << ',' << fmt(r.value) << ',' << r.seed << ','
            << to_string(r.report.score.kind) << ',' << r.report.score.k_eval << ','
            << fmt(r.report.auroc) << ',' << fmt(r.report.fpr95) << ','
            << (r.report.id_accuracy ? fmt(*r.report.id_accuracy) : std::string()) << ','
            << fmt(r.final_loss) << '\n';
    }
    if (!out) {
        fail(ErrorCode::IoFailure, "cannot write " + path.string());
    }
}

}  // namespace lp
