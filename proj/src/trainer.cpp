#include "localprompt/trainer.hpp"

#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <sstream>

#include "localprompt/error.hpp"
#include "localprompt/rng.hpp"

namespace lp {

namespace {

std::string_view trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) {
        return {};
    }
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

template <typename T>
T parse_number(std::string_view key, std::string_view value) {
    T out{};
    const auto* end = value.data() + value.size();
    const auto r = std::from_chars(value.data(), end, out);
    if (r.ec != std::errc{} || r.ptr != end) {
        fail(ErrorCode::InvalidConfig,
             "config: bad value '" + std::string(value) + "' for " + std::string(key));
    }
    return out;
}

}  // namespace

void validate(const TrainConfig& c) {
    const auto bad = [](const std::string& msg) { fail(ErrorCode::InvalidConfig, msg); };
    if (c.shots == 0) bad("shots must be >= 1");
    if (c.batch_size == 0) bad("batch_size must be >= 1");
    if (!(c.lr0 > 0.0) || !std::isfinite(c.lr0)) bad("lr0 must be > 0");
    if (!(c.lambda_neg >= 0.0) || !(c.lambda_reg >= 0.0)) bad("lambdas must be >= 0");
    if (!(c.temperature > 0.0)) fail(ErrorCode::NonPositiveTemperature, "temperature must be > 0");
    if (c.k_train == 0) bad("k_train must be >= 1");
    if (c.m < c.m1 + c.m2) bad("m must be >= m1 + m2");
}

void set_config_value(TrainConfig& c, std::string_view key, std::string_view value) {
    value = trim(value);
    if (key == "shots") c.shots = parse_number<std::size_t>(key, value);
    else if (key == "epochs") c.epochs = parse_number<std::size_t>(key, value);
    else if (key == "batch_size") c.batch_size = parse_number<std::size_t>(key, value);
    else if (key == "lr0" || key == "lr") c.lr0 = parse_number<double>(key, value);
    else if (key == "lambda_neg") c.lambda_neg = parse_number<double>(key, value);
    else if (key == "lambda_reg") c.lambda_reg = parse_number<double>(key, value);
    else if (key == "temperature" || key == "T") c.temperature = parse_number<double>(key, value);
    else if (key == "k_train") c.k_train = parse_number<std::size_t>(key, value);
    else if (key == "m") c.m = parse_number<std::size_t>(key, value);
    else if (key == "m1") c.m1 = parse_number<std::size_t>(key, value);
    else if (key == "m2") c.m2 = parse_number<std::size_t>(key, value);
    else if (key == "n_neg" || key == "N_neg") c.n_neg = parse_number<std::size_t>(key, value);
    else if (key == "seed") c.seed = parse_number<std::uint64_t>(key, value);
    else fail(ErrorCode::InvalidConfig, "config: unknown key '" + std::string(key) + "'");
}

TrainConfig parse_config(std::string_view text, TrainConfig base) {
    std::size_t line_no = 0;
    while (!text.empty()) {
        const auto nl = text.find('\n');
        std::string_view line = text.substr(0, nl);
        text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
        ++line_no;
        if (const auto hash = line.find('#'); hash != std::string_view::npos) {
            line = line.substr(0, hash);
        }
        line = trim(line);
        if (line.empty()) {
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string_view::npos) {
            fail(ErrorCode::InvalidConfig, "config line " + std::to_string(line_no) + ": expected key=value");
        }
        set_config_value(base, trim(line.substr(0, eq)), line.substr(eq + 1));
    }
    return base;
}

TrainConfig load_config(const std::filesystem::path& path, TrainConfig base) {
    std::ifstream in(path);
    if (!in) {
        fail(ErrorCode::IoFailure, "cannot open config " + path.string());
    }
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str(), base);
}

std::string format_config(const TrainConfig& c) {
    std::ostringstream out;
    out.precision(17);
    out << "shots=" << c.shots << "\nepochs=" << c.epochs << "\nbatch_size=" << c.batch_size
        << "\nlr0=" << c.lr0 << "\nlambda_neg=" << c.lambda_neg << "\nlambda_reg=" << c.lambda_reg
        << "\ntemperature=" << c.temperature << "\nk_train=" << c.k_train << "\nm=" << c.m
        << "\nm1=" << c.m1 << "\nm2=" << c.m2 << "\nn_neg=" << c.n_neg << "\nseed=" << c.seed << '\n';
    return out.str();
}

double cosine_lr(std::size_t step, std::size_t total_steps, double lr0) {
    if (step >= total_steps) {
        fail(ErrorCode::StepOutOfRange, "cosine_lr: step " + std::to_string(step) +
                                            " outside [0, " + std::to_string(total_steps) + ")");
    }
    const double progress = static_cast<double>(step) / static_cast<double>(total_steps);
    return lr0 * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

std::vector<AugmentedBatchItem> select_training_items(const FeatureStore& store,
                                                      const PromptBank& bank,
                                                      const TrainConfig& config) {
    std::vector<AugmentedBatchItem> items;
    items.reserve(store.crop_sets.size());
    for (const auto& set : store.crop_sets) {
        items.push_back(select_augmented(set, bank, config.m1, config.m2));
    }
    return items;
}

void apply_sgd(PromptBank& bank, const GradientBank& grad, double lr) {
    const auto step = [lr](std::span<double> x, std::span<const double> g) {
        for (std::size_t i = 0; i < x.size(); ++i) {
            x[i] -= lr * g[i];
        }
        round_to_binary32(x);
    };
    step(bank.local.values(), grad.d_local.values());
    step(bank.negative.values(), grad.d_negative.values());
}

namespace {

void check_training_inputs(const DatasetSplit& split, const PromptBank& bank,
                           const TrainConfig& config) {
    validate(config);
    validate(bank);
    if (split.store.crop_sets.empty()) {
        fail(ErrorCode::MissingCropSets, "training split carries no crop candidate sets");
    }
    if (bank.dim() != split.store.d || bank.n_classes() != split.store.n_classes) {
        fail(ErrorCode::ShapeMismatch, "bank shape (C=" + std::to_string(bank.n_classes()) +
                                           ", d=" + std::to_string(bank.dim()) +
                                           ") does not match the training store");
    }
    if (bank.n_negative() != config.n_neg) {
        fail(ErrorCode::ShapeMismatch, "bank has " + std::to_string(bank.n_negative()) +
                                           " negative prompts, config expects " +
                                           std::to_string(config.n_neg));
    }
}

}  // namespace

TrainResult train(const DatasetSplit& split, const PromptBank& bank, const TrainConfig& config,
                  std::size_t jobs) {
    check_training_inputs(split, bank, config);
    TrainResult result{bank, {}};
    if (config.epochs == 0) {
        return result;
    }
    auto items = select_training_items(split.store, bank, config);
    const std::size_t n = items.size();
    const std::size_t batches_per_epoch = (n + config.batch_size - 1) / config.batch_size;
    const std::size_t total_steps = config.epochs * batches_per_epoch;
    const LossConfig loss_config = config.loss_config();

    Rng rng(mix_seed(config.seed, 0x7472'6169'6eULL));
    std::size_t step = 0;
    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        const auto started = std::chrono::steady_clock::now();
        // Reshuffles the previous epoch's order; still a pure function of the seed.
        rng.shuffle(std::span(items));

        EpochRecord rec;
        rec.epoch = epoch + 1;
        rec.lr = cosine_lr(step, total_steps, config.lr0);
        for (std::size_t b = 0; b < batches_per_epoch; ++b, ++step) {
            const std::size_t lo = b * config.batch_size;
            const std::size_t hi = std::min(n, lo + config.batch_size);
            const auto batch = std::span<const AugmentedBatchItem>(items).subspan(lo, hi - lo);
            const auto lg = loss_and_grad(batch, result.bank, loss_config, jobs);
            apply_sgd(result.bank, lg.grad, cosine_lr(step, total_steps, config.lr0));
            rec.loss.l_pos += lg.loss.l_pos;
            rec.loss.l_neg += lg.loss.l_neg;
            rec.loss.l_reg += lg.loss.l_reg;
            rec.loss.total += lg.loss.total;
        }
        const double nb = static_cast<double>(batches_per_epoch);
        rec.loss.l_pos /= nb;
        rec.loss.l_neg /= nb;
        rec.loss.l_reg /= nb;
        rec.loss.total /= nb;
        rec.loss.lambda_neg = config.lambda_neg;
        rec.loss.lambda_reg = config.lambda_reg;
        rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
        result.log.epochs.push_back(rec);
    }
    return result;
}

LossBreakdown training_loss(const DatasetSplit& split, const PromptBank& bank,
                            const TrainConfig& config) {
    check_training_inputs(split, bank, config);
    const auto items = select_training_items(split.store, bank, config);
    return loss_total(items, bank, config.loss_config());
}

void write_log_csv(const std::filesystem::path& path, const TrainLog& log) {
    std::ofstream out(path, std::ios::trunc);
    out << "epoch,l_pos,l_neg,l_reg,total,lr,seconds\n";
    char buf[256];
    for (const auto& e : log.epochs) {
        std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g,%.17g,%.17g,%.17g,%.6f\n", e.epoch,
                      e.loss.l_pos, e.loss.l_neg, e.loss.l_reg, e.loss.total, e.lr, e.seconds);
        out << buf;
    }
    if (!out) {
        fail(ErrorCode::IoFailure, "cannot write " + path.string());
    }
}

}  // namespace lp
