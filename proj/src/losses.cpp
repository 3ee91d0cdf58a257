#include "localprompt/losses.hpp"

#include <cmath>
#include <string>

#include "localprompt/error.hpp"
#include "localprompt/parallel.hpp"

namespace lp {

namespace {

struct UnitRows {
    Matrix unit;
    Vec norms;
};

UnitRows normalize_rows(const Matrix& m) {
    UnitRows out{Matrix(m.rows(), m.cols()), Vec(m.rows())};
    for (std::size_t r = 0; r < m.rows(); ++r) {
        const double n = norm(m.row(r));
        if (n < kMinNorm) {
            fail(ErrorCode::ZeroNormVector, "zero-norm vector at row " + std::to_string(r));
        }
        out.norms[r] = n;
        auto dst = out.unit.row(r);
        const auto src = m.row(r);
        for (std::size_t c = 0; c < src.size(); ++c) {
            dst[c] = src[c] / n;
        }
    }
    return out;
}

// Learnable prompts stacked as rows [0, C) local, [C, C + N_neg) negative.
struct PromptGeometry {
    std::size_t n_classes = 0;
    UnitRows rows;
};

PromptGeometry prompt_geometry(const PromptBank& bank) {
    validate(bank);
    Matrix stacked(bank.n_classes() + bank.n_negative(), bank.dim());
    for (std::size_t i = 0; i < bank.n_classes(); ++i) {
        std::copy(bank.local.row(i).begin(), bank.local.row(i).end(), stacked.row(i).begin());
    }
    for (std::size_t j = 0; j < bank.n_negative(); ++j) {
        const auto src = bank.negative.row(j);
        std::copy(src.begin(), src.end(), stacked.row(bank.n_classes() + j).begin());
    }
    return {bank.n_classes(), normalize_rows(stacked)};
}

void check_params(std::size_t k, double temperature) {
    if (!(temperature > 0.0)) {
        fail(ErrorCode::NonPositiveTemperature, "temperature must be > 0");
    }
    if (k == 0) {
        fail(ErrorCode::InvalidConfig, "top-k size must be >= 1");
    }
}

constexpr std::int32_t kNegativeTarget = -1;

// Loss of a single crop. target >= 0 selects L_pos for that class, otherwise
// L_neg. When grad is non-null, adds scale * dL/d(prompt) into it.
double crop_loss(const Matrix& locals, const PromptGeometry& geo, std::int32_t target,
                 std::size_t k, double temperature, double scale, GradientBank* grad) {
    if (locals.empty()) {
        fail(ErrorCode::EmptyInput, "crop has no local tokens");
    }
    if (locals.cols() != geo.rows.unit.cols()) {
        fail(ErrorCode::DimensionMismatch, "local token length != prompt length");
    }
    const UnitRows tokens = normalize_rows(locals);
    const std::size_t n_prompts = geo.rows.unit.rows();
    const std::size_t n_tokens = tokens.unit.rows();
    const std::size_t d = tokens.unit.cols();

    Matrix sims(n_prompts, n_tokens);
    Matrix weights(n_prompts, n_tokens);
    // support(p, h) != 0 marks the k tokens entering prompt p's evidence.
    std::vector<char> support(n_prompts * n_tokens, 1);
    Vec evidence(n_prompts, 0.0);
    for (std::size_t p = 0; p < n_prompts; ++p) {
        const auto prompt = geo.rows.unit.row(p);
        auto w = weights.row(p);
        for (std::size_t h = 0; h < n_tokens; ++h) {
            const double s = dot(prompt, tokens.unit.row(h));
            sims(p, h) = s;
            w[h] = clamped_exp(s / temperature);
        }
        char* mask = support.data() + p * n_tokens;
        if (k < n_tokens) {
            std::fill(mask, mask + n_tokens, 0);
            for (std::size_t h : topk_support(w, k)) {
                mask[h] = 1;
            }
        }
        for (std::size_t h = 0; h < n_tokens; ++h) {
            if (mask[h]) {
                evidence[p] += w[h];
            }
        }
    }

    double denom = 0.0;
    double negative_mass = 0.0;
    for (std::size_t p = 0; p < n_prompts; ++p) {
        denom += evidence[p];
        if (p >= geo.n_classes) {
            negative_mass += evidence[p];
        }
    }
    const bool positive = target >= 0;
    const double numer = positive ? evidence[static_cast<std::size_t>(target)] : negative_mass;
    const double loss = std::log(denom) - std::log(numer);

    if (grad != nullptr && scale != 0.0) {
        Vec acc(d);
        for (std::size_t p = 0; p < n_prompts; ++p) {
            const bool in_numer = positive ? p == static_cast<std::size_t>(target) : p >= geo.n_classes;
            const double dl_de = 1.0 / denom - (in_numer ? 1.0 / numer : 0.0);
            const double coef = scale * dl_de / (temperature * geo.rows.norms[p]);
            std::fill(acc.begin(), acc.end(), 0.0);
            double radial = 0.0;
            const char* mask = support.data() + p * n_tokens;
            for (std::size_t h = 0; h < n_tokens; ++h) {
                if (!mask[h]) {
                    continue;
                }
                const double s = sims(p, h);
                if (s / temperature >= kExpClamp) {
                    continue;  // clamped: locally constant
                }
                const double w = weights(p, h);
                const auto z = tokens.unit.row(h);
                for (std::size_t c = 0; c < d; ++c) {
                    acc[c] += w * z[c];
                }
                radial += w * s;
            }
            const auto unit = geo.rows.unit.row(p);
            auto out = p < geo.n_classes ? grad->d_local.row(p) : grad->d_negative.row(p - geo.n_classes);
            for (std::size_t c = 0; c < d; ++c) {
                out[c] += coef * (acc[c] - radial * unit[c]);
            }
        }
    }
    return loss;
}

double regularizer(const PromptBank& bank, double scale, GradientBank* grad) {
    const std::size_t n = bank.n_negative();
    if (n < 2) {
        fail(ErrorCode::TooFewNegativePrompts, "diversity regularizer needs >= 2 negative prompts");
    }
    const UnitRows neg = normalize_rows(bank.negative);
    const double pairs = static_cast<double>(n * (n - 1) / 2);
    const std::size_t d = bank.dim();
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            const double c = dot(neg.unit.row(i), neg.unit.row(j));
            total += c;
            if (grad != nullptr && scale != 0.0) {
                const auto ui = neg.unit.row(i);
                const auto uj = neg.unit.row(j);
                auto gi = grad->d_negative.row(i);
                auto gj = grad->d_negative.row(j);
                const double si = scale / (pairs * neg.norms[i]);
                const double sj = scale / (pairs * neg.norms[j]);
                for (std::size_t k = 0; k < d; ++k) {
                    gi[k] += si * (uj[k] - c * ui[k]);
                    gj[k] += sj * (ui[k] - c * uj[k]);
                }
            }
        }
    }
    return total / pairs;
}

void add_into(Matrix& dst, const Matrix& src) {
    auto a = dst.values();
    const auto b = src.values();
    for (std::size_t i = 0; i < a.size(); ++i) {
        a[i] += b[i];
    }
}

void zero(GradientBank& g) {
    std::fill(g.d_local.values().begin(), g.d_local.values().end(), 0.0);
    std::fill(g.d_negative.values().begin(), g.d_negative.values().end(), 0.0);
}

}  // namespace

double class_evidence(const Matrix& locals, std::span<const double> prompt, std::size_t k,
                      double temperature) {
    check_params(k, temperature);
    if (locals.empty()) {
        fail(ErrorCode::EmptyInput, "class_evidence: no local tokens");
    }
    Vec w(locals.rows());
    for (std::size_t h = 0; h < locals.rows(); ++h) {
        w[h] = clamped_exp(cosine_sim(locals.row(h), prompt) / temperature);
    }
    return topk_sum(w, k);
}

double loss_pos(const Matrix& locals, std::int32_t label, const PromptBank& bank, std::size_t k,
                double temperature) {
    check_params(k, temperature);
    if (label < 0 || static_cast<std::size_t>(label) >= bank.n_classes()) {
        fail(ErrorCode::InvalidLabel, "loss_pos: label out of range");
    }
    return crop_loss(locals, prompt_geometry(bank), label, k, temperature, 0.0, nullptr);
}

double loss_neg(const Matrix& neg_locals, const PromptBank& bank, std::size_t k,
                double temperature) {
    check_params(k, temperature);
    if (bank.n_negative() == 0) {
        fail(ErrorCode::NoNegativePrompts, "loss_neg: bank has no negative prompts");
    }
    return crop_loss(neg_locals, prompt_geometry(bank), kNegativeTarget, k, temperature, 0.0,
                     nullptr);
}

double loss_reg(const PromptBank& bank) { return regularizer(bank, 0.0, nullptr); }

namespace {

LossAndGradient evaluate_batch(std::span<const AugmentedBatchItem> batch, const PromptBank& bank,
                               const LossConfig& config, std::size_t jobs, bool with_grad) {
    check_params(config.k, config.temperature);
    if (batch.empty()) {
        fail(ErrorCode::EmptyInput, "loss over an empty batch");
    }
    const PromptGeometry geo = prompt_geometry(bank);
    std::size_t n_pos = 0;
    std::size_t n_neg = 0;
    for (const auto& item : batch) {
        if (item.label < 0 || static_cast<std::size_t>(item.label) >= bank.n_classes()) {
            fail(ErrorCode::InvalidLabel, "batch item label out of range");
        }
        n_pos += item.positives.size();
        n_neg += item.negatives.size();
    }
    const bool use_neg = bank.n_negative() >= 1 && n_neg > 0;
    const double pos_scale = n_pos > 0 ? 1.0 / static_cast<double>(n_pos) : 0.0;
    const double neg_scale = use_neg ? config.lambda_neg / static_cast<double>(n_neg) : 0.0;

    struct ItemResult {
        double pos = 0.0;
        double neg = 0.0;
    };
    const auto eval_item = [&](const AugmentedBatchItem& item, GradientBank& g) {
        GradientBank* sink = with_grad ? &g : nullptr;
        ItemResult r;
        for (const auto& rec : item.positives) {
            r.pos += crop_loss(rec.locals, geo, item.label, config.k, config.temperature, pos_scale, sink);
        }
        if (use_neg) {
            for (const auto& rec : item.negatives) {
                r.neg += crop_loss(rec.locals, geo, kNegativeTarget, config.k, config.temperature,
                                   neg_scale, sink);
            }
        }
        return r;
    };

    LossAndGradient out{{}, zero_gradient(bank)};
    double pos_sum = 0.0;
    double neg_sum = 0.0;
    const auto reduce = [&](const ItemResult& r, const GradientBank& g) {
        pos_sum += r.pos;
        neg_sum += r.neg;
        if (with_grad) {
            add_into(out.grad.d_local, g.d_local);
            add_into(out.grad.d_negative, g.d_negative);
        }
    };
    if (jobs <= 1 || batch.size() == 1) {
        GradientBank g = zero_gradient(bank);
        for (const auto& item : batch) {
            zero(g);
            reduce(eval_item(item, g), g);
        }
    } else {
        std::vector<GradientBank> grads(batch.size(), zero_gradient(bank));
        std::vector<ItemResult> results(batch.size());
        parallel_for(batch.size(), jobs, [&](std::size_t i) { results[i] = eval_item(batch[i], grads[i]); });
        for (std::size_t i = 0; i < batch.size(); ++i) {
            reduce(results[i], grads[i]);
        }
    }

    LossBreakdown& loss = out.loss;
    loss.lambda_neg = config.lambda_neg;
    loss.lambda_reg = config.lambda_reg;
    loss.l_pos = n_pos > 0 ? pos_sum / static_cast<double>(n_pos) : 0.0;
    loss.l_neg = use_neg ? neg_sum / static_cast<double>(n_neg) : 0.0;
    if (bank.n_negative() >= 2) {
        loss.l_reg = regularizer(bank, config.lambda_reg, with_grad ? &out.grad : nullptr);
    }
    loss.total = loss.l_pos + config.lambda_neg * loss.l_neg + config.lambda_reg * loss.l_reg;
    return out;
}

}  // namespace

LossAndGradient loss_and_grad(std::span<const AugmentedBatchItem> batch, const PromptBank& bank,
                              const LossConfig& config, std::size_t jobs) {
    return evaluate_batch(batch, bank, config, jobs, true);
}

LossBreakdown loss_total(std::span<const AugmentedBatchItem> batch, const PromptBank& bank,
                         const LossConfig& config) {
    return evaluate_batch(batch, bank, config, 1, false).loss;
}

GradientBank grad_total(std::span<const AugmentedBatchItem> batch, const PromptBank& bank,
                        const LossConfig& config) {
    return loss_and_grad(batch, bank, config).grad;
}

}  // namespace lp
