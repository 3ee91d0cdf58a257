#include "localprompt/scoring.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "localprompt/error.hpp"
#include "localprompt/numerics.hpp"
#include "localprompt/parallel.hpp"

namespace lp {

namespace {

void check_shapes(const FeatureRecord& rec, const PromptBank& bank) {
    if (rec.global.size() != bank.dim() || rec.locals.cols() != bank.dim()) {
        fail(ErrorCode::ShapeMismatch, "record '" + rec.image_id + "' does not match bank dimension");
    }
    if (rec.locals.empty()) {
        fail(ErrorCode::EmptyInput, "record '" + rec.image_id + "' has no local tokens");
    }
}

void check_temperature(double temperature) {
    if (!(temperature > 0.0)) {
        fail(ErrorCode::NonPositiveTemperature, "temperature must be > 0");
    }
}

Vec sims_to(std::span<const double> v, const Matrix& prompts) {
    Vec out(prompts.rows());
    for (std::size_t i = 0; i < prompts.rows(); ++i) {
        out[i] = cosine_sim(v, prompts.row(i));
    }
    return out;
}

}  // namespace

std::string_view to_string(ScoreKind kind) noexcept {
    switch (kind) {
        case ScoreKind::Mcm: return "mcm";
        case ScoreKind::GlMcm: return "glmcm";
        case ScoreKind::RMcm: return "rmcm";
    }
    return "unknown";
}

ScoreKind parse_score_kind(std::string_view text) {
    if (text == "mcm") return ScoreKind::Mcm;
    if (text == "glmcm") return ScoreKind::GlMcm;
    if (text == "rmcm") return ScoreKind::RMcm;
    fail(ErrorCode::Usage, "unknown score kind '" + std::string(text) + "'");
}

double score_mcm(const FeatureRecord& rec, const PromptBank& bank, double temperature) {
    check_temperature(temperature);
    check_shapes(rec, bank);
    const Vec p = softmax(sims_to(rec.global, bank.global), temperature);
    return *std::max_element(p.begin(), p.end());
}

double score_glmcm(const FeatureRecord& rec, const PromptBank& bank, double temperature) {
    const double global_term = score_mcm(rec, bank, temperature);
    double local_term = 0.0;
    for (std::size_t h = 0; h < rec.locals.rows(); ++h) {
        const Vec p = softmax(sims_to(rec.locals.row(h), bank.global), temperature);
        local_term = std::max(local_term, *std::max_element(p.begin(), p.end()));
    }
    return global_term + local_term;
}

double score_rmcm(const FeatureRecord& rec, const PromptBank& bank, double temperature,
                  std::size_t k_eval, bool joint_topk) {
    const double global_term = score_mcm(rec, bank, temperature);
    if (k_eval == 0) {
        fail(ErrorCode::InvalidConfig, "k_eval must be >= 1");
    }
    const std::size_t c = bank.n_classes();
    const std::size_t n_tokens = rec.locals.rows();
    Vec regional;
    regional.reserve(joint_topk ? n_tokens * c : n_tokens);
    Vec logits(c + bank.n_negative());
    for (std::size_t h = 0; h < n_tokens; ++h) {
        const auto z = rec.locals.row(h);
        for (std::size_t i = 0; i < c; ++i) {
            logits[i] = cosine_sim(z, bank.local.row(i)) / temperature;
        }
        for (std::size_t j = 0; j < bank.n_negative(); ++j) {
            logits[c + j] = cosine_sim(z, bank.negative.row(j)) / temperature;
        }
        const double hi = *std::max_element(logits.begin(), logits.end());
        double denom = 0.0;
        for (double l : logits) {
            denom += std::exp(l - hi);
        }
        if (joint_topk) {
            for (std::size_t i = 0; i < c; ++i) {
                regional.push_back(std::exp(logits[i] - hi) / denom);
            }
        } else {
            const double best = *std::max_element(logits.begin(), logits.begin() + static_cast<std::ptrdiff_t>(c));
            regional.push_back(std::exp(best - hi) / denom);
        }
    }
    return global_term + topk_mean(regional, k_eval);
}

std::int32_t classify_id(const FeatureRecord& rec, const PromptBank& bank, double temperature,
                         std::size_t k_eval) {
    check_temperature(temperature);
    check_shapes(rec, bank);
    if (k_eval == 0) {
        fail(ErrorCode::InvalidConfig, "k_eval must be >= 1");
    }
    const Vec global_part = sims_to(rec.global, bank.global);
    Vec f(bank.n_classes());
    Vec w(rec.locals.rows());
    for (std::size_t i = 0; i < bank.n_classes(); ++i) {
        for (std::size_t h = 0; h < rec.locals.rows(); ++h) {
            w[h] = std::exp(cosine_sim(rec.locals.row(h), bank.local.row(i)) / temperature);
        }
        f[i] = global_part[i] * topk_mean(w, k_eval);
    }
    return static_cast<std::int32_t>(argmax(f));
}

double score(const FeatureRecord& rec, const PromptBank& bank, const ScoreSpec& spec) {
    switch (spec.kind) {
        case ScoreKind::Mcm: return score_mcm(rec, bank, spec.temperature);
        case ScoreKind::GlMcm: return score_glmcm(rec, bank, spec.temperature);
        case ScoreKind::RMcm:
            return score_rmcm(rec, bank, spec.temperature, spec.k_eval, spec.joint_topk);
    }
    fail(ErrorCode::Usage, "unknown score kind");
}

std::vector<ScoredSample> score_store(const FeatureStore& store, const PromptBank& bank,
                                      const ScoreSpec& spec, bool is_id_truth, std::size_t jobs) {
    std::vector<ScoredSample> out(store.records.size());
    parallel_for(out.size(), jobs, [&](std::size_t i) {
        const auto& rec = store.records[i];
        out[i] = {rec.image_id, score(rec, bank, spec),
                  classify_id(rec, bank, spec.temperature, spec.k_eval), is_id_truth};
    });
    return out;
}

std::vector<bool> discriminate(std::span<const ScoredSample> scores, double gamma) {
    std::vector<bool> id(scores.size());
    for (std::size_t i = 0; i < scores.size(); ++i) {
        id[i] = scores[i].score >= gamma;
    }
    return id;
}

void write_scores_csv(const std::filesystem::path& path, ScoreKind kind,
                      std::span<const ScoredSample> samples) {
    std::ofstream out(path, std::ios::trunc);
    out << "image_id,score_kind,score,predicted_class,is_id_truth\n";
    char buf[64];
    for (const auto& s : samples) {
        std::snprintf(buf, sizeof buf, "%.17g", s.score);
        out << s.image_id << ',' << to_string(kind) << ',' << buf << ',' << s.predicted_class << ','
            << (s.is_id_truth ? 1 : 0) << '\n';
    }
    if (!out) {
        fail(ErrorCode::IoFailure, "cannot write " + path.string());
    }
}

ScoreTable read_scores_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        fail(ErrorCode::IoFailure, "cannot open " + path.string());
    }
    std::string line;
    std::getline(in, line);
    if (line != "image_id,score_kind,score,predicted_class,is_id_truth") {
        fail(ErrorCode::Usage, path.string() + ": not a score CSV");
    }
    ScoreTable table;
    bool first = true;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) {
            continue;
        }
        std::stringstream ss(line);
        std::string id, kind, value, pred, truth;
        if (!std::getline(ss, id, ',') || !std::getline(ss, kind, ',') ||
            !std::getline(ss, value, ',') || !std::getline(ss, pred, ',') ||
            !std::getline(ss, truth, ',')) {
            fail(ErrorCode::Usage, path.string() + ":" + std::to_string(line_no) + ": malformed row");
        }
        const ScoreKind k = parse_score_kind(kind);
        if (first) {
            table.kind = k;
            first = false;
        }
        ScoredSample s;
        s.image_id = id;
        try {
            s.score = std::stod(value);
            s.predicted_class = static_cast<std::int32_t>(std::stol(pred));
        } catch (const std::exception&) {
            fail(ErrorCode::Usage, path.string() + ":" + std::to_string(line_no) + ": bad number");
        }
        if (!std::isfinite(s.score)) {
            fail(ErrorCode::NonFiniteValue, path.string() + ":" + std::to_string(line_no));
        }
        s.is_id_truth = truth == "1";
        table.samples.push_back(std::move(s));
    }
    return table;
}

}  // namespace lp
