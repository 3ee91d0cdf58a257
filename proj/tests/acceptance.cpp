// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any fails.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "localprompt/cli.hpp"
#include "localprompt/evaluation.hpp"
#include "localprompt/losses.hpp"
#include "localprompt/synthgen.hpp"
#include "oracle/finite_diff.hpp"
#include "support.hpp"

using namespace lp;
namespace fs = std::filesystem;
using testing_support::random_bank;
using testing_support::random_item;
using testing_support::random_record;
using testing_support::to_naive;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(const char* f, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

std::size_t pick(std::mt19937_64& g, std::size_t lo, std::size_t hi) {
    return std::uniform_int_distribution<std::size_t>(lo, hi)(g);
}

std::vector<naive::Item> naive_batch(const std::vector<AugmentedBatchItem>& batch) {
    std::vector<naive::Item> out;
    for (const auto& it : batch) out.push_back(to_naive(it));
    return out;
}

// Random batch within the given size limits.
std::vector<AugmentedBatchItem> random_batch(std::mt19937_64& g, std::size_t c, std::size_t d, std::size_t n) {
    std::vector<AugmentedBatchItem> batch;
    const std::size_t items = pick(g, 1, 3);
    for (std::size_t i = 0; i < items; ++i) batch.push_back(random_item(g, c, d, n, pick(g, 1, 3), pick(g, 0, 2)));
    return batch;
}

Outcome losses_oracle() {
    std::mt19937_64 g(1001);
    double worst = 0;
    for (int t = 0; t < 1000; ++t) {
        const std::size_t c = pick(g, 1, 8), d = pick(g, 2, 32), n = pick(g, 1, 16), nn = pick(g, 0, 8);
        const std::size_t k = pick(g, 1, 20);
        const double T = std::vector<double>{0.1, 0.5, 1.0, 2.0}[pick(g, 0, 3)];
        const auto bank = random_bank(g, c, d, nn);
        const auto batch = random_batch(g, c, d, n);
        const LossConfig cfg{5.0, 0.5, T, k};
        const auto got = loss_total(batch, bank, cfg);
        const auto want = naive::loss_total(naive_batch(batch), to_naive(bank.local), to_naive(bank.negative), k, T,
                                            5.0, 0.5);
        worst = std::max({worst, std::abs(got.l_pos - want.pos), std::abs(got.l_neg - want.neg),
                          std::abs(got.l_reg - want.reg), std::abs(got.total - want.total)});
    }
    return {worst <= 1e-9, fmt("1000 instances, max abs diff %.3g (tol 1e-9)", worst)};
}

Outcome gradient_fd() {
    std::mt19937_64 g(1002);
    double worst = 0;
    int checked = 0, skipped = 0;
    while (checked < 200) {
        const std::size_t c = pick(g, 1, 6), d = pick(g, 2, 16), n = pick(g, 2, 10), nn = pick(g, 0, 6);
        const std::size_t k = pick(g, 1, n);
        const double T = std::vector<double>{0.5, 1.0, 2.0}[pick(g, 0, 2)];
        const auto bank = random_bank(g, c, d, nn);
        const auto batch = random_batch(g, c, d, n);
        const auto nb = naive_batch(batch);
        if (naive::min_topk_gap(nb, to_naive(bank.local), to_naive(bank.negative), k) < 1e-3) {
            ++skipped;
            continue;
        }
        ++checked;
        const auto grad = grad_total(batch, bank, LossConfig{5.0, 0.5, T, k});
        const auto fd = naive::finite_diff(nb, to_naive(bank.local), to_naive(bank.negative), k, T, 5.0, 0.5, 1e-5);
        worst = std::max({worst, naive::max_rel_error(to_naive(grad.d_local), fd.d_local, 1e-6),
                          naive::max_rel_error(to_naive(grad.d_negative), fd.d_negative, 1e-6)});
    }
    return {worst < 1e-4,
            fmt("200 instances (%d near top-k ties skipped), max rel err %.3g (tol 1e-4)", skipped, worst)};
}

Outcome score_reductions() {
    std::mt19937_64 g(1003);
    double worst = 0;
    for (int t = 0; t < 1000; ++t) {
        const std::size_t d = pick(g, 2, 32);
        auto bank = random_bank(g, pick(g, 1, 8), d, 0);
        bank.local = bank.global;
        const auto rec = random_record(g, d, pick(g, 1, 16), 0);
        const double T = std::vector<double>{0.1, 1.0, 2.0}[pick(g, 0, 2)];
        worst = std::max(worst, std::abs(score_rmcm(rec, bank, T, 1) - score_glmcm(rec, bank, T)));
    }
    std::size_t bad_range = 0;
    for (int t = 0; t < 10000; ++t) {
        const std::size_t d = pick(g, 2, 32);
        const auto bank = random_bank(g, pick(g, 1, 8), d, pick(g, 0, 8));
        const auto rec = random_record(g, d, pick(g, 1, 16), 0);
        const double T = std::vector<double>{0.1, 1.0, 2.0}[pick(g, 0, 2)];
        const double m = score_mcm(rec, bank, T), gl = score_glmcm(rec, bank, T);
        if (!(m > 0 && m <= 1) || !(gl > 0 && gl <= 2)) ++bad_range;
    }
    return {worst <= 1e-9 && bad_range == 0,
            fmt("1000 reductions, max diff %.3g (tol 1e-9); %zu of 10000 records out of range", worst, bad_range)};
}

Outcome metric_oracles() {
    std::mt19937_64 g(1004);
    int mismatches = 0;
    for (int t = 0; t < 500; ++t) {
        const std::size_t n = pick(g, 1, 200), m = pick(g, 1, 200);
        const bool ties = t % 2 == 0;
        auto draw = [&](std::size_t count) {
            std::vector<double> v(count);
            for (double& x : v) x = ties ? static_cast<double>(pick(g, 0, 9)) * 0.1 : testing_support::gauss(g);
            return v;
        };
        const auto id = draw(n), ood = draw(m);
        if (auroc(id, ood) != naive::auroc(id, ood)) ++mismatches;
        if (fpr_at_tpr(id, ood) != naive::fpr_at_tpr(id, ood, 0.95)) ++mismatches;
    }
    return {mismatches == 0, fmt("500 trials, %d inexact results", mismatches)};
}

// Trained banks for the trend criteria, shared by both.
struct SeedRun {
    ExperimentData data;
    PromptBank full;
    PromptBank pos_only;
    double fpr_full = 0, fpr_pos = 0;
    std::uint32_t globals_before = 0;
};

std::uint32_t digest(const Matrix& m) {
    const auto v = m.values();
    return crc32_of({reinterpret_cast<const std::uint8_t*>(v.data()), v.size_bytes()});
}

TrainConfig synthetic_config() { return load_config(fs::path(LP_SOURCE_DIR) / "configs" / "synthetic.cfg"); }

ScoreSpec rmcm_spec(const TrainConfig& c) {
    ScoreSpec s;
    s.kind = ScoreKind::RMcm;
    s.temperature = c.temperature;
    s.k_eval = 10;
    return s;
}

std::vector<SeedRun> trained_runs;

Outcome loss_components() {
    const TrainConfig base = synthetic_config();
    double sum_full = 0, sum_pos = 0;
    std::string per_seed;
    for (std::uint64_t seed : {0, 1, 2}) {
        SynthSpec s;
        s.seed = seed;
        const auto ds = generate(s);
        SeedRun run;
        run.data = {ds.id_train, ds.id_test.store, ds.ood_test.store, prompts_from_store(ds.global_prompts)};
        run.globals_before = digest(run.data.global_prompts);
        TrainConfig full = base;
        full.seed = seed;
        TrainConfig pos = full;
        pos.lambda_neg = 0;
        pos.lambda_reg = 0;
        const auto a = train_and_evaluate(run.data, full, rmcm_spec(full));
        const auto b = train_and_evaluate(run.data, pos, rmcm_spec(pos));
        run.full = a.bank;
        run.pos_only = b.bank;
        run.fpr_full = a.report.fpr95;
        run.fpr_pos = b.report.fpr95;
        sum_full += a.report.fpr95;
        sum_pos += b.report.fpr95;
        per_seed += fmt(" s%lu %.3f/%.3f", static_cast<unsigned long>(seed), a.report.fpr95, b.report.fpr95);
        trained_runs.push_back(std::move(run));
    }
    const double gap = (sum_pos - sum_full) / 3;
    return {gap >= 0.02, fmt("mean FPR95 full %.4f vs L_pos only %.4f, gap %.2f points (need >= 2);%s",
                             sum_full / 3, sum_pos / 3, 100 * gap, per_seed.c_str())};
}

Outcome score_strategies() {
    if (trained_runs.size() != 3) return {false, "trained banks unavailable"};
    bool ok = true;
    std::string detail;
    const TrainConfig base = synthetic_config();
    for (std::size_t i = 0; i < 3; ++i) {
        const auto& run = trained_runs[i];
        const ScoreSpec r = rmcm_spec(base);
        ScoreSpec mcm = r;
        mcm.kind = ScoreKind::Mcm;
        const double with = evaluate_bank(run.data, run.full, r).auroc;
        const double without = evaluate_bank(run.data, without_negatives(run.full), r).auroc;
        const double plain = evaluate_bank(run.data, run.full, mcm).auroc;
        ok = ok && with >= without && without >= plain && with - plain >= 0.01;
        detail += fmt("%s s%zu %.4f >= %.4f >= %.4f", i ? ";" : "AUROC R-MCM/no-neg/MCM", i, with, without, plain);
    }
    return {ok, detail + " (outer gap >= 1 point)"};
}

Outcome frozen_globals() {
    if (trained_runs.size() != 3) return {false, "trained banks unavailable"};
    int changed = 0;
    for (const auto& run : trained_runs) {
        changed += digest(run.full.global) != run.globals_before;
        changed += digest(run.pos_only.global) != run.globals_before;
    }
    return {changed == 0, fmt("6 trained banks, %d global digests changed", changed)};
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), {}};
}

Outcome pipeline_determinism() {
    const fs::path root = fs::temp_directory_path() / "localprompt_acceptance";
    fs::remove_all(root);
    const std::string cfg = (fs::path(LP_SOURCE_DIR) / "configs" / "synthetic.cfg").string();
    std::vector<std::string> banks, scores, reports;
    for (const char* run : {"a", "b"}) {
        const fs::path dir = root / run;
        const fs::path data = dir / "data";
        const std::vector<std::vector<std::string>> steps{
            {"gen", "--out-dir", data.string(), "--seed", "0"},
            {"train", "--train", (data / "id_train.lpfs").string(), "--globals", (data / "globals.lpfs").string(),
             "--config", cfg, "--seed", "0", "--out", (dir / "bank.lpbank").string()},
            {"score", "--bank", (dir / "bank.lpbank").string(), "--id", (data / "id_test.lpfs").string(), "--ood",
             (data / "ood_test.lpfs").string(), "--temperature", "0.1", "--out", (dir / "scores.csv").string()},
            {"eval", "--scores", (dir / "scores.csv").string(), "--out", (dir / "report.csv").string()},
        };
        for (const auto& args : steps) {
            std::ostringstream out, err;
            if (run_cli(args, out, err) != 0) return {false, args[0] + " failed: " + err.str()};
        }
        banks.push_back(slurp(dir / "bank.lpbank"));
        scores.push_back(slurp(dir / "scores.csv"));
        reports.push_back(slurp(dir / "report.csv"));
    }
    const bool same = banks[0] == banks[1] && scores[0] == scores[1] && reports[0] == reports[1];
    const bool nonempty = !banks[0].empty() && !scores[0].empty();
    // data row of the report, after the header
    std::string report = reports[0].substr(reports[0].find('\n') + 1);
    report.erase(std::remove(report.begin(), report.end(), '\n'), report.end());
    return {same && nonempty, fmt("checkpoint %zu bytes, scores %zu bytes, %s; report %s",
                                  banks[0].size(), scores[0].size(), same ? "identical" : "DIFFERENT",
                                  report.c_str())};
}

Outcome selection_invariant() {
    std::mt19937_64 g(1009);
    int violations = 0;
    for (int t = 0; t < 10000; ++t) {
        const std::size_t c = pick(g, 1, 8), d = pick(g, 2, 16);
        const auto bank = random_bank(g, c, d, 0);
        CropCandidateSet set{"p", static_cast<std::int32_t>(pick(g, 0, c - 1)), {}};
        const std::size_t m = pick(g, 2, 24);
        for (std::size_t i = 0; i < m; ++i) set.candidates.push_back(random_record(g, d, 1, set.label));
        const std::size_t m1 = pick(g, 1, m - 1);
        const std::size_t m2 = pick(g, 1, m - m1);
        const auto item = select_augmented(set, bank, m1, m2);
        double lo = 2, hi = -2;
        const auto prompt = bank.global.row(static_cast<std::size_t>(set.label));
        for (const auto& p : item.positives) lo = std::min(lo, cosine_sim(p.global, prompt));
        for (const auto& n : item.negatives) hi = std::max(hi, cosine_sim(n.global, prompt));
        violations += lo < hi;
    }
    return {violations == 0, fmt("10000 candidate sets, %d violations", violations)};
}

}  // namespace

int main() {
    struct Criterion {
        const char* name;
        std::function<Outcome()> run;
        double limit_s;  // wall-clock limit, 0 for none
    };
    const std::vector<Criterion> criteria{
        {"losses_oracle", losses_oracle, 10},
        {"gradient_finite_differences", gradient_fd, 60},
        {"score_reductions_and_ranges", score_reductions, 0},
        {"metric_oracles", metric_oracles, 0},
        {"loss_components_trend", loss_components, 300},
        {"score_strategies_trend", score_strategies, 0},
        {"pipeline_determinism", pipeline_determinism, 0},
        {"frozen_globals", frozen_globals, 0},
        {"selection_invariant", selection_invariant, 0},
    };
    int failed = 0;
    for (const auto& [name, run, limit] : criteria) {
        const auto t0 = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = run();
        } catch (const std::exception& e) {
            o = {false, std::string("threw: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        if (limit > 0 && secs >= limit) {
            o.pass = false;
            o.detail += fmt("; over the %.0f s limit", limit);
        }
        std::printf("%s %s: %s [%.1f s]\n", o.pass ? "PASS" : "FAIL", name, o.detail.c_str(), secs);
        std::fflush(stdout);
        failed += !o.pass;
    }
    std::printf("%d of %zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
    return failed == 0 ? 0 : 1;
}
