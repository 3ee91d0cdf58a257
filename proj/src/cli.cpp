#include "localprompt/cli.hpp"

#include <CLI11.hpp>

#include <cerrno>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "localprompt/error.hpp"
#include "localprompt/evaluation.hpp"
#include "localprompt/feature_store.hpp"
#include "localprompt/prompt_bank.hpp"
#include "localprompt/scoring.hpp"
#include "localprompt/synthgen.hpp"
#include "localprompt/trainer.hpp"

namespace fs = std::filesystem;

namespace lp {
namespace {

std::string hex32(std::uint32_t v) {
    char buf[9];
    std::snprintf(buf, sizeof buf, "%08x", v);
    return buf;
}

// key=value run record, rewritten in place as the run progresses.
class RunManifest {
public:
    RunManifest(fs::path path, std::string command) : path_(std::move(path)) {
        add("format", "LPRUN");
        add("version", kVersion);
        add("command", std::move(command));
    }

    void add(std::string key, std::string value) { entries_.emplace_back(std::move(key), std::move(value)); }

    // Path plus CRC-32 of the file's current bytes. An unreadable input is
    // recorded as such; the command itself then fails on it.
    void add_input(const std::string& name, const fs::path& file) {
        add("input." + name, file.string());
        std::string digest = "unreadable";
        try {
            digest = hex32(file_crc32(file));
        } catch (const Error&) {
        }
        add("input." + name + ".crc32", digest);
    }

    void add_output(const std::string& name, const fs::path& file) { add("output." + name, file.string()); }

    void add_block(const std::string& prefix, const std::string& lines) {
        std::istringstream in(lines);
        std::string line;
        while (std::getline(in, line)) {
            const auto eq = line.find('=');
            if (eq != std::string::npos) {
                add(prefix + line.substr(0, eq), line.substr(eq + 1));
            }
        }
    }

    void write(const std::string& status, const std::string& error = {}) const {
        if (path_.has_parent_path()) {
            fs::create_directories(path_.parent_path());
        }
        std::ofstream out(path_, std::ios::binary | std::ios::trunc);
        if (!out) {
            fail(ErrorCode::IoFailure, "cannot write run manifest " + path_.string());
        }
        for (const auto& [k, v] : entries_) {
            out << k << '=' << v << '\n';
        }
        out << "status=" << status << '\n';
        if (!error.empty()) {
            out << "error=" << error << '\n';
        }
        if (!out) {
            fail(ErrorCode::IoFailure, "cannot write run manifest " + path_.string());
        }
    }

private:
    fs::path path_;
    std::vector<std::pair<std::string, std::string>> entries_;
};

fs::path default_manifest(const fs::path& primary_output) {
    return fs::path(primary_output.string() + ".run.manifest");
}

// Flag, else LP_SEED, else the fallback.
std::uint64_t resolve_seed(const std::optional<std::uint64_t>& flag, std::uint64_t fallback) {
    if (flag) {
        return *flag;
    }
    if (const char* env = std::getenv("LP_SEED"); env != nullptr && *env != '\0') {
        char* end = nullptr;
        errno = 0;
        const unsigned long long v = std::strtoull(env, &end, 10);
        if (errno != 0 || *end != '\0' || *env == '-') {
            fail(ErrorCode::Usage, std::string("LP_SEED is not an unsigned integer: ") + env);
        }
        return v;
    }
    return fallback;
}

std::vector<double> parse_values(const std::string& list) {
    std::vector<double> out;
    std::istringstream in(list);
    std::string item;
    while (std::getline(in, item, ',')) {
        if (item.empty()) {
            fail(ErrorCode::Usage, "empty entry in value list '" + list + "'");
        }
        std::size_t used = 0;
        double v = 0.0;
        try {
            v = std::stod(item, &used);
        } catch (const std::exception&) {
            used = 0;
        }
        if (used != item.size()) {
            fail(ErrorCode::Usage, "not a number in value list: '" + item + "'");
        }
        out.push_back(v);
    }
    if (out.empty()) {
        fail(ErrorCode::Usage, "empty value list");
    }
    return out;
}

struct ScoreOpts {
    std::string kind = "rmcm";
    std::size_t k = 10;
    double temperature = 1.0;
    bool joint = false;

    void attach(CLI::App* cmd) {
        cmd->add_option("--score", kind, "mcm | glmcm | rmcm")->capture_default_str();
        cmd->add_option("--k", k, "top-k over regions at inference")->capture_default_str();
        cmd->add_option("--temperature", temperature, "softmax temperature")->capture_default_str();
        cmd->add_flag("--joint-topk", joint, "rmcm: top-k over all (region, class) pairs");
    }

    ScoreSpec spec() const {
        ScoreSpec s;
        s.kind = parse_score_kind(kind);
        s.k_eval = k;
        s.temperature = temperature;
        s.joint_topk = joint;
        return s;
    }

    void record(RunManifest& m) const {
        m.add("score.kind", kind);
        m.add("score.k_eval", std::to_string(k));
        std::ostringstream t;
        t.precision(17);
        t << temperature;
        m.add("score.temperature", t.str());
        m.add("score.joint_topk", joint ? "1" : "0");
    }
};

struct TrainOpts {
    std::string config_file;
    std::vector<std::string> overrides;
    std::optional<std::uint64_t> seed;

    void attach(CLI::App* cmd) {
        cmd->add_option("--config", config_file, "key=value config file");
        cmd->add_option("--set", overrides, "config override key=value (repeatable)");
        cmd->add_option("--seed", seed, "random seed (falls back to LP_SEED, then the config)");
    }

    TrainConfig resolve() const {
        TrainConfig c = config_file.empty() ? TrainConfig{} : load_config(config_file);
        for (const auto& kv : overrides) {
            const auto eq = kv.find('=');
            if (eq == std::string::npos) {
                fail(ErrorCode::Usage, "--set expects key=value, got '" + kv + "'");
            }
            set_config_value(c, kv.substr(0, eq), kv.substr(eq + 1));
        }
        c.seed = resolve_seed(seed, c.seed);
        validate(c);
        return c;
    }
};

Matrix load_globals(const fs::path& path, const FeatureStore& store) {
    Matrix g = prompts_from_store(read_store(path));
    if (g.rows() != store.n_classes || g.cols() != store.d) {
        fail(ErrorCode::ShapeMismatch, "global prompt file " + path.string() + " has shape (" +
                                           std::to_string(g.rows()) + ", " + std::to_string(g.cols()) +
                                           "), store needs (" + std::to_string(store.n_classes) + ", " +
                                           std::to_string(store.d) + ")");
    }
    return g;
}

// Runs body with the manifest bracketing it.
int guarded(RunManifest& manifest, const std::function<void()>& body) {
    manifest.write("running");
    try {
        body();
    } catch (const Error& e) {
        manifest.write("failed", std::string(to_string(e.code())) + ": " + e.what());
        throw;
    } catch (const std::exception& e) {
        manifest.write("failed", std::string("IoFailure: ") + e.what());
        throw;
    }
    manifest.write("ok");
    return 0;
}

std::vector<ScoredSample> score_both(const PromptBank& bank, const FeatureStore& id, const FeatureStore& ood,
                                     const ScoreSpec& spec, std::size_t jobs) {
    auto samples = score_store(id, bank, spec, true, jobs);
    auto o = score_store(ood, bank, spec, false, jobs);
    samples.insert(samples.end(), o.begin(), o.end());
    return samples;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Local-prompt few-shot OOD detection over precomputed embeddings", "localprompt"};
    app.require_subcommand(1);
    app.set_version_flag("--version", kVersion);
    std::size_t jobs = 1;
    app.add_option("--jobs", jobs, "worker threads for training, scoring and sweeps")
        ->capture_default_str()
        ->check(CLI::PositiveNumber);
    std::string manifest_flag;
    app.add_option("--manifest", manifest_flag, "run manifest path (default: next to the main output)");

    // gen
    SynthSpec synth;
    std::string ood_mode = std::string(to_string(synth.ood_mode));
    std::string out_dir;
    std::optional<std::uint64_t> gen_seed;
    auto* gen = app.add_subcommand("gen", "write a synthetic dataset");
    gen->add_option("--out-dir", out_dir, "output directory")->required();
    gen->add_option("--classes", synth.n_classes)->capture_default_str();
    gen->add_option("--dim", synth.dim)->capture_default_str();
    gen->add_option("--tokens", synth.n_tokens)->capture_default_str();
    gen->add_option("--shots", synth.shots)->capture_default_str();
    gen->add_option("--test-per-class", synth.test_per_class)->capture_default_str();
    gen->add_option("--ood-count", synth.ood_count)->capture_default_str();
    gen->add_option("--id-fraction", synth.id_token_fraction)->capture_default_str();
    gen->add_option("--background", synth.n_background)->capture_default_str();
    gen->add_option("--sigma", synth.noise_sigma)->capture_default_str();
    gen->add_option("--ood-mode", ood_mode, "far | near | local_outlier")->capture_default_str();
    gen->add_option("--near-epsilon", synth.near_epsilon)->capture_default_str();
    gen->add_option("--foreign-tokens", synth.foreign_tokens)->capture_default_str();
    gen->add_option("--ood-classes", synth.n_ood_classes)->capture_default_str();
    gen->add_option("--crops", synth.crops)->capture_default_str();
    gen->add_option("--crop-min", synth.crop_min_fraction, "shortest crop window, fraction of N")->capture_default_str();
    gen->add_option("--crop-max", synth.crop_max_fraction, "longest crop window, fraction of N")->capture_default_str();
    gen->add_option("--seed", gen_seed, "random seed (falls back to LP_SEED, then 0)");

    // train
    TrainOpts train_opts;
    std::string train_store, globals_file, bank_out, log_out;
    auto* train_cmd = app.add_subcommand("train", "train local and negative prompts");
    train_cmd->add_option("--train", train_store, "training LPFS store with crop sets")->required();
    train_cmd->add_option("--globals", globals_file, "global prompt LPFS file")->required();
    train_cmd->add_option("--out", bank_out, "output checkpoint")->required();
    train_cmd->add_option("--log", log_out, "per-epoch loss CSV");
    train_opts.attach(train_cmd);

    // score
    ScoreOpts score_opts;
    std::string bank_in, id_store, ood_store, swap_file, scores_out;
    bool no_negatives = false;
    auto* score_cmd = app.add_subcommand("score", "score ID and OOD stores");
    score_cmd->add_option("--bank", bank_in, "checkpoint")->required();
    score_cmd->add_option("--id", id_store, "ID test store")->required();
    score_cmd->add_option("--ood", ood_store, "OOD test store")->required();
    score_cmd->add_option("--out", scores_out, "scores CSV")->required();
    score_cmd->add_option("--swap-globals", swap_file, "replace the global prompts with these");
    score_cmd->add_flag("--no-negatives", no_negatives, "drop the negative prompts before scoring");
    score_opts.attach(score_cmd);

    // eval
    ScoreOpts eval_score;
    std::string eval_scores, eval_bank, eval_id, eval_ood, report_out, density_out;
    std::size_t bins = 20;
    auto* eval_cmd = app.add_subcommand("eval", "AUROC, FPR95, ID accuracy and score densities");
    auto* from_csv = eval_cmd->add_option("--scores", eval_scores, "scores CSV");
    auto* from_bank = eval_cmd->add_option("--bank", eval_bank, "checkpoint (scores the stores itself)");
    eval_cmd->add_option("--id", eval_id, "ID test store");
    eval_cmd->add_option("--ood", eval_ood, "OOD test store");
    eval_cmd->add_option("--out", report_out, "report CSV")->required();
    eval_cmd->add_option("--density", density_out, "density histogram CSV");
    eval_cmd->add_option("--bins", bins, "histogram bins")->capture_default_str();
    from_csv->excludes(from_bank);
    eval_score.attach(eval_cmd);

    // sweep
    TrainOpts sweep_opts;
    ScoreOpts sweep_score;
    std::string sw_train, sw_globals, sw_id, sw_ood, sw_axis, sw_values, sweep_out;
    auto* sweep_cmd = app.add_subcommand("sweep", "train and evaluate over one hyperparameter axis");
    sweep_cmd->add_option("--train", sw_train, "training store with crop sets")->required();
    sweep_cmd->add_option("--globals", sw_globals, "global prompt LPFS file")->required();
    sweep_cmd->add_option("--id", sw_id, "ID test store")->required();
    sweep_cmd->add_option("--ood", sw_ood, "OOD test store")->required();
    sweep_cmd->add_option("--axis", sw_axis, "k_train | k_eval | lambda_neg | lambda_reg | n_neg | m1 | m2 | shots")
        ->required();
    sweep_cmd->add_option("--values", sw_values, "comma-separated values")->required();
    sweep_cmd->add_option("--out", sweep_out, "sweep CSV")->required();
    sweep_opts.attach(sweep_cmd);
    sweep_score.attach(sweep_cmd);

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::Success& e) {
        app.exit(e, out, err);
        return 0;
    } catch (const CLI::ParseError& e) {
        std::string msg = e.what();
        for (auto& ch : msg) {
            if (ch == '\n') ch = ' ';
        }
        err << "error: " << to_string(ErrorCode::Usage) << ": " << msg << '\n';
        return 2;
    }

    try {
        if (*gen) {
            synth.ood_mode = parse_ood_mode(ood_mode);
            synth.seed = resolve_seed(gen_seed, 0);
            validate(synth);
            RunManifest m(manifest_flag.empty() ? fs::path(out_dir) / "run.manifest" : fs::path(manifest_flag), "gen");
            m.add("seed", std::to_string(synth.seed));
            m.add_block("spec.", format_spec(synth));
            for (const char* name : {"id_train.lpfs", "id_test.lpfs", "ood_test.lpfs", "globals.lpfs", "synth.manifest"}) {
                m.add_output(name, fs::path(out_dir) / name);
            }
            return guarded(m, [&] {
                write_dataset(generate(synth), synth, out_dir);
                out << "wrote " << out_dir << '\n';
            });
        }

        if (*train_cmd) {
            const TrainConfig config = train_opts.resolve();
            RunManifest m(manifest_flag.empty() ? default_manifest(bank_out) : fs::path(manifest_flag), "train");
            m.add("seed", std::to_string(config.seed));
            m.add_block("config.", format_config(config));
            m.add_input("train", train_store);
            m.add_input("globals", globals_file);
            if (!train_opts.config_file.empty()) {
                m.add_input("config", train_opts.config_file);
            }
            m.add_output("bank", bank_out);
            if (!log_out.empty()) {
                m.add_output("log", log_out);
            }
            return guarded(m, [&] {
                const DatasetSplit full = read_split(train_store, SplitRole::IdTrain);
                const Matrix globals = load_globals(globals_file, full.store);
                const DatasetSplit split{SplitRole::IdTrain, few_shot_subsample(full.store, config.shots, config.seed)};
                const PromptBank init = init_bank(globals, split.store.n_classes, split.store.d, config.n_neg, config.seed);
                const TrainResult result = train(split, init, config, jobs);
                save_bank(result.bank, bank_out);
                if (!log_out.empty()) {
                    write_log_csv(log_out, result.log);
                }
                if (!result.log.epochs.empty()) {
                    out << "final loss " << result.log.epochs.back().loss.total << '\n';
                }
                out << "wrote " << bank_out << '\n';
            });
        }

        if (*score_cmd) {
            const ScoreSpec spec = score_opts.spec();
            RunManifest m(manifest_flag.empty() ? default_manifest(scores_out) : fs::path(manifest_flag), "score");
            score_opts.record(m);
            m.add("no_negatives", no_negatives ? "1" : "0");
            m.add_input("bank", bank_in);
            m.add_input("id", id_store);
            m.add_input("ood", ood_store);
            if (!swap_file.empty()) {
                m.add_input("swap_globals", swap_file);
            }
            m.add_output("scores", scores_out);
            return guarded(m, [&] {
                PromptBank bank = load_bank(bank_in);
                const FeatureStore id = read_store(id_store);
                const FeatureStore ood = read_store(ood_store);
                if (!swap_file.empty()) {
                    bank = swap_global_prompts(bank, load_globals(swap_file, id));
                }
                if (no_negatives) {
                    bank = without_negatives(bank);
                }
                write_scores_csv(scores_out, spec.kind, score_both(bank, id, ood, spec, jobs));
                out << "wrote " << scores_out << '\n';
            });
        }

        if (*eval_cmd) {
            const bool have_bank = !eval_bank.empty();
            if (eval_scores.empty() && !have_bank) {
                fail(ErrorCode::Usage, "eval needs --scores or --bank with --id and --ood");
            }
            if (have_bank && (eval_id.empty() || eval_ood.empty())) {
                fail(ErrorCode::Usage, "eval --bank needs --id and --ood");
            }
            RunManifest m(manifest_flag.empty() ? default_manifest(report_out) : fs::path(manifest_flag), "eval");
            if (have_bank) {
                eval_score.record(m);
                m.add_input("bank", eval_bank);
                m.add_input("id", eval_id);
                m.add_input("ood", eval_ood);
            } else {
                m.add_input("scores", eval_scores);
            }
            m.add_output("report", report_out);
            if (!density_out.empty()) {
                m.add("bins", std::to_string(bins));
                m.add_output("density", density_out);
            }
            return guarded(m, [&] {
                std::vector<ScoredSample> samples;
                EvalReport report;
                if (have_bank) {
                    const ScoreSpec spec = eval_score.spec();
                    const PromptBank bank = load_bank(eval_bank);
                    const DatasetSplit id = read_split(eval_id, SplitRole::IdTest);
                    const FeatureStore ood = read_store(eval_ood);
                    samples = score_both(bank, id.store, ood, spec, jobs);
                    report = evaluate_scores(samples, spec);
                    report.id_accuracy = id_accuracy(id, bank, spec.temperature, spec.k_eval, jobs);
                } else {
                    ScoreTable table = read_scores_csv(eval_scores);
                    ScoreSpec spec;
                    spec.kind = table.kind;
                    samples = std::move(table.samples);
                    report = evaluate_scores(samples, spec);
                }
                write_report_csv(report_out, std::span(&report, 1));
                if (!density_out.empty()) {
                    std::vector<double> id_s, ood_s;
                    for (const auto& s : samples) {
                        (s.is_id_truth ? id_s : ood_s).push_back(s.score);
                    }
                    write_hist_csv(density_out, density_hist(id_s, ood_s, bins));
                }
                out << "auroc " << report.auroc << " fpr95 " << report.fpr95 << '\n';
            });
        }

        if (*sweep_cmd) {
            const TrainConfig base = sweep_opts.resolve();
            const ScoreSpec spec = sweep_score.spec();
            const SweepAxis axis = parse_sweep_axis(sw_axis);
            const std::vector<double> values = parse_values(sw_values);
            RunManifest m(manifest_flag.empty() ? default_manifest(sweep_out) : fs::path(manifest_flag), "sweep");
            m.add("seed", std::to_string(base.seed));
            m.add_block("config.", format_config(base));
            sweep_score.record(m);
            m.add("axis", sw_axis);
            m.add("values", sw_values);
            m.add_input("train", sw_train);
            m.add_input("globals", sw_globals);
            m.add_input("id", sw_id);
            m.add_input("ood", sw_ood);
            m.add_output("sweep", sweep_out);
            return guarded(m, [&] {
                ExperimentData data;
                data.train = read_split(sw_train, SplitRole::IdTrain);
                data.id_test = read_store(sw_id);
                data.ood_test = read_store(sw_ood);
                data.global_prompts = load_globals(sw_globals, data.train.store);
                const auto rows = sweep(data, base, spec, axis, values, jobs);
                write_sweep_csv(sweep_out, rows);
                out << "wrote " << sweep_out << '\n';
            });
        }
    } catch (const Error& e) {
        err << "error: " << to_string(e.code()) << ": " << e.what() << '\n';
        return e.code() == ErrorCode::Usage ? 2 : 1;
    } catch (const std::exception& e) {
        err << "error: " << to_string(ErrorCode::IoFailure) << ": " << e.what() << '\n';
        return 1;
    }
    return 2;
}

}  // namespace lp
