#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iterator>
#include <map>
#include <sstream>
#include <string>

#include "localprompt/cli.hpp"
#include "localprompt/prompt_bank.hpp"
#include "localprompt/scoring.hpp"
#include "localprompt/synthgen.hpp"
#include "support.hpp"

using namespace lp;
namespace fs = std::filesystem;

namespace {

struct Run {
    int code;
    std::string out;
    std::string err;
};

Run cli(const std::vector<std::string>& args) {
    std::ostringstream out, err;
    const int code = run_cli(args, out, err);
    return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), {}};
}

std::map<std::string, std::string> read_manifest(const fs::path& p) {
    std::map<std::string, std::string> kv;
    std::istringstream in(slurp(p));
    std::string line;
    while (std::getline(in, line)) {
        const auto eq = line.find('=');
        if (eq != std::string::npos) kv[line.substr(0, eq)] = line.substr(eq + 1);
    }
    return kv;
}

// A small dataset written once per test binary.
const fs::path& small_data() {
    static const fs::path dir = [] {
        auto d = testing_support::scratch_dir("cli_data");
        const Run r = cli({"gen", "--out-dir", d.string(), "--classes", "4", "--dim", "16", "--tokens", "8",
                           "--shots", "4", "--test-per-class", "5", "--ood-count", "20", "--background", "3",
                           "--crops", "6", "--seed", "3"});
        REQUIRE(r.code == 0);
        return d;
    }();
    return dir;
}

std::vector<std::string> train_args(const fs::path& data, const fs::path& out) {
    return {"train", "--train", (data / "id_train.lpfs").string(), "--globals", (data / "globals.lpfs").string(),
            "--out", out.string(), "--set", "shots=4", "--set", "m=6", "--set", "m1=2", "--set", "m2=1",
            "--set", "N_neg=4", "--set", "epochs=3", "--set", "batch_size=8", "--set", "T=0.2",
            "--set", "lr=0.1"};
}

}  // namespace

TEST_CASE("gen writes the dataset and a manifest") {
    const auto& d = small_data();
    for (const char* f : {"id_train.lpfs", "id_test.lpfs", "ood_test.lpfs", "globals.lpfs", "synth.manifest"}) {
        CHECK(fs::exists(d / f));
    }
    const auto m = read_manifest(d / "run.manifest");
    CHECK(m.at("format") == "LPRUN");
    CHECK(m.at("command") == "gen");
    CHECK(m.at("seed") == "3");
    CHECK(m.at("spec.classes") == "4");
    CHECK(m.at("status") == "ok");
}

TEST_CASE("zero epochs writes the initial bank") {
    const auto& d = small_data();
    const auto out = testing_support::scratch_dir("cli_e0") / "bank.lpbank";
    auto args = train_args(d, out);
    args.insert(args.end(), {"--set", "epochs=0", "--seed", "5"});
    REQUIRE(cli(args).code == 0);
    const Matrix globals = prompts_from_store(read_store(d / "globals.lpfs"));
    CHECK(load_bank(out) == init_bank(globals, 4, 16, 4, 5));
    const auto m = read_manifest(out.string() + ".run.manifest");
    CHECK(m.at("status") == "ok");
    CHECK(m.at("seed") == "5");
    CHECK(m.at("config.epochs") == "0");
    CHECK(m.at("input.train.crc32").size() == 8);
}

TEST_CASE("rmcm with k=1 on a plain bank matches glmcm") {
    const auto& d = small_data();
    const auto dir = testing_support::scratch_dir("cli_reduce");
    auto args = train_args(d, dir / "bank.lpbank");
    args.insert(args.end(), {"--set", "epochs=0", "--set", "N_neg=0"});
    REQUIRE(cli(args).code == 0);
    auto score = [&](const std::string& kind, const fs::path& out) {
        return cli({"score", "--bank", (dir / "bank.lpbank").string(), "--id", (d / "id_test.lpfs").string(),
                    "--ood", (d / "ood_test.lpfs").string(), "--score", kind, "--k", "1", "--out", out.string()})
            .code;
    };
    REQUIRE(score("rmcm", dir / "r.csv") == 0);
    REQUIRE(score("glmcm", dir / "g.csv") == 0);
    const auto r = read_scores_csv(dir / "r.csv");
    const auto g = read_scores_csv(dir / "g.csv");
    REQUIRE(r.samples.size() == g.samples.size());
    for (std::size_t i = 0; i < r.samples.size(); ++i) {
        CHECK(r.samples[i].image_id == g.samples[i].image_id);
        CHECK(r.samples[i].is_id_truth == g.samples[i].is_id_truth);
        CHECK(r.samples[i].predicted_class == g.samples[i].predicted_class);
        CHECK(std::abs(r.samples[i].score - g.samples[i].score) < 1e-9);
    }
}

TEST_CASE("end to end pipeline") {
    const auto& d = small_data();
    const auto dir = testing_support::scratch_dir("cli_e2e");
    REQUIRE(cli(train_args(d, dir / "bank.lpbank")).code == 0);
    REQUIRE(cli({"score", "--bank", (dir / "bank.lpbank").string(), "--id", (d / "id_test.lpfs").string(),
                 "--ood", (d / "ood_test.lpfs").string(), "--temperature", "0.2", "--out",
                 (dir / "scores.csv").string()})
                .code == 0);
    const Run e = cli({"eval", "--scores", (dir / "scores.csv").string(), "--out", (dir / "report.csv").string(),
                       "--density", (dir / "density.csv").string()});
    REQUIRE(e.code == 0);
    std::istringstream rep(slurp(dir / "report.csv"));
    std::string header, row;
    std::getline(rep, header);
    std::getline(rep, row);
    CHECK(header == "score_kind,k_eval,auroc,fpr95,n_id,n_ood,id_accuracy");
    std::vector<std::string> cells;
    std::istringstream cs(row);
    for (std::string c; std::getline(cs, c, ',');) cells.push_back(c);
    REQUIRE(cells.size() >= 4);
    const double au = std::stod(cells[2]), fpr = std::stod(cells[3]);
    CHECK(std::isfinite(au));
    CHECK(std::isfinite(fpr));
    CHECK(au >= 0.0);
    CHECK(au <= 1.0);

    const Run b = cli({"eval", "--bank", (dir / "bank.lpbank").string(), "--id", (d / "id_test.lpfs").string(),
                       "--ood", (d / "ood_test.lpfs").string(), "--temperature", "0.2", "--out",
                       (dir / "report2.csv").string()});
    CHECK(b.code == 0);

    const Run s = cli({"sweep", "--train", (d / "id_train.lpfs").string(), "--globals",
                       (d / "globals.lpfs").string(), "--id", (d / "id_test.lpfs").string(), "--ood",
                       (d / "ood_test.lpfs").string(), "--axis", "k_eval", "--values", "1,4", "--set", "shots=4",
                       "--set", "m=6", "--set", "m1=2", "--set", "N_neg=4", "--set", "epochs=1", "--set",
                       "batch_size=8", "--out", (dir / "sweep.csv").string()});
    CHECK(s.code == 0);
    std::istringstream sw(slurp(dir / "sweep.csv"));
    int lines = 0;
    for (std::string l; std::getline(sw, l);) ++lines;
    CHECK(lines == 3);
}

TEST_CASE("usage and module errors") {
    const auto& d = small_data();
    const auto dir = testing_support::scratch_dir("cli_err");
    Run r = cli({});
    CHECK(r.code == 2);
    CHECK(r.err.rfind("error: Usage: ", 0) == 0);
    r = cli({"train", "--train", "x"});
    CHECK(r.code == 2);
    r = cli({"score", "--bank", "b", "--id", "i", "--ood", "o", "--out", (dir / "s.csv").string(), "--score", "max"});
    CHECK(r.code != 0);
    r = cli({"eval", "--out", (dir / "r.csv").string()});
    CHECK(r.code == 2);
    CHECK(cli({"--version"}).code == 0);
    CHECK(cli({"--help"}).code == 0);

    // a missing input fails after the manifest is written
    r = cli({"score", "--bank", (dir / "missing.lpbank").string(), "--id", (d / "id_test.lpfs").string(), "--ood",
             (d / "ood_test.lpfs").string(), "--out", (dir / "s.csv").string()});
    CHECK(r.code == 1);
    CHECK(r.err.find('\n') == r.err.size() - 1);
    const auto m = read_manifest(dir / "s.csv.run.manifest");
    CHECK(m.at("status") == "failed");
    CHECK(m.at("input.bank.crc32") == "unreadable");
    CHECK_FALSE(m.at("error").empty());
}

TEST_CASE("LP_SEED is the fallback seed") {
    const auto& d = small_data();
    const auto dir = testing_support::scratch_dir("cli_seed");
    setenv("LP_SEED", "42", 1);
    auto args = train_args(d, dir / "a.lpbank");
    args.insert(args.end(), {"--set", "epochs=0"});
    REQUIRE(cli(args).code == 0);
    CHECK(read_manifest(dir / "a.lpbank.run.manifest").at("seed") == "42");
    args = train_args(d, dir / "b.lpbank");
    args.insert(args.end(), {"--set", "epochs=0", "--seed", "7"});
    REQUIRE(cli(args).code == 0);
    CHECK(read_manifest(dir / "b.lpbank.run.manifest").at("seed") == "7");
    setenv("LP_SEED", "nope", 1);
    CHECK(cli(train_args(d, dir / "c.lpbank")).code == 2);
    unsetenv("LP_SEED");
}
