// End-to-end checks of the command-line tool. The binary path arrives via
// the PEFTT_CLI environment variable (set by ctest); without it the cases
// are skipped.
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "json.hpp"
#include "peftt/data.hpp"

namespace fs = std::filesystem;

namespace {

const char* cli_path() { return std::getenv("PEFTT_CLI"); }

struct RunResult {
    int exit_code = -1;
    std::string output;
};

RunResult run_cli(const std::string& args) {
    const fs::path out_file = fs::temp_directory_path() / "peftt_cli_out.txt";
    const std::string cmd = std::string(cli_path()) + " " + args + " > " +
                            out_file.string() + " 2>&1";
    const int status = std::system(cmd.c_str());
    RunResult r;
    r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    std::ifstream f(out_file);
    std::ostringstream ss;
    ss << f.rdbuf();
    r.output = ss.str();
    fs::remove(out_file);
    return r;
}

struct TempDir {
    fs::path path;
    explicit TempDir(const char* name) : path(fs::temp_directory_path() / name) {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() {
        std::error_code ec;
        fs::remove_all(path, ec);
    }
};

}  // namespace

TEST_CASE("cli: account prints the adapter count and ratio") {
    if (!cli_path()) return;
    RunResult r = run_cli("account --model cino-small --rank 8");
    CHECK(r.exit_code == 0);
    CHECK(r.output.find("258048") != std::string::npos);
    CHECK(r.output.find("0.174666%") != std::string::npos);
}

TEST_CASE("cli: synth writes a loadable TSV corpus") {
    if (!cli_path()) return;
    TempDir dir("peftt_cli_synth");
    const std::string corpus = (dir.path / "corpus.tsv").string();
    RunResult r = run_cli("synth --classes 12 --per-class 5 --seed 3 --out " + corpus +
                          " --verbalizer-out " + (dir.path / "verb.tsv").string());
    CHECK(r.exit_code == 0);
    peftt::LoadedCorpus loaded = peftt::load_tncc(corpus);
    CHECK(loaded.examples.size() == 60);
    CHECK(loaded.label_names.size() == 12);
    CHECK(fs::exists(dir.path / "verb.tsv"));
}

TEST_CASE("cli: train writes a run directory and eval reproduces the metrics") {
    if (!cli_path()) return;
    TempDir dir("peftt_cli_train");
    const std::string out = (dir.path / "run").string();
    RunResult train = run_cli(
        "train --scenario TBAP-desk --corpus synthetic:4x8 --epochs 3 --seed 5 --quiet "
        "--out " + out);
    REQUIRE(train.exit_code == 0);
    REQUIRE(fs::exists(fs::path(out) / "report.json"));
    REQUIRE(fs::exists(fs::path(out) / "checkpoint.peftt"));
    REQUIRE(fs::exists(fs::path(out) / "adapters.peftt"));
    REQUIRE(fs::exists(fs::path(out) / "base.peftt"));
    REQUIRE(fs::exists(fs::path(out) / "vocab.txt"));
    REQUIRE(fs::exists(fs::path(out) / "label_map.txt"));
    REQUIRE(fs::exists(fs::path(out) / "template.txt"));
    REQUIRE(fs::exists(fs::path(out) / "verbalizer.tsv"));

    std::ifstream jf(fs::path(out) / "report.json");
    nlohmann::json report = nlohmann::json::parse(jf);
    CHECK(report["trainable_params"] == 2560);
    CHECK(report["added_label_tokens"] == 4);

    RunResult eval = run_cli("eval --dir " + out +
                             " --corpus synthetic:4x8 --seed 5 --split test");
    REQUIRE(eval.exit_code == 0);
    // The eval path prints full-precision doubles; compare exactly.
    double acc = -1, f1 = -1;
    std::istringstream in(eval.output);
    std::string tok;
    while (in >> tok) {
        if (tok == "acc") in >> acc;
        if (tok == "macro_f1") in >> f1;
    }
    CHECK(acc == report["test_acc"].get<double>());
    CHECK(f1 == report["test_macro_f1"].get<double>());
}

TEST_CASE("cli: unknown scenario fails with a one-line diagnostic") {
    if (!cli_path()) return;
    RunResult r = run_cli("train --scenario NOPE --corpus synthetic:4x8");
    CHECK(r.exit_code != 0);
    CHECK(r.output.find("error:") != std::string::npos);
    CHECK(r.output.find("NOPE") != std::string::npos);
}

TEST_CASE("cli: prompt mode on a file corpus requires a template") {
    if (!cli_path()) return;
    TempDir dir("peftt_cli_prompt_err");
    const std::string corpus = (dir.path / "c.tsv").string();
    REQUIRE(run_cli("synth --classes 4 --per-class 10 --seed 1 --out " + corpus).exit_code ==
            0);
    RunResult r = run_cli("train --model desk --mode prompt --corpus " + corpus +
                          " --epochs 1");
    CHECK(r.exit_code != 0);
    CHECK(r.output.find("template") != std::string::npos);
}
