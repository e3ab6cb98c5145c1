#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "firmcast/cli.hpp"

using namespace firmcast;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    std::string str(const std::string& sub = {}) const { return (sub.empty() ? path : path / sub).string(); }
};

int run(const std::vector<std::string>& args) { return cli::dispatch(args); }

std::string slurp(const fs::path& p) {
    std::ifstream in(p);
    std::ostringstream out;
    out << in.rdbuf();
    return out.str();
}

} // namespace

TEST_CASE("--help exits 0, unknown flags exit 2") {
    CHECK(run({"--help"}) == 0);
    CHECK(run({"definitely-not-a-subcommand"}) == 2);
    CHECK(run({"synth", "--no-such-flag"}) == 2);
    CHECK(run({}) == 2);  // no subcommand: usage
}

TEST_CASE("synth then preprocess then fit-scaling then gm-forecast") {
    TempDir dir("firmcast_cli_pipeline");
    CHECK(run({"synth", "--out", dir.str("raw.csv"), "--seed", "3"}) == 0);
    CHECK(fs::exists(dir.str("raw.csv")));

    CHECK(run({"preprocess", "--input", dir.str("raw.csv"), "--output", dir.str("proc.csv"), "--base-year",
               "2015"}) == 0);
    CHECK(fs::exists(dir.str("proc.csv")));

    CHECK(run({"fit-scaling", "--train", dir.str("proc.csv"), "--out", dir.str("scaling.params")}) == 0);
    const std::string params_text = slurp(dir.str("scaling.params"));
    CHECK(params_text.find("[LT]") != std::string::npos);
    CHECK(params_text.find("beta =") != std::string::npos);
    CHECK(params_text.find("data_hash = fnv1a:") != std::string::npos);

    CHECK(run({"gm-forecast", "--params", dir.str("scaling.params"), "--input", dir.str("proc.csv"), "--horizon",
               "4", "--out", dir.str("gm.tsv")}) == 0);
    const std::string forecast_text = slurp(dir.str("gm.tsv"));
    CHECK(forecast_text.find("company_id\torigin_year\tmodel\tstep\tindicator\tpredicted_value\tstatus") !=
          std::string::npos);
    CHECK(forecast_text.find("\tgm\t") != std::string::npos);
}

TEST_CASE("synth --suite writes the three canonical panels") {
    TempDir dir("firmcast_cli_suite");
    CHECK(run({"synth", "--out", dir.str(), "--suite", "--seed", "2"}) == 0);
    CHECK(fs::exists(dir.str("noiseless.csv")));
    CHECK(fs::exists(dir.str("gibratlike.csv")));
    CHECK(fs::exists(dir.str("structured.csv")));
}

TEST_CASE("full train/forecast/evaluate/explain/represent flow on a small panel") {
    TempDir dir("firmcast_cli_train");
    // Small panel and model so the whole flow stays fast.
    {
        std::ofstream cfg(dir.str("synth.cfg"));
        cfg << "n_companies = 60\nnoise = ar1\nrho = 0.6\ngamma = 0.2\n";
    }
    CHECK(run({"synth", "--config", dir.str("synth.cfg"), "--out", dir.str("raw.csv"), "--seed", "5"}) == 0);
    CHECK(run({"preprocess", "--input", dir.str("raw.csv"), "--output", dir.str("proc.csv"), "--base-year",
               "2015"}) == 0);
    CHECK(run({"fit-scaling", "--train", dir.str("proc.csv"), "--out", dir.str("scaling.params")}) == 0);

    {
        std::ofstream cfg(dir.str("train.cfg"));
        cfg << "hidden_dim = 6\nmax_epochs = 8\npatience = 4\nbatch_size = 32\n";
    }
    CHECK(run({"train", "--train", dir.str("proc.csv"), "--val", dir.str("proc.csv"), "--params",
               dir.str("scaling.params"), "--config", dir.str("train.cfg"), "--out", dir.str("hybrid.model"),
               "--mode", "nn+gm", "--seed", "1"}) == 0);
    CHECK(run({"train", "--train", dir.str("proc.csv"), "--val", dir.str("proc.csv"), "--params",
               dir.str("scaling.params"), "--config", dir.str("train.cfg"), "--out", dir.str("pure.model"),
               "--mode", "nn", "--seed", "1"}) == 0);

    CHECK(run({"forecast", "--model", dir.str("hybrid.model"), "--input", dir.str("proc.csv"), "--horizon", "3",
               "--mode", "nn+gm", "--params", dir.str("scaling.params"), "--out", dir.str("fc.tsv")}) == 0);
    CHECK(fs::exists(dir.str("fc.tsv")));

    CHECK(run({"evaluate", "--input", dir.str("proc.csv"), "--params", dir.str("scaling.params"), "--model-hybrid",
               dir.str("hybrid.model"), "--model-nn", dir.str("pure.model"), "--horizons", "1..5", "--report",
               dir.str("eval"), "--split-seed", "1"}) == 0);

    // Default roster is all five models, recorded in the report header.
    const std::string summary = slurp(dir.str("eval") + "/summary.txt");
    CHECK(summary.find("models = persistence,gibrat,gm,nn,nn+gm") != std::string::npos);
    CHECK(fs::exists(dir.str("eval") + "/mae_by_step.tsv"));
    CHECK(fs::exists(dir.str("eval") + "/cmae_cdf.tsv"));
    CHECK(fs::exists(dir.str("eval") + "/gm_threshold.tsv"));
    CHECK(fs::exists(dir.str("eval") + "/plots/mae_vs_step.svg"));

    CHECK(run({"explain", "--model", dir.str("hybrid.model"), "--input", dir.str("proc.csv"), "--params",
               dir.str("scaling.params"), "--target", "AT", "--permutations", "200", "--sample", "5", "--out",
               dir.str("explain")}) == 0);
    CHECK(fs::exists(dir.str("explain") + "/shapley.tsv"));

    CHECK(run({"represent", "--model", dir.str("hybrid.model"), "--input", dir.str("proc.csv"), "--color-by",
               "size", "--out", dir.str("repr")}) == 0);
    CHECK(fs::exists(dir.str("repr") + "/representation.tsv"));
    CHECK(fs::exists(dir.str("repr") + "/representation_size.svg"));
}

TEST_CASE("evaluate with a model roster missing its model file fails cleanly") {
    TempDir dir("firmcast_cli_missing");
    CHECK(run({"synth", "--out", dir.str("raw.csv"), "--seed", "4"}) == 0);
    CHECK(run({"preprocess", "--input", dir.str("raw.csv"), "--output", dir.str("proc.csv"), "--base-year",
               "2015"}) == 0);
    CHECK(run({"fit-scaling", "--train", dir.str("proc.csv"), "--out", dir.str("scaling.params")}) == 0);
    CHECK(run({"evaluate", "--input", dir.str("proc.csv"), "--params", dir.str("scaling.params"), "--models",
               "nn,nn+gm", "--report", dir.str("eval")}) == 1);
}

TEST_CASE("reproduce runs the full pipeline and is deterministic") {
    TempDir dir("firmcast_cli_reproduce");
    {
        std::ofstream cfg(dir.str("run.cfg"));
        cfg << "n_companies = 50\nhidden_dim = 6\nmax_epochs = 6\npatience = 3\nhorizon = 5\n"
            << "n_permutations = 60\nsample_companies = 5\nbatch_size = 32\n";
    }
    CHECK(run({"reproduce", "--seed", "1", "--out", dir.str("run_a"), "--config", dir.str("run.cfg")}) == 0);
    CHECK(run({"reproduce", "--seed", "1", "--out", dir.str("run_b"), "--config", dir.str("run.cfg")}) == 0);

    for (const char* name : {"mae_pooled.tsv", "mae_by_step.tsv", "cmae_cdf.tsv", "summary.txt", "shapley.tsv",
                             "representation.tsv", "preprocess.txt"}) {
        const std::string a = slurp(dir.path / "run_a" / "reports" / name);
        const std::string b = slurp(dir.path / "run_b" / "reports" / name);
        REQUIRE_FALSE(a.empty());
        CHECK(a == b);
    }
    CHECK(fs::exists(dir.path / "run_a" / "manifest"));
    CHECK(fs::exists(dir.path / "run_a" / "models" / "nn_gm.model"));
    CHECK(fs::exists(dir.path / "run_a" / "panels" / "train.csv"));

    // A different seed changes the reports.
    CHECK(run({"reproduce", "--seed", "2", "--out", dir.str("run_c"), "--config", dir.str("run.cfg")}) == 0);
    CHECK(slurp(dir.path / "run_a" / "reports" / "mae_pooled.tsv") !=
          slurp(dir.path / "run_c" / "reports" / "mae_pooled.tsv"));
}
