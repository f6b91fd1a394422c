#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "anchorloc/cli.hpp"
#include "support.hpp"

using namespace anchorloc;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    int code;
    std::string out;
    std::string err;
};

Outcome run_cli(const std::vector<std::string>& args) {
    std::ostringstream out, err;
    const int code = cli::run(args, out, err);
    return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::size_t line_count(const std::string& s) { return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n')); }

// A small run configuration so that every command finishes quickly.
fs::path small_config(const fs::path& dir, const std::string& lr = "0.001") {
    const fs::path p = dir / ("small_" + lr + ".ini");
    std::ofstream os(p);
    os << "[network]\nhidden_layers = 8\n"
       << "[train]\nepochs = 2\nbatch_size = 16\nlr = " << lr << "\n"
       << "[anchors]\nframe_interval = 10\n"
       << "[world]\nn_train = 120\nn_test = 30\n";
    return p;
}

}  // namespace

TEST(Cli, GenWorldWritesDatasetAndSnapshot) {
    const fs::path dir = testing_support::scratch_dir("cli_gen");
    const fs::path data = dir / "data";
    const std::string cfg = small_config(dir).string();
    const Outcome r = run_cli({"--config", cfg, "--seed", "5", "--out", data.string(), "gen-world"});
    ASSERT_EQ(r.code, 0) << r.err;
    for (const char* f : {"poses_train.txt", "poses_test.txt", "features_train.bin", "features_test.bin",
                          cli::kWorldFile, cli::kConfigFile}) {
        EXPECT_TRUE(fs::exists(data / f)) << f;
    }
    EXPECT_EQ(line_count(slurp(data / "poses_train.txt")), 120u);
    const RunConfig snap = load_config(data / cli::kConfigFile);
    EXPECT_EQ(snap.world.seed, 5u);
    EXPECT_EQ(snap.data_dir, data.string());
}

TEST(Cli, TrainEvalPipeline) {
    const fs::path dir = testing_support::scratch_dir("cli_pipeline");
    const std::string cfg = small_config(dir).string();
    const fs::path data = dir / "data";
    const fs::path model = dir / "model";
    ASSERT_EQ(run_cli({"--config", cfg, "--out", data.string(), "gen-world"}).code, 0);

    Outcome r =
        run_cli({"--config", cfg, "--out", model.string(), "train", "--data", data.string(), "--no-cross-entropy"});
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_NE(r.out.find("anchors=12"), std::string::npos) << r.out;
    EXPECT_FALSE(load_config(model / cli::kConfigFile).train.weights.use_cross_entropy);
    EXPECT_EQ(line_count(slurp(model / cli::kTrainLogFile)), 3u);

    r = run_cli({"--config", cfg, "--out", model.string(), "train", "--data", data.string(), "--cross-entropy"});
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_TRUE(load_config(model / cli::kConfigFile).train.weights.use_cross_entropy);

    r = run_cli({"--out", model.string(), "eval", "--data", data.string(), "--k", "10"});
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_NE(r.out.find("median_m="), std::string::npos);
    EXPECT_NE(r.out.find("discovery_rate="), std::string::npos);
    EXPECT_EQ(line_count(slurp(model / cli::kPerSampleFile)), 31u);
    EXPECT_NE(slurp(model / cli::kReportFile).find("\"accuracy_2m_5deg\""), std::string::npos);

    // a checkpoint trained with k = 10 evaluated as if k = 20
    r = run_cli({"--out", model.string(), "eval", "--data", data.string(), "--k", "20"});
    EXPECT_EQ(r.code, 2);
    EXPECT_NE(r.err.find("N=12"), std::string::npos) << r.err;
}

TEST(Cli, OracleCheckpointScoresPerfectly) {
    const fs::path dir = testing_support::scratch_dir("cli_oracle");
    const Outcome r = run_cli({"--out", dir.string(), "eval", "--checkpoint",
                               testing_support::fixture("oracle_checkpoint.txt").string(), "--data",
                               testing_support::fixture("oracle").string()});
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_NE(r.out.find("accuracy=1\n"), std::string::npos) << r.out;
    EXPECT_EQ(line_count(slurp(dir / cli::kPerSampleFile)), 6u);
}

TEST(Cli, MissingDatasetLeavesNoOutputs) {
    const fs::path dir = testing_support::scratch_dir("cli_missing");
    const fs::path model = dir / "model";
    const Outcome r = run_cli({"--out", model.string(), "train", "--data", (dir / "nowhere").string()});
    EXPECT_EQ(r.code, 2);
    EXPECT_FALSE(r.err.empty());
    EXPECT_FALSE(fs::exists(model));
}

TEST(Cli, SweepIsDeterministic) {
    const fs::path dir = testing_support::scratch_dir("cli_sweep");
    const std::string cfg = small_config(dir).string();
    const fs::path a = dir / "a";
    const fs::path b = dir / "b";
    ASSERT_EQ(run_cli({"--config", cfg, "--out", a.string(), "sweep-anchors", "--k", "1,5,10,20"}).code, 0);
    ASSERT_EQ(run_cli({"--config", cfg, "--out", b.string(), "sweep-anchors", "--k", "1,5,10,20"}).code, 0);
    const std::string csv = slurp(a / cli::kSweepCsvFile);
    EXPECT_EQ(line_count(csv), 5u);
    EXPECT_EQ(csv, slurp(b / cli::kSweepCsvFile));
    EXPECT_EQ(slurp(a / cli::kSweepSvgFile), slurp(b / cli::kSweepSvgFile));
}

TEST(Cli, ExitCodes) {
    EXPECT_EQ(run_cli({}).code, 1);
    EXPECT_EQ(run_cli({"bogus"}).code, 1);
    EXPECT_EQ(run_cli({"train", "--epochs", "many"}).code, 1);
    EXPECT_EQ(run_cli({"--help"}).code, 0);

    const fs::path dir = testing_support::scratch_dir("cli_diverge");
    const fs::path data = dir / "data";
    ASSERT_EQ(run_cli({"--config", small_config(dir).string(), "--out", data.string(), "gen-world"}).code, 0);
    const std::string hot = small_config(dir, "1e250").string();
    const Outcome r = run_cli({"--config", hot, "--out", (dir / "model").string(), "train", "--data", data.string()});
    EXPECT_EQ(r.code, 3);
    EXPECT_NE(r.err.find("epoch"), std::string::npos) << r.err;
    EXPECT_FALSE(fs::exists(dir / "model" / cli::kCheckpointFile));
}
