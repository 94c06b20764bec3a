#ifdef PAMT_HAVE_CLI

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "pamt_cli/cli.hpp"

namespace pamt {
namespace {

struct CliResult {
    int code;
    std::string out, err;
};

CliResult run_cli(std::vector<std::string> args) {
    std::ostringstream out, err;
    const int code = cli::run(args, out, err);
    return {code, out.str(), err.str()};
}

std::string slurp(const std::string& file) {
    std::ifstream in(file);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

class CliTest : public ::testing::Test {
protected:
    void SetUp() override {
        root_ = std::filesystem::temp_directory_path() / "pamt_cli_test";
        std::filesystem::remove_all(root_);
        std::filesystem::create_directories(root_);
    }
    void TearDown() override { std::filesystem::remove_all(root_); }

    std::string path(const std::string& leaf) const { return (root_ / leaf).string(); }

    void generate_tiny() {
        const auto r = run_cli({"generate", "--out", path("data"), "--n-bags", "24", "--min-patches", "4",
                                "--max-patches", "8", "--patch-size", "8", "--witness-rate", "0.25", "--blob-sigma",
                                "1.5", "--seed", "3"});
        ASSERT_EQ(r.code, cli::kExitOk) << r.err;
    }

    std::vector<std::string> tiny_train_args() const {
        return {"--epochs", "2", "--topk", "3", "--clusters", "2", "--pad-size", "1", "--scorer-epochs", "2",
                "--attention-dim", "8", "--block-channels", "4,6", "--train-ratio", "0.5", "--val-ratio", "0.25",
                "--test-ratio", "0.25"};
    }

    std::filesystem::path root_;
};

TEST_F(CliTest, HelpExitsZero) {
    const auto r = run_cli({"--help"});
    EXPECT_EQ(r.code, cli::kExitOk);
    EXPECT_NE(r.out.find("train"), std::string::npos);
}

TEST_F(CliTest, UnknownStrategyIsUsageError) {
    generate_tiny();
    const auto r = run_cli({"train", "--data", path("data"), "--out", path("run"), "--strategy", "bitfit"});
    EXPECT_EQ(r.code, cli::kExitUsage);
    EXPECT_NE(r.err.find("bias_only"), std::string::npos) << r.err;
}

TEST_F(CliTest, MissingRequiredOptionIsUsageError) {
    EXPECT_EQ(run_cli({"generate"}).code, cli::kExitUsage);
    EXPECT_EQ(run_cli({"frobnicate"}).code, cli::kExitUsage);
    EXPECT_EQ(run_cli({"train", "--data", path("nope"), "--out", path("run")}).code, cli::kExitUsage);
}

TEST_F(CliTest, RuntimeFailureExitsOne) {
    generate_tiny();
    auto args = std::vector<std::string>{"train", "--data", path("data"), "--out", path("run"), "--clusters", "999"};
    const auto r = run_cli(args);
    EXPECT_EQ(r.code, cli::kExitRuntime);
    EXPECT_FALSE(r.err.empty());
}

TEST_F(CliTest, TrainReportExport) {
    generate_tiny();
    EXPECT_TRUE(std::filesystem::exists(path("data/config.ini")));
    std::vector<std::string> args{"train", "--data", path("data"), "--out", path("runs/a")};
    for (const auto& a : tiny_train_args()) args.push_back(a);
    auto r = run_cli(args);
    ASSERT_EQ(r.code, cli::kExitOk) << r.err;
    for (const char* f : {"metrics.json", "manifest.json", "snapshot.bin", "clusters.png", "config.ini"})
        EXPECT_TRUE(std::filesystem::exists(path("runs/a/") + f)) << f;

    // The saved config reproduces the run.
    r = run_cli({"train", "--config", path("runs/a/config.ini"), "--data", path("data"), "--out", path("runs/b")});
    ASSERT_EQ(r.code, cli::kExitOk) << r.err;
    EXPECT_EQ(slurp(path("runs/a/metrics.json")), slurp(path("runs/b/metrics.json")));
    EXPECT_EQ(run_cli({"train", "--config", path("missing.ini")}).code, cli::kExitUsage);

    r = run_cli({"report", "--runs", path("runs"), "--out", path("report")});
    ASSERT_EQ(r.code, cli::kExitOk) << r.err;
    EXPECT_TRUE(std::filesystem::exists(path("report/table.csv")));

    r = run_cli({"export-clusters", "--run", path("runs/a"), "--data", path("data"), "--out", path("panel.png"),
                 "--per-row", "2"});
    ASSERT_EQ(r.code, cli::kExitOk) << r.err;
    EXPECT_TRUE(std::filesystem::exists(path("panel.png")));
}

TEST_F(CliTest, AblateWritesGrid) {
    generate_tiny();
    std::vector<std::string> args{"ablate", "--data", path("data"), "--out", path("abl"), "--grid", "components",
                                  "--seeds", "1"};
    for (const auto& a : tiny_train_args()) args.push_back(a);
    const auto r = run_cli(args);
    ASSERT_EQ(r.code, cli::kExitOk) << r.err;
    EXPECT_TRUE(std::filesystem::exists(path("abl/table.csv")));
    std::size_t runs = 0;
    for (const auto& e : std::filesystem::directory_iterator(path("abl/runs"))) runs += e.is_directory();
    EXPECT_EQ(runs, 5u);
}

}  // namespace
}  // namespace pamt

#endif
