#include "cli_app.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

namespace fs = std::filesystem;
using ncplr::cli::dispatch;

namespace {

class Cli : public ::testing::Test {
protected:
    void SetUp() override {
        dir_ = fs::temp_directory_path() / ("ncplr_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
        fs::remove_all(dir_);
        fs::create_directories(dir_);
        data_ = (dir_ / "d.ncpl").string();
        ASSERT_EQ(run({"synth", "--ids", "6", "--per-id", "10", "--dim", "16", "--std", "0.1", "--seed", "3", "-o", data_}), 0) << err_.str();
    }

    int run(std::vector<std::string> args) {
        out_.str("");
        err_.str("");
        return dispatch(args, out_, err_);
    }

    std::string path(const std::string& rel) const { return (dir_ / rel).string(); }

    static std::string slurp(const fs::path& p) {
        std::ifstream in(p, std::ios::binary);
        return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
    }

    static std::size_t lines(const fs::path& p) {
        auto s = slurp(p);
        return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n'));
    }

    std::vector<std::string> quick_train() const {
        return {"--epochs", "2", "--steps-per-epoch", "3", "--P", "3", "--K-inst", "3", "--kappa", "10", "--hidden-dim", "32"};
    }

    fs::path dir_;
    std::string data_;
    std::ostringstream out_;
    std::ostringstream err_;
};

std::vector<std::string> cat(std::vector<std::string> a, const std::vector<std::string>& b) {
    a.insert(a.end(), b.begin(), b.end());
    return a;
}

}  // namespace

TEST_F(Cli, SynthWritesDataAndMetadata) {
    EXPECT_TRUE(fs::exists(data_));
    EXPECT_TRUE(fs::exists(data_ + ".meta.csv"));
    EXPECT_TRUE(fs::exists(data_ + ".manifest.json"));
    EXPECT_EQ(lines(data_ + ".meta.csv"), 61u);
}

TEST_F(Cli, GraphClusterRefineChain) {
    ASSERT_EQ(run({"graph", "--data", data_, "--kappa", "10", "-o", path("g")}), 0) << err_.str();
    EXPECT_EQ(slurp(path("g/graph.csv")).substr(0, 13), "i,j,d_jaccard");
    ASSERT_EQ(run({"cluster", "--data", data_, "--kappa", "10", "--eps", "0.6", "--min-samples", "3", "-o", path("c")}), 0) << err_.str();
    EXPECT_EQ(lines(path("c/clusters.csv")), 61u);
    ASSERT_EQ(run({"refine", "--data", data_, "--clusters", path("c/clusters.csv"), "--kappa", "10", "--dump-refined", "-o", path("r")}), 0)
        << err_.str();
    EXPECT_TRUE(fs::exists(path("r/refined.csv")));
    EXPECT_TRUE(fs::exists(path("r/refined_targets.csv")));
    for (auto d : {"g", "c", "r"}) EXPECT_TRUE(fs::exists(dir_ / d / "manifest.json")) << d;
}

TEST_F(Cli, TrainThenEval) {
    ASSERT_EQ(run(cat({"train", "--data", data_, "-o", path("t")}, quick_train())), 0) << err_.str();
    for (auto f : {"history.csv", "model.ncpm", "teacher.ncpm", "clusters.csv", "prediction_bank.csv", "epoch_features.ncpl", "manifest.json"}) {
        EXPECT_TRUE(fs::exists(dir_ / "t" / f)) << f;
    }
    EXPECT_EQ(lines(path("t/history.csv")), 3u);
    ASSERT_EQ(run({"eval", "--data", data_, "--model", path("t/model.ncpm"), "--clusters", path("t/clusters.csv"), "-o", path("e")}), 0)
        << err_.str();
    auto j = nlohmann::json::parse(slurp(path("e/eval.json")));
    EXPECT_TRUE(j.contains("map"));
    EXPECT_TRUE(j.contains("rank10"));
    EXPECT_TRUE(j.contains("ari"));
    // The saved bank feeds straight back into refine.
    ASSERT_EQ(run({"refine", "--data", path("t/epoch_features.ncpl"), "--clusters", path("t/clusters.csv"), "--bank",
                   path("t/prediction_bank.csv"), "--kappa", "10", "-o", path("r")}),
              0)
        << err_.str();
}

TEST_F(Cli, ManifestReproducesHistoryByteForByte) {
    ASSERT_EQ(run(cat({"train", "--data", data_, "--seed", "5", "-o", path("a")}, quick_train())), 0) << err_.str();
    ASSERT_EQ(run({"train", "--data", data_, "--config", path("a/manifest.json"), "-o", path("b")}), 0) << err_.str();
    EXPECT_EQ(slurp(path("a/history.csv")), slurp(path("b/history.csv")));
    auto ma = nlohmann::json::parse(slurp(path("a/manifest.json")));
    auto mb = nlohmann::json::parse(slurp(path("b/manifest.json")));
    EXPECT_EQ(ma["config"], mb["config"]);
}

TEST_F(Cli, FlagsOverrideConfigFile) {
    std::ofstream(path("cfg.json")) << R"({"epochs": 1, "alpha": 0.4, "steps_per_epoch": 2, "P": 3, "K_inst": 2, "kappa": 10})";
    ASSERT_EQ(run({"train", "--data", data_, "--config", path("cfg.json"), "--alpha", "0.3", "-o", path("t")}), 0) << err_.str();
    auto m = nlohmann::json::parse(slurp(path("t/manifest.json")));
    EXPECT_EQ(m["config"]["alpha"], 0.3);
    EXPECT_EQ(m["config"]["epochs"], 1);
    EXPECT_EQ(m["config"]["rho"], 0.2);
}

TEST_F(Cli, SweepWritesOneRowPerValue) {
    ASSERT_EQ(run(cat({"sweep", "--data", data_, "--param", "alpha", "--values", "0,0.2,0.4,0.6,0.8,1.0", "-o", path("s")}, quick_train())),
              0)
        << err_.str();
    EXPECT_EQ(slurp(path("s/sweep.csv")).substr(0, 20), "alpha,map,rank1,ari\n");
    EXPECT_EQ(lines(path("s/sweep.csv")), 7u);
}

TEST_F(Cli, AblateWritesSixVariants) {
    ASSERT_EQ(run(cat({"ablate", "--data", data_, "--seed", "3", "-o", path("ab")}, quick_train())), 0) << err_.str();
    for (auto v : {"Lcc", "Lcc+Lce", "Lcc+Lce_hat_wo_weight", "Lcc+Lce_hat_weight", "Lcc+Lce_hat_w+Lncr_s", "NCPLR"}) {
        EXPECT_TRUE(fs::exists(dir_ / "ab" / v / "history.csv")) << v;
        EXPECT_TRUE(fs::exists(dir_ / "ab" / v / "manifest.json")) << v;
    }
    EXPECT_EQ(lines(path("ab/summary.csv")), 7u);
}

TEST_F(Cli, HelpListsDefaults) {
    EXPECT_EQ(run({"train", "--help"}), 0);
    const std::string help = out_.str();
    for (auto flag : {"--alpha", "--lambda1", "--lambda2", "--rho", "--tau", "--tau-d", "--ncr-mode", "--seed", "--config"}) {
        EXPECT_NE(help.find(flag), std::string::npos) << flag;
    }
    EXPECT_NE(help.find("0.2"), std::string::npos);
    EXPECT_NE(help.find("0.05"), std::string::npos);
    EXPECT_NE(help.find("two_stream"), std::string::npos);
}

TEST_F(Cli, ErrorsAreNonZero) {
    EXPECT_NE(run({"train", "--data", data_, "--bogus", "-o", path("x")}), 0);
    EXPECT_NE(run({"train", "--data", path("missing.ncpl"), "-o", path("x")}), 0);
    EXPECT_NE(run({"train", "--data", data_, "--P", "50", "--epochs", "1", "-o", path("x")}), 0);
    EXPECT_NE(err_.str().find("exceeds"), std::string::npos) << err_.str();
    EXPECT_NE(run({"frobnicate"}), 0);
    EXPECT_NE(run({"sweep", "--data", data_, "--param", "gamma", "--values", "1", "-o", path("x")}), 0);
}
