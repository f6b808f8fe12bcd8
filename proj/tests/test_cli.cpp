#include <gtest/gtest.h>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <sys/wait.h>
#include <unistd.h>

#include <json.hpp>

#include "arim/fcn/model.hpp"

namespace fs = std::filesystem;

namespace {

struct Run {
    int status = -1;
    std::string output;  // stdout and stderr interleaved
};

Run run(const std::string& args) {
    const std::string cmd = std::string(ARIM_CLI) + " " + args + " 2>&1";
    Run r;
    FILE* p = popen(cmd.c_str(), "r");
    if (!p) return r;
    char buf[4096];
    while (std::size_t n = std::fread(buf, 1, sizeof buf, p)) r.output.append(buf, n);
    const int raw = pclose(p);
    r.status = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
    return r;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream s;
    s << in.rdbuf();
    return s.str();
}

bool contains(const std::string& haystack, const std::string& needle) {
    return haystack.find(needle) != std::string::npos;
}

class Cli : public ::testing::Test {
protected:
    static void SetUpTestSuite() {
        root_ = fs::temp_directory_path() / ("arim_cli_" + std::to_string(::getpid()));
        fs::remove_all(root_);
        fs::create_directories(root_);
        const auto r = run("--desk-scale --threads 2 generate --count 60 --seed 11 --shard-size 25 --out " +
                           (root_ / "desk").string());
        ASSERT_EQ(r.status, 0) << r.output;
    }
    static void TearDownTestSuite() { fs::remove_all(root_); }

    static fs::path desk() { return root_ / "desk"; }
    static fs::path root_;
};

fs::path Cli::root_;

}  // namespace

TEST_F(Cli, GenerateReportsShardsAndChecksums) {
    const auto a = run("--desk-scale generate --count 60 --seed 11 --shard-size 25 --out " + (root_ / "again").string());
    ASSERT_EQ(a.status, 0) << a.output;
    EXPECT_TRUE(contains(a.output, "profile=desk samples=60 train=50 test=10"));
    EXPECT_TRUE(contains(a.output, "shard_00000.arim samples=25 crc32="));
    EXPECT_TRUE(contains(a.output, "shard_00002.arim samples=10 crc32="));
    for (const char* shard : {"shard_00000.arim", "shard_00001.arim", "shard_00002.arim"})
        EXPECT_EQ(slurp(desk() / shard), slurp(root_ / "again" / shard)) << shard;
}

TEST_F(Cli, GenerateUsageErrors) {
    auto r = run("generate --count 5");
    EXPECT_NE(r.status, 0);
    EXPECT_TRUE(contains(r.output, "--out")) << r.output;
    r = run("generate --out " + (root_ / "none").string());
    EXPECT_NE(r.status, 0);
    EXPECT_TRUE(contains(r.output, "--count")) << r.output;
    r = run("--desk-scale generate --paper-scale --count 5 --out " + (root_ / "none").string());
    EXPECT_NE(r.status, 0);
    r = run("");
    EXPECT_NE(r.status, 0);
}

TEST_F(Cli, TrainRejectsUnknownArchitecture) {
    const auto r = run("train --arch medium --data " + desk().string() + " --out-model x.bin");
    EXPECT_NE(r.status, 0);
    EXPECT_TRUE(contains(r.output, "shallow")) << r.output;
    EXPECT_TRUE(contains(r.output, "deep")) << r.output;
}

TEST_F(Cli, TrainEchoesDefaultsAndWritesLoadableModel) {
    const auto model = root_ / "shallow.bin";
    const auto hist = root_ / "hist.csv";
    const auto r = run("--desk-scale -q train --arch shallow --epochs 2 --data " + desk().string() +
                       " --out-model " + model.string() + " --history " + hist.string());
    ASSERT_EQ(r.status, 0) << r.output;
    EXPECT_TRUE(contains(r.output, "train: arch=shallow profile=desk epochs=2 batch=10 lr=1e-05 wd=1e-05 seed=0"))
        << r.output;
    EXPECT_FALSE(contains(r.output, "epoch 1 train_loss"));
    const auto m = arim::fcn::load(model, arim::fcn::ArchName::shallow);
    EXPECT_EQ(m.metadata.epochs_seen, 2u);
    EXPECT_EQ(slurp(hist).rfind("epoch,train_loss,val_loss\n", 0), 0u);

    const auto wrong = run("evaluate --method fcn --model " + model.string() + " --data " + desk().string());
    EXPECT_EQ(wrong.status, 0) << wrong.output;
    EXPECT_TRUE(contains(wrong.output, "method=fcn split=test samples=10"));
}

TEST_F(Cli, EvaluateOracleHasZeroError) {
    const auto report = root_ / "oracle.json";
    const auto r = run("evaluate --method oracle --data " + desk().string() + " --report " + report.string());
    ASSERT_EQ(r.status, 0) << r.output;
    EXPECT_TRUE(contains(r.output, "mae_db=0.000000"));
    const auto j = nlohmann::json::parse(slurp(report));
    EXPECT_EQ(j["mae_db"].get<double>(), 0.0);
    EXPECT_EQ(j["samples"].size(), 10u);
}

TEST_F(Cli, EvaluateFcnNeedsModel) {
    const auto r = run("evaluate --method fcn --data " + desk().string());
    EXPECT_NE(r.status, 0);
    EXPECT_TRUE(contains(r.output, "--model")) << r.output;
}

TEST_F(Cli, EvaluateZeroingTunesOnValidation) {
    const auto r = run("evaluate --method zeroing --data " + desk().string());
    ASSERT_EQ(r.status, 0) << r.output;
    EXPECT_TRUE(contains(r.output, "tuned k="));
    EXPECT_TRUE(contains(r.output, "method=zeroing"));
}

TEST_F(Cli, PlotCsvAndSvg) {
    const auto csv = root_ / "p.csv";
    auto r = run("plot --data " + desk().string() + " --sample-id 3 --k 3 --out " + csv.string());
    ASSERT_EQ(r.status, 0) << r.output;
    std::istringstream lines(slurp(csv));
    std::string line;
    std::getline(lines, line);
    EXPECT_EQ(line, "bin,range_m,clean_db,interfered_db,mitigated_db");
    std::size_t rows = 0;
    while (std::getline(lines, line)) ++rows;
    EXPECT_EQ(rows, 512u);

    const auto svg = root_ / "p.svg";
    r = run("plot --data " + desk().string() + " --sample-id 3 --method identity --format svg --out " + svg.string());
    ASSERT_EQ(r.status, 0) << r.output;
    const auto text = slurp(svg);
    EXPECT_EQ(text.rfind("<svg", 0), 0u);
    EXPECT_TRUE(contains(text, "</svg>"));
    EXPECT_EQ(std::count(text.begin(), text.end(), '\n') > 3, true);
}

TEST_F(Cli, PlotUnknownSampleNamesValidRange) {
    const auto r = run("plot --data " + desk().string() + " --sample-id 60 --out " + (root_ / "x.csv").string());
    EXPECT_NE(r.status, 0);
    EXPECT_TRUE(contains(r.output, "[0, 60)")) << r.output;
}

TEST_F(Cli, FullScalePlotRangeAxis) {
    const auto dir = root_ / "full";
    auto r = run("generate --count 3 --seed 2 --out " + dir.string());
    ASSERT_EQ(r.status, 0) << r.output;
    const auto csv = root_ / "full.csv";
    r = run("plot --data " + dir.string() + " --sample-id 0 --method oracle --out " + csv.string());
    ASSERT_EQ(r.status, 0) << r.output;
    std::istringstream lines(slurp(csv));
    std::string line;
    std::size_t rows = 0;
    std::getline(lines, line);
    while (std::getline(lines, line)) {
        if (rows == 1024) {
            const auto comma = line.find(',');
            EXPECT_EQ(line.substr(0, comma), "1024");
            EXPECT_NEAR(std::stod(line.substr(comma + 1)), 48.0, 0.05);
        }
        ++rows;
    }
    EXPECT_EQ(rows, 2048u);
}

TEST_F(Cli, ConfigFileMatchesFlags) {
    const auto cfg = root_ / "cfg.json";
    {
        std::ofstream out(cfg);
        out << R"({"desk-scale": true, "quiet": true, "train": {"arch": "deep", "epochs": 1, "batch": 7,
                   "data": ")" << desk().string() << R"(", "out-model": ")" << (root_ / "cfg.bin").string()
            << R"("}})";
    }
    const auto a = run("--config " + cfg.string() + " train");
    ASSERT_EQ(a.status, 0) << a.output;
    const auto b = run("--desk-scale -q train --arch deep --epochs 1 --batch 7 --data " + desk().string() +
                       " --out-model " + (root_ / "flags.bin").string());
    ASSERT_EQ(b.status, 0) << b.output;
    EXPECT_EQ(slurp(root_ / "cfg.bin"), slurp(root_ / "flags.bin"));

    const auto dump = run("--desk-scale --dump-config train --arch deep --epochs 3 --data d --out-model m");
    ASSERT_EQ(dump.status, 0) << dump.output;
    const auto j = nlohmann::json::parse(dump.output);
    EXPECT_EQ(j["desk-scale"], true);
    EXPECT_EQ(j["train"]["arch"], "deep");
    EXPECT_EQ(j["train"]["epochs"], 3);
}
