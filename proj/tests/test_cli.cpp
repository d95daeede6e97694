#include <gtest/gtest.h>
#include <sys/wait.h>

#include <cstdlib>
#include <fstream>

#include <nlohmann/json.hpp>

#include "fogscene/config.hpp"
#include "fogscene/image_io.hpp"
#include "support/fixtures.hpp"

using namespace fogscene;
using fogscene::testing::list_files;
using fogscene::testing::read_file;
using fogscene::testing::TempDir;
using fogscene::testing::tiny_run_config;

namespace fs = std::filesystem;

namespace {

struct Result {
  int code;
  std::string output;
};

// Runs the CLI binary named by FOGSCENE_CLI with `args`, capturing stdout and
// stderr.
Result cli(const std::string& args) {
  const char* bin = std::getenv("FOGSCENE_CLI");
  if (!bin) throw std::runtime_error("FOGSCENE_CLI is not set");
  static TempDir logs("fogscene_cli_logs");
  static int n = 0;
  const auto log = logs / ("run" + std::to_string(n++) + ".txt");
  const int status = std::system(
      (std::string(bin) + " " + args + " > " + log.string() + " 2>&1").c_str());
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, read_file(log)};
}

fs::path write_tiny_config(const fs::path& dir) {
  fs::create_directories(dir);
  const auto path = dir / "tiny.ini";
  std::ofstream(path) << to_ini(tiny_run_config());
  return path;
}

// A finished tiny pipeline shared by the inference and evaluation tests.
class Pipeline : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = new TempDir("fogscene_cli_pipeline");
    config_ = write_tiny_config(dir_->path()).string();
    result_ = cli("pipeline --config " + config_ + " --out " + (*dir_ / "run").string());
  }
  static void TearDownTestSuite() {
    delete dir_;
    dir_ = nullptr;
  }
  static fs::path run() { return *dir_ / "run"; }

  static inline TempDir* dir_ = nullptr;
  static inline std::string config_;
  static inline Result result_;
};

}  // namespace

TEST(Cli, UsageErrorsExitTwo) {
  EXPECT_EQ(cli("").code, 2);
  EXPECT_EQ(cli("frobnicate").code, 2);
  EXPECT_EQ(cli("train --stage").code, 2);
  EXPECT_EQ(cli("eval --with-da --no-da").code, 2);
  EXPECT_EQ(cli("--help").code, 0);
}

TEST(Cli, InvalidConfigExitsTwoAndWritesNothing) {
  TempDir dir;
  auto c = tiny_run_config();
  c.data.synthetic.num_train = 0;
  std::ofstream(dir / "bad.ini") << to_ini(c);
  const auto r = cli("generate --config " + (dir / "bad.ini").string() + " --out " +
                     (dir / "out").string());
  EXPECT_EQ(r.code, 2) << r.output;
  EXPECT_NE(r.output.find("num_train"), std::string::npos) << r.output;
  EXPECT_FALSE(fs::exists(dir / "out"));
  EXPECT_EQ(cli("generate --config " + (dir / "missing.ini").string()).code, 2);
  std::ofstream(dir / "typo.ini") << "[train]\nlearnin_rate = 1\n";
  EXPECT_EQ(cli("generate --config " + (dir / "typo.ini").string()).code, 2);
  EXPECT_EQ(cli("train --stage bogus --out " + (dir / "o2").string()).code, 2);
}

TEST(Cli, MissingDatasetExitsThree) {
  TempDir dir;
  const auto cfg = write_tiny_config(dir.path());
  const auto r = cli("train --stage depth --config " + cfg.string() + " --out " +
                     (dir / "out").string());
  EXPECT_EQ(r.code, 3) << r.output;
  EXPECT_NE(r.output.find("manifest"), std::string::npos) << r.output;
}

TEST(Cli, MissingPrerequisiteExitsFour) {
  TempDir dir;
  const auto cfg = write_tiny_config(dir.path()).string();
  const auto out = (dir / "out").string();
  ASSERT_EQ(cli("generate --config " + cfg + " --out " + out).code, 0);
  const auto r = cli("train --stage seg --config " + cfg + " --out " + out);
  EXPECT_EQ(r.code, 4) << r.output;
  EXPECT_NE(r.output.find("da.ckpt"), std::string::npos) << r.output;
  EXPECT_EQ(cli("eval --config " + cfg + " --out " + out).code, 4);
  EXPECT_EQ(cli("train --stage finetune --config " + cfg + " --out " + out).code, 4);
}

TEST(Cli, GenerateIsByteIdenticalAcrossProcesses) {
  TempDir dir;
  const auto cfg = write_tiny_config(dir.path()).string();
  ASSERT_EQ(cli("generate --config " + cfg + " --out " + (dir / "a").string()).code, 0);
  ASSERT_EQ(cli("generate --config " + cfg + " --out " + (dir / "b").string()).code, 0);
  const auto files = list_files(dir / "a");
  EXPECT_EQ(files, list_files(dir / "b"));
  EXPECT_GT(files.size(), 20u);
  for (const auto& f : files) {
    EXPECT_EQ(read_file(dir / "a" / f), read_file(dir / "b" / f)) << f;
  }
  ASSERT_EQ(cli("generate --seed 99 --config " + cfg + " --out " + (dir / "c").string()).code,
            0);
  EXPECT_NE(read_file(dir / "a/data/manifest.json"), read_file(dir / "c/data/manifest.json"));
}

TEST(Cli, ZeroIterationsWritesCheckpointAndEmptyLog) {
  TempDir dir;
  const auto cfg = write_tiny_config(dir.path()).string();
  const auto out = dir / "out";
  ASSERT_EQ(cli("generate --config " + cfg + " --out " + out.string()).code, 0);
  const auto r =
      cli("train --stage da --iterations 0 --config " + cfg + " --out " + out.string());
  ASSERT_EQ(r.code, 0) << r.output;
  EXPECT_TRUE(fs::exists(out / "da.ckpt"));
  EXPECT_TRUE(read_file(out / "logs/da.jsonl").empty());
  EXPECT_EQ(cli("train --stage da --iterations -1 --config " + cfg + " --out " + out.string())
                .code,
            2);
}

TEST(Cli, ResolvedConfigEchoRoundTrips) {
  TempDir dir;
  const auto cfg = write_tiny_config(dir.path()).string();
  const auto out = dir / "out";
  ASSERT_EQ(cli("generate --seed 5 --config " + cfg + " --out " + out.string()).code, 0);
  const auto echoed = read_file(out / "resolved_config.ini");
  const auto parsed = parse_config(echoed);
  EXPECT_EQ(parsed.seed, 5u);
  EXPECT_EQ(to_ini(parsed), echoed);
  auto expected = tiny_run_config();
  expected.seed = 5;
  expected.model.num_classes = expected.data.synthetic.num_classes;
  EXPECT_EQ(echoed, to_ini(expected));
}

TEST_F(Pipeline, WritesReportsAndCheckpoints) {
  ASSERT_EQ(result_.code, 0) << result_.output;
  for (const char* f : {"da.ckpt", "depth.ckpt", "seg.ckpt", "da_ft.ckpt", "depth_ft.ckpt",
                        "seg_ft.ckpt", "eval_da/report.json", "eval_da/report.txt",
                        "eval_da/translation.json", "eval_noda/report.json",
                        "logs/seg_ft.jsonl"}) {
    EXPECT_TRUE(fs::exists(run() / f)) << f;
  }
  const auto j = nlohmann::json::parse(read_file(run() / "eval_da/report.json"));
  EXPECT_GE(j.at("miou").get<double>(), 0.0);
  EXPECT_LE(j.at("miou").get<double>(), 1.0);
  EXPECT_FALSE(fs::exists(run() / "eval_noda/translation.json"));
}

TEST_F(Pipeline, OracleEvaluationScoresOne) {
  ASSERT_EQ(result_.code, 0) << result_.output;
  const auto r = cli("eval --oracle --no-da --config " + config_ + " --out " + run().string());
  ASSERT_EQ(r.code, 0) << r.output;
  const auto j = nlohmann::json::parse(read_file(run() / "eval_noda/report.json"));
  EXPECT_DOUBLE_EQ(j.at("miou").get<double>(), 1.0);
  EXPECT_DOUBLE_EQ(j.at("global_acc").get<double>(), 1.0);
  EXPECT_DOUBLE_EQ(j.at("delta1").get<double>(), 1.0);
  EXPECT_NEAR(j.at("abs_rel").get<double>(), 0.0, 1e-12);
}

TEST_F(Pipeline, InferWritesValidPredictions) {
  ASSERT_EQ(result_.code, 0) << result_.output;
  const auto image = run() / "data/test/rgb/s0004_foggy.png";
  ASSERT_TRUE(fs::exists(image));
  const auto r = cli("infer --with-da --image " + image.string() + " --config " + config_ +
                     " --out " + run().string());
  ASSERT_EQ(r.code, 0) << r.output;
  const auto raw = read_png8(run() / "infer/labels_raw.png");
  const auto depth = read_png16(run() / "infer/depth.png");
  const auto input = read_png8(image);
  EXPECT_EQ(raw.resolution(), input.resolution());
  EXPECT_EQ(depth.resolution(), input.resolution());
  for (auto v : raw.data) EXPECT_LT(v, tiny_run_config().data.synthetic.num_classes);
  for (auto v : depth.data) {
    EXPECT_GE(v, 256);
    EXPECT_LE(v, 20480);
  }
  EXPECT_TRUE(fs::exists(run() / "infer/translated.png"));
  EXPECT_TRUE(fs::exists(run() / "infer/labels.png"));
  auto infer_code = [&](const fs::path& img) {
    return cli("infer --image " + img.string() + " --config " + config_ + " --out " +
               run().string())
        .code;
  };
  EXPECT_EQ(infer_code(run() / "nope.png"), 3);  // unreadable input
  std::ofstream(run() / "corrupt.png") << "not a png";
  EXPECT_EQ(infer_code(run() / "corrupt.png"), 5);
}
