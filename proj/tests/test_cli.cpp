#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <json.hpp>

namespace fs = std::filesystem;

namespace {

const fs::path kData = HMTL_TEST_DATA_DIR;

struct Result {
  int code = -1;
  std::string out;  // stdout and stderr
};

Result hmtl(const std::string& args) {
  const std::string cmd = std::string("'") + HMTL_CLI_PATH + "' " + args + " 2>&1";
  Result r;
  FILE* p = ::popen(cmd.c_str(), "r");
  if (!p) return r;
  char buf[4096];
  std::size_t n;
  while ((n = std::fread(buf, 1, sizeof buf, p)) > 0) r.out.append(buf, n);
  const int status = ::pclose(p);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("hmtl_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()) + "_" +
            std::to_string(::getpid()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
    std::ofstream(dir_ / "tiny.json") << R"({
      "model": {"backbone": {"name": "mini", "width": 4}, "input_size": 64},
      "data": {"train": {"synthetic": {"count": 40, "image_size": 64}}},
      "schedule": {"epochs": 2, "steps": [1]},
      "optimizer": {"batch_size": 16},
      "seed": 3
    })";
  }
  void TearDown() override { fs::remove_all(dir_); }

  std::string path(const std::string& rel) const { return "'" + (dir_ / rel).string() + "'"; }
  std::string tiny() const { return "-c " + path("tiny.json"); }

  fs::path dir_;
};

}  // namespace

TEST_F(Cli, HelpAndUsageErrors) {
  EXPECT_EQ(hmtl("--help").code, 0);
  EXPECT_EQ(hmtl("").code, 2);
  EXPECT_EQ(hmtl("frobnicate").code, 2);
  EXPECT_EQ(hmtl("train --no-such-flag").code, 2);
}

TEST_F(Cli, TrainWritesRunDirectoryAndEchoesOverrides) {
  const auto r = hmtl("train " + tiny() + " --set schedule.steps=1,2 --set schedule.epochs=3 -o " + path("run"));
  ASSERT_EQ(r.code, 0) << r.out;
  const auto cfg = nlohmann::json::parse(slurp(dir_ / "run" / "config.json"));
  EXPECT_EQ(cfg["schedule"]["steps"], nlohmann::json::array({1, 2}));
  EXPECT_EQ(cfg["schedule"]["epochs"], 3);
  for (const char* f : {"loss_log.csv", "metrics.csv", "report.csv", "report.svg", "checkpoints/last.ckpt"})
    EXPECT_TRUE(fs::exists(dir_ / "run" / f)) << f;
}

TEST_F(Cli, ConfigErrorsExitTwoAndNameTheKey) {
  auto r = hmtl("train " + tiny() + " --set model.bogus=1 -o " + path("run"));
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.out.find("model.bogus"), std::string::npos) << r.out;
  r = hmtl("train " + tiny() + " --set schedule.steps=5,3 -o " + path("run"));
  EXPECT_EQ(r.code, 2);
  r = hmtl("train -c " + path("missing.json") + " -o " + path("run"));
  EXPECT_EQ(r.code, 3) << r.out;
  r = hmtl("pretrain-bt " + tiny() + " --set optimizer.batch_size=1 -o " + path("bt"));
  EXPECT_EQ(r.code, 2) << r.out;
  EXPECT_NE(r.out.find("batch_size"), std::string::npos) << r.out;
}

TEST_F(Cli, SameSeedDeterministicRunsGiveIdenticalLossLogs) {
  for (const char* run : {"a", "b"}) ASSERT_EQ(hmtl("train " + tiny() + " --deterministic -o " + path(run)).code, 0);
  const auto a = slurp(dir_ / "a" / "loss_log.csv");
  EXPECT_FALSE(a.empty());
  EXPECT_EQ(a, slurp(dir_ / "b" / "loss_log.csv"));
  ASSERT_EQ(hmtl("train " + tiny() + " --deterministic --seed 4 -o " + path("c")).code, 0);
  EXPECT_NE(a, slurp(dir_ / "c" / "loss_log.csv"));
}

TEST_F(Cli, EvalReportsFilteredCountAndExitCodes) {
  ASSERT_EQ(hmtl("train " + tiny() + " -o " + path("run")).code, 0);
  const std::string ck = " --checkpoint " + path("run/checkpoints/last.ckpt");
  const std::string aflw = " --dataset aflw2000 --root '" + (kData / "aflw_mini").string() + "'";
  auto r = hmtl("eval" + ck + aflw);
  ASSERT_EQ(r.code, 0) << r.out;
  EXPECT_NE(r.out.find("N = 4"), std::string::npos) << r.out;
  r = hmtl("eval" + ck + aflw + " --filter-extreme -o " + path("ev"));
  ASSERT_EQ(r.code, 0) << r.out;
  EXPECT_NE(r.out.find("N = 2"), std::string::npos) << r.out;
  EXPECT_NE(r.out.find("reduced"), std::string::npos) << r.out;
  const auto j = nlohmann::json::parse(slurp(dir_ / "ev" / "eval.json"));
  EXPECT_EQ(j["n"], 2);
  EXPECT_EQ(j["removed"], 2);

  EXPECT_EQ(hmtl("eval --checkpoint " + path("nope.ckpt") + aflw).code, 3);
  // a roll-predicting model against yaw/pitch labels
  std::ofstream(dir_ / "m.csv") << "relative_path,yaw,pitch,roll,subject_id\n"
                                << (kData / "aflw_mini" / "image00002.jpg").string() << ",1,2,,\n";
  r = hmtl("eval" + ck + " --dataset manifest --root " + path("m.csv"));
  EXPECT_EQ(r.code, 4) << r.out;
  EXPECT_NE(r.out.find("roll"), std::string::npos) << r.out;
}

TEST_F(Cli, ConvertRoundTrip) {
  auto r = hmtl("convert --kind aflw2000 --root '" + (kData / "aflw_mini").string() + "' -o " + path("conv"));
  ASSERT_EQ(r.code, 0) << r.out;
  ASSERT_TRUE(fs::exists(dir_ / "conv" / "manifest.csv"));
  ASSERT_EQ(hmtl("train " + tiny() + " -o " + path("run")).code, 0);
  const std::string ck = " --checkpoint " + path("run/checkpoints/last.ckpt");
  const auto native = hmtl("eval" + ck + " --dataset aflw2000 --root '" + (kData / "aflw_mini").string() + "' -o " + path("e1"));
  const auto manifest = hmtl("eval" + ck + " --dataset manifest --root " + path("conv") + " -o " + path("e2"));
  ASSERT_EQ(native.code, 0) << native.out;
  ASSERT_EQ(manifest.code, 0) << manifest.out;
  const auto a = nlohmann::json::parse(slurp(dir_ / "e1" / "eval.json"));
  const auto b = nlohmann::json::parse(slurp(dir_ / "e2" / "eval.json"));
  EXPECT_EQ(a["n"], b["n"]);
  EXPECT_NEAR(a["average"].get<double>(), b["average"].get<double>(), 1e-3);

  EXPECT_EQ(hmtl("convert --kind aflw2000 --root " + path("absent") + " -o " + path("c2")).code, 3);
  fs::create_directories(dir_ / "empty");
  EXPECT_EQ(hmtl("convert --kind w300lp --root " + path("empty") + " -o " + path("c3")).code, 3);
  EXPECT_EQ(hmtl("convert --kind coco --root " + path("empty") + " -o " + path("c4")).code, 2);
}

TEST_F(Cli, AblationIsRepeatable) {
  const std::string args = "ablate-flags " + tiny() + " --set schedule.epochs=1 --flags 1,4 --tasks puzzle --baseline -o ";
  ASSERT_EQ(hmtl(args + path("a")).code, 0);
  ASSERT_EQ(hmtl(args + path("b")).code, 0);
  const auto csv = slurp(dir_ / "a" / "ablation.csv");
  EXPECT_EQ(csv, slurp(dir_ / "b" / "ablation.csv"));
  EXPECT_NE(csv.find("Method,Flag,Yaw (MAE),Pitch (MAE),Average"), std::string::npos) << csv;
  EXPECT_NE(csv.find("SL"), std::string::npos);
  EXPECT_TRUE(fs::exists(dir_ / "a" / "ablation.svg"));
  EXPECT_EQ(hmtl(args + path("c") + " --flags 5").code, 2);
}

TEST_F(Cli, BarlowTwinsThenFineTune) {
  auto r = hmtl("pretrain-bt " + tiny() + " --puzzling --set schedule.epochs=1 --set model.projector.width=32 -o " +
                path("bt"));
  ASSERT_EQ(r.code, 0) << r.out;
  ASSERT_TRUE(fs::exists(dir_ / "bt" / "checkpoints" / "backbone.ckpt"));
  r = hmtl("train " + tiny() + " --set mode=fine_tune --set init=" + path("bt/checkpoints/backbone.ckpt") + " -o " +
           path("ft"));
  EXPECT_EQ(r.code, 0) << r.out;
}

TEST_F(Cli, PretextSamples) {
  const auto r = hmtl("pretext-samples --task puzzle_rotation --grid 3 --count 4 --image-size 48 -o " + path("px"));
  ASSERT_EQ(r.code, 0) << r.out;
  std::ifstream in(dir_ / "px" / "labels.tsv");
  std::string line;
  int rows = 0;
  while (std::getline(in, line)) ++rows;
  EXPECT_EQ(rows, 5);  // header + 4
  std::size_t pngs = 0;
  for (const auto& e : fs::directory_iterator(dir_ / "px")) pngs += e.path().extension() == ".png";
  EXPECT_EQ(pngs, 4u);
}

TEST_F(Cli, PresetCatalogAndDeskRun) {
  auto r = hmtl("list-presets");
  ASSERT_EQ(r.code, 0);
  for (const char* n : {"table1_sweep", "table2_aflw", "table3_biwi", "table4_bt", "table5_ablation", "table6_subjects"})
    EXPECT_NE(r.out.find(n), std::string::npos) << n;
  EXPECT_EQ(hmtl("run-preset table9").code, 2);
  r = hmtl("run-preset table5_ablation --desk --epochs 1 --train-count 32 -o " + path("t5"));
  ASSERT_EQ(r.code, 0) << r.out;
  EXPECT_TRUE(fs::exists(dir_ / "t5" / "report.csv"));
}
