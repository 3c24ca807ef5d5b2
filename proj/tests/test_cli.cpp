// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The ksp Authors

#include <gtest/gtest.h>
#include <sys/wait.h>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

namespace fs = std::filesystem;

namespace {

struct Run {
  int code = -1;
  std::string out;
};

Run ksp(const std::string& args) {
  const std::string cmd = std::string("\"") + KSP_CLI_PATH + "\" " + args + " 2>/dev/null";
  Run r;
  FILE* p = popen(cmd.c_str(), "r");
  if (p == nullptr) return r;
  char buf[512];
  while (fgets(buf, sizeof(buf), p) != nullptr) r.out += buf;
  const int status = pclose(p);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("ksp_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }
  std::string path(const std::string& leaf) const { return (dir_ / leaf).string(); }

  fs::path dir_;
};

constexpr const char* kTiny = "--sequences 3 --frames 24 --seed 5";
constexpr const char* kQuick = "--epochs 1 --batch-size 4 --label-ratio 0.25 --eval-stride 4";

TEST_F(Cli, UsageErrors) {
  EXPECT_EQ(ksp("").code, 2);
  EXPECT_EQ(ksp("frobnicate").code, 2);
  EXPECT_EQ(ksp("gen-data").code, 2);
  EXPECT_EQ(ksp("train --corpus " + path("c") + " --epochs").code, 2);
  EXPECT_EQ(ksp("--help").code, 0);
}

TEST_F(Cli, ConfigAndDataErrors) {
  EXPECT_EQ(ksp("gen-data --out " + path("c") + " --num-aus 0").code, 3);
  EXPECT_EQ(ksp("train --corpus " + path("missing")).code, 4);
  ASSERT_EQ(ksp(std::string("gen-data --out ") + path("c") + " " + kTiny).code, 0);
  EXPECT_EQ(ksp("train --corpus " + path("c") + " --lr -1").code, 3);
  EXPECT_EQ(ksp("train --corpus " + path("c") + " --epochs abc").code, 3);
  EXPECT_EQ(ksp("coverage --ratios 0.1,x").code, 3);
}

TEST_F(Cli, GenDataIsByteIdenticalPerSeed) {
  ASSERT_EQ(ksp(std::string("gen-data --out ") + path("a") + " " + kTiny).code, 0);
  ASSERT_EQ(ksp(std::string("gen-data --out ") + path("b") + " " + kTiny).code, 0);
  ASSERT_EQ(ksp("gen-data --out " + path("d") + " --sequences 3 --frames 24 --seed 6").code, 0);
  std::size_t files = 0;
  for (const auto& e : fs::directory_iterator(path("a"))) {
    ++files;
    EXPECT_EQ(slurp(e.path()), slurp(dir_ / "b" / e.path().filename())) << e.path();
  }
  EXPECT_GT(files, 0u);
  const auto ha = ksp("gen-data --out " + path("a") + " " + kTiny).out;
  const auto hd = ksp("gen-data --out " + path("d") + " --sequences 3 --frames 24 --seed 6").out;
  EXPECT_NE(ha.substr(ha.find("hash")), hd.substr(hd.find("hash")));
}

TEST_F(Cli, CoverageCsv) {
  const auto r = ksp("coverage --ratios 0.1,0.2 --modes strided,contiguous");
  ASSERT_EQ(r.code, 0);
  std::istringstream in(r.out);
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "ratio,mode,unique_count,label_count");
  int rows = 0;
  while (std::getline(in, line)) ++rows;
  EXPECT_EQ(rows, 4);
}

TEST_F(Cli, TrainWritesRunDirAndReplayMatches) {
  ASSERT_EQ(ksp(std::string("gen-data --out ") + path("c") + " " + kTiny).code, 0);
  const auto r = ksp("train --corpus " + path("c") + " --run-dir " + path("run") + " " + kQuick);
  ASSERT_EQ(r.code, 0);
  EXPECT_EQ(r.out.rfind("macro_f1 ", 0), 0u);
  for (const char* f : {"manifest.json", "config.cfg", "metrics.csv", "report.json"})
    EXPECT_TRUE(fs::exists(dir_ / "run" / f)) << f;

  const auto re = ksp("train --replay " + path("run/manifest.json") + " --run-dir " +
                      path("replay"));
  ASSERT_EQ(re.code, 0);
  EXPECT_EQ(re.out, r.out);
  EXPECT_EQ(slurp(dir_ / "run" / "metrics.csv"), slurp(dir_ / "replay" / "metrics.csv"));
}

TEST_F(Cli, ReplayRejectsChangedCorpus) {
  ASSERT_EQ(ksp(std::string("gen-data --out ") + path("c") + " " + kTiny).code, 0);
  ASSERT_EQ(ksp("train --corpus " + path("c") + " --run-dir " + path("run") + " " + kQuick).code,
            0);
  ASSERT_EQ(ksp("gen-data --out " + path("c") + " --sequences 3 --frames 24 --seed 9").code, 0);
  EXPECT_EQ(ksp("train --replay " + path("run/manifest.json")).code, 4);
}

TEST_F(Cli, EvalReportsJson) {
  ASSERT_EQ(ksp(std::string("gen-data --out ") + path("c") + " " + kTiny).code, 0);
  ASSERT_EQ(ksp("train --corpus " + path("c") + " --run-dir " + path("run") + " " + kQuick +
                " --save-checkpoints true")
                .code,
            0);
  fs::path ckpt;
  for (const auto& e : fs::directory_iterator(dir_ / "run"))
    if (e.path().extension() == ".ckpt") ckpt = e.path();
  ASSERT_FALSE(ckpt.empty());
  const auto r = ksp("eval --checkpoint " + ckpt.string() + " --corpus " + path("c") +
                     " --stride 4");
  ASSERT_EQ(r.code, 0);
  EXPECT_NE(r.out.find("\"macro_f1\""), std::string::npos);
  EXPECT_NE(r.out.find("\"tpl_accuracy\""), std::string::npos);
}

}  // namespace
