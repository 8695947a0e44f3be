// Copyright Contributors to the nerfaug project
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>
#include <json.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>

namespace fs = std::filesystem;

namespace {

struct CliRun {
  int status = -1;
  std::string err;
};

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("nerfaug_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  CliRun run(const std::string& args) {
    const fs::path err = dir_ / "stderr.txt";
    const std::string cmd = std::string(NERFAUG_CLI_PATH) + " " + args + " > " + (dir_ / "stdout.txt").string() +
                            " 2> " + err.string();
    const int raw = std::system(cmd.c_str());
    std::ifstream in(err);
    std::stringstream ss;
    ss << in.rdbuf();
    return {WIFEXITED(raw) ? WEXITSTATUS(raw) : -1, ss.str()};
  }

  static nlohmann::json config_record(const std::string& log) {
    std::istringstream in(log);
    for (std::string line; std::getline(in, line);) {
      if (line.empty() || line.front() != '{') continue;
      const auto j = nlohmann::json::parse(line);
      if (j.value("event", "") == "config") return j;
    }
    return {};
  }

  static std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(in), {});
  }

  fs::path dir_;
};

TEST_F(Cli, ConfigFileOverridesFlags) {
  std::ofstream(dir_ / "cfg.json") << R"({"width": 12, "seed": 5})";
  const auto r = run("toy-scene --out " + (dir_ / "s").string() + " --train-views 2 --heldout-views 1 --width 20 --height 10 --config " +
                     (dir_ / "cfg.json").string());
  ASSERT_EQ(r.status, 0) << r.err;
  const auto cfg = config_record(r.err);
  EXPECT_EQ(cfg["options"]["width"], 12);
  EXPECT_EQ(cfg["options"]["height"], 10);
  EXPECT_EQ(cfg["options"]["seed"], 5);
  EXPECT_EQ(cfg["options"]["light-jitter-deg"], 25.0);
  std::ifstream manifest(dir_ / "s" / "manifest.jsonl");
  std::string header;
  std::getline(manifest, header);
  EXPECT_EQ(nlohmann::json::parse(header)["intrinsics"]["width"], 12);
}

TEST_F(Cli, RejectsUnknownConfigKeysAndMissingFiles) {
  std::ofstream(dir_ / "cfg.json") << R"({"widht": 12})";
  EXPECT_NE(run("toy-scene --out " + (dir_ / "s").string() + " --config " + (dir_ / "cfg.json").string()).status, 0);
  EXPECT_NE(run("eval-psnr --model " + (dir_ / "none.ckpt").string() + " --manifest x").status, 0);
  EXPECT_NE(run("train --mode sideways --rays x --out y").status, 0);
  EXPECT_NE(run("").status, 0);
}

TEST_F(Cli, SeededToyScenePipelineIsByteIdentical) {
  for (const char* name : {"a", "b"}) {
    const fs::path out = dir_ / name;
    ASSERT_EQ(run("toy-scene --out " + (out / "scene").string() +
                  " --width 16 --height 16 --train-views 4 --heldout-views 1 --pose-noise-deg 1 --seed 9")
                  .status,
              0);
    ASSERT_EQ(run("preprocess --manifest " + (out / "scene" / "manifest.jsonl").string() + " --out " +
                  (out / "rays.bin").string())
                  .status,
              0);
    const auto r = run("train --rays " + (out / "rays.bin").string() + " --out " + (out / "m.ckpt").string() +
                       " --iterations 4 --batch 128 --samples 12 --grid-resolution 16 --seed 2 --log " +
                       (out / "log.jsonl").string());
    ASSERT_EQ(r.status, 0) << r.err;
    EXPECT_EQ(config_record(r.err)["resolved"]["iterations"], 4);
    ASSERT_EQ(run("render --model " + (out / "m.ckpt").string() + " --manifest " +
                  (out / "scene" / "manifest.jsonl").string() + " --frame 1 --samples 12 --out " +
                  (out / "r.png").string() + " --opacity-out " + (out / "o.png").string())
                  .status,
              0);
    ASSERT_EQ(run("mask --model " + (out / "m.ckpt").string() + " --manifest " +
                  (out / "scene" / "manifest.jsonl").string() + " --pose 1 0 0 0 0 0 -3.5 --samples 12 --out " +
                  (out / "m.png").string())
                  .status,
              0);
  }
  for (const char* file : {"scene/manifest.jsonl", "scene/images/0002.png", "rays.bin", "m.ckpt", "r.png", "o.png", "m.png"})
    EXPECT_EQ(slurp(dir_ / "a" / file), slurp(dir_ / "b" / file)) << file;
  std::ifstream log(dir_ / "a" / "log.jsonl");
  int records = 0;
  for (std::string line; std::getline(log, line);) {
    const auto j = nlohmann::json::parse(line);
    EXPECT_TRUE(j.contains("loss_photo") && j.contains("loss_sigma") && j.contains("psnr") && j.contains("wall_seconds"));
    ++records;
  }
  EXPECT_GE(records, 1);
}

TEST_F(Cli, CheckGradsPasses) {
  const auto r = run("check-grads --seed 3");
  EXPECT_EQ(r.status, 0) << r.err;
  std::ifstream out(dir_ / "stdout.txt");
  std::string line, last;
  while (std::getline(out, line)) last = line;
  const auto summary = nlohmann::json::parse(last);
  EXPECT_TRUE(summary["passed"].get<bool>());
  EXPECT_GE(summary["coordinates"].get<int>(), 100);
}

}  // namespace
