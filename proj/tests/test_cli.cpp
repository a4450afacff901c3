// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "cli.hpp"

namespace {

namespace fs = std::filesystem;
using ssnmt::cli::run;

fs::path scratch_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("ssnmt_test_cli_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result invoke(const std::vector<std::string>& args) {
  std::ostringstream out;
  std::ostringstream err;
  const int code = run(args, out, err);
  return {code, out.str(), err.str()};
}

Result gen_data(const fs::path& dir, const std::string& pairs = "200") {
  return invoke({"gen-data", "--task", "reverse", "--pairs", pairs, "--vocab-size", "12",
                 "--seed", "7", "--out", dir.string()});
}

TEST(Cli, GenDataWritesSixFilesDeterministically) {
  const fs::path a = scratch_dir("gen_a");
  const fs::path b = scratch_dir("gen_b");
  ASSERT_EQ(gen_data(a).code, ssnmt::cli::kExitOk);
  ASSERT_EQ(gen_data(b).code, ssnmt::cli::kExitOk);
  std::size_t files = 0;
  for (const auto& entry : fs::directory_iterator(a)) {
    ++files;
    EXPECT_EQ(slurp(entry.path()), slurp(b / entry.path().filename())) << entry.path();
  }
  EXPECT_EQ(files, 6u);
  for (const char* name : {"train.src", "train.tgt", "dev.src", "dev.tgt", "test.src", "test.tgt"}) {
    EXPECT_TRUE(fs::exists(a / name)) << name;
  }
}

TEST(Cli, UsageErrors) {
  const fs::path dir = scratch_dir("usage");
  EXPECT_EQ(gen_data(dir, "0").code, ssnmt::cli::kExitUsage);
  EXPECT_EQ(invoke({}).code, ssnmt::cli::kExitUsage);
  EXPECT_EQ(invoke({"frobnicate"}).code, ssnmt::cli::kExitUsage);
  EXPECT_EQ(invoke({"train", "--data", dir.string()}).code, ssnmt::cli::kExitUsage);
}

TEST(Cli, MissingFileIsRuntimeError) {
  const fs::path dir = scratch_dir("missing");
  const Result r =
      invoke({"evaluate", "--hyp", (dir / "nope").string(), "--ref", (dir / "nope").string()});
  EXPECT_EQ(r.code, ssnmt::cli::kExitRuntime);
  EXPECT_FALSE(r.err.empty());
}

TEST(Cli, EvaluatePerfectScore) {
  const fs::path dir = scratch_dir("evaluate");
  ASSERT_EQ(gen_data(dir).code, 0);
  const Result r = invoke({"evaluate", "--hyp", (dir / "test.tgt").string(), "--ref",
                           (dir / "test.tgt").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("100.00"), std::string::npos) << r.out;
}

TEST(Cli, PretrainTrainTranslate) {
  const fs::path data = scratch_dir("pipeline_data");
  const fs::path lm = scratch_dir("pipeline_lm");
  const fs::path model = scratch_dir("pipeline_model");
  ASSERT_EQ(gen_data(data).code, 0);
  const std::vector<std::string> dims{"--embedding-dim", "8", "--hidden-dim", "12", "--epochs", "2"};

  std::vector<std::string> args{"pretrain-lm", "--data", data.string(), "--out", lm.string()};
  args.insert(args.end(), dims.begin(), dims.end());
  Result r = invoke(args);
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_TRUE(fs::exists(lm / "lm.ckpt"));
  EXPECT_NE(r.out.find("perplexity"), std::string::npos) << r.out;

  args = {"train", "--data", data.string(), "--out", model.string(), "--oracle", "lm",
          "--lm-checkpoint", (lm / "lm.ckpt").string(), "--schedule", "linear",
          "--trace", (model / "trace.jsonl").string()};
  args.insert(args.end(), dims.begin(), dims.end());
  r = invoke(args);
  ASSERT_EQ(r.code, 0) << r.err;
  for (const char* name : {"model.ckpt", "run.jsonl", "config.json", "trace.jsonl"}) {
    EXPECT_TRUE(fs::exists(model / name)) << name;
  }
  std::ifstream trace(model / "trace.jsonl");
  std::string line;
  ASSERT_TRUE(std::getline(trace, line));
  const auto record = nlohmann::json::parse(line);
  EXPECT_TRUE(record.contains("branch"));
  EXPECT_TRUE(record.contains("coin"));

  const std::string ckpt = (model / "model.ckpt").string();
  const std::string input = (data / "test.src").string();
  const Result greedy = invoke({"translate", "--checkpoint", ckpt, "--input", input, "--beam", "1"});
  const Result beam1 = invoke({"translate", "--checkpoint", ckpt, "--input", input, "--beam", "1"});
  const Result beam3 = invoke({"translate", "--checkpoint", ckpt, "--input", input, "--beam", "3"});
  ASSERT_EQ(greedy.code, 0) << greedy.err;
  ASSERT_EQ(beam3.code, 0) << beam3.err;
  EXPECT_EQ(greedy.out, beam1.out);
  EXPECT_EQ(std::count(greedy.out.begin(), greedy.out.end(), '\n'),
            std::count(beam3.out.begin(), beam3.out.end(), '\n'));

  args = {"train", "--data", data.string(), "--out", model.string(), "--oracle", "lm"};
  EXPECT_EQ(invoke(args).code, ssnmt::cli::kExitUsage);
}

TEST(Cli, SingleRowExperiment) {
  const fs::path dir = scratch_dir("experiment");
  const fs::path cfg = dir / "spec.json";
  std::ofstream(cfg) << R"({"task": "copy", "pairs": 120, "vocab_size": 8, "baseline_epochs": 2,
                           "embedding_dim": 8, "hidden_dim": 12, "beam": 2,
                           "extra_tests": [{"name": "long", "min_length": 11, "max_length": 12,
                                            "pairs": 20}],
                           "training": {"epochs": 2}})";
  const Result r = invoke({"experiment", "--config", cfg.string(), "--systems", "baseline",
                           "--seed", "3", "--json", "--out", (dir / "out").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("baseline"), std::string::npos);
  EXPECT_NE(r.out.find("AVG"), std::string::npos) << r.out;
  const auto report = nlohmann::json::parse(slurp(dir / "out" / "report.json"));
  EXPECT_EQ(report.at("runs").size(), 1u);
  EXPECT_EQ(report.at("columns").size(), 3u);
  EXPECT_TRUE(fs::exists(dir / "out" / "report.txt"));
}

}  // namespace
