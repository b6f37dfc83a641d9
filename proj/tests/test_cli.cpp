// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <nlohmann/json.hpp>
#include <sstream>
#include <sys/wait.h>

namespace {

namespace fs = std::filesystem;
using Json = nlohmann::json;

const fs::path kRoot = fs::path(::testing::TempDir()) / "ramen_cli";

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

int run(const std::string& args, const std::string& env = "") {
  const std::string cmd = env + " " RAMEN_CLI_PATH " " + args + " >" + (kRoot / "stdout.txt").string() +
                          " 2>" + (kRoot / "stderr.txt").string();
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

fs::path write_config(const std::string& name, const Json& j) {
  const auto p = kRoot / name;
  std::ofstream(p) << j.dump(2);
  return p;
}

Json small_config() {
  return Json{{"data", {{"num_scenes", 60}, {"visual_dim", 16}, {"spatial_grid", 2}, {"num_regions", 10},
                        {"vocab", {{"min_count", 1}}}}},
              {"model", {{"embedding_dim", 8}, {"question_dim", 16}, {"projector_width", 16},
                         {"aggregator_hidden", 8}, {"pre_classifier_width", 16}}},
              {"trainer", {{"batch_size", 16}, {"max_epochs", 2}}},
              {"ablation", {{"repeats", 1}}}};
}

// every file of a dataset directory; the recorded config drops its own paths
std::map<std::string, std::string> tree(const fs::path& dir) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::directory_iterator(dir)) out[e.path().filename()] = slurp(e.path());
  auto config = Json::parse(out.at("config.json"));
  config.erase("paths");
  out["config.json"] = config.dump();
  return out;
}

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    fs::remove_all(kRoot);
    fs::create_directories(kRoot);
  }
};

TEST_F(Cli, GenDataIsByteIdenticalForAFixedSeed) {
  const auto cfg = write_config("c.json", small_config());
  ASSERT_EQ(run("gen-data --config " + cfg.string() + " --seed 3 --out " + (kRoot / "a").string()), 0);
  ASSERT_EQ(run("gen-data --config " + cfg.string() + " --seed 3 --out " + (kRoot / "b").string()), 0);
  ASSERT_EQ(run("gen-data --config " + cfg.string() + " --seed 4 --out " + (kRoot / "c").string()), 0);
  const auto a = tree(kRoot / "a");
  EXPECT_EQ(a, tree(kRoot / "b"));
  EXPECT_NE(a, tree(kRoot / "c"));

  const auto m = Json::parse(a.at("manifest.json"));
  EXPECT_EQ(m["scenes"], 60);
  EXPECT_EQ(m["split_regime"], "iid");
  const std::size_t items = m["items"];
  EXPECT_EQ(std::size_t(m["splits"]["train"]) + std::size_t(m["splits"]["val"]) +
                std::size_t(m["splits"]["test"]) + std::size_t(m["dropped"]),
            items);
  std::size_t hist = 0;
  for (const auto& [family, answers] : m["answer_histogram"].items())
    for (const auto& [answer, n] : answers.items()) hist += std::size_t(n);
  EXPECT_EQ(hist, items);
}

TEST_F(Cli, TrainThenEvalWritesReports) {
  const auto cfg = write_config("c.json", small_config());
  const auto data = (kRoot / "data").string(), out = (kRoot / "run").string();
  ASSERT_EQ(run("gen-data --config " + cfg.string() + " --out " + data), 0);
  auto j = small_config();
  j["paths"] = {{"dataset", data}};
  const auto cfg2 = write_config("c2.json", j);
  ASSERT_EQ(run("train --config " + cfg2.string() + " --out " + out), 0) << slurp(kRoot / "stderr.txt");
  for (const char* f : {"checkpoint.bin", "learning_curve.csv", "report.json", "config.json"})
    EXPECT_TRUE(fs::exists(fs::path(out) / f)) << f;
  const auto report = Json::parse(slurp(fs::path(out) / "report.json"));
  EXPECT_EQ(report["epochs"], 2);
  for (const char* k : {"simple", "mpt", "nmpt"}) {
    EXPECT_TRUE(report["val"]["overall"].contains(k)) << k;
    EXPECT_TRUE(report["test"]["overall"].contains(k)) << k;
  }
  EXPECT_EQ(slurp(fs::path(out) / "learning_curve.csv").rfind("epoch,lr,train_loss,train_acc,val_acc\n", 0), 0u);

  ASSERT_EQ(run("eval --config " + cfg2.string() + " --out " + out), 0) << slurp(kRoot / "stderr.txt");
  const auto eval = Json::parse(slurp(fs::path(out) / "eval_report.json"));
  EXPECT_EQ(eval["val"]["overall"]["simple"], report["val"]["overall"]["simple"]);
  EXPECT_EQ(eval["test"]["overall"]["mpt"], report["test"]["overall"]["mpt"]);
}

TEST_F(Cli, AblateWritesMedianRows) {
  auto j = small_config();
  j["trainer"]["max_epochs"] = 1;
  const auto cfg = write_config("c.json", j);
  const auto data = (kRoot / "data").string();
  ASSERT_EQ(run("gen-data --config " + cfg.string() + " --out " + data), 0);
  j["paths"] = {{"dataset", data}};
  const auto cfg2 = write_config("c2.json", j);
  ASSERT_EQ(run("ablate --config " + cfg2.string() + " --out " + (kRoot / "abl").string(), "RAMEN_THREADS=2"), 0)
      << slurp(kRoot / "stderr.txt");
  const auto csv = slurp(kRoot / "abl" / "ablation.csv");
  EXPECT_EQ(csv.rfind("variant,seed,val_acc,test_acc\n", 0), 0u);
  for (const char* v : {"full,median", "no_early_fusion,median", "no_late_fusion,median", "mean_pool,median"})
    EXPECT_NE(csv.find(v), std::string::npos) << v;
}

TEST_F(Cli, ConfigErrorsExitWithTwo) {
  EXPECT_EQ(run("gen-data --config " + write_config("bad.json", {{"nope", 1}}).string()), 2);
  EXPECT_NE(slurp(kRoot / "stderr.txt").find("nope"), std::string::npos);
  EXPECT_EQ(run("gen-data --config " + (kRoot / "missing.json").string()), 2);
  EXPECT_EQ(run("train --ablation sideways"), 2);
  EXPECT_EQ(run("gen-data --split-regime shuffled"), 2);
  EXPECT_EQ(run("train --seed notanumber"), 2);
  EXPECT_EQ(run("frobnicate"), 2);
  EXPECT_EQ(run("ablate", "RAMEN_THREADS=zero"), 2);
}

TEST_F(Cli, DataErrorsExitWithThree) {
  EXPECT_EQ(run("train --out " + (kRoot / "o").string() + " --config " +
                write_config("c.json", {{"paths", {{"dataset", (kRoot / "absent").string()}}}}).string()),
            3);
  fs::create_directories(kRoot / "o");
  std::ofstream(kRoot / "o" / "checkpoint.bin") << "garbage";
  const auto cfg = write_config("c.json", small_config());
  const auto data = (kRoot / "data").string();
  ASSERT_EQ(run("gen-data --config " + cfg.string() + " --out " + data), 0);
  auto j = small_config();
  j["paths"] = {{"dataset", data}};
  EXPECT_EQ(run("eval --config " + write_config("c2.json", j).string() + " --out " + (kRoot / "o").string()), 3);
}

TEST_F(Cli, GradCheckPassesAndFlagsInjectedFault) {
  EXPECT_EQ(run("grad-check --out " + kRoot.string()), 0);
  EXPECT_NE(slurp(kRoot / "stdout.txt").find("checks passed"), std::string::npos);
  EXPECT_EQ(run("grad-check --inject-fault"), 4);
  EXPECT_NE(slurp(kRoot / "stdout.txt").find("FAIL"), std::string::npos);
}

}  // namespace
