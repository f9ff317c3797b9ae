// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <sys/wait.h>

#include <json.hpp>

#include "nilm/cli.hpp"

namespace {

namespace fs = std::filesystem;

const char *kTinyConfig = R"([experiment]
algorithms = local,fedmeta

[data]
half_window = 3

[synth]
days = 1
sample_interval = 600
client_households = 2
task_households = 2
test_households = 2
appliances = ev,oven

[model]
recurrent_hidden = 3
dense_widths = 4

[fed]
rounds = 2
clients_per_round = 2

[client]
batch_size = 16

[meta]
tasks_per_round = 2

[finetune]
batch_size = 16

[central]
epochs = 1

[local]
epochs = 1
batch_size = 16
)";

struct Result {
  int code;
  std::string out, err;
};

class CliTest : public ::testing::Test {
protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("nilm_cli_" +
            std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
    std::ofstream(dir_ / "tiny.ini") << kTinyConfig;
  }
  void TearDown() override { fs::remove_all(dir_); }

  Result run(std::vector<std::string> args) {
    args.insert(args.begin(), "nilm");
    std::vector<const char *> argv;
    for (const auto &a : args)
      argv.push_back(a.c_str());
    std::ostringstream out, err;
    const int code = nilm::cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
    return {code, out.str(), err.str()};
  }

  std::string tiny() const { return (dir_ / "tiny.ini").string(); }
  std::string out(const std::string &sub) const { return (dir_ / sub).string(); }

  fs::path dir_;
};

TEST_F(CliTest, MissingConfigIsValidationErrorNamingPath) {
  const auto r = run({"--config", out("absent.ini"), "bench"});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("absent.ini"), std::string::npos) << r.err;
}

TEST_F(CliTest, UnknownSubcommandAndMissingSubcommandExitOne) {
  EXPECT_EQ(run({"frobnicate"}).code, 1);
  EXPECT_EQ(run({}).code, 1);
  EXPECT_EQ(run({"eval"}).code, 1); // --checkpoint is required
}

TEST_F(CliTest, HelpExitsZero) {
  const auto r = run({"--help"});
  EXPECT_EQ(r.code, 0);
  EXPECT_NE(r.out.find("bench"), std::string::npos);
}

TEST_F(CliTest, GradcheckPasses) {
  const auto r = run({"gradcheck", "--trials", "5"});
  EXPECT_EQ(r.code, 0) << r.out << r.err;
  EXPECT_NE(r.out.find("passed"), std::string::npos);
}

TEST_F(CliTest, PrintConfigRoundTrips) {
  const auto r = run({"--config", tiny(), "--seed", "9", "bench", "--print-config"});
  ASSERT_EQ(r.code, 0) << r.err;
  std::istringstream in(r.out);
  const auto c = nilm::parse_config(in);
  EXPECT_EQ(c.seed, 9u);
  EXPECT_EQ(c.model.recurrent_hidden, 3u);
}

TEST_F(CliTest, SynthThenBenchOnWrittenCsv) {
  const auto s = run({"--config", tiny(), "--out", out("data"), "synth"});
  ASSERT_EQ(s.code, 0) << s.err;
  EXPECT_TRUE(fs::exists(dir_ / "data" / "client-0.csv"));
  EXPECT_TRUE(fs::exists(dir_ / "data" / "test-1.csv"));
  const auto b = run({"--config", out("data/bench.ini"), "bench"});
  ASSERT_EQ(b.code, 0) << b.err;
  std::ifstream report(dir_ / "data" / "bench" / "report.json");
  const auto j = nlohmann::json::parse(report);
  EXPECT_EQ(j["entries"].size(), 2u * 2u * 2u);
  EXPECT_TRUE(j["failures"].empty());
  EXPECT_TRUE(fs::exists(dir_ / "data" / "bench" / "run_log.jsonl"));
}

TEST_F(CliTest, TrainThenEvaluateCheckpoint) {
  const auto t = run({"--config", tiny(), "--out", out("run"), "train", "--algorithm", "fedavg"});
  ASSERT_EQ(t.code, 0) << t.err;
  const auto ckpt = dir_ / "run" / "model.ckpt";
  ASSERT_TRUE(fs::exists(ckpt));
  EXPECT_TRUE(fs::exists(dir_ / "run" / "run_log.jsonl"));

  const auto e = run({"--config", tiny(), "--out", out("eval"), "eval", "--checkpoint",
                      ckpt.string(), "--task", "test-1", "--finetune"});
  ASSERT_EQ(e.code, 0) << e.err;
  std::ifstream in(dir_ / "eval" / "eval.json");
  const auto j = nlohmann::json::parse(in);
  EXPECT_EQ(j["finetuned"], true);
  EXPECT_EQ(j["entries"].size(), 2u);
  EXPECT_EQ(j["entries"][0]["task_id"], "test-1");

  EXPECT_EQ(run({"--config", tiny(), "--out", out("eval"), "eval", "--checkpoint",
                 ckpt.string(), "--task", "test-9"})
                .code,
            1);
  EXPECT_EQ(run({"train", "--algorithm", "sgd"}).code, 1);
}

TEST_F(CliTest, EvalOnCsvFile) {
  ASSERT_EQ(run({"--config", tiny(), "--out", out("data"), "synth"}).code, 0);
  ASSERT_EQ(run({"--config", tiny(), "--out", out("run"), "train", "--algorithm", "local"}).code,
            0);
  const auto e = run({"--config", tiny(), "--out", out("eval"), "eval", "--checkpoint",
                      out("run/model.ckpt"), "--csv", out("data/test-0.csv")});
  ASSERT_EQ(e.code, 0) << e.err;
  EXPECT_NE(e.out.find("\"task_id\": \"test-0\""), std::string::npos) << e.out;
}

TEST_F(CliTest, BinaryExitCodes) {
  const char *bin = std::getenv("NILM_CLI");
  if (bin == nullptr)
    GTEST_SKIP() << "NILM_CLI not set";
  auto status = [&](const std::string &args) {
    const int raw = std::system((std::string(bin) + " " + args + " >/dev/null 2>&1").c_str());
    return WEXITSTATUS(raw);
  };
  EXPECT_EQ(status("gradcheck --trials 2"), 0);
  EXPECT_EQ(status("--config " + out("absent.ini") + " bench"), 1);
  EXPECT_EQ(status("nonsense"), 1);
}

} // namespace
