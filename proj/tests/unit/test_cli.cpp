#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "bytet5/checkpoint.hpp"
#include "bytet5/cli.hpp"
#include "bytet5/model.hpp"

using namespace bytet5;
namespace fs = std::filesystem;

namespace {

struct Result {
  int code = 0;
  std::string out;
  std::string err;
};

Result invoke(const std::vector<std::string>& args, const std::string& input = "") {
  std::ostringstream out;
  std::ostringstream err;
  std::istringstream in(input);
  char* no_env[] = {nullptr};
  Result r;
  r.code = cli::run(args, out, err, in, no_env);
  r.out = out.str();
  r.err = err.str();
  return r;
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() / ("bytet5_cli_" + std::to_string(::testing::UnitTest::GetInstance()->random_seed()) +
                                        "_" + ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  std::string write(const std::string& name, const std::string& text) {
    const fs::path p = dir_ / name;
    std::ofstream(p) << text;
    return p.string();
  }

  fs::path dir_;
};

}  // namespace

TEST_F(CliTest, CarbonPrintsReferenceEmission) {
  const Result r = invoke({"carbon", "--tdp-kw", "0.25", "--devices", "2", "--hours", "600", "--intensity", "0.7"});
  EXPECT_EQ(r.code, 0);
  EXPECT_EQ(r.out, "300 kWh, 210 kg CO2e\n");
}

TEST_F(CliTest, CorruptIsByteIdenticalAcrossRuns) {
  const std::string text = write("doc.txt", std::string(300, 'x') + " some words to corrupt, then more words\n");
  const std::vector<std::string> args = {"corrupt", "--seed", "7", "--context", "64", text};
  const Result a = invoke(args);
  const Result b = invoke(args);
  ASSERT_EQ(a.code, 0) << a.err;
  EXPECT_FALSE(a.out.empty());
  EXPECT_EQ(a.out, b.out);
  EXPECT_NE(a.out, invoke({"corrupt", "--seed", "8", "--context", "64", text}).out);
}

TEST_F(CliTest, BeamOneMatchesGreedy) {
  model::ModelConfig config = model::preset("tiny");
  config.dropout_rate = 0.0;
  const std::string ckpt = (dir_ / "m.ckpt").string();
  checkpoint::save(ckpt, {config, model::init_parameters(config, 21), ""});
  const std::vector<std::string> prompts = {"--prompt", "abc", "--prompt", "hello world"};
  std::vector<std::string> beam = {"generate", "--checkpoint", ckpt, "--beams", "1", "--max-length", "12", "--seed", "5"};
  std::vector<std::string> greedy = {"generate", "--checkpoint", ckpt, "--mode", "greedy", "--max-length", "12", "--seed", "5"};
  beam.insert(beam.end(), prompts.begin(), prompts.end());
  greedy.insert(greedy.end(), prompts.begin(), prompts.end());
  const Result a = invoke(beam);
  const Result b = invoke(greedy);
  ASSERT_EQ(a.code, 0) << a.err;
  EXPECT_EQ(a.out, b.out);
}

TEST_F(CliTest, UnknownSubcommandIsUsageError) {
  const Result r = invoke({"frobnicate"});
  EXPECT_EQ(r.code, 2);
  const auto j = nlohmann::json::parse(r.err.substr(0, r.err.find('\n')));
  EXPECT_EQ(j["error"], "usage");
  EXPECT_EQ(invoke({}).code, 2);
}

TEST_F(CliTest, InvalidConfigGivesFieldDiagnostics) {
  const Result r = invoke({"--set", "decode.top_k=zero", "--set", "seed=x", "vocab-manifest"});
  EXPECT_EQ(r.code, 1);
  const auto j = nlohmann::json::parse(r.err.substr(0, r.err.find('\n')));
  EXPECT_EQ(j["error"], "config");
  ASSERT_EQ(j["diagnostics"].size(), 2u);
  EXPECT_TRUE(r.out.empty());
}

TEST_F(CliTest, FlagsOverrideFileAndEnvironment) {
  const std::string cfg = write("c.yaml", "seed: 1\ndecode:\n  num_beams: 3\n");
  std::string env_seed = "BYTET5_SEED=2";
  std::string env_beams = "BYTET5_DECODE_NUM_BEAMS=4";
  char* envp[] = {env_seed.data(), env_beams.data(), nullptr};
  std::ostringstream out;
  std::ostringstream err;
  std::istringstream in;
  ASSERT_EQ(cli::run({"--config", cfg, "--seed", "5", "vocab-manifest"}, out, err, in, envp), 0);
  const auto log = nlohmann::json::parse(err.str().substr(0, err.str().find('\n')));
  EXPECT_EQ(log["event"], "config");
  EXPECT_EQ(log["seed"], 5);
  EXPECT_EQ(log["config"]["decode.num_beams"], 4);
}

TEST_F(CliTest, VersionNamesFormats) {
  const Result r = invoke({"--version"});
  EXPECT_EQ(r.code, 0);
  EXPECT_NE(r.out.find("checkpoint format 1"), std::string::npos);
}

TEST_F(CliTest, StatsAndHistogram) {
  const std::string text = "আমি ভাত খাই। তুমি যাও।";
  const Result s = invoke({"stats"}, text);
  ASSERT_EQ(s.code, 0) << s.err;
  const auto j = nlohmann::json::parse(s.out);
  EXPECT_EQ(j["words"], 5);
  EXPECT_EQ(j["sentences"], 2);
  EXPECT_EQ(j["avg_words_per_sentence"], 2.5);
  EXPECT_EQ(invoke({"stats", "--histogram"}, "a b c\nd e\nf g\n").out, "length,count\n2,2\n3,1\n");
}

TEST_F(CliTest, EvalReadsBothRecordShapes) {
  const Result f1 = invoke({"eval", "--metric", "macro-f1"}, "{\"pred\":\"A\",\"gold\":\"A\"}\n{\"pred\":\"B\",\"gold\":\"B\"}\n");
  ASSERT_EQ(f1.code, 0) << f1.err;
  EXPECT_EQ(nlohmann::json::parse(f1.out)["score"], 1.0);
  const Result bleu = invoke({"eval", "--metric", "bleu"}, "{\"hyp\":\"the cat sat down\",\"ref\":\"the cat sat down\"}\n");
  ASSERT_EQ(bleu.code, 0) << bleu.err;
  EXPECT_DOUBLE_EQ(nlohmann::json::parse(bleu.out)["score"].get<double>(), 100.0);
  EXPECT_EQ(invoke({"eval", "--metric", "rouge"}, "{}\n").code, 1);
}

TEST_F(CliTest, JudgeWritesVerdictsAndTable) {
  const std::string prompts = write("p.txt", "p1\np2\n");
  const std::string responses = write("r.txt", "r1\nr2\n");
  const std::string table = (dir_ / "t.csv").string();
  const Result r = invoke({"judge", "--prompts", prompts, "--responses", responses, "--runs", "5", "--mock-replies",
                           "8,9,8,9,8", "--model-name", "m", "--table", table});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(std::count(r.out.begin(), r.out.end(), '\n'), 2);
  std::ifstream in(table);
  std::stringstream csv;
  csv << in.rdbuf();
  EXPECT_NE(csv.str().find("m,,mock-judge,8.40,0.55,8.40,0.55,8.40,0.55,8.40,0.55"), std::string::npos);
}

TEST_F(CliTest, VocabManifestCoversEveryId) {
  const auto j = nlohmann::json::parse(invoke({"vocab-manifest"}).out);
  ASSERT_EQ(j.size(), 384u);
  EXPECT_EQ(j[283]["role"], "reserved");
  EXPECT_EQ(j[284]["role"], "sentinel");
}
