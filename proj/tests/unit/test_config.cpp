#include <gtest/gtest.h>

#include <algorithm>
#include <string>
#include <vector>

#include <json.hpp>

#include "bytet5/config.hpp"
#include "bytet5/error.hpp"

using namespace bytet5;
using namespace bytet5::config;

namespace {

std::vector<std::string> diagnostics_of(const std::vector<Layer>& layers) {
  try {
    resolve(layers);
  } catch (const ConfigError& e) {
    return e.diagnostics();
  }
  return {};
}

bool mentions(const std::vector<std::string>& items, const std::string& key) {
  return std::any_of(items.begin(), items.end(), [&](const std::string& d) { return d.starts_with(key + ":"); });
}

}  // namespace

TEST(Config, DefaultsMirrorReferenceHyperparameters) {
  const GlobalConfig c = resolve({});
  EXPECT_EQ(c.train.learning_rate, 3e-5);
  EXPECT_EQ(c.train.warmup_steps, 500u);
  EXPECT_EQ(c.train.batch_size, 16u);
  EXPECT_EQ(c.train.grad_accum_steps, 2u);
  EXPECT_EQ(c.corruption.context_length, 512u);
  EXPECT_EQ(c.decode.num_beams, 10u);
  EXPECT_EQ(c.decode.temperature, 0.7);
  EXPECT_EQ(c.decode.top_k, 70u);
  EXPECT_EQ(c.decode.max_length, 512u);
  EXPECT_EQ(c.judge_options.runs, 5u);
}

TEST(Config, ShippedDefaultFileResolvesToBuiltInDefaults) {
  const GlobalConfig from_file = resolve({load_yaml(BYTET5_CONFIG_DIR "/default.yaml")});
  EXPECT_EQ(to_json(from_file), to_json(resolve({})));
}

TEST(Config, LaterLayersWinKeyByKey) {
  const Layer file = parse_yaml("seed: 1\ntrain:\n  batch_size: 4\n  warmup_steps: 10\n");
  const Layer env = {{"seed", "2"}, {"train.batch_size", "8"}};
  const Layer flags = {{"seed", "3"}};
  const GlobalConfig c = resolve({file, env, flags});
  EXPECT_EQ(c.seed, 3u);
  EXPECT_EQ(c.train.batch_size, 8u);
  EXPECT_EQ(c.train.warmup_steps, 10u);
}

TEST(Config, SeedPropagatesToStochasticComponents) {
  const GlobalConfig c = resolve({{{"seed", "99"}}});
  EXPECT_EQ(c.corruption.seed, 99u);
  EXPECT_EQ(c.train.seed, 99u);
  EXPECT_EQ(c.decode.seed, 99u);
}

TEST(Config, EnvironmentNamesMapToKeys) {
  std::string a = "BYTET5_TRAIN_LEARNING_RATE=0.5";
  std::string b = "BYTET5_DECODE_TOP_K=3";
  std::string c = "BYTET5_JUDGE_API_KEY=secret";
  std::string d = "PATH=/bin";
  char* envp[] = {a.data(), b.data(), c.data(), d.data(), nullptr};
  const Layer layer = from_environment(envp);
  EXPECT_EQ(layer, (Layer{{"train.learning_rate", "0.5"}, {"decode.top_k", "3"}}));
}

TEST(Config, EveryBadFieldIsReported) {
  const auto d = diagnostics_of({{{"train.learning_rate", "fast"},
                                  {"decode.mode", "zigzag"},
                                  {"model.preset", "huge"},
                                  {"nonsense", "1"},
                                  {"bench.batch_sizes", "4,2"}}});
  EXPECT_TRUE(mentions(d, "train.learning_rate"));
  EXPECT_TRUE(mentions(d, "decode.mode"));
  EXPECT_TRUE(mentions(d, "model"));
  EXPECT_TRUE(mentions(d, "nonsense"));
  EXPECT_TRUE(mentions(d, "bench.batch_sizes"));
}

TEST(Config, CrossFieldValidationUsesModuleRules) {
  EXPECT_TRUE(mentions(diagnostics_of({{{"train.warmup_steps", "20"}, {"train.total_steps", "10"}}}), "train"));
  EXPECT_TRUE(mentions(diagnostics_of({{{"corruption.noise_density", "1.5"}}}), "corruption"));
  EXPECT_TRUE(mentions(diagnostics_of({{{"decode.temperature", "0"}}}), "decode"));
}

TEST(Config, YamlRejectsUnknownKeysAndWrongSchema) {
  EXPECT_THROW(parse_yaml("train:\n  learnin_rate: 1\n"), ConfigError);
  EXPECT_THROW(parse_yaml("schema_version: 2\n"), ConfigError);
  EXPECT_THROW(parse_yaml("[1, 2]"), ConfigError);
  EXPECT_THROW(parse_yaml("a: [b"), ConfigError);
  EXPECT_TRUE(parse_yaml("").empty());
}

TEST(Config, SequencesFlattenToLists) {
  const Layer layer = parse_yaml("bench:\n  batch_sizes: [1, 3, 9]\n");
  EXPECT_EQ(layer.at("bench.batch_sizes"), "1,3,9");
  EXPECT_EQ(resolve({layer}).bench_batch_sizes, (std::vector<std::size_t>{1, 3, 9}));
}

TEST(Config, ResolvedJsonListsEveryKey) {
  const auto j = nlohmann::json::parse(to_json(resolve({})));
  EXPECT_EQ(j.size(), known_keys().size());
  for (const auto& key : known_keys()) {
    EXPECT_TRUE(j.contains(key)) << key;
  }
}
