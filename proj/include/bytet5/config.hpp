#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "bytet5/bench.hpp"
#include "bytet5/decode.hpp"
#include "bytet5/judge.hpp"
#include "bytet5/model.hpp"
#include "bytet5/spancorrupt.hpp"
#include "bytet5/textprep.hpp"
#include "bytet5/train.hpp"

namespace bytet5::config {

inline constexpr int kSchemaVersion = 1;

struct Paths {
  std::string corpus;
  std::string checkpoints = "checkpoints";
  std::string reports = "reports";
};

struct GlobalConfig {
  int schema_version = kSchemaVersion;
  std::uint64_t seed = 0;
  Paths paths;
  std::string punctuation_file;  // empty: built-in list
  textprep::CleanConfig clean;
  spancorrupt::CorruptionSpec corruption;
  std::string model_preset = "desk";
  double model_dropout = 0.1;
  train::TrainConfig train;
  decoding::DecodeConfig decode;
  judge::EndpointConfig judge_endpoint;
  judge::JudgeOptions judge_options;
  std::vector<std::size_t> bench_batch_sizes = {1, 2, 4, 8, 16, 32, 64};
  std::size_t bench_repetitions = 3;
  bench::Device bench_device = bench::Device::cpu;

  // Preset named by model_preset with dropout and context length applied.
  model::ModelConfig model_config() const;
};

// Dotted key -> value. Later layers override earlier ones key by key.
using Layer = std::map<std::string, std::string>;

// Every key the config understands, in documentation order.
const std::vector<std::string>& known_keys();

// Nested YAML mappings flatten to dotted keys; a sequence becomes a
// comma-separated list. Throws ConfigError on unreadable YAML, unknown keys
// or a schema_version other than kSchemaVersion.
Layer load_yaml(const std::filesystem::path& path);
Layer parse_yaml(const std::string& text);

// BYTET5_<KEY> with dots as underscores, upper case (train.learning_rate ->
// BYTET5_TRAIN_LEARNING_RATE). Variables that name no key are ignored.
Layer from_environment(char** envp);

// Applies layers in order over the defaults, then validates. Every invalid
// or unknown field is collected before throwing one ConfigError. The seed
// is copied into corruption, train and decode.
GlobalConfig resolve(const std::vector<Layer>& layers);

// The resolved config as a flat JSON object of dotted keys.
std::string to_json(const GlobalConfig& config);

}  // namespace bytet5::config
