#include "bytet5/config.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>
#include <stdexcept>

#include <json.hpp>
#include <yaml-cpp/yaml.h>

#include "bytet5/error.hpp"

namespace bytet5::config {

namespace {

using nlohmann::json;

std::string trim(std::string s) {
  const auto not_space = [](unsigned char c) { return !std::isspace(c); };
  s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
  s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
  return s;
}

template <typename T>
T parse_number(const std::string& raw) {
  const std::string s = trim(raw);
  T value{};
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
  if (s.empty() || ec != std::errc() || ptr != s.data() + s.size()) {
    throw std::invalid_argument("expected a number, got '" + raw + "'");
  }
  return value;
}

std::size_t parse_size(const std::string& raw) {
  if (trim(raw).starts_with('-')) {
    throw std::invalid_argument("expected a non-negative integer, got '" + raw + "'");
  }
  return parse_number<std::size_t>(raw);
}

bool parse_bool(const std::string& raw) {
  std::string s = trim(raw);
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  if (s == "true" || s == "yes" || s == "1") {
    return true;
  }
  if (s == "false" || s == "no" || s == "0") {
    return false;
  }
  throw std::invalid_argument("expected true or false, got '" + raw + "'");
}

std::vector<std::size_t> parse_size_list(const std::string& raw) {
  std::vector<std::size_t> out;
  std::stringstream ss(raw);
  std::string item;
  while (std::getline(ss, item, ',')) {
    out.push_back(parse_size(item));
  }
  if (out.empty()) {
    throw std::invalid_argument("expected a comma-separated list of integers");
  }
  return out;
}

struct Field {
  std::string key;
  std::function<void(GlobalConfig&, const std::string&)> set;
  std::function<json(const GlobalConfig&)> get;
};

#define BYTET5_FIELD(KEY, MEMBER, PARSE) \
  Field { KEY, [](GlobalConfig& c, const std::string& v) { c.MEMBER = PARSE(v); }, [](const GlobalConfig& c) { return json(c.MEMBER); } }

const std::vector<Field>& fields() {
  static const std::vector<Field> table = {
      BYTET5_FIELD("schema_version", schema_version, parse_number<int>),
      BYTET5_FIELD("seed", seed, parse_number<std::uint64_t>),
      BYTET5_FIELD("paths.corpus", paths.corpus, std::string),
      BYTET5_FIELD("paths.checkpoints", paths.checkpoints, std::string),
      BYTET5_FIELD("paths.reports", paths.reports, std::string),
      BYTET5_FIELD("clean.punctuation_file", punctuation_file, std::string),
      BYTET5_FIELD("clean.collapse_whitespace", clean.collapse_whitespace, parse_bool),
      BYTET5_FIELD("clean.strip_punctuation", clean.strip_punctuation, parse_bool),
      BYTET5_FIELD("corruption.noise_density", corruption.noise_density, parse_number<double>),
      BYTET5_FIELD("corruption.mean_span_length", corruption.mean_span_length, parse_number<double>),
      BYTET5_FIELD("corruption.context_length", corruption.context_length, parse_size),
      BYTET5_FIELD("model.preset", model_preset, std::string),
      BYTET5_FIELD("model.dropout_rate", model_dropout, parse_number<double>),
      BYTET5_FIELD("train.learning_rate", train.learning_rate, parse_number<double>),
      BYTET5_FIELD("train.warmup_steps", train.warmup_steps, parse_size),
      BYTET5_FIELD("train.total_steps", train.total_steps, parse_size),
      BYTET5_FIELD("train.batch_size", train.batch_size, parse_size),
      BYTET5_FIELD("train.grad_accum_steps", train.grad_accum_steps, parse_size),
      BYTET5_FIELD("train.adam_beta1", train.adam_beta1, parse_number<double>),
      BYTET5_FIELD("train.adam_beta2", train.adam_beta2, parse_number<double>),
      BYTET5_FIELD("train.adam_eps", train.adam_eps, parse_number<double>),
      Field{"decode.mode", [](GlobalConfig& c, const std::string& v) { c.decode.mode = decoding::parse_mode(trim(v)); },
            [](const GlobalConfig& c) { return json(decoding::to_string(c.decode.mode)); }},
      BYTET5_FIELD("decode.num_beams", decode.num_beams, parse_size),
      BYTET5_FIELD("decode.temperature", decode.temperature, parse_number<double>),
      BYTET5_FIELD("decode.top_k", decode.top_k, parse_size),
      BYTET5_FIELD("decode.max_length", decode.max_length, parse_size),
      BYTET5_FIELD("judge.url", judge_endpoint.url, std::string),
      BYTET5_FIELD("judge.model", judge_endpoint.model, std::string),
      BYTET5_FIELD("judge.auth_env", judge_endpoint.auth_env, std::string),
      BYTET5_FIELD("judge.timeout_s", judge_endpoint.timeout_s, parse_number<double>),
      BYTET5_FIELD("judge.temperature", judge_endpoint.temperature, parse_number<double>),
      BYTET5_FIELD("judge.min_interval_s", judge_endpoint.min_interval_s, parse_number<double>),
      BYTET5_FIELD("judge.runs", judge_options.runs, parse_size),
      BYTET5_FIELD("judge.retry_limit", judge_options.retry_limit, parse_size),
      BYTET5_FIELD("judge.parallelism", judge_options.parallelism, parse_size),
      BYTET5_FIELD("bench.batch_sizes", bench_batch_sizes, parse_size_list),
      BYTET5_FIELD("bench.repetitions", bench_repetitions, parse_size),
      Field{"bench.device", [](GlobalConfig& c, const std::string& v) { c.bench_device = bench::parse_device(trim(v)); },
            [](const GlobalConfig& c) { return json(bench::to_string(c.bench_device)); }},
  };
  return table;
}

#undef BYTET5_FIELD

const Field* find_field(const std::string& key) {
  for (const auto& f : fields()) {
    if (f.key == key) {
      return &f;
    }
  }
  return nullptr;
}

void flatten(const YAML::Node& node, const std::string& prefix, Layer& out) {
  if (node.IsMap()) {
    for (const auto& entry : node) {
      const std::string name = entry.first.as<std::string>();
      flatten(entry.second, prefix.empty() ? name : prefix + "." + name, out);
    }
  } else if (node.IsSequence()) {
    std::string joined;
    for (const auto& item : node) {
      if (!item.IsScalar()) {
        throw ConfigError({prefix + ": list items must be scalars"});
      }
      joined += (joined.empty() ? "" : ",") + item.as<std::string>();
    }
    out[prefix] = joined;
  } else if (node.IsScalar()) {
    out[prefix] = node.as<std::string>();
  } else if (node.IsNull()) {
    out[prefix] = "";
  }
}

// Runs one validator, turning its exception into a diagnostic.
template <typename F>
void check(std::vector<std::string>& diagnostics, const std::string& section, F&& f) {
  try {
    f();
  } catch (const std::exception& e) {
    diagnostics.push_back(section + ": " + e.what());
  }
}

}  // namespace

model::ModelConfig GlobalConfig::model_config() const {
  model::ModelConfig c = model::preset(model_preset);
  c.dropout_rate = model_dropout;
  c.context_length = corruption.context_length;
  return c;
}

const std::vector<std::string>& known_keys() {
  static const std::vector<std::string> keys = [] {
    std::vector<std::string> out;
    for (const auto& f : fields()) {
      out.push_back(f.key);
    }
    return out;
  }();
  return keys;
}

Layer parse_yaml(const std::string& text) {
  YAML::Node root;
  try {
    root = YAML::Load(text);
  } catch (const YAML::Exception& e) {
    throw ConfigError({std::string("yaml: ") + e.what()});
  }
  Layer layer;
  if (root.IsNull()) {
    return layer;
  }
  if (!root.IsMap()) {
    throw ConfigError({"yaml: top level must be a mapping"});
  }
  flatten(root, "", layer);
  std::vector<std::string> diagnostics;
  for (const auto& [key, value] : layer) {
    if (find_field(key) == nullptr) {
      diagnostics.push_back(key + ": unknown key");
    }
  }
  if (const auto it = layer.find("schema_version"); it != layer.end() && trim(it->second) != std::to_string(kSchemaVersion)) {
    diagnostics.push_back("schema_version: expected " + std::to_string(kSchemaVersion) + ", got '" + it->second + "'");
  }
  if (!diagnostics.empty()) {
    throw ConfigError(std::move(diagnostics));
  }
  return layer;
}

Layer load_yaml(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw ConfigError({"config file: cannot read " + path.string()});
  }
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_yaml(buffer.str());
}

Layer from_environment(char** envp) {
  std::map<std::string, std::string> by_env_name;
  for (const auto& key : known_keys()) {
    std::string name = "BYTET5_" + key;
    for (char& ch : name) {
      ch = ch == '.' ? '_' : static_cast<char>(std::toupper(static_cast<unsigned char>(ch)));
    }
    by_env_name[name] = key;
  }
  Layer layer;
  for (char** e = envp; e != nullptr && *e != nullptr; ++e) {
    const std::string entry(*e);
    const auto eq = entry.find('=');
    if (eq == std::string::npos) {
      continue;
    }
    if (const auto it = by_env_name.find(entry.substr(0, eq)); it != by_env_name.end()) {
      layer[it->second] = entry.substr(eq + 1);
    }
  }
  return layer;
}

GlobalConfig resolve(const std::vector<Layer>& layers) {
  GlobalConfig config;
  std::vector<std::string> diagnostics;
  Layer merged;
  for (const auto& layer : layers) {
    for (const auto& [key, value] : layer) {
      merged[key] = value;
    }
  }
  for (const auto& [key, value] : merged) {
    const Field* field = find_field(key);
    if (field == nullptr) {
      diagnostics.push_back(key + ": unknown key");
      continue;
    }
    check(diagnostics, key, [&] { field->set(config, value); });
  }

  if (config.schema_version != kSchemaVersion) {
    diagnostics.push_back("schema_version: expected " + std::to_string(kSchemaVersion));
  }
  if (!config.punctuation_file.empty()) {
    check(diagnostics, "clean.punctuation_file",
          [&] { config.clean.punctuation_set = textprep::load_codepoint_list(config.punctuation_file); });
  }
  config.corruption.seed = config.seed;
  config.train.seed = config.seed;
  config.decode.seed = config.seed;

  check(diagnostics, "clean", [&] { config.clean.validate(); });
  check(diagnostics, "corruption", [&] { config.corruption.validate(); });
  check(diagnostics, "model", [&] { config.model_config().validate(); });
  if (config.model_dropout < 0.0 || config.model_dropout >= 1.0) {
    diagnostics.push_back("model.dropout_rate: must be in [0, 1)");
  }
  check(diagnostics, "train", [&] { config.train.validate(); });
  check(diagnostics, "decode", [&] { config.decode.validate(); });
  if (!config.judge_endpoint.url.empty()) {
    check(diagnostics, "judge", [&] { config.judge_endpoint.validate(); });
  }
  if (config.judge_options.runs < 1) {
    diagnostics.push_back("judge.runs: must be >= 1");
  }
  if (config.judge_options.parallelism < 1) {
    diagnostics.push_back("judge.parallelism: must be >= 1");
  }
  const auto& sizes = config.bench_batch_sizes;
  if (std::find(sizes.begin(), sizes.end(), std::size_t{0}) != sizes.end() ||
      !std::is_sorted(sizes.begin(), sizes.end())) {
    diagnostics.push_back("bench.batch_sizes: must be positive and ascending");
  }
  if (config.bench_repetitions < 1) {
    diagnostics.push_back("bench.repetitions: must be >= 1");
  }
  if (!diagnostics.empty()) {
    throw ConfigError(std::move(diagnostics));
  }
  return config;
}

std::string to_json(const GlobalConfig& config) {
  json out = json::object();
  for (const auto& f : fields()) {
    out[f.key] = f.get(config);
  }
  return out.dump();
}

}  // namespace bytet5::config
