#include "bytet5/cli.hpp"

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <istream>
#include <list>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "bytet5/bench.hpp"
#include "bytet5/bytevocab.hpp"
#include "bytet5/checkpoint.hpp"
#include "bytet5/config.hpp"
#include "bytet5/decode.hpp"
#include "bytet5/error.hpp"
#include "bytet5/judge.hpp"
#include "bytet5/metrics.hpp"
#include "bytet5/model.hpp"
#include "bytet5/rng.hpp"
#include "bytet5/spancorrupt.hpp"
#include "bytet5/textprep.hpp"
#include "bytet5/train.hpp"

namespace bytet5::cli {

namespace {

using nlohmann::json;
namespace fs = std::filesystem;

const std::set<std::string> kCommands = {"clean", "stats",    "fertility", "corrupt", "train", "finetune",
                                         "generate", "eval", "judge",    "bench",   "vocab-manifest", "carbon"};

// Flags that write a config key. Values are kept as text and parsed by the
// config resolver so they get the same diagnostics as file and env values.
class Bindings {
 public:
  void bind(CLI::App* app, const std::string& flag, const std::string& key, const std::string& help) {
    std::string& slot = storage_.emplace_back();
    items_.push_back({app->add_option(flag, slot, help + " [" + key + "]"), key, &slot});
  }

  void collect(config::Layer& layer) const {
    for (const auto& item : items_) {
      if (item.option->count() > 0) {
        layer[item.key] = *item.value;
      }
    }
  }

 private:
  struct Item {
    CLI::Option* option;
    std::string key;
    const std::string* value;
  };
  std::list<std::string> storage_;
  std::vector<Item> items_;
};

std::string read_stream(std::istream& in) {
  std::stringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw IoError("cannot read " + path);
  }
  return read_stream(in);
}

// One document per file; stdin when no files are given or for "-".
std::vector<std::string> read_documents(const std::vector<std::string>& files, std::istream& in) {
  std::vector<std::string> docs;
  if (files.empty()) {
    docs.push_back(read_stream(in));
  }
  for (const auto& f : files) {
    docs.push_back(f == "-" ? read_stream(in) : read_file(f));
  }
  return docs;
}

std::vector<std::string> split_lines(const std::string& text, bool skip_blank) {
  std::vector<std::string> lines;
  std::stringstream ss(text);
  std::string line;
  while (std::getline(ss, line)) {
    if (!line.empty() && line.back() == '\r') {
      line.pop_back();
    }
    if (skip_blank && line.find_first_not_of(" \t") == std::string::npos) {
      continue;
    }
    lines.push_back(line);
  }
  return lines;
}

std::vector<std::string> read_lines(const std::vector<std::string>& files, std::istream& in) {
  std::vector<std::string> lines;
  for (const auto& doc : read_documents(files, in)) {
    for (auto& line : split_lines(doc, true)) {
      lines.push_back(std::move(line));
    }
  }
  return lines;
}

json parse_json_line(const std::string& line, std::size_t number) {
  try {
    return json::parse(line);
  } catch (const json::exception& e) {
    throw StructureError("line " + std::to_string(number) + ": " + e.what());
  }
}

void write_file(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) {
    fs::create_directories(path.parent_path());
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw IoError("cannot write " + path.string());
  }
  out << text;
}

std::string format_number(double x) {
  std::ostringstream o;
  o << std::setprecision(15) << x;
  return o.str();
}

// ---- commands ----

struct Inputs {
  std::vector<std::string> files;
};

void cmd_clean(const config::GlobalConfig& cfg, const Inputs& inputs, std::ostream& out, std::istream& in) {
  for (const auto& doc : read_documents(inputs.files, in)) {
    for (const auto& line : split_lines(doc, false)) {
      out << textprep::clean_document(line, cfg.clean) << '\n';
    }
  }
}

void cmd_stats(const Inputs& inputs, bool histogram, std::ostream& out, std::istream& in) {
  if (histogram) {
    const auto items = read_lines(inputs.files, in);
    out << textprep::histogram_csv(textprep::length_histogram(items));
    return;
  }
  const auto docs = read_documents(inputs.files, in);
  const textprep::CorpusStats s = textprep::corpus_stats(docs, textprep::SegmentationRules{});
  const auto avg = s.avg_words_per_sentence();
  const json j = {{"words", s.word_count},
                  {"sentences", s.sentence_count},
                  {"avg_words_per_sentence", avg ? json(*avg) : json(nullptr)},
                  {"bytes", s.byte_size}};
  out << j.dump() << '\n';
}

void cmd_fertility(const Inputs& inputs, std::optional<std::uint64_t> tokens, std::optional<std::uint64_t> words,
                   std::ostream& out, std::istream& in) {
  if (tokens.has_value() != words.has_value()) {
    throw ArgumentError("--tokens and --words must be given together");
  }
  std::uint64_t t = 0;
  std::uint64_t w = 0;
  if (tokens) {
    t = *tokens;
    w = *words;
  } else {
    for (const auto& doc : read_documents(inputs.files, in)) {
      t += encode(doc, false).size();
      w += textprep::count_words(doc);
    }
  }
  const FertilityReport r = fertility(t, w);
  const json j = {{"tokens", r.token_count},
                  {"words", r.word_count},
                  {"fertility", r.fertility},
                  {"fertility_rounded", r.fertility_rounded}};
  out << j.dump() << '\n';
}

void cmd_corrupt(const config::GlobalConfig& cfg, const Inputs& inputs, std::ostream& out, std::istream& in) {
  const auto docs = read_documents(inputs.files, in);
  spancorrupt::pack_corpus(docs, cfg.corruption,
                           [&](spancorrupt::CorruptionExample&& ex) { out << spancorrupt::to_jsonl(ex) << '\n'; });
}

struct TrainArgs {
  std::string init;
  std::string output;
  std::string trace;
};

void cmd_train(const config::GlobalConfig& cfg, const Inputs& inputs, const TrainArgs& args, bool seq2seq,
               std::ostream& out, std::ostream& err, std::istream& in) {
  std::vector<train::Seq2SeqExample> examples;
  for (const auto& line : read_lines(inputs.files, in)) {
    if (seq2seq) {
      examples.push_back(train::seq2seq_from_jsonl(line));
    } else {
      spancorrupt::CorruptionExample ex = spancorrupt::from_jsonl(line);
      examples.push_back({std::move(ex.input_ids), std::move(ex.target_ids)});
    }
  }
  if (examples.empty()) {
    throw ArgumentError("no training examples read");
  }

  checkpoint::Checkpoint ckpt;
  if (!args.init.empty()) {
    ckpt = checkpoint::load(args.init);
    ckpt.config.dropout_rate = cfg.model_dropout;
  } else if (seq2seq) {
    throw ArgumentError("finetune requires --init CHECKPOINT");
  } else {
    ckpt.config = cfg.model_config();
    ckpt.params = model::init_parameters(ckpt.config, derive_seed(cfg.seed, 0));
  }

  std::ofstream trace;
  if (!args.trace.empty()) {
    trace.open(args.trace);
    if (!trace) {
      throw IoError("cannot write " + args.trace);
    }
  }
  const train::TrainResult result = train::train(
      ckpt.params, ckpt.config, cfg.train, examples, [&](std::size_t step, double loss, double lr) {
        if (trace.is_open()) {
          trace << json{{"step", step}, {"loss", loss}, {"lr", lr}}.dump() << '\n';
        }
      });
  Rng state(derive_seed(cfg.seed, 3));
  ckpt.rng_state = state.serialize();

  const fs::path output = args.output.empty() ? fs::path(cfg.paths.checkpoints) / "model.ckpt" : fs::path(args.output);
  if (output.has_parent_path()) {
    fs::create_directories(output.parent_path());
  }
  checkpoint::save(output, ckpt);
  err << json{{"event", "saved"}, {"checkpoint", output.string()}}.dump() << '\n';
  const json summary = {{"examples", examples.size()},
                        {"steps", result.loss_trace.size()},
                        {"initial_loss", result.loss_trace.front()},
                        {"final_loss", result.loss_trace.back()},
                        {"checkpoint", output.string()}};
  out << summary.dump() << '\n';
}

void cmd_generate(const config::GlobalConfig& cfg, const Inputs& inputs, const std::string& ckpt_path,
                  const std::vector<std::string>& prompts, std::ostream& out, std::istream& in) {
  const checkpoint::Checkpoint ckpt = checkpoint::load(ckpt_path);
  model::ModelConfig mc = ckpt.config;
  mc.dropout_rate = 0.0;
  const std::vector<std::string> items = prompts.empty() ? read_lines(inputs.files, in) : prompts;
  for (const auto& prompt : items) {
    const auto ids = encode(prompt, true);
    auto session = model::start_session(ckpt.params, mc, ids);
    const auto output = decoding::generate(*session, cfg.decode);
    out << json{{"prompt", prompt}, {"output", decode(output).text}}.dump() << '\n';
  }
}

std::string string_field(const json& j, const char* name, std::size_t number) {
  if (!j.contains(name) || !j[name].is_string()) {
    throw StructureError("line " + std::to_string(number) + ": field '" + name + "' must be a string");
  }
  return j[name].get<std::string>();
}

void cmd_eval(const Inputs& inputs, const std::string& metric, bool smooth, const std::string& labels_flag,
              std::size_t max_n, std::ostream& out, std::istream& in) {
  const auto lines = read_lines(inputs.files, in);
  if (lines.empty()) {
    throw ArgumentError("eval needs at least one record");
  }
  metrics::MetricReport report;
  if (metric == "macro-f1") {
    std::vector<std::string> preds;
    std::vector<std::string> golds;
    for (std::size_t i = 0; i < lines.size(); ++i) {
      const json j = parse_json_line(lines[i], i + 1);
      preds.push_back(string_field(j, "pred", i + 1));
      golds.push_back(string_field(j, "gold", i + 1));
    }
    std::set<std::string> labels;
    if (labels_flag.empty()) {
      labels.insert(preds.begin(), preds.end());
      labels.insert(golds.begin(), golds.end());
    } else {
      std::stringstream ss(labels_flag);
      std::string label;
      while (std::getline(ss, label, ',')) {
        labels.insert(label);
      }
    }
    report = metrics::macro_f1(preds, golds, labels);
  } else if (metric == "bleu" || metric == "gleu") {
    std::vector<std::string> hyps;
    std::vector<std::vector<std::string>> refs;  // refs[r][i]
    for (std::size_t i = 0; i < lines.size(); ++i) {
      const json j = parse_json_line(lines[i], i + 1);
      hyps.push_back(string_field(j, "hyp", i + 1));
      std::vector<std::string> row;
      if (j.contains("ref") && j["ref"].is_array()) {
        for (const auto& r : j["ref"]) {
          if (!r.is_string()) {
            throw StructureError("line " + std::to_string(i + 1) + ": references must be strings");
          }
          row.push_back(r.get<std::string>());
        }
      } else {
        row.push_back(string_field(j, "ref", i + 1));
      }
      if (refs.empty()) {
        refs.resize(row.size());
      }
      if (row.size() != refs.size()) {
        throw StructureError("line " + std::to_string(i + 1) + ": every record needs the same number of references");
      }
      for (std::size_t r = 0; r < row.size(); ++r) {
        refs[r].push_back(row[r]);
      }
    }
    if (metric == "bleu") {
      metrics::BleuOptions options;
      options.floor_smoothing = smooth;
      report = metrics::corpus_bleu(hyps, std::span<const std::vector<std::string>>(refs), options);
    } else {
      if (refs.size() != 1) {
        throw ArgumentError("gleu takes a single reference per record");
      }
      report = metrics::gleu(hyps, refs.front(), max_n);
    }
  } else {
    throw ArgumentError("unknown metric '" + metric + "'; expected macro-f1, bleu or gleu");
  }
  out << report.to_json() << '\n';
}

struct JudgeArgs {
  std::string prompts;
  std::string responses;
  std::string model_name = "model";
  std::string params;
  std::string table;
  std::string mock_replies;
};

void cmd_judge(const config::GlobalConfig& cfg, const JudgeArgs& args, std::ostream& out) {
  const auto prompts = split_lines(read_file(args.prompts), true);
  const auto responses = split_lines(read_file(args.responses), true);
  if (prompts.size() != responses.size()) {
    throw ArgumentError(std::to_string(prompts.size()) + " prompts but " + std::to_string(responses.size()) + " responses");
  }
  std::unique_ptr<judge::Transport> transport;
  if (!args.mock_replies.empty()) {
    std::vector<std::string> replies;
    std::stringstream ss(args.mock_replies);
    std::string reply;
    while (std::getline(ss, reply, ',')) {
      replies.push_back(reply);
    }
    if (replies.empty()) {
      throw ArgumentError("--mock-replies needs at least one reply");
    }
    transport = std::make_unique<judge::MockTransport>(
        "mock-judge", [replies](const judge::JudgeRequest& r) { return replies[r.run % replies.size()]; });
  } else if (!cfg.judge_endpoint.url.empty()) {
    transport = std::make_unique<judge::HttpTransport>(cfg.judge_endpoint);
  } else {
    throw ArgumentError("no judge endpoint: set judge.url and judge.model, or pass --mock-replies");
  }

  std::vector<judge::ScoredResponse> scored;
  for (std::size_t i = 0; i < prompts.size(); ++i) {
    judge::JudgeVerdict verdict = judge::score_response(*transport, prompts[i], responses[i], cfg.judge_options);
    json line = {{"model", args.model_name}, {"prompt", prompts[i]}, {"verdict", json::parse(judge::verdict_json(verdict))}};
    out << line.dump() << '\n';
    scored.push_back({args.model_name, args.params, prompts[i], std::move(verdict)});
  }
  const auto rows = judge::aggregate_table(scored);
  const fs::path table = args.table.empty() ? fs::path(cfg.paths.reports) / "judge_table.csv" : fs::path(args.table);
  write_file(table, judge::table_csv(rows));
}

struct BenchArgs {
  std::string prompts;
  std::string checkpoint;
  std::string summary;
};

void cmd_bench(const config::GlobalConfig& cfg, const BenchArgs& args, std::ostream& out, std::ostream& err) {
  const auto prompts = split_lines(read_file(args.prompts), true);
  checkpoint::Checkpoint ckpt;
  if (args.checkpoint.empty()) {
    ckpt.config = cfg.model_config();
    ckpt.params = model::init_parameters(ckpt.config, derive_seed(cfg.seed, 0));
  } else {
    ckpt = checkpoint::load(args.checkpoint);
  }
  ckpt.config.dropout_rate = 0.0;
  bench::ByteModelRunner runner(ckpt.params, ckpt.config);
  bench::ProcessPeakProbe probe;
  bench::SteadyClock clock;
  bench::BenchOptions options;
  options.repetitions = cfg.bench_repetitions;
  options.device = cfg.bench_device;
  std::vector<std::string> warnings;
  const auto records =
      bench::run_bench(runner, prompts, cfg.bench_batch_sizes, cfg.decode, probe, clock, options, &warnings);
  for (const auto& w : warnings) {
    err << json{{"event", "warning"}, {"message", w}}.dump() << '\n';
  }
  out << bench::records_csv(records);

  json summary = {{"device", bench::to_string(cfg.bench_device)},
                  {"prompts", prompts.size()},
                  {"repetitions", cfg.bench_repetitions},
                  {"records", json::parse(bench::records_json(records))},
                  {"warnings", warnings}};
  if (!records.empty()) {
    const bench::ConsistencyReport report = bench::consistency_check(records);
    summary["consistency"] = {{"reciprocal_ok", true}, {"flags", report.flags}};
  }
  const fs::path path =
      args.summary.empty() ? fs::path(cfg.paths.reports) / "bench_summary.json" : fs::path(args.summary);
  write_file(path, summary.dump(2) + "\n");
}

void cmd_vocab_manifest(std::ostream& out) {
  json table = json::array();
  for (TokenId id = 0; id < ByteVocabulary::vocab_size; ++id) {
    table.push_back({{"id", id}, {"role", to_string(ByteVocabulary::role(id))}});
  }
  out << table.dump() << '\n';
}

void emit_error(std::ostream& err, const std::string& kind, const std::string& message,
                const std::vector<std::string>& diagnostics = {}) {
  json j = {{"error", kind}, {"message", message}};
  if (!diagnostics.empty()) {
    j["diagnostics"] = diagnostics;
  }
  err << j.dump() << '\n';
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err, std::istream& in, char** envp) {
  CLI::App app{"Byte-level encoder-decoder toolkit", "bytet5"};
  app.require_subcommand(0, 1);
  app.fallthrough();

  Bindings bindings;
  std::string config_path;
  std::vector<std::string> overrides;
  bool show_version = false;
  app.add_flag("--version", show_version, "Print toolkit, checkpoint-format and config-schema versions");
  app.add_option("--config", config_path, "YAML config file")->check(CLI::ExistingFile);
  app.add_option("--set", overrides, "Override a config key, KEY=VALUE (repeatable)");
  bindings.bind(&app, "--seed", "seed", "Seed for every stochastic component");

  Inputs inputs;
  auto add_inputs = [&](CLI::App* sub, const char* what) { sub->add_option("inputs", inputs.files, what); };

  auto* clean = app.add_subcommand("clean", "Normalize and strip punctuation, line by line");
  add_inputs(clean, "UTF-8 text files (default stdin)");
  bindings.bind(clean, "--punctuation", "clean.punctuation_file", "Punctuation list file");

  bool histogram = false;
  auto* stats = app.add_subcommand("stats", "Word and sentence counts as JSON");
  add_inputs(stats, "UTF-8 text files (default stdin)");
  stats->add_flag("--histogram", histogram, "Emit length,count CSV over non-blank lines instead");

  std::optional<std::uint64_t> fert_tokens;
  std::optional<std::uint64_t> fert_words;
  auto* fert = app.add_subcommand("fertility", "Byte tokens per word as JSON");
  add_inputs(fert, "UTF-8 text files (default stdin)");
  fert->add_option("--tokens", fert_tokens, "Use this token count instead of reading text");
  fert->add_option("--words", fert_words, "Use this word count instead of reading text");

  auto* corrupt = app.add_subcommand("corrupt", "Span-corrupt text into training JSONL");
  add_inputs(corrupt, "Text documents (default stdin)");
  bindings.bind(corrupt, "--density", "corruption.noise_density", "Noise density");
  bindings.bind(corrupt, "--mean-span", "corruption.mean_span_length", "Mean span length in bytes");
  bindings.bind(corrupt, "--context", "corruption.context_length", "Context length in ids");
  bindings.bind(corrupt, "--seed", "seed", "Seed");

  TrainArgs train_args;
  auto add_train = [&](CLI::App* sub) {
    sub->add_option("--output", train_args.output, "Checkpoint to write (default <paths.checkpoints>/model.ckpt)");
    sub->add_option("--trace", train_args.trace, "Write the per-step loss trace as JSONL");
    bindings.bind(sub, "--steps", "train.total_steps", "Optimizer steps");
    bindings.bind(sub, "--lr", "train.learning_rate", "Peak learning rate");
    bindings.bind(sub, "--warmup", "train.warmup_steps", "Warm-up steps");
    bindings.bind(sub, "--batch-size", "train.batch_size", "Examples per micro-batch");
    bindings.bind(sub, "--accum", "train.grad_accum_steps", "Micro-batches per optimizer step");
    bindings.bind(sub, "--dropout", "model.dropout_rate", "Dropout rate");
    bindings.bind(sub, "--seed", "seed", "Seed");
  };
  auto* train_cmd = app.add_subcommand("train", "Pretrain on span-corruption JSONL");
  add_inputs(train_cmd, "Corruption JSONL files (default stdin)");
  add_train(train_cmd);
  train_cmd->add_option("--init", train_args.init, "Continue from this checkpoint");
  bindings.bind(train_cmd, "--preset", "model.preset", "Model preset");
  bindings.bind(train_cmd, "--context", "corruption.context_length", "Context length in ids");
  auto* finetune = app.add_subcommand("finetune", "Fine-tune on {\"input\",\"target\"} JSONL");
  add_inputs(finetune, "Seq2seq JSONL files (default stdin)");
  add_train(finetune);
  finetune->add_option("--init", train_args.init, "Checkpoint to start from")->required();

  std::string ckpt_path;
  std::vector<std::string> prompts;
  auto* generate = app.add_subcommand("generate", "Decode prompts with a checkpoint, JSONL out");
  add_inputs(generate, "Prompt files, one prompt per line (default stdin)");
  generate->add_option("--checkpoint", ckpt_path, "Checkpoint")->required();
  generate->add_option("--prompt", prompts, "Prompt text (repeatable; replaces file input)");
  bindings.bind(generate, "--mode", "decode.mode", "greedy, beam or sample");
  bindings.bind(generate, "--beams", "decode.num_beams", "Beam width");
  bindings.bind(generate, "--temperature", "decode.temperature", "Sampling temperature");
  bindings.bind(generate, "--top-k", "decode.top_k", "Sampling top-k");
  bindings.bind(generate, "--max-length", "decode.max_length", "Maximum output ids");
  bindings.bind(generate, "--seed", "seed", "Seed");

  std::string metric;
  bool smooth = false;
  std::string labels;
  std::size_t max_n = 4;
  auto* eval = app.add_subcommand("eval", "Score JSONL predictions, MetricReport JSON out");
  add_inputs(eval, "JSONL files (default stdin)");
  eval->add_option("--metric", metric, "macro-f1, bleu or gleu")->required();
  eval->add_flag("--smooth", smooth, "BLEU floor smoothing");
  eval->add_option("--labels", labels, "macro-f1 label set, comma separated (default: observed labels)");
  eval->add_option("--max-n", max_n, "GLEU maximum n-gram order");

  JudgeArgs judge_args;
  auto* judge_cmd = app.add_subcommand("judge", "LLM-as-judge scoring, JSONL verdicts out");
  judge_cmd->add_option("--prompts", judge_args.prompts, "Prompts, one per line")->required();
  judge_cmd->add_option("--responses", judge_args.responses, "Responses, one per line")->required();
  judge_cmd->add_option("--model-name", judge_args.model_name, "Model column of the table");
  judge_cmd->add_option("--params", judge_args.params, "Params column of the table");
  judge_cmd->add_option("--table", judge_args.table, "CSV table path (default <paths.reports>/judge_table.csv)");
  judge_cmd->add_option("--mock-replies", judge_args.mock_replies,
                        "Offline judge: comma-separated replies, run r answers item r");
  bindings.bind(judge_cmd, "--runs", "judge.runs", "Runs per dimension");
  bindings.bind(judge_cmd, "--parallelism", "judge.parallelism", "Concurrent judge calls");

  BenchArgs bench_args;
  auto* bench_cmd = app.add_subcommand("bench", "Latency and throughput by batch size, CSV out");
  bench_cmd->add_option("--prompts", bench_args.prompts, "Prompts, one per line")->required();
  bench_cmd->add_option("--checkpoint", bench_args.checkpoint, "Checkpoint (default: seeded init of model.preset)");
  bench_cmd->add_option("--summary", bench_args.summary,
                        "JSON summary path (default <paths.reports>/bench_summary.json)");
  bindings.bind(bench_cmd, "--batch-sizes", "bench.batch_sizes", "Ascending comma-separated batch sizes");
  bindings.bind(bench_cmd, "--device", "bench.device", "cpu or accelerator");
  bindings.bind(bench_cmd, "--repetitions", "bench.repetitions", "Timed passes per batch size");
  bindings.bind(bench_cmd, "--mode", "decode.mode", "greedy, beam or sample");
  bindings.bind(bench_cmd, "--beams", "decode.num_beams", "Beam width");
  bindings.bind(bench_cmd, "--max-length", "decode.max_length", "Maximum output ids");

  auto* vocab = app.add_subcommand("vocab-manifest", "JSON table of id and role");

  double tdp_kw = 0.0;
  std::uint64_t devices = 0;
  double hours = 0.0;
  double intensity = 0.0;
  bool carbon_as_json = false;
  auto* carbon = app.add_subcommand("carbon", "Energy and emission estimate");
  carbon->add_option("--tdp-kw", tdp_kw, "Power per device in kW")->required();
  carbon->add_option("--devices", devices, "Device count")->required();
  carbon->add_option("--hours", hours, "Hours")->required();
  carbon->add_option("--intensity", intensity, "kg CO2e per kWh")->required();
  carbon->add_flag("--json", carbon_as_json, "Print JSON");

  // Unknown first word is a usage error, not a stray positional.
  for (std::size_t i = 0; i < args.size(); ++i) {
    const std::string& a = args[i];
    if (a == "--config" || a == "--set" || a == "--seed") {
      ++i;
      continue;
    }
    if (a.starts_with('-')) {
      continue;
    }
    if (!kCommands.contains(a)) {
      emit_error(err, "usage", "unknown subcommand '" + a + "'");
      err << app.help();
      return kUsage;
    }
    break;
  }

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::ParseError& e) {
    emit_error(err, "usage", e.what());
    err << app.help();
    return kUsage;
  }

  if (show_version) {
    out << "bytet5 " << kToolkitVersion << "\ncheckpoint format " << checkpoint::kFormatVersion
        << "\nconfig schema " << config::kSchemaVersion << '\n';
    return kOk;
  }
  const auto subs = app.get_subcommands();
  if (subs.empty()) {
    emit_error(err, "usage", "a subcommand is required");
    err << app.help();
    return kUsage;
  }
  CLI::App* sub = subs.front();

  config::GlobalConfig cfg;
  try {
    std::vector<config::Layer> layers;
    if (!config_path.empty()) {
      layers.push_back(config::load_yaml(config_path));
    }
    layers.push_back(config::from_environment(envp));
    config::Layer flags;
    std::vector<std::string> diagnostics;
    for (const auto& o : overrides) {
      const auto eq = o.find('=');
      if (eq == std::string::npos || eq == 0) {
        diagnostics.push_back("--set " + o + ": expected KEY=VALUE");
        continue;
      }
      flags[o.substr(0, eq)] = o.substr(eq + 1);
    }
    if (!diagnostics.empty()) {
      throw ConfigError(std::move(diagnostics));
    }
    bindings.collect(flags);
    layers.push_back(std::move(flags));
    cfg = config::resolve(layers);
  } catch (const ConfigError& e) {
    emit_error(err, e.kind(), e.what(), e.diagnostics());
    return kFailure;
  }

  err << "{\"event\":\"config\",\"command\":" << json(sub->get_name()).dump() << ",\"seed\":" << cfg.seed
      << ",\"config\":" << config::to_json(cfg) << "}\n";

  try {
    if (sub == clean) {
      cmd_clean(cfg, inputs, out, in);
    } else if (sub == stats) {
      cmd_stats(inputs, histogram, out, in);
    } else if (sub == fert) {
      cmd_fertility(inputs, fert_tokens, fert_words, out, in);
    } else if (sub == corrupt) {
      cmd_corrupt(cfg, inputs, out, in);
    } else if (sub == train_cmd || sub == finetune) {
      cmd_train(cfg, inputs, train_args, sub == finetune, out, err, in);
    } else if (sub == generate) {
      cmd_generate(cfg, inputs, ckpt_path, prompts, out, in);
    } else if (sub == eval) {
      cmd_eval(inputs, metric, smooth, labels, max_n, out, in);
    } else if (sub == judge_cmd) {
      cmd_judge(cfg, judge_args, out);
    } else if (sub == bench_cmd) {
      cmd_bench(cfg, bench_args, out, err);
    } else if (sub == vocab) {
      cmd_vocab_manifest(out);
    } else if (sub == carbon) {
      const bench::CarbonEstimate e = bench::carbon_estimate(tdp_kw, devices, hours, intensity);
      if (carbon_as_json) {
        out << bench::carbon_json(e) << '\n';
      } else {
        out << format_number(e.energy_kwh) << " kWh, " << format_number(e.emission_kg) << " kg CO2e\n";
      }
    }
  } catch (const Error& e) {
    emit_error(err, e.kind(), e.what());
    return kFailure;
  } catch (const std::exception& e) {
    emit_error(err, "internal", e.what());
    return kFailure;
  }
  return kOk;
}

}  // namespace bytet5::cli
