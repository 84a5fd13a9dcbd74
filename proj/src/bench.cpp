#include "bytet5/bench.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <json.hpp>

#include "bytet5/bytevocab.hpp"
#include "bytet5/error.hpp"

namespace bytet5::bench {

const char* to_string(Device device) { return device == Device::cpu ? "cpu" : "accelerator"; }

Device parse_device(std::string_view name) {
  if (name == "cpu") {
    return Device::cpu;
  }
  if (name == "accelerator" || name == "gpu") {
    return Device::accelerator;
  }
  throw ArgumentError("unknown device '" + std::string(name) + "' (expected cpu or accelerator)");
}

double SteadyClock::now_s() {
  return std::chrono::duration<double>(std::chrono::steady_clock::now().time_since_epoch()).count();
}

std::optional<double> ProcessPeakProbe::peak_mb() {
  std::ifstream status("/proc/self/status");
  if (!status) {
    return std::nullopt;
  }
  for (std::string line; std::getline(status, line);) {
    if (line.rfind("VmHWM:", 0) == 0) {
      try {
        return std::stod(line.substr(6)) / 1024.0;  // reported in kB
      } catch (const std::exception&) {
        return std::nullopt;
      }
    }
  }
  return std::nullopt;
}

ByteModelRunner::ByteModelRunner(const model::ParameterSet& params, model::ModelConfig config)
    : params_(params), config_(std::move(config)) {
  config_.validate();
}

std::vector<std::string> ByteModelRunner::generate_batch(std::span<const std::string> prompts,
                                                         const decoding::DecodeConfig& decode) {
  std::vector<std::string> out;
  out.reserve(prompts.size());
  for (const std::string& prompt : prompts) {
    std::vector<TokenId> ids = encode(prompt, true);
    if (ids.size() > config_.context_length) {
      ids.resize(config_.context_length - 1);
      ids.push_back(ByteVocabulary::eos_id);
    }
    auto session = model::start_session(params_, config_, ids);
    out.push_back(bytet5::decode(decoding::generate(*session, decode)).text);
  }
  return out;
}

std::vector<std::string> FakeBatchModel::generate_batch(std::span<const std::string> prompts,
                                                        const decoding::DecodeConfig&) {
  ++calls_;
  clock_.advance(per_batch_s_ + per_prompt_s_ * static_cast<double>(prompts.size()));
  return std::vector<std::string>(prompts.size());
}

std::vector<BenchRecord> run_bench(BatchModel& model, std::span<const std::string> prompts,
                                   std::span<const std::size_t> batch_sizes, const decoding::DecodeConfig& decode,
                                   MemoryProbe& probe, Clock& clock, const BenchOptions& options,
                                   std::vector<std::string>* warnings) {
  if (batch_sizes.empty()) {
    return {};
  }
  if (prompts.empty()) {
    throw ArgumentError("run_bench requires at least one prompt");
  }
  if (options.repetitions < 1) {
    throw ArgumentError("run_bench requires at least one repetition");
  }
  for (std::size_t i = 0; i < batch_sizes.size(); ++i) {
    if (batch_sizes[i] == 0) {
      throw ArgumentError("batch sizes must be >= 1");
    }
    if (i > 0 && batch_sizes[i] <= batch_sizes[i - 1]) {
      throw ArgumentError("batch sizes must be strictly ascending");
    }
  }
  const auto warn = [&](std::string message) {
    if (warnings != nullptr) {
      warnings->push_back(std::move(message));
    }
  };

  std::vector<BenchRecord> records;
  std::size_t last_measured = 0;
  for (std::size_t requested : batch_sizes) {
    std::size_t batch = requested;
    if (batch > prompts.size()) {
      batch = prompts.size();
      if (batch == last_measured) {
        warn("batch size " + std::to_string(requested) + " exceeds " + std::to_string(prompts.size()) +
             " prompts; clamped size already measured, skipped");
        continue;
      }
      warn("batch size " + std::to_string(requested) + " exceeds " + std::to_string(prompts.size()) +
           " prompts; clamped to " + std::to_string(batch));
    }

    if (options.warmup) {
      model.generate_batch(prompts.first(batch), decode);
    }
    double total = 0.0;
    for (std::size_t rep = 0; rep < options.repetitions; ++rep) {
      const double start = clock.now_s();
      for (std::size_t begin = 0; begin < prompts.size(); begin += batch) {
        const std::size_t count = std::min(batch, prompts.size() - begin);
        model.generate_batch(prompts.subspan(begin, count), decode);
      }
      total += clock.now_s() - start;
    }
    total /= static_cast<double>(options.repetitions);
    if (!(total > 0.0)) {
      throw ConsistencyError("batch size " + std::to_string(batch) + " measured no elapsed time");
    }

    BenchRecord r;
    r.batch_size = batch;
    r.prompt_count = prompts.size();
    r.latency_s = total / static_cast<double>(prompts.size());
    r.throughput = static_cast<double>(prompts.size()) / total;
    r.device = options.device;
    try {
      r.peak_memory_mb = probe.peak_mb();
    } catch (const std::exception& e) {
      warn(std::string("memory probe failed: ") + e.what());
      r.peak_memory_mb = std::nullopt;
    }
    records.push_back(r);
    last_measured = batch;
  }
  return records;
}

ConsistencyReport consistency_check(std::span<const BenchRecord> records) {
  if (records.empty()) {
    throw ArgumentError("consistency_check requires at least one record");
  }
  ConsistencyReport report;
  std::string violations;
  for (std::size_t i = 0; i < records.size(); ++i) {
    const BenchRecord& r = records[i];
    RecordCheck check;
    check.batch_size = r.batch_size;
    check.product = r.throughput * r.latency_s;
    check.reciprocal_ok = std::abs(check.product - 1.0) < kReciprocalTolerance;
    report.checks.push_back(check);
    if (!check.reciprocal_ok) {
      char buf[160];
      std::snprintf(buf, sizeof buf, "batch %zu: throughput %.6g x latency %.6g = %.6g; ", r.batch_size,
                    r.throughput, r.latency_s, check.product);
      violations += buf;
    }
    if (i > 0 && r.batch_size > records[i - 1].batch_size && r.latency_s > records[i - 1].latency_s) {
      report.flags.push_back("latency rises from batch " + std::to_string(records[i - 1].batch_size) + " to " +
                             std::to_string(r.batch_size));
    }
  }
  if (!violations.empty()) {
    throw ConsistencyError("reciprocal law violated (|throughput x latency - 1| >= 0.01): " + violations);
  }
  return report;
}

std::string records_csv(std::span<const BenchRecord> records) {
  std::string out = "batch,latency_s,throughput,peak_mem_mb\n";
  char buf[128];
  for (const BenchRecord& r : records) {
    std::snprintf(buf, sizeof buf, "%zu,%.4f,%.2f,", r.batch_size, r.latency_s, r.throughput);
    out += buf;
    if (r.peak_memory_mb) {
      std::snprintf(buf, sizeof buf, "%.2f", *r.peak_memory_mb);
      out += buf;
    }
    out += "\n";
  }
  return out;
}

std::string records_json(std::span<const BenchRecord> records) {
  nlohmann::json j = nlohmann::json::array();
  for (const BenchRecord& r : records) {
    j.push_back({
        {"batch_size", r.batch_size},
        {"latency_s", r.latency_s},
        {"throughput", r.throughput},
        {"peak_memory_mb", r.peak_memory_mb ? nlohmann::json(*r.peak_memory_mb) : nlohmann::json(nullptr)},
        {"device", to_string(r.device)},
        {"prompt_count", r.prompt_count},
    });
  }
  return j.dump();
}

CarbonEstimate carbon_estimate(double tdp_kw, std::uint64_t device_count, double hours, double intensity) {
  if (!(tdp_kw > 0.0) || !(hours > 0.0) || !(intensity > 0.0) || !std::isfinite(tdp_kw) || !std::isfinite(hours) ||
      !std::isfinite(intensity)) {
    throw ArgumentError("carbon_estimate: tdp_kw, hours and intensity must be finite and > 0");
  }
  if (device_count < 1) {
    throw ArgumentError("carbon_estimate: device_count must be >= 1");
  }
  CarbonEstimate e;
  e.tdp_kw = tdp_kw;
  e.device_count = device_count;
  e.hours = hours;
  e.intensity_kg_per_kwh = intensity;
  e.energy_kwh = tdp_kw * static_cast<double>(device_count) * hours;
  e.emission_kg = e.energy_kwh * intensity;
  return e;
}

std::string carbon_json(const CarbonEstimate& e) {
  const nlohmann::json j = {
      {"tdp_kw", e.tdp_kw},          {"device_count", e.device_count},
      {"hours", e.hours},            {"intensity_kg_per_kwh", e.intensity_kg_per_kwh},
      {"energy_kwh", e.energy_kwh},  {"emission_kg", e.emission_kg},
  };
  return j.dump();
}

}  // namespace bytet5::bench
