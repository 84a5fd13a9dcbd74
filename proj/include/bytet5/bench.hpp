#pragma once

#include <chrono>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "bytet5/decode.hpp"
#include "bytet5/model.hpp"

namespace bytet5::bench {

enum class Device { cpu, accelerator };

const char* to_string(Device device);
Device parse_device(std::string_view name);

struct BenchRecord {
  std::size_t batch_size = 1;
  double latency_s = 0.0;   // mean wall seconds per prompt
  double throughput = 0.0;  // prompts per second
  std::optional<double> peak_memory_mb;  // absent when the probe fails
  Device device = Device::cpu;
  std::size_t prompt_count = 0;
};

// Monotonic seconds.
class Clock {
 public:
  virtual ~Clock() = default;
  virtual double now_s() = 0;
};

class SteadyClock : public Clock {
 public:
  double now_s() override;
};

class FakeClock : public Clock {
 public:
  double now_s() override { return now_; }
  void advance(double seconds) { now_ += seconds; }

 private:
  double now_ = 0.0;
};

class MemoryProbe {
 public:
  virtual ~MemoryProbe() = default;
  // Peak resident memory in MB, or nullopt when it cannot be read.
  virtual std::optional<double> peak_mb() = 0;
};

// VmHWM from /proc/self/status (Linux). Absent elsewhere.
class ProcessPeakProbe : public MemoryProbe {
 public:
  std::optional<double> peak_mb() override;
};

class FixedProbe : public MemoryProbe {
 public:
  explicit FixedProbe(std::optional<double> value) : value_(value) {}
  std::optional<double> peak_mb() override { return value_; }

 private:
  std::optional<double> value_;
};

// Anything that can turn a batch of prompts into responses.
class BatchModel {
 public:
  virtual ~BatchModel() = default;
  virtual std::vector<std::string> generate_batch(std::span<const std::string> prompts,
                                                  const decoding::DecodeConfig& decode) = 0;
};

// Tokenize, run the encoder-decoder, decode bytes back to text.
class ByteModelRunner : public BatchModel {
 public:
  ByteModelRunner(const model::ParameterSet& params, model::ModelConfig config);
  std::vector<std::string> generate_batch(std::span<const std::string> prompts,
                                          const decoding::DecodeConfig& decode) override;

 private:
  const model::ParameterSet& params_;
  model::ModelConfig config_;
};

// Advances a FakeClock by a fixed cost per call and per prompt.
class FakeBatchModel : public BatchModel {
 public:
  FakeBatchModel(FakeClock& clock, double per_prompt_s, double per_batch_s = 0.0)
      : clock_(clock), per_prompt_s_(per_prompt_s), per_batch_s_(per_batch_s) {}
  std::vector<std::string> generate_batch(std::span<const std::string> prompts,
                                          const decoding::DecodeConfig& decode) override;
  std::size_t calls() const { return calls_; }

 private:
  FakeClock& clock_;
  double per_prompt_s_;
  double per_batch_s_;
  std::size_t calls_ = 0;
};

struct BenchOptions {
  std::size_t repetitions = 3;  // timed passes per batch size; the mean is reported
  bool warmup = true;           // one untimed batch before timing
  Device device = Device::cpu;
};

// For each batch size, every prompt is processed in batches of that size;
// total wall time is averaged over the repetitions, latency = total / prompts
// and throughput = prompts / total. Batch sizes above the prompt count are
// clamped (a size already measured after clamping is skipped), each noted in
// `warnings`. Throws ArgumentError on empty prompts, a zero batch size or
// unsorted batch sizes.
std::vector<BenchRecord> run_bench(BatchModel& model, std::span<const std::string> prompts,
                                   std::span<const std::size_t> batch_sizes, const decoding::DecodeConfig& decode,
                                   MemoryProbe& probe, Clock& clock, const BenchOptions& options = {},
                                   std::vector<std::string>* warnings = nullptr);

inline constexpr double kReciprocalTolerance = 0.01;

struct RecordCheck {
  std::size_t batch_size = 0;
  double product = 0.0;  // throughput * latency
  bool reciprocal_ok = false;
};

struct ConsistencyReport {
  std::vector<RecordCheck> checks;
  std::vector<std::string> flags;  // informational, e.g. non-monotone latency
};

// Throws ConsistencyError when any |throughput * latency - 1| >= 0.01 and
// ArgumentError on empty input. Latency that rises with batch size is only
// flagged.
ConsistencyReport consistency_check(std::span<const BenchRecord> records);

std::string records_csv(std::span<const BenchRecord> records);
std::string records_json(std::span<const BenchRecord> records);

struct CarbonEstimate {
  double tdp_kw = 0.0;
  std::uint64_t device_count = 0;
  double hours = 0.0;
  double intensity_kg_per_kwh = 0.0;
  double energy_kwh = 0.0;
  double emission_kg = 0.0;
};

// energy = tdp * devices * hours; emission = energy * intensity. Throws
// ArgumentError on non-positive inputs.
CarbonEstimate carbon_estimate(double tdp_kw, std::uint64_t device_count, double hours, double intensity);

std::string carbon_json(const CarbonEstimate& estimate);

}  // namespace bytet5::bench
