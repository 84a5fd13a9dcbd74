#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string_view>
#include <vector>

#include "bytet5/bytevocab.hpp"
#include "bytet5/model.hpp"

namespace bytet5::train {

struct TrainConfig {
  double learning_rate = 3e-5;
  std::size_t warmup_steps = 500;
  std::size_t total_steps = 10000;
  std::size_t batch_size = 16;
  std::size_t grad_accum_steps = 2;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  std::uint64_t seed = 0;

  std::size_t effective_batch() const { return batch_size * grad_accum_steps; }

  // Throws ArgumentError on invalid fields.
  void validate() const;
};

// Linear warm-up to the base rate, then cosine decay to zero at total_steps.
double lr_at(std::size_t step, const TrainConfig& config);

// Encoder input and decoder target ids (target ends with eos).
struct Seq2SeqExample {
  std::vector<TokenId> input_ids;
  std::vector<TokenId> target_ids;
};

// Reads {"input": "...", "target": "..."}; both sides are encoded with eos.
Seq2SeqExample seq2seq_from_jsonl(std::string_view line);

struct TrainResult {
  std::vector<double> loss_trace;  // mean example loss per optimizer step
};

using StepCallback = std::function<void(std::size_t step, double loss, double lr)>;

// Adam training. Each optimizer step consumes grad_accum_steps micro-batches
// of batch_size examples; the update uses the mean of all per-example
// gradients in the step, summed in example order. Data order is a seeded
// per-epoch shuffle and dropout draws come from a seeded stream, so two runs
// with equal inputs produce bitwise-equal traces. Throws TrainingError on a
// non-finite loss.
TrainResult train(model::ParameterSet& params, const model::ModelConfig& model_config,
                  const TrainConfig& config, std::span<const Seq2SeqExample> examples,
                  const StepCallback& on_step = {});

}  // namespace bytet5::train
