#include "bytet5/train.hpp"

#include <cmath>
#include <numbers>
#include <numeric>

#include <json.hpp>

#include "bytet5/error.hpp"
#include "bytet5/rng.hpp"

namespace bytet5::train {

void TrainConfig::validate() const {
  auto require = [](bool ok, const char* what) {
    if (!ok) {
      throw ArgumentError(std::string("invalid train config: ") + what);
    }
  };
  require(learning_rate > 0.0, "learning_rate must be > 0");
  require(total_steps >= 1, "total_steps must be >= 1");
  require(warmup_steps < total_steps, "warmup_steps must be < total_steps");
  require(batch_size >= 1, "batch_size must be >= 1");
  require(grad_accum_steps >= 1, "grad_accum_steps must be >= 1");
  require(adam_beta1 >= 0.0 && adam_beta1 < 1.0, "adam_beta1 must be in [0, 1)");
  require(adam_beta2 >= 0.0 && adam_beta2 < 1.0, "adam_beta2 must be in [0, 1)");
  require(adam_eps > 0.0, "adam_eps must be > 0");
}

double lr_at(std::size_t step, const TrainConfig& config) {
  const double base = config.learning_rate;
  if (step <= config.warmup_steps) {
    if (config.warmup_steps == 0) {
      return base;
    }
    return base * static_cast<double>(step) / static_cast<double>(config.warmup_steps);
  }
  const double progress = static_cast<double>(step - config.warmup_steps) /
                          static_cast<double>(config.total_steps - config.warmup_steps);
  return base * 0.5 * (1.0 + std::cos(std::numbers::pi * std::min(progress, 1.0)));
}

Seq2SeqExample seq2seq_from_jsonl(std::string_view line) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    throw StructureError(std::string("malformed seq2seq record: ") + e.what());
  }
  if (!j.contains("input") || !j.contains("target") || !j["input"].is_string() || !j["target"].is_string()) {
    throw StructureError("seq2seq record needs string fields input and target");
  }
  return {encode(j["input"].get<std::string>(), true), encode(j["target"].get<std::string>(), true)};
}

TrainResult train(model::ParameterSet& params, const model::ModelConfig& model_config, const TrainConfig& config,
                  std::span<const Seq2SeqExample> examples, const StepCallback& on_step) {
  config.validate();
  model_config.validate();
  if (examples.empty()) {
    throw ArgumentError("train requires at least one example");
  }

  Rng order_rng(derive_seed(config.seed, 1));
  Rng dropout_rng(derive_seed(config.seed, 2));
  Rng* dropout = model_config.dropout_rate > 0.0 ? &dropout_rng : nullptr;

  std::vector<std::size_t> order(examples.size());
  std::size_t cursor = order.size();
  auto next_example = [&]() -> const Seq2SeqExample& {
    if (cursor == order.size()) {
      std::iota(order.begin(), order.end(), std::size_t{0});
      for (std::size_t i = order.size(); i > 1; --i) {
        std::swap(order[i - 1], order[order_rng.uniform_below(i)]);
      }
      cursor = 0;
    }
    return examples[order[cursor++]];
  };

  model::ParameterSet grads = model::allocate_parameters(model_config);
  model::ParameterSet m = grads;
  model::ParameterSet v = grads;

  TrainResult result;
  result.loss_trace.reserve(config.total_steps);
  const std::size_t per_step = config.effective_batch();
  for (std::size_t step = 1; step <= config.total_steps; ++step) {
    grads.fill(0.0);
    double loss_sum = 0.0;
    for (std::size_t i = 0; i < per_step; ++i) {
      const Seq2SeqExample& ex = next_example();
      const double loss = model::loss_and_gradient(params, model_config, ex.input_ids, ex.target_ids, grads, dropout);
      if (!std::isfinite(loss)) {
        throw TrainingError("non-finite loss at optimizer step " + std::to_string(step), static_cast<long>(step));
      }
      loss_sum += loss;
    }
    const double mean_loss = loss_sum / static_cast<double>(per_step);
    const double lr = lr_at(step, config);
    const double inv_n = 1.0 / static_cast<double>(per_step);
    const double bc1 = 1.0 - std::pow(config.adam_beta1, static_cast<double>(step));
    const double bc2 = 1.0 - std::pow(config.adam_beta2, static_cast<double>(step));

    auto p_it = params.begin();
    auto m_it = m.begin();
    auto v_it = v.begin();
    for (auto g_it = grads.begin(); g_it != grads.end(); ++g_it, ++p_it, ++m_it, ++v_it) {
      auto& p = p_it->second.data;
      auto& mm = m_it->second.data;
      auto& vv = v_it->second.data;
      const auto& g = g_it->second.data;
      for (std::size_t k = 0; k < p.size(); ++k) {
        const double gk = g[k] * inv_n;
        mm[k] = config.adam_beta1 * mm[k] + (1.0 - config.adam_beta1) * gk;
        vv[k] = config.adam_beta2 * vv[k] + (1.0 - config.adam_beta2) * gk * gk;
        p[k] -= lr * (mm[k] / bc1) / (std::sqrt(vv[k] / bc2) + config.adam_eps);
      }
    }
    result.loss_trace.push_back(mean_loss);
    if (on_step) {
      on_step(step, mean_loss, lr);
    }
  }
  return result;
}

}  // namespace bytet5::train
