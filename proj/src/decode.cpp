#include "bytet5/decode.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "bytet5/error.hpp"
#include "bytet5/rng.hpp"

namespace bytet5::decoding {

const char* to_string(Mode mode) {
  switch (mode) {
    case Mode::greedy:
      return "greedy";
    case Mode::beam:
      return "beam";
    case Mode::sample:
      return "sample";
  }
  return "unknown";
}

Mode parse_mode(std::string_view name) {
  if (name == "greedy") {
    return Mode::greedy;
  }
  if (name == "beam") {
    return Mode::beam;
  }
  if (name == "sample") {
    return Mode::sample;
  }
  throw ArgumentError("unknown decode mode '" + std::string(name) + "' (expected greedy, beam or sample)");
}

void DecodeConfig::validate() const {
  if (num_beams < 1) {
    throw ArgumentError("num_beams must be >= 1");
  }
  if (!(temperature > 0.0) || !std::isfinite(temperature)) {
    throw ArgumentError("temperature must be > 0");
  }
  if (top_k < 1) {
    throw ArgumentError("top_k must be >= 1");
  }
  if (max_length < 1) {
    throw ArgumentError("max_length must be >= 1");
  }
}

std::vector<double> log_softmax(std::span<const double> logits) {
  const double mx = *std::max_element(logits.begin(), logits.end());
  double z = 0.0;
  for (double x : logits) {
    z += std::exp(x - mx);
  }
  const double lse = mx + std::log(z);
  std::vector<double> out(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = logits[i] - lse;
  }
  return out;
}

namespace {

TokenId argmax(std::span<const double> values) {
  return static_cast<TokenId>(std::max_element(values.begin(), values.end()) - values.begin());
}

}  // namespace

std::vector<TokenId> greedy(DecoderSession& session, std::size_t max_length) {
  std::vector<TokenId> out;
  while (out.size() < max_length) {
    const TokenId next = argmax(session.next_logits());
    out.push_back(next);
    if (next == ByteVocabulary::eos_id) {
      break;
    }
    session.advance(next);
  }
  return out;
}

BeamResult beam_search(DecoderSession& session, std::size_t num_beams, std::size_t max_length) {
  if (num_beams < 1) {
    throw ArgumentError("num_beams must be >= 1");
  }
  struct Beam {
    std::vector<TokenId> tokens;
    double score = 0.0;
    std::unique_ptr<DecoderSession> state;
  };
  struct Candidate {
    double score;
    std::size_t beam;
    TokenId token;
  };

  std::vector<Beam> live;
  live.push_back({{}, 0.0, session.clone()});
  std::vector<BeamResult> finished;
  auto best_finished = [&]() {
    double best = -std::numeric_limits<double>::infinity();
    for (const auto& f : finished) {
      best = std::max(best, f.log_prob);
    }
    return best;
  };

  for (std::size_t step = 0; step < max_length && !live.empty(); ++step) {
    std::vector<Candidate> candidates;
    for (std::size_t b = 0; b < live.size(); ++b) {
      const std::vector<double> lp = log_softmax(live[b].state->next_logits());
      for (std::size_t t = 0; t < lp.size(); ++t) {
        candidates.push_back({live[b].score + lp[t], b, static_cast<TokenId>(t)});
      }
    }
    std::stable_sort(candidates.begin(), candidates.end(),
                     [](const Candidate& a, const Candidate& b) { return a.score > b.score; });

    std::vector<Beam> next;
    for (std::size_t rank = 0; rank < candidates.size() && next.size() < num_beams; ++rank) {
      const Candidate& cand = candidates[rank];
      std::vector<TokenId> tokens = live[cand.beam].tokens;
      tokens.push_back(cand.token);
      if (cand.token == ByteVocabulary::eos_id) {
        // Only eos candidates ranked inside the beam width finish.
        if (rank < num_beams) {
          finished.push_back({std::move(tokens), cand.score});
        }
        continue;
      }
      if (step + 1 == max_length) {
        finished.push_back({std::move(tokens), cand.score});
        continue;
      }
      auto state = live[cand.beam].state->clone();
      state->advance(cand.token);
      next.push_back({std::move(tokens), cand.score, std::move(state)});
    }
    live = std::move(next);
    if (!finished.empty()) {
      double best_live = -std::numeric_limits<double>::infinity();
      for (const auto& b : live) {
        best_live = std::max(best_live, b.score);
      }
      // Scores only decrease as hypotheses grow.
      if (best_finished() >= best_live) {
        break;
      }
    }
  }

  BeamResult best;
  best.log_prob = -std::numeric_limits<double>::infinity();
  for (auto& f : finished) {
    if (f.log_prob > best.log_prob) {
      best = std::move(f);
    }
  }
  return best;
}

std::vector<TokenId> sample(DecoderSession& session, double temperature, std::size_t top_k,
                            std::size_t max_length, std::uint64_t seed) {
  if (!(temperature > 0.0)) {
    throw ArgumentError("temperature must be > 0");
  }
  if (top_k < 1) {
    throw ArgumentError("top_k must be >= 1");
  }
  Rng rng(seed);
  std::vector<TokenId> out;
  while (out.size() < max_length) {
    const std::vector<double> logits = session.next_logits();
    std::vector<std::size_t> order(logits.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    const std::size_t k = std::min(top_k, logits.size());
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(),
                      [&](std::size_t a, std::size_t b) {
                        return logits[a] != logits[b] ? logits[a] > logits[b] : a < b;
                      });
    std::vector<double> probs(k);
    const double top = logits[order[0]] / temperature;
    double z = 0.0;
    for (std::size_t i = 0; i < k; ++i) {
      probs[i] = std::exp(logits[order[i]] / temperature - top);
      z += probs[i];
    }
    const double u = rng.uniform01() * z;
    double acc = 0.0;
    std::size_t pick = k - 1;
    for (std::size_t i = 0; i < k; ++i) {
      acc += probs[i];
      if (u < acc) {
        pick = i;
        break;
      }
    }
    const auto next = static_cast<TokenId>(order[pick]);
    out.push_back(next);
    if (next == ByteVocabulary::eos_id) {
      break;
    }
    session.advance(next);
  }
  return out;
}

std::vector<TokenId> generate(DecoderSession& session, const DecodeConfig& config) {
  config.validate();
  switch (config.mode) {
    case Mode::greedy:
      return greedy(session, config.max_length);
    case Mode::beam:
      return beam_search(session, config.num_beams, config.max_length).tokens;
    case Mode::sample:
      return sample(session, config.temperature, config.top_k, config.max_length, config.seed);
  }
  return {};
}

double sequence_log_prob(const DecoderSession& session, std::span<const TokenId> tokens) {
  auto state = session.clone();
  double total = 0.0;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    const std::vector<double> lp = log_softmax(state->next_logits());
    total += lp.at(static_cast<std::size_t>(tokens[i]));
    if (i + 1 < tokens.size()) {
      state->advance(tokens[i]);
    }
  }
  return total;
}

}  // namespace bytet5::decoding
