#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <string_view>
#include <vector>

#include "bytet5/bytevocab.hpp"

namespace bytet5::decoding {

enum class Mode : std::uint8_t { greedy, beam, sample };

const char* to_string(Mode mode);
Mode parse_mode(std::string_view name);

struct DecodeConfig {
  Mode mode = Mode::beam;
  std::size_t num_beams = 10;
  double temperature = 0.7;
  std::size_t top_k = 70;
  std::size_t max_length = 512;
  std::uint64_t seed = 0;

  // Throws ArgumentError on invalid fields.
  void validate() const;
};

// State of one partial hypothesis. A fresh session has already consumed the
// decoder start token, so next_logits() scores the first output token.
class DecoderSession {
 public:
  virtual ~DecoderSession() = default;

  virtual std::unique_ptr<DecoderSession> clone() const = 0;
  virtual std::vector<double> next_logits() = 0;
  virtual void advance(TokenId token) = 0;
};

std::vector<double> log_softmax(std::span<const double> logits);

// Argmax each step until eos or max_length tokens.
std::vector<TokenId> greedy(DecoderSession& session, std::size_t max_length);

// Width-`num_beams` search on summed log-probabilities, no length penalty.
// Stops once the best finished hypothesis scores at least the best live
// one; at max_length the live beams count as finished. Temperature and
// top_k are ignored.
struct BeamResult {
  std::vector<TokenId> tokens;
  double log_prob = 0.0;
};
BeamResult beam_search(DecoderSession& session, std::size_t num_beams, std::size_t max_length);

// Temperature-scaled top-k sampling; ties in top-k selection keep the
// lower id. Draws come from an Rng seeded with `seed`.
std::vector<TokenId> sample(DecoderSession& session, double temperature, std::size_t top_k,
                            std::size_t max_length, std::uint64_t seed);

// Dispatches on config.mode. Output includes eos when one is produced and
// never exceeds max_length ids.
std::vector<TokenId> generate(DecoderSession& session, const DecodeConfig& config);

// Sum of log-probabilities the session assigns to `tokens`.
double sequence_log_prob(const DecoderSession& session, std::span<const TokenId> tokens);

}  // namespace bytet5::decoding
