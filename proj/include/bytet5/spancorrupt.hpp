#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "bytet5/bytevocab.hpp"
#include "bytet5/rng.hpp"

namespace bytet5::spancorrupt {

struct CorruptionSpec {
  double noise_density = 0.15;
  double mean_span_length = 20.0;  // bytes
  std::size_t context_length = 512;
  std::uint64_t seed = 0;

  // Throws SpecError on out-of-range fields.
  void validate() const;

  // Largest source chunk that still leaves room for eos.
  std::size_t max_source_bytes() const { return context_length - 1; }
};

// Half-open byte range [begin, end).
struct Span {
  std::size_t begin = 0;
  std::size_t end = 0;

  std::size_t length() const { return end - begin; }
  friend bool operator==(const Span&, const Span&) = default;
};

struct CorruptionExample {
  std::vector<TokenId> input_ids;
  std::vector<TokenId> target_ids;
  std::size_t source_len = 0;

  friend bool operator==(const CorruptionExample&, const CorruptionExample&) = default;
};

// Noise bytes for an n-byte input: round(n * density), capped at n - 1 so
// that at least one byte stays clean.
std::size_t noise_budget(std::size_t n, const CorruptionSpec& spec);

// Span count before feasibility fallback: max(1, round(noise / mean)) when
// noise > 0, else 0.
std::size_t requested_span_count(std::size_t noise, const CorruptionSpec& spec);

// Sorted, disjoint, non-adjacent spans whose lengths sum to noise_budget(n).
// Span lengths are a uniform random composition of the noise budget; the
// clean bytes are split into span_count + 1 gaps (outer gaps may be empty,
// inner gaps hold at least one byte). When the clean bytes cannot separate
// the requested spans, the count is reduced (spans merged) until they can.
std::vector<Span> plan_spans(std::size_t n, const CorruptionSpec& spec, Rng& rng);

// Builds the pair for an explicit span plan. Throws SpecError when more than
// 99 spans would need sentinels (k spans use sentinels 0..k).
CorruptionExample corrupt_with_spans(std::string_view bytes, std::span<const Span> spans);

// Throws ArgumentError for empty input or input longer than context - 1.
CorruptionExample corrupt(std::string_view bytes, const CorruptionSpec& spec, Rng& rng);

// Throws StructureError when the pair is malformed or sentinels disagree.
std::string reconstruct(std::span<const TokenId> input_ids, std::span<const TokenId> target_ids);

// Concatenates the documents and cuts the byte stream into windows of
// context_length - 1 bytes; the final short window is kept. Window i is
// corrupted with an Rng seeded by derive_seed(spec.seed, i).
void pack_corpus(std::span<const std::string> documents, const CorruptionSpec& spec,
                 const std::function<void(CorruptionExample&&)>& sink);

std::vector<CorruptionExample> pack_corpus(std::span<const std::string> documents,
                                           const CorruptionSpec& spec);

// Training-data wire format: {"input_ids":[...],"target_ids":[...]}.
std::string to_jsonl(const CorruptionExample& example);
CorruptionExample from_jsonl(std::string_view line);

}  // namespace bytet5::spancorrupt
