#include "bytet5/spancorrupt.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <json.hpp>

#include "bytet5/error.hpp"

namespace bytet5::spancorrupt {

namespace {

// Uniform random composition of `total` into `parts` positive integers:
// pick parts - 1 distinct cut points in [1, total - 1].
std::vector<std::size_t> random_composition(std::size_t total, std::size_t parts, Rng& rng) {
  std::vector<std::size_t> cuts(total - 1);
  std::iota(cuts.begin(), cuts.end(), std::size_t{1});
  const std::size_t picks = parts - 1;
  for (std::size_t i = 0; i < picks; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng.uniform_below(cuts.size() - i));
    std::swap(cuts[i], cuts[j]);
  }
  cuts.resize(picks);
  std::sort(cuts.begin(), cuts.end());

  std::vector<std::size_t> lengths;
  lengths.reserve(parts);
  std::size_t prev = 0;
  for (std::size_t cut : cuts) {
    lengths.push_back(cut - prev);
    prev = cut;
  }
  lengths.push_back(total - prev);
  return lengths;
}

constexpr int kMaxSpans = ByteVocabulary::sentinel_count - 1;

}  // namespace

void CorruptionSpec::validate() const {
  if (!(noise_density >= 0.0 && noise_density < 1.0)) {
    throw SpecError("noise_density must be in [0, 1)");
  }
  if (!(mean_span_length >= 1.0)) {
    throw SpecError("mean_span_length must be at least 1");
  }
  if (context_length < 2) {
    throw SpecError("context_length must be at least 2");
  }
}

std::size_t noise_budget(std::size_t n, const CorruptionSpec& spec) {
  if (n == 0) {
    return 0;
  }
  const auto noise = static_cast<std::size_t>(std::llround(static_cast<double>(n) * spec.noise_density));
  return std::min(noise, n - 1);
}

std::size_t requested_span_count(std::size_t noise, const CorruptionSpec& spec) {
  if (noise == 0) {
    return 0;
  }
  const auto count = static_cast<std::size_t>(
      std::llround(static_cast<double>(noise) / spec.mean_span_length));
  return std::max<std::size_t>(1, count);
}

std::vector<Span> plan_spans(std::size_t n, const CorruptionSpec& spec, Rng& rng) {
  spec.validate();
  if (n == 0) {
    throw ArgumentError("plan_spans requires at least one byte");
  }
  const std::size_t noise = noise_budget(n, spec);
  if (noise == 0) {
    return {};
  }
  const std::size_t clean = n - noise;
  // Fallback: merge spans until each has a byte and inner gaps fit.
  const std::size_t spans = std::min({requested_span_count(noise, spec), noise, clean + 1});

  const std::vector<std::size_t> span_lengths = random_composition(noise, spans, rng);
  // Gaps: spans + 1 parts, outer two may be empty. Shift by one on the
  // outside to reuse the positive-composition sampler.
  std::vector<std::size_t> gaps = random_composition(clean + 2, spans + 1, rng);
  gaps.front() -= 1;
  gaps.back() -= 1;

  std::vector<Span> out;
  out.reserve(spans);
  std::size_t pos = 0;
  for (std::size_t i = 0; i < spans; ++i) {
    pos += gaps[i];
    out.push_back({pos, pos + span_lengths[i]});
    pos += span_lengths[i];
  }
  return out;
}

CorruptionExample corrupt_with_spans(std::string_view bytes, std::span<const Span> spans) {
  if (spans.size() > static_cast<std::size_t>(kMaxSpans)) {
    throw SpecError(std::to_string(spans.size()) + " spans exceed the " +
                    std::to_string(kMaxSpans) + " available before the closing sentinel");
  }
  CorruptionExample example;
  example.source_len = bytes.size();
  std::size_t pos = 0;
  int k = 0;
  for (const Span& span : spans) {
    if (span.begin < pos || span.end <= span.begin || span.end > bytes.size()) {
      throw ArgumentError("span plan must be sorted, disjoint, non-empty and in range");
    }
    for (; pos < span.begin; ++pos) {
      example.input_ids.push_back(ByteVocabulary::byte_id(static_cast<std::uint8_t>(bytes[pos])));
    }
    const TokenId sentinel = sentinel_id(k++);
    example.input_ids.push_back(sentinel);
    example.target_ids.push_back(sentinel);
    for (; pos < span.end; ++pos) {
      example.target_ids.push_back(ByteVocabulary::byte_id(static_cast<std::uint8_t>(bytes[pos])));
    }
  }
  for (; pos < bytes.size(); ++pos) {
    example.input_ids.push_back(ByteVocabulary::byte_id(static_cast<std::uint8_t>(bytes[pos])));
  }
  example.input_ids.push_back(ByteVocabulary::eos_id);
  if (!spans.empty()) {
    example.target_ids.push_back(sentinel_id(k));
  }
  example.target_ids.push_back(ByteVocabulary::eos_id);
  return example;
}

CorruptionExample corrupt(std::string_view bytes, const CorruptionSpec& spec, Rng& rng) {
  if (bytes.empty()) {
    throw ArgumentError("corrupt requires at least one byte");
  }
  if (bytes.size() > spec.max_source_bytes()) {
    throw ArgumentError("input of " + std::to_string(bytes.size()) +
                        " bytes exceeds context_length - 1 = " +
                        std::to_string(spec.max_source_bytes()));
  }
  const std::vector<Span> spans = plan_spans(bytes.size(), spec, rng);
  return corrupt_with_spans(bytes, spans);
}

std::string reconstruct(std::span<const TokenId> input_ids, std::span<const TokenId> target_ids) {
  if (input_ids.empty() || input_ids.back() != ByteVocabulary::eos_id) {
    throw StructureError("input_ids must end with eos");
  }
  if (target_ids.empty() || target_ids.back() != ByteVocabulary::eos_id) {
    throw StructureError("target_ids must end with eos");
  }

  // Split the target into spans keyed by consecutive sentinel indices.
  std::vector<std::string> spans;
  const auto target_body = target_ids.first(target_ids.size() - 1);
  int expected = 0;
  for (std::size_t i = 0; i < target_body.size(); ++i) {
    const TokenId id = target_body[i];
    if (ByteVocabulary::is_sentinel(id)) {
      if (ByteVocabulary::sentinel_index(id) != expected) {
        throw StructureError("target sentinel " + std::to_string(ByteVocabulary::sentinel_index(id)) +
                             " out of order, expected " + std::to_string(expected));
      }
      ++expected;
      spans.emplace_back();
      continue;
    }
    if (!ByteVocabulary::is_byte(id)) {
      throw StructureError("unexpected id " + std::to_string(id) + " in target");
    }
    if (spans.empty()) {
      throw StructureError("target must start with sentinel 0");
    }
    spans.back().push_back(static_cast<char>(ByteVocabulary::byte_of(id)));
  }
  if (!spans.empty()) {
    // Last sentinel closes the final span and carries no bytes.
    if (!spans.back().empty()) {
      throw StructureError("target is missing its closing sentinel");
    }
    spans.pop_back();
  }

  std::string out;
  std::size_t next_span = 0;
  for (std::size_t i = 0; i + 1 < input_ids.size(); ++i) {
    const TokenId id = input_ids[i];
    if (ByteVocabulary::is_byte(id)) {
      out.push_back(static_cast<char>(ByteVocabulary::byte_of(id)));
    } else if (ByteVocabulary::is_sentinel(id)) {
      if (ByteVocabulary::sentinel_index(id) != static_cast<int>(next_span)) {
        throw StructureError("input sentinel " + std::to_string(ByteVocabulary::sentinel_index(id)) +
                             " does not match target span " + std::to_string(next_span));
      }
      if (next_span >= spans.size()) {
        throw StructureError("input has more sentinels than the target has spans");
      }
      out += spans[next_span++];
    } else {
      throw StructureError("unexpected id " + std::to_string(id) + " in input");
    }
  }
  if (next_span != spans.size()) {
    throw StructureError("target has " + std::to_string(spans.size()) + " spans but input uses " +
                         std::to_string(next_span));
  }
  return out;
}

void pack_corpus(std::span<const std::string> documents, const CorruptionSpec& spec,
                 const std::function<void(CorruptionExample&&)>& sink) {
  spec.validate();
  const std::size_t window = spec.max_source_bytes();
  std::string pending;
  std::uint64_t chunk_index = 0;
  auto flush = [&](std::string_view chunk) {
    Rng rng(derive_seed(spec.seed, chunk_index++));
    sink(corrupt(chunk, spec, rng));
  };
  for (const auto& doc : documents) {
    pending += doc;
    std::size_t offset = 0;
    while (pending.size() - offset >= window) {
      flush(std::string_view(pending).substr(offset, window));
      offset += window;
    }
    pending.erase(0, offset);
  }
  if (!pending.empty()) {
    flush(pending);
  }
}

std::vector<CorruptionExample> pack_corpus(std::span<const std::string> documents,
                                           const CorruptionSpec& spec) {
  std::vector<CorruptionExample> out;
  pack_corpus(documents, spec, [&](CorruptionExample&& ex) { out.push_back(std::move(ex)); });
  return out;
}

std::string to_jsonl(const CorruptionExample& example) {
  nlohmann::json j;
  j["input_ids"] = example.input_ids;
  j["target_ids"] = example.target_ids;
  return j.dump();
}

CorruptionExample from_jsonl(std::string_view line) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    throw StructureError(std::string("malformed corruption record: ") + e.what());
  }
  if (!j.contains("input_ids") || !j.contains("target_ids")) {
    throw StructureError("corruption record needs input_ids and target_ids");
  }
  CorruptionExample example;
  example.input_ids = j.at("input_ids").get<std::vector<TokenId>>();
  example.target_ids = j.at("target_ids").get<std::vector<TokenId>>();
  for (auto ids : {&example.input_ids, &example.target_ids}) {
    for (TokenId id : *ids) {
      ByteVocabulary::role(id);
    }
  }
  example.source_len = reconstruct(example.input_ids, example.target_ids).size();
  return example;
}

}  // namespace bytet5::spancorrupt
