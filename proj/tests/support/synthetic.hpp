#pragma once

// Seeded synthetic denoising corpus: each document repeats one short word,
// so every masked span can be recovered from the visible context.

#include <cstdint>
#include <string>
#include <vector>

#include "bytet5/rng.hpp"
#include "bytet5/spancorrupt.hpp"
#include "bytet5/train.hpp"

namespace testing_synthetic {

inline std::vector<std::string> repeated_word_documents(std::size_t count, std::uint64_t seed) {
  static const std::vector<std::string> words = {"ab", "cab", "bac", "abc", "ca", "bca", "cb", "acb"};
  bytet5::Rng rng(seed);
  std::vector<std::string> docs;
  docs.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    const std::string& w = words[rng.uniform_below(words.size())];
    std::string doc;
    while (doc.size() < 24) {
      doc += w;
    }
    docs.push_back(doc.substr(0, 24));
  }
  return docs;
}

inline std::vector<bytet5::train::Seq2SeqExample> denoising_examples(std::size_t count, std::uint64_t seed) {
  bytet5::spancorrupt::CorruptionSpec spec;
  spec.noise_density = 0.15;
  spec.mean_span_length = 3.0;
  spec.context_length = 64;
  std::vector<bytet5::train::Seq2SeqExample> out;
  const auto docs = repeated_word_documents(count, seed);
  for (std::size_t i = 0; i < docs.size(); ++i) {
    bytet5::Rng rng(bytet5::derive_seed(seed, i));
    auto ex = bytet5::spancorrupt::corrupt(docs[i], spec, rng);
    out.push_back({std::move(ex.input_ids), std::move(ex.target_ids)});
  }
  return out;
}

}  // namespace testing_synthetic
