#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>

namespace bytet5::textprep {

using CodepointSet = std::set<char32_t>;

// Space-like codepoints from the corpus cleaning rules. They are mapped to
// U+0020 rather than deleted so that word boundaries survive.
const CodepointSet& default_space_like();

// Zero-width codepoints, deleted outright. Default {U+200C}.
const CodepointSet& default_zero_width();

// The shipped 36-entry Bangla punctuation list (mirrors data/bangla_punctuation.txt).
const CodepointSet& default_punctuation();

// Default sentence terminators: danda, '?', '!', '.'.
const CodepointSet& default_terminators();

struct CleanConfig {
  CodepointSet space_like_codepoints = default_space_like();
  CodepointSet zero_width_codepoints = default_zero_width();
  CodepointSet punctuation_set = default_punctuation();
  bool collapse_whitespace = true;
  bool strip_punctuation = true;

  // Throws ArgumentError when the three sets overlap.
  void validate() const;
};

// Reads a punctuation list: one entry per line, either a literal character
// or a `U+XXXX` code. Blank lines and lines starting with '#' are skipped.
CodepointSet load_codepoint_list(const std::filesystem::path& path);
CodepointSet parse_codepoint_list(std::string_view text);

std::string normalize_unicode(std::string_view text, const CleanConfig& config);
std::string strip_punctuation(std::string_view text, const CleanConfig& config);

// normalize_unicode then (if enabled) strip_punctuation.
std::string clean_document(std::string_view text, const CleanConfig& config);

struct SegmentationRules {
  CodepointSet terminators = default_terminators();
};

struct CorpusStats {
  std::uint64_t word_count = 0;
  std::uint64_t sentence_count = 0;
  std::uint64_t byte_size = 0;

  // Absent when there are no sentences.
  std::optional<double> avg_words_per_sentence() const;

  CorpusStats& merge(const CorpusStats& other);
};

std::uint64_t count_words(std::string_view text);
std::uint64_t count_sentences(std::string_view text, const SegmentationRules& rules);

CorpusStats document_stats(std::string_view text, const SegmentationRules& rules);
CorpusStats corpus_stats(std::span<const std::string> documents, const SegmentationRules& rules);

// Word-count histogram: key = words in item, value = number of items.
using LengthHistogram = std::map<std::uint64_t, std::uint64_t>;

LengthHistogram length_histogram(std::span<const std::string> items);

// Renders `length,count` CSV with a header row.
std::string histogram_csv(const LengthHistogram& histogram);

}  // namespace bytet5::textprep
