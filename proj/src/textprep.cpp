#include "bytet5/textprep.hpp"

#include <cctype>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "bytet5/error.hpp"
#include "bytet5/utf8.hpp"

namespace bytet5::textprep {

const CodepointSet& default_space_like() {
  static const CodepointSet set = {
      0x0020,  // space
      0x00A0,  // no-break space
      0x1680,  // ogham space mark
      0x180E,  // mongolian vowel separator
      0x2000,  // en quad
      0x200A,  // hair space
      0x202F,  // narrow no-break space
      0x205F,  // medium mathematical space
      0x3000,  // ideographic space
  };
  return set;
}

const CodepointSet& default_zero_width() {
  static const CodepointSet set = {0x200C};
  return set;
}

const CodepointSet& default_punctuation() {
  static const CodepointSet set = {
      0x0964, 0x0965, 0x09F7,                          // danda, double danda, numerator four
      0x002C, 0x003B, 0x003A, 0x003F, 0x0021, 0x002E,  // , ; : ? ! .
      0x0027, 0x0022, 0x2018, 0x2019, 0x201C, 0x201D,  // quotes
      0x0028, 0x0029, 0x005B, 0x005D, 0x007B, 0x007D,  // brackets
      0x002D, 0x2013, 0x2014, 0x2026,                  // - en dash, em dash, ellipsis
      0x002F, 0x005C, 0x007C, 0x0026, 0x002A, 0x0040,  // / \ | & * @
      0x0023, 0x0025, 0x005F, 0x007E, 0x0060,          // # % _ ~ `
  };
  return set;
}

const CodepointSet& default_terminators() {
  static const CodepointSet set = {0x0964, U'?', U'!', U'.'};
  return set;
}

void CleanConfig::validate() const {
  for (char32_t cp : space_like_codepoints) {
    if (zero_width_codepoints.contains(cp)) {
      char buf[32];
      std::snprintf(buf, sizeof buf, "U+%04X", static_cast<unsigned>(cp));
      throw ArgumentError(std::string("codepoint ") + buf +
                          " is in both space_like_codepoints and zero_width_codepoints");
    }
  }
  for (char32_t cp : punctuation_set) {
    if (space_like_codepoints.contains(cp) || zero_width_codepoints.contains(cp)) {
      char buf[32];
      std::snprintf(buf, sizeof buf, "U+%04X", static_cast<unsigned>(cp));
      throw ArgumentError(std::string("punctuation_set entry ") + buf +
                          " overlaps a whitespace or zero-width set");
    }
  }
}

CodepointSet parse_codepoint_list(std::string_view text) {
  CodepointSet out;
  std::istringstream lines{std::string(text)};
  std::string line;
  int line_no = 0;
  while (std::getline(lines, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') {
      line.pop_back();
    }
    if (line.empty() || line[0] == '#') {
      continue;
    }
    if (line.size() > 2 && (line[0] == 'U' || line[0] == 'u') && line[1] == '+') {
      std::size_t end = 2;
      while (end < line.size() && std::isxdigit(static_cast<unsigned char>(line[end]))) {
        ++end;
      }
      if (end == 2) {
        throw ArgumentError("punctuation list line " + std::to_string(line_no) +
                            ": malformed U+ code");
      }
      out.insert(static_cast<char32_t>(std::stoul(line.substr(2, end - 2), nullptr, 16)));
      continue;
    }
    const std::u32string cps = utf8::decode(line);
    if (cps.empty()) {
      continue;
    }
    // First codepoint is the entry; anything after whitespace is a comment.
    out.insert(cps.front());
  }
  return out;
}

CodepointSet load_codepoint_list(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw IoError("cannot open punctuation list " + path.string());
  }
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_codepoint_list(buf.str());
}

std::string normalize_unicode(std::string_view text, const CleanConfig& config) {
  std::string out;
  out.reserve(text.size());
  bool last_was_space = false;
  for (char32_t cp : utf8::decode(text)) {
    if (config.zero_width_codepoints.contains(cp)) {
      continue;
    }
    if (config.space_like_codepoints.contains(cp) || cp == U' ') {
      if (config.collapse_whitespace && last_was_space) {
        continue;
      }
      out.push_back(' ');
      last_was_space = true;
      continue;
    }
    utf8::append(out, cp);
    last_was_space = false;
  }
  return out;
}

std::string strip_punctuation(std::string_view text, const CleanConfig& config) {
  if (config.punctuation_set.empty()) {
    return std::string(text);
  }
  std::string out;
  out.reserve(text.size());
  for (char32_t cp : utf8::decode(text)) {
    if (!config.punctuation_set.contains(cp)) {
      utf8::append(out, cp);
    }
  }
  return out;
}

std::string clean_document(std::string_view text, const CleanConfig& config) {
  std::string normalized = normalize_unicode(text, config);
  if (!config.strip_punctuation) {
    return normalized;
  }
  return strip_punctuation(normalized, config);
}

std::optional<double> CorpusStats::avg_words_per_sentence() const {
  if (sentence_count == 0) {
    return std::nullopt;
  }
  return static_cast<double>(word_count) / static_cast<double>(sentence_count);
}

CorpusStats& CorpusStats::merge(const CorpusStats& other) {
  word_count += other.word_count;
  sentence_count += other.sentence_count;
  byte_size += other.byte_size;
  return *this;
}

std::uint64_t count_words(std::string_view text) {
  std::uint64_t words = 0;
  bool in_word = false;
  for (char32_t cp : utf8::decode(text)) {
    const bool space = utf8::is_white_space(cp);
    if (!space && !in_word) {
      ++words;
    }
    in_word = !space;
  }
  return words;
}

std::uint64_t count_sentences(std::string_view text, const SegmentationRules& rules) {
  // A segment counts when it holds at least one non-whitespace,
  // non-terminator codepoint; runs like "..." therefore end one sentence.
  std::uint64_t sentences = 0;
  bool segment_has_content = false;
  for (char32_t cp : utf8::decode(text)) {
    if (rules.terminators.contains(cp)) {
      if (segment_has_content) {
        ++sentences;
      }
      segment_has_content = false;
    } else if (!utf8::is_white_space(cp)) {
      segment_has_content = true;
    }
  }
  if (segment_has_content) {
    ++sentences;
  }
  return sentences;
}

CorpusStats document_stats(std::string_view text, const SegmentationRules& rules) {
  CorpusStats stats;
  stats.word_count = count_words(text);
  stats.sentence_count = count_sentences(text, rules);
  stats.byte_size = text.size();
  return stats;
}

CorpusStats corpus_stats(std::span<const std::string> documents, const SegmentationRules& rules) {
  CorpusStats total;
  for (const auto& doc : documents) {
    total.merge(document_stats(doc, rules));
  }
  return total;
}

LengthHistogram length_histogram(std::span<const std::string> items) {
  LengthHistogram histogram;
  for (const auto& item : items) {
    ++histogram[count_words(item)];
  }
  return histogram;
}

std::string histogram_csv(const LengthHistogram& histogram) {
  std::string out = "length,count\n";
  for (const auto& [length, count] : histogram) {
    out += std::to_string(length) + "," + std::to_string(count) + "\n";
  }
  return out;
}

}  // namespace bytet5::textprep
