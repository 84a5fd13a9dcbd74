#include "bytet5/bytevocab.hpp"

#include <cmath>

#include "bytet5/error.hpp"
#include "bytet5/utf8.hpp"

namespace bytet5 {

const char* to_string(TokenRole role) {
  switch (role) {
    case TokenRole::special:
      return "special";
    case TokenRole::byte:
      return "byte";
    case TokenRole::sentinel:
      return "sentinel";
    case TokenRole::reserved:
      return "reserved";
  }
  return "unknown";
}

TokenRole ByteVocabulary::role(TokenId id) {
  if (id < 0 || id >= vocab_size) {
    throw RangeError("token id " + std::to_string(id) + " outside vocabulary [0, 384)");
  }
  if (id < byte_offset) {
    return TokenRole::special;
  }
  if (is_byte(id)) {
    return TokenRole::byte;
  }
  if (is_sentinel(id)) {
    return TokenRole::sentinel;
  }
  return TokenRole::reserved;
}

TokenId sentinel_id(int k) {
  if (k < 0 || k >= ByteVocabulary::sentinel_count) {
    throw ArgumentError("sentinel index " + std::to_string(k) + " outside [0, 99]");
  }
  return ByteVocabulary::vocab_size - 1 - k;
}

std::vector<TokenId> encode(std::string_view text, bool add_eos) {
  std::vector<TokenId> ids;
  ids.reserve(text.size() + 1);
  for (char c : text) {
    ids.push_back(ByteVocabulary::byte_id(static_cast<std::uint8_t>(c)));
  }
  if (add_eos) {
    ids.push_back(ByteVocabulary::eos_id);
  }
  return ids;
}

DecodedText decode(std::span<const TokenId> ids) {
  DecodedText out;
  out.bytes.reserve(ids.size());
  for (TokenId id : ids) {
    if (ByteVocabulary::role(id) == TokenRole::byte) {
      out.bytes.push_back(static_cast<char>(ByteVocabulary::byte_of(id)));
    }
  }
  out.text = utf8::to_valid_lossy(out.bytes);
  return out;
}

FertilityReport fertility(std::uint64_t token_count, std::uint64_t word_count) {
  if (word_count == 0) {
    throw ArgumentError("fertility requires a positive word count");
  }
  FertilityReport report;
  report.token_count = token_count;
  report.word_count = word_count;
  report.fertility = static_cast<double>(token_count) / static_cast<double>(word_count);
  report.fertility_rounded = std::round(report.fertility * 100.0) / 100.0;
  return report;
}

}  // namespace bytet5
