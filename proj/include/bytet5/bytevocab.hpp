#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace bytet5 {

using TokenId = std::int32_t;

enum class TokenRole : std::uint8_t { special, byte, sentinel, reserved };

const char* to_string(TokenRole role);

// Fixed 384-id byte vocabulary.
//
//   0 pad, 1 eos, 2 unk         specials
//   3 .. 258                    raw byte b -> b + 3
//   259 .. 283                  reserved, never produced
//   284 .. 383                  sentinels; sentinel(k) = 383 - k
//
// unk is never produced by encode: every byte has an id.
struct ByteVocabulary {
  static constexpr TokenId pad_id = 0;
  static constexpr TokenId eos_id = 1;
  static constexpr TokenId unk_id = 2;
  static constexpr TokenId byte_offset = 3;
  static constexpr TokenId first_reserved = 259;
  static constexpr int sentinel_count = 100;
  static constexpr TokenId vocab_size = 384;
  static constexpr TokenId first_sentinel = vocab_size - sentinel_count;

  static constexpr bool is_byte(TokenId id) { return id >= byte_offset && id < first_reserved; }
  static constexpr bool is_sentinel(TokenId id) { return id >= first_sentinel && id < vocab_size; }
  static constexpr TokenId byte_id(std::uint8_t b) { return static_cast<TokenId>(b) + byte_offset; }
  static constexpr std::uint8_t byte_of(TokenId id) { return static_cast<std::uint8_t>(id - byte_offset); }

  // Sentinel index k for a sentinel id.
  static constexpr int sentinel_index(TokenId id) { return vocab_size - 1 - id; }

  // Throws RangeError for id outside [0, 384).
  static TokenRole role(TokenId id);
};

static_assert(ByteVocabulary::first_sentinel == 284);
static_assert(ByteVocabulary::first_reserved + 25 == ByteVocabulary::first_sentinel);

// id of sentinel k; throws ArgumentError unless 0 <= k <= 99.
TokenId sentinel_id(int k);

std::vector<TokenId> encode(std::string_view text, bool add_eos);

struct DecodedText {
  std::string bytes;  // raw bytes, possibly ill-formed UTF-8
  std::string text;   // lossy view, ill-formed sequences replaced by U+FFFD
};

// Byte ids map back to bytes; pad, eos, unk, sentinel and reserved ids are
// skipped. Throws RangeError for ids outside the vocabulary.
DecodedText decode(std::span<const TokenId> ids);

struct FertilityReport {
  std::uint64_t token_count = 0;
  std::uint64_t word_count = 0;
  double fertility = 0.0;
  double fertility_rounded = 0.0;  // two decimals
};

// Throws ArgumentError when word_count is zero.
FertilityReport fertility(std::uint64_t token_count, std::uint64_t word_count);

}  // namespace bytet5
