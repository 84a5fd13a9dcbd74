#include <gtest/gtest.h>

#include <set>
#include <string>
#include <vector>

#include "bytet5/bytevocab.hpp"
#include "bytet5/error.hpp"
#include "bytet5/rng.hpp"

using namespace bytet5;

TEST(Encode, Examples) {
  EXPECT_EQ(encode("A", false), (std::vector<TokenId>{68}));
  EXPECT_EQ(encode("ক", true), (std::vector<TokenId>{227, 169, 152, 1}));
  EXPECT_EQ(encode("", true), (std::vector<TokenId>{1}));
}

TEST(Encode, LengthIsUtf8ByteCount) {
  EXPECT_EQ(encode("hello", false).size(), 5u);
  EXPECT_EQ(encode("আমি", false).size(), 9u);
}

TEST(Decode, Examples) {
  const std::vector<TokenId> a = {68, 1};
  EXPECT_EQ(decode(a).bytes, "A");
  EXPECT_EQ(decode(a).text, "A");
  const std::vector<TokenId> s = {sentinel_id(0), 68};
  EXPECT_EQ(decode(s).bytes, "A");
  const std::vector<TokenId> lone = {227};
  EXPECT_EQ(decode(lone).bytes, "\xE0");
  EXPECT_EQ(decode(lone).text, "�");
  const std::vector<TokenId> bad = {384};
  EXPECT_THROW(decode(bad), RangeError);
  const std::vector<TokenId> neg = {-1};
  EXPECT_THROW(decode(neg), RangeError);
}

TEST(Decode, SkipsReservedAndSpecials) {
  const std::vector<TokenId> ids = {0, 2, 259, 283, 68, 1};
  EXPECT_EQ(decode(ids).bytes, "A");
}

TEST(SentinelId, Layout) {
  EXPECT_EQ(sentinel_id(0), 383);
  EXPECT_EQ(sentinel_id(99), 284);
  EXPECT_THROW(sentinel_id(100), ArgumentError);
  EXPECT_THROW(sentinel_id(-1), ArgumentError);
}

TEST(Vocabulary, RolesPartitionAllIds) {
  int special = 0;
  int byte = 0;
  int sentinel = 0;
  int reserved = 0;
  for (TokenId id = 0; id < ByteVocabulary::vocab_size; ++id) {
    switch (ByteVocabulary::role(id)) {
      case TokenRole::special:
        ++special;
        break;
      case TokenRole::byte:
        ++byte;
        break;
      case TokenRole::sentinel:
        ++sentinel;
        break;
      case TokenRole::reserved:
        ++reserved;
        break;
    }
  }
  EXPECT_EQ(special, 3);
  EXPECT_EQ(byte, 256);
  EXPECT_EQ(sentinel, 100);
  EXPECT_EQ(reserved, 25);
  EXPECT_THROW(ByteVocabulary::role(384), RangeError);
}

TEST(Vocabulary, RoundTripFuzzedBytes) {
  Rng rng(99);
  for (int i = 0; i < 2000; ++i) {
    std::string s(rng.uniform_below(64), '\0');
    for (char& c : s) {
      c = static_cast<char>(rng.uniform_below(256));
    }
    EXPECT_EQ(decode(encode(s, true)).bytes, s);
  }
}

TEST(Fertility, Values) {
  const FertilityReport r = fertility(7533270552ull, 947041525ull);
  EXPECT_NEAR(r.fertility, 7.9545, 1e-4);
  EXPECT_EQ(r.fertility_rounded, 7.95);
  EXPECT_EQ(fertility(10, 10).fertility_rounded, 1.0);
  EXPECT_EQ(fertility(0, 5).fertility, 0.0);
  EXPECT_THROW(fertility(5, 0), ArgumentError);
}

TEST(Fertility, ScaleInvariant) {
  EXPECT_DOUBLE_EQ(fertility(30, 12).fertility, fertility(300, 120).fertility);
}
