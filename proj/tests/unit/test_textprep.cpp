#include <gtest/gtest.h>

#include <string>
#include <vector>

#include "bytet5/error.hpp"
#include "bytet5/rng.hpp"
#include "bytet5/textprep.hpp"
#include "bytet5/utf8.hpp"

using namespace bytet5;
using namespace bytet5::textprep;

namespace {

CleanConfig danda_only() {
  CleanConfig c;
  c.punctuation_set = {0x0964};
  return c;
}

}  // namespace

TEST(NormalizeUnicode, NoBreakSpaceBecomesSpace) {
  EXPECT_EQ(normalize_unicode("অ\u00A0আ", CleanConfig{}), "অ আ");
}

TEST(NormalizeUnicode, ZeroWidthNonJoinerDeleted) {
  EXPECT_EQ(normalize_unicode("ক\u200Cখ", CleanConfig{}), "কখ");
}

TEST(NormalizeUnicode, EmptyStaysEmpty) { EXPECT_EQ(normalize_unicode("", CleanConfig{}), ""); }

TEST(NormalizeUnicode, SpaceLikeRunCollapses) {
  EXPECT_EQ(normalize_unicode("a\u2000\u200Ab", CleanConfig{}), "a b");
}

TEST(NormalizeUnicode, CollapseCanBeDisabled) {
  CleanConfig c;
  c.collapse_whitespace = false;
  EXPECT_EQ(normalize_unicode("a\u2000\u200Ab", c), "a  b");
}

TEST(NormalizeUnicode, OtherWhitespaceUntouched) {
  EXPECT_EQ(normalize_unicode("a\tb\nc", CleanConfig{}), "a\tb\nc");
}

TEST(NormalizeUnicode, IdempotentOnFuzzedInput) {
  const std::vector<char32_t> pool = {0x0020, 0x00A0, 0x1680, 0x180E, 0x2000, 0x200A, 0x200C,
                                      0x202F, 0x205F, 0x3000, U'a', 0x0995, 0x0964, U'\n'};
  Rng rng(17);
  for (int i = 0; i < 500; ++i) {
    std::u32string cps;
    const std::size_t len = rng.uniform_below(40);
    for (std::size_t j = 0; j < len; ++j) {
      cps.push_back(pool[rng.uniform_below(pool.size())]);
    }
    const std::string text = utf8::encode(cps);
    const std::string once = normalize_unicode(text, CleanConfig{});
    EXPECT_EQ(normalize_unicode(once, CleanConfig{}), once);
  }
}

TEST(StripPunctuation, Examples) {
  EXPECT_EQ(strip_punctuation("আমি।", danda_only()), "আমি");
  CleanConfig none;
  none.punctuation_set.clear();
  EXPECT_EQ(strip_punctuation("abc", none), "abc");
  EXPECT_EQ(strip_punctuation("।।", danda_only()), "");
}

TEST(CleanDocument, ComposesNormalizeThenStrip) {
  EXPECT_EQ(clean_document("ক\u200C।খ", danda_only()), "কখ");
  EXPECT_EQ(clean_document("", CleanConfig{}), "");
  EXPECT_EQ(clean_document("plain words", CleanConfig{}), "plain words");
}

TEST(CleanDocument, StripCanBeDisabled) {
  CleanConfig c = danda_only();
  c.strip_punctuation = false;
  EXPECT_EQ(clean_document("ক\u200C।খ", c), "ক।খ");
}

TEST(CleanConfig, OverlappingSetsRejected) {
  CleanConfig c;
  c.zero_width_codepoints.insert(0x00A0);
  EXPECT_THROW(c.validate(), ArgumentError);
  CleanConfig d;
  d.punctuation_set.insert(0x200C);
  EXPECT_THROW(d.validate(), ArgumentError);
  EXPECT_NO_THROW(CleanConfig{}.validate());
}

TEST(DefaultPunctuation, ShippedListMatchesBuiltInDefault) {
  const CodepointSet loaded = load_codepoint_list(BYTET5_DATA_DIR "/bangla_punctuation.txt");
  EXPECT_EQ(loaded.size(), 36u);
  EXPECT_EQ(loaded, default_punctuation());
}

TEST(ParseCodepointList, CodesLiteralsAndComments) {
  const CodepointSet s = parse_codepoint_list("# header\nU+0964 danda\n\n!\nu+002e\n");
  EXPECT_EQ(s, (CodepointSet{0x0964, U'!', U'.'}));
  EXPECT_THROW(parse_codepoint_list("U+zz\n"), ArgumentError);
}

TEST(CorpusStats, BanglaTwoSentences) {
  const std::vector<std::string> docs = {"আমি ভাত খাই। তুমি যাও।"};
  const CorpusStats s = corpus_stats(docs, SegmentationRules{});
  EXPECT_EQ(s.word_count, 5u);
  EXPECT_EQ(s.sentence_count, 2u);
  ASSERT_TRUE(s.avg_words_per_sentence().has_value());
  EXPECT_EQ(*s.avg_words_per_sentence(), 2.5);
}

TEST(CorpusStats, EmptyDocumentHasNoAverage) {
  const std::vector<std::string> docs = {""};
  const CorpusStats s = corpus_stats(docs, SegmentationRules{});
  EXPECT_EQ(s.word_count, 0u);
  EXPECT_EQ(s.sentence_count, 0u);
  EXPECT_FALSE(s.avg_words_per_sentence().has_value());
}

TEST(CorpusStats, TrailingSegmentAndTerminatorRuns) {
  EXPECT_EQ(count_sentences("one. two", SegmentationRules{}), 2u);
  EXPECT_EQ(count_sentences("wait... what?!", SegmentationRules{}), 2u);
  EXPECT_EQ(count_sentences(" . ", SegmentationRules{}), 0u);
}

TEST(CorpusStats, MergeMatchesWholeCorpus) {
  const std::vector<std::string> docs = {"a b. c", "d e f! g.", ""};
  CorpusStats merged;
  for (const auto& d : docs) {
    merged.merge(document_stats(d, SegmentationRules{}));
  }
  const CorpusStats whole = corpus_stats(docs, SegmentationRules{});
  EXPECT_EQ(merged.word_count, whole.word_count);
  EXPECT_EQ(merged.sentence_count, whole.sentence_count);
  EXPECT_EQ(merged.byte_size, whole.byte_size);
}

TEST(CountWords, InvariantUnderWhitespaceCollapse) {
  const std::string text = "a\u00A0 b \u2000 c\u3000d";
  EXPECT_EQ(count_words(text), count_words(normalize_unicode(text, CleanConfig{})));
  EXPECT_EQ(count_words(text), 4u);
}

TEST(LengthHistogram, Examples) {
  const std::vector<std::string> items = {"a b c", "d e", "f g"};
  EXPECT_EQ(length_histogram(items), (LengthHistogram{{2, 2}, {3, 1}}));
  EXPECT_TRUE(length_histogram(std::vector<std::string>{}).empty());
  EXPECT_EQ(histogram_csv(length_histogram(items)), "length,count\n2,2\n3,1\n");
}

TEST(LengthHistogram, OnePromptPerLength) {
  std::vector<std::string> items;
  for (int len = 3; len <= 30; ++len) {
    std::string s;
    for (int w = 0; w < len; ++w) {
      s += w == 0 ? "w" : " w";
    }
    items.push_back(s);
  }
  const LengthHistogram h = length_histogram(items);
  EXPECT_EQ(h.size(), 28u);
  std::uint64_t total = 0;
  for (const auto& [len, count] : h) {
    EXPECT_EQ(count, 1u) << len;
    total += count;
  }
  EXPECT_EQ(total, 28u);
}
