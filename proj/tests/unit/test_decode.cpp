#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "bytet5/decode.hpp"
#include "bytet5/error.hpp"
#include "bytet5/model.hpp"
#include "oracles.hpp"
#include "toy_session.hpp"

using namespace bytet5;
using namespace bytet5::decoding;

namespace {

std::vector<int> as_ints(const std::vector<TokenId>& v) { return {v.begin(), v.end()}; }

testing_oracles::BestSequence exhaustive_best(const testing_toy::TableSession& s, std::size_t max_len) {
  testing_oracles::BestSequence best;
  std::vector<int> prefix;
  testing_oracles::enumerate_sequences([&](const std::vector<int>& p) { return s.probabilities(p); },
                                       ByteVocabulary::eos_id, max_len, prefix, 0.0, best);
  return best;
}

}  // namespace

TEST(Greedy, FallsIntoTrap) {
  testing_toy::TableSession s(testing_toy::greedy_trap_table(), 0);
  EXPECT_EQ(greedy(s, 3), (std::vector<TokenId>{2, 1}));
}

TEST(BeamSearch, WidthTwoMatchesExhaustiveOracleOnTrap) {
  testing_toy::TableSession s(testing_toy::greedy_trap_table(), 0);
  const auto best = exhaustive_best(s, 3);
  const BeamResult r = beam_search(s, 2, 3);
  EXPECT_EQ(as_ints(r.tokens), best.tokens);
  EXPECT_EQ(r.tokens, (std::vector<TokenId>{3, 1}));
  EXPECT_NEAR(r.log_prob, std::log(0.36), 1e-12);
  EXPECT_NEAR(r.log_prob, best.log_prob, 1e-12);
}

TEST(BeamSearch, WideBeamMatchesExhaustiveOracleOnRandomTables) {
  // With width >= vocab^(steps-1) nothing is pruned, so the search is exact.
  auto empty = std::make_shared<testing_toy::TableSession::Table>();
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    testing_toy::TableSession s(empty, seed);
    const auto best = exhaustive_best(s, 3);
    const BeamResult r = beam_search(s, 16, 3);
    EXPECT_EQ(as_ints(r.tokens), best.tokens) << seed;
    EXPECT_NEAR(r.log_prob, best.log_prob, 1e-12);
  }
}

TEST(BeamSearch, WidthOneEqualsGreedyOnRandomTables) {
  auto empty = std::make_shared<testing_toy::TableSession::Table>();
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    testing_toy::TableSession a(empty, seed);
    testing_toy::TableSession b(empty, seed);
    EXPECT_EQ(beam_search(a, 1, 6).tokens, greedy(b, 6)) << seed;
  }
}

TEST(BeamSearch, LogProbMatchesSequenceScore) {
  auto empty = std::make_shared<testing_toy::TableSession::Table>();
  testing_toy::TableSession s(empty, 4);
  const BeamResult r = beam_search(s, 3, 5);
  EXPECT_NEAR(r.log_prob, sequence_log_prob(s, r.tokens), 1e-12);
}

TEST(Sample, TopOneAndTinyTemperatureEqualGreedy) {
  auto empty = std::make_shared<testing_toy::TableSession::Table>();
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    testing_toy::TableSession a(empty, seed);
    testing_toy::TableSession b(empty, seed);
    testing_toy::TableSession c(empty, seed);
    const auto g = greedy(a, 8);
    EXPECT_EQ(sample(b, 1.0, 1, 8, seed), g);
    EXPECT_EQ(sample(c, 1e-6, 4, 8, seed), g);
  }
}

TEST(Sample, DeterministicPerSeedAndRespectsTopK) {
  auto empty = std::make_shared<testing_toy::TableSession::Table>();
  testing_toy::TableSession a(empty, 1);
  testing_toy::TableSession b(empty, 1);
  EXPECT_EQ(sample(a, 0.7, 2, 10, 5), sample(b, 0.7, 2, 10, 5));
  // Top-2 over the trap table's first step admits only A or B.
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    testing_toy::TableSession t(testing_toy::greedy_trap_table(), 0);
    const auto out = sample(t, 1.0, 2, 1, seed);
    ASSERT_EQ(out.size(), 1u);
    EXPECT_TRUE(out[0] == 2 || out[0] == 3);
  }
}

TEST(Greedy, TiesGoToLowestId) {
  auto t = std::make_shared<testing_toy::TableSession::Table>();
  (*t)[{}] = {0.1, 0.1, 0.4, 0.4};
  (*t)[{2}] = {0.1, 0.9, 0.0, 0.0};
  testing_toy::TableSession s(t, 0);
  EXPECT_EQ(greedy(s, 2), (std::vector<TokenId>{2, 1}));
}

TEST(Generate, RespectsMaxLength) {
  auto empty = std::make_shared<testing_toy::TableSession::Table>();
  for (Mode mode : {Mode::greedy, Mode::beam, Mode::sample}) {
    testing_toy::TableSession s(empty, 2);
    DecodeConfig cfg;
    cfg.mode = mode;
    cfg.num_beams = 3;
    cfg.max_length = 4;
    EXPECT_LE(generate(s, cfg).size(), 4u) << to_string(mode);
  }
}

TEST(DecodeConfig, Validation) {
  DecodeConfig c;
  EXPECT_NO_THROW(c.validate());
  c.temperature = 0.0;
  EXPECT_THROW(c.validate(), ArgumentError);
  c = DecodeConfig{};
  c.num_beams = 0;
  EXPECT_THROW(c.validate(), ArgumentError);
  EXPECT_EQ(parse_mode("beam"), Mode::beam);
  EXPECT_THROW(parse_mode("nucleus"), ArgumentError);
}

TEST(ModelDecoding, BeamOneEqualsGreedyOnRandomTinyModels) {
  model::ModelConfig c = model::preset("tiny");
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const model::ParameterSet p = model::init_parameters(c, seed);
    Rng rng(seed + 100);
    std::vector<TokenId> input;
    for (std::size_t i = 0; i < 1 + rng.uniform_below(10); ++i) {
      input.push_back(static_cast<TokenId>(3 + rng.uniform_below(256)));
    }
    input.push_back(ByteVocabulary::eos_id);
    auto a = model::start_session(p, c, input);
    auto b = model::start_session(p, c, input);
    EXPECT_EQ(beam_search(*a, 1, 12).tokens, greedy(*b, 12)) << seed;
  }
}
