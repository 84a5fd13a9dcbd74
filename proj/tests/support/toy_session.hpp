#pragma once

// Table-driven next-token model over a 4-id vocabulary {pad, eos, A=2, B=3}.
// Log-probabilities depend on the whole prefix; unlisted prefixes fall back
// to a prefix-hashed random distribution.

#include <cmath>
#include <map>
#include <memory>
#include <vector>

#include "bytet5/decode.hpp"
#include "bytet5/rng.hpp"

namespace testing_toy {

class TableSession : public bytet5::decoding::DecoderSession {
 public:
  using Table = std::map<std::vector<int>, std::vector<double>>;

  TableSession(std::shared_ptr<const Table> table, std::uint64_t seed, std::size_t vocab = 4)
      : table_(std::move(table)), seed_(seed), vocab_(vocab) {}

  std::unique_ptr<bytet5::decoding::DecoderSession> clone() const override {
    return std::make_unique<TableSession>(*this);
  }

  std::vector<double> next_logits() override { return probabilities(prefix_); }

  void advance(bytet5::TokenId token) override { prefix_.push_back(token); }

  // Log-probabilities for an arbitrary prefix, for use by oracles.
  std::vector<double> probabilities(const std::vector<int>& prefix) const {
    const auto it = table_->find(prefix);
    std::vector<double> p;
    if (it != table_->end()) {
      p = it->second;
    } else {
      std::uint64_t h = seed_;
      for (int t : prefix) {
        h = bytet5::derive_seed(h, static_cast<std::uint64_t>(t) + 1);
      }
      bytet5::Rng rng(h);
      p.resize(vocab_);
      double z = 0.0;
      for (double& x : p) {
        x = 0.05 + rng.uniform01();
        z += x;
      }
      for (double& x : p) {
        x /= z;
      }
    }
    for (double& x : p) {
      x = std::log(x);
    }
    return p;
  }

 private:
  std::shared_ptr<const Table> table_;
  std::uint64_t seed_;
  std::size_t vocab_;
  std::vector<int> prefix_;
};

// Greedy picks A then eos (0.5 * 0.4 = 0.20); the best sequence is B eos
// (0.4 * 0.9 = 0.36), which width 2 keeps alive.
inline std::shared_ptr<const TableSession::Table> greedy_trap_table() {
  auto t = std::make_shared<TableSession::Table>();
  (*t)[{}] = {0.001, 0.099, 0.5, 0.4};
  (*t)[{2}] = {0.001, 0.4, 0.3, 0.299};
  (*t)[{3}] = {0.001, 0.9, 0.05, 0.049};
  (*t)[{2, 2}] = {0.001, 0.5, 0.25, 0.249};
  (*t)[{2, 3}] = {0.001, 0.5, 0.25, 0.249};
  (*t)[{3, 2}] = {0.001, 0.5, 0.25, 0.249};
  (*t)[{3, 3}] = {0.001, 0.5, 0.25, 0.249};
  return t;
}

}  // namespace testing_toy
