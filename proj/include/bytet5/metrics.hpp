#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <span>
#include <string>
#include <vector>

namespace bytet5::metrics {

struct MetricReport {
  std::string metric;
  double score = 0.0;
  double scale_max = 1.0;  // 1 for F1 and GLEU, 100 for BLEU
  // Integer support counts, e.g. "tp:A", "matches_2", "ref_len".
  std::map<std::string, std::uint64_t> counts;
  // Derived real-valued quantities, e.g. per-class F1, brevity penalty.
  std::map<std::string, double> values;

  std::string to_json() const;
};

// Unweighted mean of per-class F1 over `labels`; a class with P + R = 0
// contributes 0. Throws ArgumentError on empty or unequal inputs and on
// labels outside the set.
MetricReport macro_f1(std::span<const std::string> predictions, std::span<const std::string> golds,
                      const std::set<std::string>& labels);

// International BLEU tokenizer: punctuation not between digits and every
// symbol become separate tokens; result is split on whitespace.
std::vector<std::string> tokenize_intl(const std::string& text);

struct BleuOptions {
  // Floor smoothing: an order with candidates but no matches uses
  // epsilon / candidates, and orders with no candidates at all are left out
  // of the geometric mean. Without it, any zero precision gives 0.
  bool floor_smoothing = false;
  double epsilon = 0.1;
  std::size_t max_order = 4;
};

// Corpus BLEU on a 0-100 scale. references[r][i] is the r-th reference for
// hypothesis i; the closest reference length (ties to the shorter) counts
// toward r. Throws ArgumentError for an empty corpus or mismatched sizes.
MetricReport corpus_bleu(std::span<const std::string> hypotheses,
                         std::span<const std::vector<std::string>> references, const BleuOptions& options = {});
MetricReport corpus_bleu(std::span<const std::string> hypotheses, std::span<const std::string> references,
                         const BleuOptions& options = {});

// Corpus-pooled min(precision, recall) over whitespace-token n-grams of
// orders 1..max_n. Scores 0 when either side has no n-grams.
MetricReport gleu(std::span<const std::string> hypotheses, std::span<const std::string> references,
                  std::size_t max_n = 4);

}  // namespace bytet5::metrics
