#include "bytet5/metrics.hpp"

#include <unicode/regex.h>
#include <unicode/unistr.h>

#include <algorithm>
#include <cmath>
#include <json.hpp>
#include <memory>
#include <sstream>

#include "bytet5/error.hpp"

namespace bytet5::metrics {

std::string MetricReport::to_json() const {
  nlohmann::json j;
  j["metric"] = metric;
  j["score"] = score;
  j["scale"] = {0.0, scale_max};
  j["counts"] = counts;
  j["values"] = values;
  return j.dump();
}

MetricReport macro_f1(std::span<const std::string> predictions, std::span<const std::string> golds,
                      const std::set<std::string>& labels) {
  if (predictions.empty() || golds.empty()) {
    throw ArgumentError("macro_f1 requires at least one example");
  }
  if (predictions.size() != golds.size()) {
    throw ArgumentError("macro_f1: " + std::to_string(predictions.size()) + " predictions vs " +
                        std::to_string(golds.size()) + " golds");
  }
  if (labels.empty()) {
    throw ArgumentError("macro_f1 requires a non-empty label set");
  }
  std::map<std::string, std::uint64_t> tp;
  std::map<std::string, std::uint64_t> fp;
  std::map<std::string, std::uint64_t> fn;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    const std::string& p = predictions[i];
    const std::string& g = golds[i];
    for (const std::string* label : {&p, &g}) {
      if (!labels.contains(*label)) {
        throw ArgumentError("label '" + *label + "' is not in the label set");
      }
    }
    if (p == g) {
      ++tp[p];
    } else {
      ++fp[p];
      ++fn[g];
    }
  }

  MetricReport report;
  report.metric = "macro-f1";
  double sum = 0.0;
  for (const std::string& label : labels) {
    const double t = static_cast<double>(tp[label]);
    const double precision = tp[label] + fp[label] == 0 ? 0.0 : t / static_cast<double>(tp[label] + fp[label]);
    const double recall = tp[label] + fn[label] == 0 ? 0.0 : t / static_cast<double>(tp[label] + fn[label]);
    const double f1 = precision + recall == 0.0 ? 0.0 : 2.0 * precision * recall / (precision + recall);
    sum += f1;
    report.counts["tp:" + label] = tp[label];
    report.counts["fp:" + label] = fp[label];
    report.counts["fn:" + label] = fn[label];
    report.values["f1:" + label] = f1;
  }
  report.counts["examples"] = predictions.size();
  report.score = sum / static_cast<double>(labels.size());
  return report;
}

namespace {

class IntlTokenizer {
 public:
  IntlTokenizer() {
    add(u"(\\P{N})(\\p{P})", u"$1 $2 ");
    add(u"(\\p{P})(\\P{N})", u" $1 $2");
    add(u"(\\p{S})", u" $1 ");
  }

  std::vector<std::string> operator()(const std::string& text) const {
    icu::UnicodeString line = icu::UnicodeString::fromUTF8(text);
    for (const auto& [pattern, replacement] : rules_) {
      UErrorCode status = U_ZERO_ERROR;
      std::unique_ptr<icu::RegexMatcher> matcher(pattern->matcher(line, status));
      line = matcher->replaceAll(replacement, status);
      if (U_FAILURE(status)) {
        throw ArgumentError(std::string("BLEU tokenizer failed: ") + u_errorName(status));
      }
    }
    std::string utf8;
    line.toUTF8String(utf8);
    std::istringstream words(utf8);
    std::vector<std::string> out;
    for (std::string w; words >> w;) {
      out.push_back(w);
    }
    return out;
  }

 private:
  void add(const char16_t* pattern, const char16_t* replacement) {
    UErrorCode status = U_ZERO_ERROR;
    UParseError parse{};
    std::unique_ptr<icu::RegexPattern> compiled(
        icu::RegexPattern::compile(icu::UnicodeString(pattern), parse, status));
    if (U_FAILURE(status)) {
      throw ArgumentError(std::string("BLEU tokenizer pattern failed: ") + u_errorName(status));
    }
    rules_.emplace_back(std::move(compiled), icu::UnicodeString(replacement));
  }

  std::vector<std::pair<std::unique_ptr<icu::RegexPattern>, icu::UnicodeString>> rules_;
};

using NgramCounts = std::map<std::vector<std::string>, std::uint64_t>;

NgramCounts ngrams(const std::vector<std::string>& tokens, std::size_t n) {
  NgramCounts out;
  if (tokens.size() < n) {
    return out;
  }
  for (std::size_t i = 0; i + n <= tokens.size(); ++i) {
    ++out[std::vector<std::string>(tokens.begin() + static_cast<std::ptrdiff_t>(i),
                                   tokens.begin() + static_cast<std::ptrdiff_t>(i + n))];
  }
  return out;
}

std::uint64_t total(const NgramCounts& counts) {
  std::uint64_t t = 0;
  for (const auto& [g, c] : counts) {
    t += c;
  }
  return t;
}

std::vector<std::string> whitespace_tokens(const std::string& text) {
  std::istringstream in(text);
  std::vector<std::string> out;
  for (std::string w; in >> w;) {
    out.push_back(w);
  }
  return out;
}

}  // namespace

std::vector<std::string> tokenize_intl(const std::string& text) {
  static const IntlTokenizer tokenizer;
  return tokenizer(text);
}

MetricReport corpus_bleu(std::span<const std::string> hypotheses,
                         std::span<const std::vector<std::string>> references, const BleuOptions& options) {
  if (hypotheses.empty()) {
    throw ArgumentError("corpus_bleu requires a non-empty corpus");
  }
  if (references.empty()) {
    throw ArgumentError("corpus_bleu requires at least one reference stream");
  }
  for (const auto& stream : references) {
    if (stream.size() != hypotheses.size()) {
      throw ArgumentError("corpus_bleu: reference stream has " + std::to_string(stream.size()) +
                          " segments for " + std::to_string(hypotheses.size()) + " hypotheses");
    }
  }
  if (options.max_order < 1) {
    throw ArgumentError("corpus_bleu: max_order must be >= 1");
  }

  const std::size_t orders = options.max_order;
  std::vector<std::uint64_t> matches(orders, 0);
  std::vector<std::uint64_t> candidates(orders, 0);
  std::uint64_t hyp_len = 0;
  std::uint64_t ref_len = 0;

  for (std::size_t i = 0; i < hypotheses.size(); ++i) {
    const std::vector<std::string> hyp = tokenize_intl(hypotheses[i]);
    std::vector<std::vector<std::string>> refs;
    for (const auto& stream : references) {
      refs.push_back(tokenize_intl(stream[i]));
    }
    hyp_len += hyp.size();
    std::size_t closest = refs.front().size();
    for (const auto& r : refs) {
      const auto diff = [&](std::size_t len) {
        return len > hyp.size() ? len - hyp.size() : hyp.size() - len;
      };
      if (diff(r.size()) < diff(closest) || (diff(r.size()) == diff(closest) && r.size() < closest)) {
        closest = r.size();
      }
    }
    ref_len += closest;

    for (std::size_t n = 1; n <= orders; ++n) {
      const NgramCounts h = ngrams(hyp, n);
      NgramCounts max_ref;
      for (const auto& r : refs) {
        for (const auto& [g, c] : ngrams(r, n)) {
          max_ref[g] = std::max(max_ref[g], c);
        }
      }
      for (const auto& [g, c] : h) {
        const auto it = max_ref.find(g);
        if (it != max_ref.end()) {
          matches[n - 1] += std::min(c, it->second);
        }
      }
      candidates[n - 1] += total(h);
    }
  }

  MetricReport report;
  report.metric = "bleu";
  report.scale_max = 100.0;
  report.counts["hyp_len"] = hyp_len;
  report.counts["ref_len"] = ref_len;
  for (std::size_t n = 1; n <= orders; ++n) {
    report.counts["matches_" + std::to_string(n)] = matches[n - 1];
    report.counts["candidates_" + std::to_string(n)] = candidates[n - 1];
  }

  double bp = 1.0;
  if (hyp_len < ref_len) {
    bp = hyp_len == 0 ? 0.0 : std::exp(1.0 - static_cast<double>(ref_len) / static_cast<double>(hyp_len));
  }
  report.values["brevity_penalty"] = bp;

  double log_sum = 0.0;
  std::size_t used = 0;
  bool zero = false;
  for (std::size_t n = 1; n <= orders; ++n) {
    const double c = static_cast<double>(candidates[n - 1]);
    double p = 0.0;
    if (candidates[n - 1] == 0) {
      if (options.floor_smoothing) {
        continue;
      }
      zero = true;
    } else if (matches[n - 1] == 0) {
      if (options.floor_smoothing) {
        p = options.epsilon / c;
      } else {
        zero = true;
      }
    } else {
      p = static_cast<double>(matches[n - 1]) / c;
    }
    report.values["precision_" + std::to_string(n)] = p;
    if (p > 0.0) {
      log_sum += std::log(p);
    }
    ++used;
  }
  report.counts["orders_used"] = used;
  const bool any_match = std::any_of(matches.begin(), matches.end(), [](std::uint64_t m) { return m > 0; });
  if (zero || used == 0 || !any_match) {
    report.score = 0.0;
  } else {
    report.score = 100.0 * bp * std::exp(log_sum / static_cast<double>(used));
  }
  return report;
}

MetricReport corpus_bleu(std::span<const std::string> hypotheses, std::span<const std::string> references,
                         const BleuOptions& options) {
  const std::vector<std::vector<std::string>> streams = {std::vector<std::string>(references.begin(), references.end())};
  return corpus_bleu(hypotheses, streams, options);
}

MetricReport gleu(std::span<const std::string> hypotheses, std::span<const std::string> references,
                  std::size_t max_n) {
  if (hypotheses.empty()) {
    throw ArgumentError("gleu requires a non-empty corpus");
  }
  if (hypotheses.size() != references.size()) {
    throw ArgumentError("gleu: " + std::to_string(hypotheses.size()) + " hypotheses vs " +
                        std::to_string(references.size()) + " references");
  }
  if (max_n < 1) {
    throw ArgumentError("gleu: max_n must be >= 1");
  }
  std::uint64_t matched = 0;
  std::uint64_t hyp_total = 0;
  std::uint64_t ref_total = 0;
  for (std::size_t i = 0; i < hypotheses.size(); ++i) {
    const auto hyp = whitespace_tokens(hypotheses[i]);
    const auto ref = whitespace_tokens(references[i]);
    for (std::size_t n = 1; n <= max_n; ++n) {
      const NgramCounts h = ngrams(hyp, n);
      const NgramCounts r = ngrams(ref, n);
      for (const auto& [g, c] : h) {
        const auto it = r.find(g);
        if (it != r.end()) {
          matched += std::min(c, it->second);
        }
      }
      hyp_total += total(h);
      ref_total += total(r);
    }
  }
  MetricReport report;
  report.metric = "gleu";
  report.counts["matched"] = matched;
  report.counts["hyp_ngrams"] = hyp_total;
  report.counts["ref_ngrams"] = ref_total;
  if (hyp_total == 0 || ref_total == 0) {
    report.score = 0.0;
    return report;
  }
  const double precision = static_cast<double>(matched) / static_cast<double>(hyp_total);
  const double recall = static_cast<double>(matched) / static_cast<double>(ref_total);
  report.values["precision"] = precision;
  report.values["recall"] = recall;
  report.score = std::min(precision, recall);
  return report;
}

}  // namespace bytet5::metrics
