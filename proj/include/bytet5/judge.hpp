#pragma once

#include <array>
#include <chrono>
#include <cstddef>
#include <functional>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace bytet5::judge {

// Declared in the column order of the results table.
enum class Dimension { fluency, relevance, coherence, creativity };

inline constexpr std::array<Dimension, 4> kDimensions = {Dimension::fluency, Dimension::relevance,
                                                         Dimension::coherence, Dimension::creativity};

// Bumped whenever the prompt wording changes, so scores from different
// template versions are never mixed.
inline constexpr int kTemplateVersion = 1;

const char* name(Dimension dimension);  // "Fluency", ...
const std::string& rubric(Dimension dimension);
Dimension parse_dimension(std::string_view name);

// Throws ArgumentError when the prompt or response is empty.
std::string build_judge_prompt(std::string_view original_prompt, std::string_view response, Dimension dimension);

// First standalone integer in the reply (an optional sign and ASCII digits
// not touching other letters or digits). Values outside 1..10 are rejected,
// so "11" is a failure rather than a 10.
std::optional<int> parse_score(std::string_view reply);

struct JudgeRequest {
  std::string prompt;
  Dimension dimension = Dimension::fluency;
  std::size_t run = 0;
  std::size_t attempt = 0;
};

// Must tolerate concurrent complete() calls when parallelism > 1. Throws
// TransportError on delivery failure.
class Transport {
 public:
  virtual ~Transport() = default;
  virtual std::string complete(const JudgeRequest& request) = 0;
  virtual std::string model_id() const = 0;
};

// Replies come from a pure function of the request, so results do not
// depend on scheduling.
class MockTransport : public Transport {
 public:
  using Responder = std::function<std::string(const JudgeRequest&)>;

  MockTransport(std::string model, Responder responder);

  // Run r of every dimension answers replies[r % size].
  static MockTransport scripted(std::string model, std::vector<std::string> replies);

  std::string complete(const JudgeRequest& request) override;
  std::string model_id() const override { return model_; }
  std::size_t calls() const;

 private:
  std::string model_;
  Responder responder_;
  mutable std::mutex mutex_;
  std::size_t calls_ = 0;
};

struct EndpointConfig {
  std::string url;  // e.g. http://localhost:8000/v1/chat/completions
  std::string model;
  std::string auth_env = "BYTET5_JUDGE_API_KEY";
  double timeout_s = 60.0;
  double temperature = 1.0;
  double min_interval_s = 0.0;  // per-endpoint rate limit

  // Throws ArgumentError on a malformed URL or empty model.
  void validate() const;
};

// Chat-completion client. Sends
//   {"model": M, "messages": [{"role": "user", "content": PROMPT}], "temperature": T}
// with "Authorization: Bearer $auth_env" when the variable is set, and
// reads choices[0].message.content from the reply.
class HttpTransport : public Transport {
 public:
  explicit HttpTransport(EndpointConfig config);

  std::string complete(const JudgeRequest& request) override;
  std::string model_id() const override { return config_.model; }

 private:
  EndpointConfig config_;
  std::mutex rate_mutex_;
  std::chrono::steady_clock::time_point next_slot_{};
};

struct DimensionVerdict {
  Dimension dimension = Dimension::fluency;
  std::vector<int> scores;  // one per successful run, in run order
  std::size_t failed_runs = 0;
  double mean = 0.0;
  double std = 0.0;  // sample standard deviation, 0 for a single score
  std::vector<std::string> transcripts;  // every reply, in (run, attempt) order
};

struct JudgeVerdict {
  std::string judge_model;
  std::size_t runs = 0;
  std::array<DimensionVerdict, 4> dimensions;

  const DimensionVerdict& at(Dimension d) const { return dimensions[static_cast<std::size_t>(d)]; }
};

struct JudgeOptions {
  std::size_t runs = 5;
  std::size_t retry_limit = 3;  // extra attempts after an unparsable reply
  std::size_t parallelism = 1;
};

double mean(std::span<const int> scores);
double sample_std(std::span<const int> scores);

// Scores each dimension in separate calls. A run whose replies stay
// unparsable after the retries is marked failed; more than half failed runs
// in any dimension throws VerdictError. Transport errors propagate as
// TransportError naming the dimension and run.
JudgeVerdict score_response(Transport& transport, std::string_view original_prompt, std::string_view response,
                            const JudgeOptions& options = {});

struct ScoredResponse {
  std::string model;
  std::string params;
  std::string prompt;
  JudgeVerdict verdict;
};

struct TableCell {
  double mean = 0.0;
  double std = 0.0;
};

struct TableRow {
  std::string model;
  std::string params;
  std::string judge;
  std::size_t prompts = 0;
  std::array<TableCell, 4> cells;
};

// Groups by (model, judge). Cell mean is the grand mean of per-prompt
// means; cell std pools per-prompt variances,
//   sqrt(sum (n_i - 1) s_i^2 / sum (n_i - 1)).
// Rows are sorted by (model, judge) and prompts by text before summing, so
// the result does not depend on input order. Throws ArgumentError on empty
// input.
std::vector<TableRow> aggregate_table(std::span<const ScoredResponse> scored);

// Columns: model,params,judge,<dimension>_mean,<dimension>_std for each
// dimension in table order; two decimals.
std::string table_csv(std::span<const TableRow> rows);

std::string verdict_json(const JudgeVerdict& verdict);

}  // namespace bytet5::judge
