#include "bytet5/judge.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <json.hpp>
#include <map>
#include <numeric>
#include <thread>
#include <tuple>

#include <httplib.h>

#include "bytet5/error.hpp"

namespace bytet5::judge {

const char* name(Dimension dimension) {
  switch (dimension) {
    case Dimension::fluency:
      return "Fluency";
    case Dimension::relevance:
      return "Relevance";
    case Dimension::coherence:
      return "Coherence";
    case Dimension::creativity:
      return "Creativity";
  }
  return "Unknown";
}

const std::string& rubric(Dimension dimension) {
  static const std::array<std::string, 4> rubrics = {
      "It refers to the grammatical correctness and naturalness of the generated language.",
      "Relevance refers to the contextual alignment with the original prompt.",
      "Coherence signifies the consistency and structure of multi-turn responses.",
      "Creativity is defined as the novelty and expressiveness of the generated response.",
  };
  return rubrics[static_cast<std::size_t>(dimension)];
}

Dimension parse_dimension(std::string_view text) {
  std::string lower(text);
  std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char c) { return std::tolower(c); });
  for (Dimension d : kDimensions) {
    std::string n = name(d);
    std::transform(n.begin(), n.end(), n.begin(), [](unsigned char c) { return std::tolower(c); });
    if (n == lower) {
      return d;
    }
  }
  throw ArgumentError("unknown judge dimension '" + std::string(text) + "'");
}

std::string build_judge_prompt(std::string_view original_prompt, std::string_view response, Dimension dimension) {
  if (original_prompt.empty()) {
    throw ArgumentError("judge prompt requires a non-empty original prompt");
  }
  if (response.empty()) {
    throw ArgumentError("judge prompt requires a non-empty response");
  }
  std::string out;
  out += "You are grading a Bangla text generation system.\n\n";
  out += "Criterion: ";
  out += name(dimension);
  out += "\nDefinition: ";
  out += rubric(dimension);
  out += "\n\nOriginal prompt:\n";
  out += original_prompt;
  out += "\n\nModel response:\n";
  out += response;
  out += "\n\nRate the response on this criterion only, on a scale of 1 to 10 where 10 is best. ";
  out += "Answer with a single integer between 1 and 10 and nothing else.\n";
  return out;
}

std::optional<int> parse_score(std::string_view reply) {
  const auto is_digit = [](char c) { return c >= '0' && c <= '9'; };
  const auto is_alnum = [](char c) { return std::isalnum(static_cast<unsigned char>(c)) != 0; };
  for (std::size_t i = 0; i < reply.size(); ++i) {
    if (!is_digit(reply[i]) || (i > 0 && is_alnum(reply[i - 1]))) {
      continue;
    }
    std::size_t end = i;
    while (end < reply.size() && is_digit(reply[end])) {
      ++end;
    }
    if (end < reply.size() && std::isalpha(static_cast<unsigned char>(reply[end]))) {
      i = end;
      continue;
    }
    // A decimal such as 7.5 is not an integer score.
    if (end + 1 < reply.size() && reply[end] == '.' && is_digit(reply[end + 1])) {
      return std::nullopt;
    }
    const bool negative = i > 0 && reply[i - 1] == '-' && (i < 2 || !is_alnum(reply[i - 2]));
    if (negative || end - i > 2) {
      return std::nullopt;
    }
    const int value = std::stoi(std::string(reply.substr(i, end - i)));
    if (value < 1 || value > 10) {
      return std::nullopt;
    }
    return value;
  }
  return std::nullopt;
}

MockTransport::MockTransport(std::string model, Responder responder)
    : model_(std::move(model)), responder_(std::move(responder)) {}

MockTransport MockTransport::scripted(std::string model, std::vector<std::string> replies) {
  if (replies.empty()) {
    throw ArgumentError("scripted mock needs at least one reply");
  }
  return MockTransport(std::move(model), [replies = std::move(replies)](const JudgeRequest& r) {
    return replies[r.run % replies.size()];
  });
}

std::string MockTransport::complete(const JudgeRequest& request) {
  {
    std::lock_guard<std::mutex> lock(mutex_);
    ++calls_;
  }
  return responder_(request);
}

std::size_t MockTransport::calls() const {
  std::lock_guard<std::mutex> lock(mutex_);
  return calls_;
}

namespace {

struct ParsedUrl {
  std::string origin;  // scheme://host[:port]
  std::string path;
};

ParsedUrl parse_url(const std::string& url) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) {
    throw ArgumentError("judge endpoint url '" + url + "' needs an http:// or https:// scheme");
  }
  const std::string scheme = url.substr(0, scheme_end);
  if (scheme != "http" && scheme != "https") {
    throw ArgumentError("judge endpoint url '" + url + "' needs an http:// or https:// scheme");
  }
  const auto path_start = url.find('/', scheme_end + 3);
  ParsedUrl out;
  out.origin = url.substr(0, path_start);
  out.path = path_start == std::string::npos ? "/" : url.substr(path_start);
  if (out.origin.size() <= scheme_end + 3) {
    throw ArgumentError("judge endpoint url '" + url + "' has no host");
  }
  return out;
}

}  // namespace

void EndpointConfig::validate() const {
  parse_url(url);
  if (model.empty()) {
    throw ArgumentError("judge endpoint model must be set");
  }
  if (!(timeout_s > 0.0)) {
    throw ArgumentError("judge timeout must be > 0");
  }
  if (min_interval_s < 0.0) {
    throw ArgumentError("judge min_interval_s must be >= 0");
  }
}

HttpTransport::HttpTransport(EndpointConfig config) : config_(std::move(config)) { config_.validate(); }

std::string HttpTransport::complete(const JudgeRequest& request) {
  if (config_.min_interval_s > 0.0) {
    std::chrono::steady_clock::time_point slot;
    {
      std::lock_guard<std::mutex> lock(rate_mutex_);
      const auto now = std::chrono::steady_clock::now();
      slot = std::max(now, next_slot_);
      next_slot_ = slot + std::chrono::duration_cast<std::chrono::steady_clock::duration>(
                              std::chrono::duration<double>(config_.min_interval_s));
    }
    std::this_thread::sleep_until(slot);
  }

  const ParsedUrl url = parse_url(config_.url);
  httplib::Client client(url.origin);
  const auto timeout = std::chrono::duration_cast<std::chrono::microseconds>(
      std::chrono::duration<double>(config_.timeout_s));
  client.set_connection_timeout(timeout);
  client.set_read_timeout(timeout);
  client.set_write_timeout(timeout);

  httplib::Headers headers;
  if (const char* key = std::getenv(config_.auth_env.c_str()); key != nullptr && *key != '\0') {
    headers.emplace("Authorization", std::string("Bearer ") + key);
  }
  const nlohmann::json body = {
      {"model", config_.model},
      {"messages", nlohmann::json::array({{{"role", "user"}, {"content", request.prompt}}})},
      {"temperature", config_.temperature},
  };
  const auto result = client.Post(url.path, headers, body.dump(), "application/json");
  if (!result) {
    throw TransportError("judge request to " + config_.url + " failed: " + httplib::to_string(result.error()));
  }
  if (result->status < 200 || result->status >= 300) {
    throw TransportError("judge endpoint " + config_.url + " returned HTTP " + std::to_string(result->status) +
                         ": " + result->body.substr(0, 200));
  }
  try {
    const auto reply = nlohmann::json::parse(result->body);
    return reply.at("choices").at(0).at("message").at("content").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw TransportError("judge endpoint " + config_.url + " sent an unexpected body: " + e.what());
  }
}

double mean(std::span<const int> scores) {
  if (scores.empty()) {
    return 0.0;
  }
  return static_cast<double>(std::accumulate(scores.begin(), scores.end(), 0L)) / static_cast<double>(scores.size());
}

double sample_std(std::span<const int> scores) {
  if (scores.size() < 2) {
    return 0.0;
  }
  const double m = mean(scores);
  double ss = 0.0;
  for (int s : scores) {
    ss += (s - m) * (s - m);
  }
  return std::sqrt(ss / static_cast<double>(scores.size() - 1));
}

namespace {

struct RunOutcome {
  std::optional<int> score;
  std::vector<std::string> transcripts;
};

RunOutcome judge_one_run(Transport& transport, const std::string& prompt, Dimension dimension, std::size_t run,
                         std::size_t retry_limit) {
  RunOutcome outcome;
  for (std::size_t attempt = 0; attempt <= retry_limit; ++attempt) {
    std::string reply;
    try {
      reply = transport.complete({prompt, dimension, run, attempt});
    } catch (const TransportError& e) {
      throw TransportError(std::string(name(dimension)) + " run " + std::to_string(run + 1) + ": " + e.what());
    }
    outcome.score = parse_score(reply);
    outcome.transcripts.push_back(std::move(reply));
    if (outcome.score) {
      break;
    }
  }
  return outcome;
}

}  // namespace

JudgeVerdict score_response(Transport& transport, std::string_view original_prompt, std::string_view response,
                            const JudgeOptions& options) {
  if (options.runs < 1) {
    throw ArgumentError("judge runs must be >= 1");
  }
  std::array<std::string, 4> prompts;
  for (Dimension d : kDimensions) {
    prompts[static_cast<std::size_t>(d)] = build_judge_prompt(original_prompt, response, d);
  }

  const std::size_t tasks = kDimensions.size() * options.runs;
  std::vector<RunOutcome> outcomes(tasks);
  std::vector<std::exception_ptr> errors(tasks);
  std::atomic<std::size_t> next{0};
  auto worker = [&]() {
    for (std::size_t t = next++; t < tasks; t = next++) {
      const std::size_t dim = t / options.runs;
      const std::size_t run = t % options.runs;
      try {
        outcomes[t] = judge_one_run(transport, prompts[dim], kDimensions[dim], run, options.retry_limit);
      } catch (...) {
        errors[t] = std::current_exception();
      }
    }
  };
  const std::size_t workers = std::clamp<std::size_t>(options.parallelism, 1, tasks);
  if (workers == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t i = 0; i < workers; ++i) {
      pool.emplace_back(worker);
    }
    for (auto& th : pool) {
      th.join();
    }
  }
  for (const auto& e : errors) {
    if (e) {
      std::rethrow_exception(e);
    }
  }

  JudgeVerdict verdict;
  verdict.judge_model = transport.model_id();
  verdict.runs = options.runs;
  for (Dimension d : kDimensions) {
    const std::size_t dim = static_cast<std::size_t>(d);
    DimensionVerdict& dv = verdict.dimensions[dim];
    dv.dimension = d;
    for (std::size_t run = 0; run < options.runs; ++run) {
      RunOutcome& o = outcomes[dim * options.runs + run];
      if (o.score) {
        dv.scores.push_back(*o.score);
      } else {
        ++dv.failed_runs;
      }
      for (auto& t : o.transcripts) {
        dv.transcripts.push_back(std::move(t));
      }
    }
    if (2 * dv.failed_runs > options.runs) {
      throw VerdictError(std::string(name(d)) + ": " + std::to_string(dv.failed_runs) + " of " +
                         std::to_string(options.runs) + " runs had no parsable score after " +
                         std::to_string(options.retry_limit) + " retries");
    }
    dv.mean = mean(dv.scores);
    dv.std = sample_std(dv.scores);
  }
  return verdict;
}

std::vector<TableRow> aggregate_table(std::span<const ScoredResponse> scored) {
  if (scored.empty()) {
    throw ArgumentError("aggregate_table requires at least one verdict");
  }
  using Key = std::pair<std::string, std::string>;  // model, judge
  std::map<Key, std::vector<const ScoredResponse*>> groups;
  for (const auto& s : scored) {
    groups[{s.model, s.verdict.judge_model}].push_back(&s);
  }

  std::vector<TableRow> rows;
  for (auto& [key, members] : groups) {
    std::sort(members.begin(), members.end(), [](const ScoredResponse* a, const ScoredResponse* b) {
      return std::tie(a->prompt, a->params) < std::tie(b->prompt, b->params);
    });
    TableRow row;
    row.model = key.first;
    row.judge = key.second;
    row.params = members.front()->params;
    row.prompts = members.size();
    for (Dimension d : kDimensions) {
      double mean_sum = 0.0;
      double weighted_var = 0.0;
      double dof = 0.0;
      for (const ScoredResponse* m : members) {
        const DimensionVerdict& dv = m->verdict.at(d);
        mean_sum += dv.mean;
        if (dv.scores.size() > 1) {
          const double n1 = static_cast<double>(dv.scores.size() - 1);
          weighted_var += n1 * dv.std * dv.std;
          dof += n1;
        }
      }
      TableCell& cell = row.cells[static_cast<std::size_t>(d)];
      cell.mean = mean_sum / static_cast<double>(members.size());
      cell.std = dof > 0.0 ? std::sqrt(weighted_var / dof) : 0.0;
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

namespace {

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) {
    return s;
  }
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') {
      out += '"';
    }
    out += c;
  }
  return out + "\"";
}

std::string fixed2(double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.2f", x);
  return buf;
}

std::string lower(const char* s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return std::tolower(c); });
  return out;
}

}  // namespace

std::string table_csv(std::span<const TableRow> rows) {
  std::string out = "model,params,judge";
  for (Dimension d : kDimensions) {
    out += "," + lower(name(d)) + "_mean," + lower(name(d)) + "_std";
  }
  out += "\n";
  for (const TableRow& row : rows) {
    out += csv_field(row.model) + "," + csv_field(row.params) + "," + csv_field(row.judge);
    for (const TableCell& cell : row.cells) {
      out += "," + fixed2(cell.mean) + "," + fixed2(cell.std);
    }
    out += "\n";
  }
  return out;
}

std::string verdict_json(const JudgeVerdict& verdict) {
  nlohmann::json j;
  j["judge_model"] = verdict.judge_model;
  j["runs"] = verdict.runs;
  j["template_version"] = kTemplateVersion;
  for (const DimensionVerdict& dv : verdict.dimensions) {
    j["dimensions"][name(dv.dimension)] = {
        {"scores", dv.scores},       {"failed_runs", dv.failed_runs}, {"mean", dv.mean},
        {"std", dv.std},             {"transcripts", dv.transcripts},
    };
  }
  return j.dump();
}

}  // namespace bytet5::judge
