#include <gtest/gtest.h>

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <json.hpp>
#include <sstream>
#include <thread>

#include <httplib.h>

#include "bytet5/error.hpp"
#include "bytet5/judge.hpp"
#include "oracles.hpp"

using namespace bytet5;
using namespace bytet5::judge;

namespace {

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

// Replays the fixture's scores: run r of dimension d answers scores[d][r].
std::vector<ScoredResponse> score_fixture(std::size_t parallelism) {
  const auto fixture = nlohmann::json::parse(read_file(BYTET5_TEST_DATA_DIR "/judge_fixture.json"));
  std::vector<ScoredResponse> out;
  for (const auto& e : fixture["entries"]) {
    MockTransport mock(fixture["judge"], [&](const JudgeRequest& r) {
      return "Score: " + std::to_string(e["scores"][name(r.dimension)][r.run].get<int>());
    });
    JudgeOptions opts;
    opts.parallelism = parallelism;
    out.push_back({e["model"], e["params"], e["prompt"], score_response(mock, e["prompt"].get<std::string>(), "উত্তর", opts)});
  }
  return out;
}

}  // namespace

TEST(Rubric, FourDimensionsWithDefinitions) {
  EXPECT_EQ(kDimensions.size(), 4u);
  EXPECT_NE(rubric(Dimension::fluency).find("grammatical correctness and naturalness"), std::string::npos);
  for (Dimension d : kDimensions) {
    EXPECT_FALSE(rubric(d).empty());
    EXPECT_EQ(parse_dimension(name(d)), d);
  }
  EXPECT_THROW(parse_dimension("humor"), ArgumentError);
}

TEST(BuildJudgePrompt, EmbedsRubricAndInputs) {
  const std::string p = build_judge_prompt("prompt text", "response text", Dimension::fluency);
  EXPECT_NE(p.find(rubric(Dimension::fluency)), std::string::npos);
  EXPECT_NE(p.find("prompt text"), std::string::npos);
  EXPECT_NE(p.find("response text"), std::string::npos);
  EXPECT_NE(p.find("1 and 10"), std::string::npos);
  EXPECT_EQ(p, build_judge_prompt("prompt text", "response text", Dimension::fluency));
  EXPECT_THROW(build_judge_prompt("p", "", Dimension::fluency), ArgumentError);
  EXPECT_THROW(build_judge_prompt("", "r", Dimension::fluency), ArgumentError);
}

TEST(ParseScore, FirstStandaloneIntegerInRange) {
  EXPECT_EQ(parse_score("8"), 8);
  EXPECT_EQ(parse_score("Score: 7/10"), 7);
  EXPECT_EQ(parse_score("I would give it a 10."), 10);
  EXPECT_EQ(parse_score("1"), 1);
  EXPECT_EQ(parse_score("11"), std::nullopt);
  EXPECT_EQ(parse_score("0"), std::nullopt);
  EXPECT_EQ(parse_score("-3"), std::nullopt);
  EXPECT_EQ(parse_score("7.5"), std::nullopt);
  EXPECT_EQ(parse_score("great!"), std::nullopt);
  EXPECT_EQ(parse_score("gpt4 says 6"), 6);
  EXPECT_EQ(parse_score("3rd best, 9"), 9);
  EXPECT_EQ(parse_score(""), std::nullopt);
}

TEST(ScoreResponse, MeanAndSampleStd) {
  MockTransport mock = MockTransport::scripted("mock", {"8", "9", "8", "9", "8"});
  const JudgeVerdict v = score_response(mock, "p", "r");
  for (Dimension d : kDimensions) {
    EXPECT_EQ(v.at(d).scores, (std::vector<int>{8, 9, 8, 9, 8}));
    EXPECT_DOUBLE_EQ(v.at(d).mean, 8.4);
    EXPECT_NEAR(v.at(d).std, testing_oracles::sample_std({8, 9, 8, 9, 8}), 1e-15);
    EXPECT_NEAR(v.at(d).std, 0.5477, 1e-4);
  }
  EXPECT_EQ(v.runs, 5u);
  EXPECT_EQ(mock.calls(), 20u);
}

TEST(ScoreResponse, ConstantScoresHaveZeroStd) {
  MockTransport mock = MockTransport::scripted("mock", {"7"});
  const JudgeVerdict v = score_response(mock, "p", "r");
  EXPECT_EQ(v.at(Dimension::coherence).mean, 7.0);
  EXPECT_EQ(v.at(Dimension::coherence).std, 0.0);
}

TEST(ScoreResponse, RetriesThenSucceeds) {
  MockTransport mock("mock", [](const JudgeRequest& r) { return r.attempt < 2 ? std::string("hmm") : std::string("6"); });
  const JudgeVerdict v = score_response(mock, "p", "r");
  EXPECT_EQ(v.at(Dimension::fluency).scores, (std::vector<int>(5, 6)));
  EXPECT_EQ(v.at(Dimension::fluency).transcripts.size(), 15u);
  EXPECT_EQ(mock.calls(), 4u * 5u * 3u);
}

TEST(ScoreResponse, UnparsableEverywhereIsVerdictError) {
  MockTransport mock = MockTransport::scripted("mock", {"great!"});
  EXPECT_THROW(score_response(mock, "p", "r"), VerdictError);
  // One initial attempt and three retries per run before giving up.
  EXPECT_EQ(mock.calls() % 4, 0u);
}

TEST(ScoreResponse, MinorityOfFailedRunsTolerated) {
  MockTransport mock("mock", [](const JudgeRequest& r) { return r.run < 2 ? std::string("11") : std::string("5"); });
  const JudgeVerdict v = score_response(mock, "p", "r");
  EXPECT_EQ(v.at(Dimension::relevance).failed_runs, 2u);
  EXPECT_EQ(v.at(Dimension::relevance).scores.size(), 3u);
  MockTransport worse("mock", [](const JudgeRequest& r) { return r.run < 3 ? std::string("11") : std::string("5"); });
  EXPECT_THROW(score_response(worse, "p", "r"), VerdictError);
}

TEST(ScoreResponse, TransportErrorCarriesContext) {
  MockTransport mock("mock", [](const JudgeRequest&) -> std::string { throw TransportError("connection refused"); });
  try {
    score_response(mock, "p", "r");
    FAIL() << "expected TransportError";
  } catch (const TransportError& e) {
    EXPECT_NE(std::string(e.what()).find("run 1"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("connection refused"), std::string::npos);
  }
}

TEST(ScoreResponse, ParallelRunsAreReproducible) {
  const auto serial = score_fixture(1);
  const auto parallel = score_fixture(8);
  ASSERT_EQ(serial.size(), parallel.size());
  for (std::size_t i = 0; i < serial.size(); ++i) {
    EXPECT_EQ(verdict_json(serial[i].verdict), verdict_json(parallel[i].verdict));
  }
}

TEST(AggregateTable, SingleVerdictRowEqualsVerdict) {
  MockTransport mock = MockTransport::scripted("mock", {"8", "9", "8", "9", "8"});
  const std::vector<ScoredResponse> one = {{"m", "1M", "p", score_response(mock, "p", "r")}};
  const auto rows = aggregate_table(one);
  ASSERT_EQ(rows.size(), 1u);
  EXPECT_DOUBLE_EQ(rows[0].cells[0].mean, 8.4);
  EXPECT_NEAR(rows[0].cells[0].std, one[0].verdict.at(Dimension::fluency).std, 1e-15);
}

TEST(AggregateTable, GrandMeanOfPromptMeans) {
  MockTransport eight = MockTransport::scripted("j", {"8"});
  MockTransport nine = MockTransport::scripted("j", {"9"});
  const std::vector<ScoredResponse> two = {{"m", "1M", "a", score_response(eight, "a", "r")},
                                           {"m", "1M", "b", score_response(nine, "b", "r")}};
  const auto rows = aggregate_table(two);
  ASSERT_EQ(rows.size(), 1u);
  EXPECT_EQ(rows[0].prompts, 2u);
  EXPECT_DOUBLE_EQ(rows[0].cells[2].mean, 8.5);
  EXPECT_EQ(rows[0].cells[2].std, 0.0);
  EXPECT_THROW(aggregate_table(std::vector<ScoredResponse>{}), ArgumentError);
}

TEST(AggregateTable, FixtureCsvMatchesGoldenAndIgnoresOrder) {
  auto scored = score_fixture(1);
  const std::string golden = read_file(BYTET5_TEST_DATA_DIR "/judge_table_golden.csv");
  EXPECT_EQ(table_csv(aggregate_table(scored)), golden);
  std::reverse(scored.begin(), scored.end());
  EXPECT_EQ(table_csv(aggregate_table(scored)), golden);
}

TEST(HttpTransport, ChatCompletionRoundTripOnLocalServer) {
  httplib::Server server;
  std::string seen_auth;
  nlohmann::json seen_body;
  server.Post("/v1/chat/completions", [&](const httplib::Request& req, httplib::Response& res) {
    seen_auth = req.get_header_value("Authorization");
    seen_body = nlohmann::json::parse(req.body);
    res.set_content(R"({"choices":[{"message":{"role":"assistant","content":"9"}}]})", "application/json");
  });
  server.Post("/broken", [](const httplib::Request&, httplib::Response& res) {
    res.status = 503;
    res.set_content("overloaded", "text/plain");
  });
  const int port = server.bind_to_any_port("127.0.0.1");
  ASSERT_GT(port, 0);
  std::thread th([&] { server.listen_after_bind(); });

  ::setenv("BYTET5_TEST_JUDGE_KEY", "secret", 1);
  EndpointConfig cfg;
  cfg.url = "http://127.0.0.1:" + std::to_string(port) + "/v1/chat/completions";
  cfg.model = "judge-model";
  cfg.auth_env = "BYTET5_TEST_JUDGE_KEY";
  cfg.timeout_s = 5.0;
  HttpTransport transport(cfg);
  const JudgeVerdict v = score_response(transport, "p", "r", {1, 3, 2});
  EXPECT_EQ(v.at(Dimension::creativity).scores, (std::vector<int>{9}));
  EXPECT_EQ(v.judge_model, "judge-model");
  EXPECT_EQ(seen_auth, "Bearer secret");
  EXPECT_EQ(seen_body["model"], "judge-model");
  EXPECT_EQ(seen_body["messages"][0]["role"], "user");

  cfg.url = "http://127.0.0.1:" + std::to_string(port) + "/broken";
  HttpTransport broken(cfg);
  EXPECT_THROW(score_response(broken, "p", "r", {1, 0, 1}), TransportError);

  server.stop();
  th.join();
}

TEST(EndpointConfig, Validation) {
  EndpointConfig cfg;
  cfg.model = "m";
  cfg.url = "ftp://x";
  EXPECT_THROW(cfg.validate(), ArgumentError);
  cfg.url = "https://api.example.test/v1/chat/completions";
  EXPECT_NO_THROW(cfg.validate());
  cfg.model = "";
  EXPECT_THROW(cfg.validate(), ArgumentError);
}
