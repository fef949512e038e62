#include <gtest/gtest.h>

#include <atomic>
#include <cmath>
#include <random>

#include <nlohmann/json.hpp>

#include "ragit/error.hpp"
#include "ragit/evalkit.hpp"
#include "ragit/prompts.hpp"
#include "support/fake_backend.hpp"
#include "support/test_support.hpp"

using namespace ragit;
using nlohmann::json;
using testkit::fixture;

namespace {

ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "expected an Error";
  return ErrorCode::IoError;
}

EvalCase dividend_case() {
  EvalCase c;
  c.case_id = "avgo-div";
  c.question = "What quarterly dividend did Broadcom declare?";
  c.ground_truth = "A quarterly dividend of $4.60 per share.";
  c.generated = {{"exact", "A quarterly dividend of $4.60 per share."},
                 {"numeric", "They declared 4.60 dollars."},
                 {"wrong", "Broadcom did not say."}};
  return c;
}

}  // namespace

TEST(ParseScore, TakesLastScoreLine) {
  EXPECT_EQ(parse_score("Score: 7"), 7);
  EXPECT_EQ(parse_score("Close match.\nScore: 10"), 10);
  EXPECT_EQ(parse_score("Score: 2\nOn reflection...\nScore: 6\n"), 6);
  EXPECT_EQ(parse_score("rationale\n  Score:   3  "), 3);
}

TEST(ParseScore, RejectsWithoutClamping) {
  for (const char* bad : {"", "no verdict", "Score: 0", "Score: 11", "Score: -3", "Score: 7.5",
                          "Score: seven", "Score:", "Score: 99999999999999999999"}) {
    EXPECT_EQ(code_of([&] { parse_score(bad); }), ErrorCode::UnparseableVerdict) << bad;
  }
}

TEST(ParseScore, FuzzedCompletionsNeverLeaveRange) {
  std::mt19937_64 rng(2024);
  const std::string alphabet = "Score: 0123456789-.\n abcxyz";
  std::uniform_int_distribution<std::size_t> len(0, 40);
  std::uniform_int_distribution<std::size_t> pick(0, alphabet.size() - 1);
  std::uniform_int_distribution<int> score(1, 10);
  for (int i = 0; i < 500; ++i) {
    std::string s;
    for (std::size_t n = len(rng); n > 0; --n) s += alphabet[pick(rng)];
    const bool planted = i % 2 == 0;
    const int want = score(rng);
    if (planted) s += "\nScore: " + std::to_string(want);
    try {
      const int got = parse_score(s);
      EXPECT_GE(got, 1);
      EXPECT_LE(got, 10);
      if (planted) EXPECT_EQ(got, want) << s;
    } catch (const Error& e) {
      EXPECT_FALSE(planted) << s;
      EXPECT_EQ(e.code(), ErrorCode::UnparseableVerdict);
    }
  }
}

TEST(JudgePrompt, VersionedSections) {
  const auto p = prompts::render_judge_prompt("Q?", "truth", "cand");
  const auto q = p.find("[Question]");
  const auto t = p.find("[Ground Truth]");
  const auto c = p.find("[Candidate]");
  const auto e = p.find("[End]");
  ASSERT_NE(q, std::string::npos);
  EXPECT_LT(q, t);
  EXPECT_LT(t, c);
  EXPECT_LT(c, e);
  EXPECT_NE(p.find("Score: <n>"), std::string::npos);
}

TEST(Judge, StubScoresExactNumericAndWrong) {
  Gateway gw(testkit::stub_config());
  const auto c = dividend_case();
  EXPECT_EQ(judge_correctness(c, "exact", gw, "gpt-4").correctness, 10);
  EXPECT_EQ(judge_correctness(c, "numeric", gw, "gpt-4").correctness, 7);
  EXPECT_EQ(judge_correctness(c, "wrong", gw, "gpt-4").correctness, 3);
  EXPECT_EQ(code_of([&] { judge_correctness(c, "absent", gw, "gpt-4"); }), ErrorCode::InvalidParams);
  const auto req_log = gw.call_log();
  EXPECT_EQ(req_log.front().model_id, "gpt-4");
}

TEST(Judge, ReasksThenGivesUp) {
  testkit::FakeBackend fake;
  std::atomic<int> calls{0};
  std::atomic<int> answer_after{1};
  fake.server().Post("/v1/chat/completions", [&](const httplib::Request& req, httplib::Response& res) {
    const auto body = json::parse(req.body);
    EXPECT_EQ(body.at("temperature").get<double>(), 0.0);
    const int n = calls++;
    res.set_content(testkit::completion(n >= answer_after ? "Fine.\nScore: 8" : "Looks right to me."),
                    "application/json");
  });
  Gateway gw(fake.config());
  const auto c = dividend_case();
  EXPECT_EQ(judge_correctness(c, "exact", gw, "gpt-4").correctness, 8);
  EXPECT_EQ(calls.load(), 2);

  calls = 0;
  answer_after = 100;
  EXPECT_EQ(code_of([&] { judge_correctness(c, "exact", gw, "gpt-4"); }), ErrorCode::UnparseableVerdict);
  EXPECT_EQ(calls.load(), 3);
}

TEST(Distance, ExactValues) {
  EXPECT_NEAR(cosine_distance(EmbeddingVector{{1, 0}}, EmbeddingVector{{0, 1}}), 1.0, 1e-12);
  EXPECT_NEAR(cosine_distance(EmbeddingVector{{1, 0}}, EmbeddingVector{{-1, 0}}), 2.0, 1e-12);
  EXPECT_NEAR(cosine_distance(EmbeddingVector{{3, 4}}, EmbeddingVector{{6, 8}}), 0.0, 1e-7);
  EXPECT_EQ(code_of([] { cosine_distance(EmbeddingVector{{0, 0}}, EmbeddingVector{{1, 0}}); }),
            ErrorCode::ZeroVector);
}

// Identity, symmetry and range over 1000 random text pairs.
TEST(Distance, MetricProperties) {
  Gateway gw(testkit::stub_config());
  std::mt19937_64 rng(99);
  for (int i = 0; i < 1000; ++i) {
    const auto a = testkit::random_words(rng, 1, 30);
    const auto b = testkit::random_words(rng, 1, 30);
    const double ab = semantic_distance(a, b, gw);
    const double ba = semantic_distance(b, a, gw);
    EXPECT_NEAR(semantic_distance(a, a, gw), 0.0, 1e-6);
    EXPECT_NEAR(ab, ba, 1e-12);
    EXPECT_GE(ab, 0.0);
    EXPECT_LE(ab, 2.0);
  }
  EXPECT_EQ(code_of([&] { semantic_distance("", "x", gw); }), ErrorCode::InvalidParams);
}

TEST(Aggregate, MeansAreLinear) {
  std::mt19937_64 rng(5);
  std::uniform_int_distribution<int> score(1, 10);
  std::uniform_real_distribution<double> dist(0.0, 2.0);
  std::vector<EvalRecord> a, b;
  for (int i = 0; i < 40; ++i) {
    a.push_back({"c" + std::to_string(i), "m", score(rng), dist(rng), ""});
    b.push_back({"c" + std::to_string(i + 40), "m", score(rng), dist(rng), ""});
  }
  auto both = a;
  both.insert(both.end(), b.begin(), b.end());
  const auto sa = aggregate(a).at(0);
  const auto sb = aggregate(b).at(0);
  const auto sab = aggregate(both).at(0);
  EXPECT_EQ(sab.n_cases, 80u);
  EXPECT_NEAR(sab.mean_correctness, (sa.mean_correctness + sb.mean_correctness) / 2, 1e-12);
  EXPECT_NEAR(sab.mean_semantic_distance, (sa.mean_semantic_distance + sb.mean_semantic_distance) / 2,
              1e-12);
  EXPECT_EQ(code_of([] { aggregate({}); }), ErrorCode::InvalidParams);
}

// records.jsonl holds per-case scores whose means were checked against the
// printed cells by the fixture generator.
TEST(Comparison, ComparisonCells) {
  const auto records = read_records_jsonl(fixture("model_comparison/records.jsonl"));
  ASSERT_EQ(records.size(), 30u);
  const auto summaries = aggregate(records);
  ASSERT_EQ(summaries.size(), 3u);
  const auto report = render_comparison(summaries);
  const auto expected = json::parse(read_file(fixture("model_comparison/expected.json")));
  for (const auto& [model, cells] : expected.items()) {
    const auto line_at = report.table.find(model);
    ASSERT_NE(line_at, std::string::npos) << model;
    const auto line = report.table.substr(line_at, report.table.find('\n', line_at) - line_at);
    EXPECT_NE(line.find(cells.at("correctness").get<std::string>()), std::string::npos) << line;
    EXPECT_NE(line.find(cells.at("semantic_distance").get<std::string>()), std::string::npos) << line;
  }
  const auto back = summaries_from_json(json::parse(report.json.dump()));
  EXPECT_EQ(back, summaries);
}

TEST(Evaluate, SortedAndWorkerIndependent) {
  Gateway gw(testkit::stub_config());
  std::vector<EvalCase> cases;
  for (int i = 0; i < 6; ++i) {
    auto c = dividend_case();
    c.case_id = "case-" + std::to_string(5 - i);
    cases.push_back(c);
  }
  const auto one = evaluate(cases, gw, "gpt-4", 1);
  const auto four = evaluate(cases, gw, "gpt-4", 4);
  EXPECT_EQ(one, four);
  ASSERT_EQ(one.size(), 18u);
  EXPECT_EQ(one.front().model_name, "exact");
  EXPECT_EQ(one.front().case_id, "case-0");
  for (std::size_t i = 1; i < one.size(); ++i) {
    EXPECT_LE(std::tie(one[i - 1].model_name, one[i - 1].case_id),
              std::tie(one[i].model_name, one[i].case_id));
  }
  for (const auto& r : one) {
    if (r.model_name == "exact") EXPECT_NEAR(r.semantic_distance, 0.0, 1e-6);
  }
}

TEST(Records, JsonRoundTrip) {
  testkit::TempDir dir;
  const EvalRecord r{"c1", "m", 9, 0.125, "Score: 9"};
  write_file(dir / "r.jsonl", to_json(r).dump() + "\n");
  EXPECT_EQ(read_records_jsonl(dir / "r.jsonl"), std::vector<EvalRecord>{r});
  EXPECT_EQ(code_of([] { eval_case_from_json(json{{"case_id", "x"}}); }), ErrorCode::InvalidParams);
}
