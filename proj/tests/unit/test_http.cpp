#include <gtest/gtest.h>

#include <thread>

#include <nlohmann/json.hpp>

#include "ragit/analyst_http.hpp"
#include "support/service_harness.hpp"

using namespace ragit;
using nlohmann::json;
using testkit::ServiceHarness;

namespace {

ServiceHarness& harness() {
  static ServiceHarness h;
  return h;
}

}  // namespace

TEST(HttpStatus, ErrorCodeMapping) {
  EXPECT_EQ(http_status(ErrorCode::InvalidParams), 400);
  EXPECT_EQ(http_status(ErrorCode::NotFound), 404);
  EXPECT_EQ(http_status(ErrorCode::NoRelevantDocuments), 404);
  EXPECT_EQ(http_status(ErrorCode::DuplicateName), 409);
  EXPECT_EQ(http_status(ErrorCode::BaselineDeletionForbidden), 409);
  EXPECT_EQ(http_status(ErrorCode::BackendUnavailable), 503);
  EXPECT_EQ(http_status(ErrorCode::EmptyIndex), 503);
  EXPECT_EQ(http_status(ErrorCode::CorruptFile), 500);
}

TEST(Http, HealthAndRequestIds) {
  auto& h = harness();
  auto r = h.call("GET", "/v1/health");
  EXPECT_EQ(r.status, 200);
  EXPECT_EQ(r.body.at("status"), "ok");
  EXPECT_FALSE(r.body.at("request_id").get<std::string>().empty());
  EXPECT_EQ(r.request_id_header, r.body.at("request_id"));
  r = h.call("GET", "/v1/health", nullptr, {{"X-Request-Id", "trace-42"}});
  EXPECT_EQ(r.body.at("request_id"), "trace-42");
}

TEST(Http, KpiCrudAndAudit) {
  auto& h = harness();
  auto r = h.call("GET", "/v1/kpis");
  ASSERT_EQ(r.status, 200);
  const auto initial = r.body.at("kpis").size();
  EXPECT_GE(initial, 7u);

  const json def = {{"name", "Order backlog"},
                    {"description", "Backlog at quarter end."},
                    {"extraction_query_template", "What was the order backlog of {company}?"},
                    {"unit_hint", "USD billions"}};
  r = h.call("POST", "/v1/kpis", def, {{"X-Analyst", "alice"}});
  ASSERT_EQ(r.status, 201) << r.body.dump();
  const auto id = r.body.at("kpi").at("kpi_id").get<std::string>();
  EXPECT_EQ(r.body.at("kpi").at("origin"), "analyst");

  r = h.call("POST", "/v1/kpis", def);
  EXPECT_EQ(r.status, 409);
  EXPECT_EQ(r.body.at("code"), "DuplicateName");

  r = h.call("GET", "/v1/kpis/" + id);
  EXPECT_EQ(r.status, 200);
  EXPECT_EQ(r.body.at("kpi").at("name"), "Order backlog");

  r = h.call("PUT", "/v1/kpis/" + id, json{{"unit_hint", "USD millions"}}, {{"X-Analyst", "bob"}});
  EXPECT_EQ(r.status, 200);
  EXPECT_TRUE(r.body.at("changed").get<bool>());
  EXPECT_EQ(r.body.at("kpi").at("unit_hint"), "USD millions");
  r = h.call("PUT", "/v1/kpis/" + id, json{{"unit_hint", "USD millions"}});
  EXPECT_FALSE(r.body.at("changed").get<bool>());

  r = h.call("DELETE", "/v1/kpis/" + id, nullptr, {{"X-Analyst", "carol"}});
  EXPECT_EQ(r.status, 200);
  EXPECT_EQ(h.call("GET", "/v1/kpis/" + id).status, 404);
  EXPECT_EQ(h.call("DELETE", "/v1/kpis/" + id).status, 404);

  r = h.call("DELETE", "/v1/kpis/kpi-revenue");
  EXPECT_EQ(r.status, 409);
  EXPECT_EQ(r.body.at("code"), "BaselineDeletionForbidden");
  EXPECT_FALSE(r.body.at("message").get<std::string>().empty());

  r = h.call("GET", "/v1/audit");
  ASSERT_EQ(r.status, 200);
  std::vector<std::string> who;
  for (const auto& a : r.body.at("audit")) {
    if (a.at("kpi_id") == id) who.push_back(a.at("who"));
  }
  EXPECT_EQ(who, (std::vector<std::string>{"alice", "bob", "carol"}));
}

TEST(Http, BadRequests) {
  auto& h = harness();
  auto r = h.call_raw("POST", "/v1/kpis", "{not json");
  EXPECT_EQ(r.status, 400);
  EXPECT_TRUE(r.body.contains("request_id"));
  r = h.call("POST", "/v1/kpis", json{{"name", "No template"}});
  EXPECT_EQ(r.status, 400);
  r = h.call("POST", "/v1/ask", json{{"company", "AVGO"}});
  EXPECT_EQ(r.status, 400);
  r = h.call("POST", "/v1/ask", json{{"question", "x?"}, {"k", 0}});
  EXPECT_EQ(r.status, 400);
  EXPECT_EQ(h.call("GET", "/v1/reports/rpt-missing").status, 404);
}

TEST(Http, AskIsGrounded) {
  auto& h = harness();
  auto r = h.call("POST", "/v1/ask",
                  json{{"question", "What is Broadcom Inc.?"}, {"company", "AVGO"},
                       {"fiscal_period", "2023Q3"}, {"k", 3}});
  ASSERT_EQ(r.status, 200) << r.body.dump();
  EXPECT_FALSE(r.body.at("abstained").get<bool>());
  ASSERT_EQ(r.body.at("hits").size(), 3u);
  std::string context;
  for (const auto& hit : r.body.at("hits")) context += hit.at("text").get<std::string>() + "\n";
  const auto answer = r.body.at("answer").get<std::string>();
  const auto first = answer.substr(0, answer.find(". ") + 1);
  EXPECT_NE(context.find(first), std::string::npos) << answer;
}

TEST(Http, DividendKpiAnsweredWithFourSixty) {
  auto& h = harness();
  auto r = h.call("POST", "/v1/kpis/evaluate", json{{"company", "AVGO"}, {"fiscal_period", "2023Q3"}});
  ASSERT_EQ(r.status, 200) << r.body.dump();
  bool seen = false;
  for (const auto& res : r.body.at("results")) {
    if (res.at("kpi_id") != "kpi-dividend") continue;
    seen = true;
    EXPECT_EQ(res.at("status"), "answered");
    EXPECT_NE(res.at("answer_text").get<std::string>().find("4.60"), std::string::npos);
  }
  EXPECT_TRUE(seen);
}

TEST(Http, ReportWithSixOrderedSections) {
  auto& h = harness();
  auto r = h.call("POST", "/v1/reports", json{{"company", "AVGO"}, {"fiscal_period", "2023Q3"}});
  ASSERT_EQ(r.status, 201) << r.body.dump();
  const auto& report = r.body.at("report");
  const std::vector<std::string> order = {"company_core_information", "key_financial_indicators",
                                          "comparison", "outlook", "summary", "analysis"};
  ASSERT_EQ(report.at("sections").size(), 6u);
  for (std::size_t i = 0; i < 6; ++i) EXPECT_EQ(report.at("sections")[i].at("seed_type"), order[i]);
  const auto id = report.at("report_id").get<std::string>();

  r = h.call("GET", "/v1/reports/" + id);
  EXPECT_EQ(r.status, 200);
  EXPECT_EQ(r.body.at("report").at("report_id"), id);
  r = h.call("GET", "/v1/reports");
  bool listed = false;
  for (const auto& entry : r.body.at("reports")) listed |= entry.at("report_id") == id;
  EXPECT_TRUE(listed);
}

TEST(Http, UnknownCompanyReportsMissingDocuments) {
  auto& h = harness();
  auto r = h.call("POST", "/v1/kpis/evaluate", json{{"company", "NVDA"}, {"fiscal_period", "2023Q3"}});
  ASSERT_EQ(r.status, 200);
  for (const auto& res : r.body.at("results")) EXPECT_EQ(res.at("status"), "not_found");
}

TEST(Http, ConcurrentAsks) {
  auto& h = harness();
  std::vector<std::thread> threads;
  std::atomic<int> ok{0};
  for (int i = 0; i < 6; ++i) {
    threads.emplace_back([&] {
      httplib::Client c("127.0.0.1", h.port());
      auto res = c.Post("/v1/ask", json{{"question", "What was the revenue?"}, {"company", "AVGO"}}.dump(),
                        "application/json");
      if (res && res->status == 200) ++ok;
    });
  }
  for (auto& t : threads) t.join();
  EXPECT_EQ(ok.load(), 6);
}

TEST(Http, BindFailureIsIoError) {
  auto& h = harness();
  Gateway gw(testkit::stub_config());
  VectorIndex idx(64);
  auto reg = KpiRegistry::from_baseline(testkit::data_file("baseline_kpis.json"));
  ReportStore store;
  AnalystService svc(idx, gw, reg, store);
  AnalystHttpServer server(svc);
  try {
    server.bind("127.0.0.1", h.port());
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::IoError);
  }
}

TEST(Http, EmptyIndexIsServiceUnavailable) {
  Gateway gw(testkit::stub_config());
  VectorIndex idx(64);
  auto reg = KpiRegistry::from_baseline(testkit::data_file("baseline_kpis.json"));
  ReportStore store;
  AnalystService svc(idx, gw, reg, store);
  AnalystHttpServer server(svc);
  const int port = server.bind_to_any_port();
  std::thread t([&] { server.listen(); });
  server.wait_until_ready();
  httplib::Client c("127.0.0.1", port);
  auto res = c.Post("/v1/ask", json{{"question", "Revenue?"}}.dump(), "application/json");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 503);
  EXPECT_EQ(json::parse(res->body).at("code"), "EmptyIndex");
  server.stop();
  t.join();
}
