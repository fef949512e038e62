#include <gtest/gtest.h>

#include <thread>

#include <nlohmann/json.hpp>

#include "ragit/analyst.hpp"
#include "ragit/error.hpp"
#include "support/test_support.hpp"

using namespace ragit;
using testkit::data_file;

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

KpiDefinition kpi(std::string name, std::string tmpl = "What was the backlog of {company}?") {
  KpiDefinition k;
  k.name = std::move(name);
  k.description = "d";
  k.extraction_query_template = std::move(tmpl);
  k.unit_hint = "USD";
  return k;
}

KpiRegistry baseline() { return KpiRegistry::from_baseline(data_file("baseline_kpis.json")); }

const KpiResult& result_for(const std::vector<KpiResult>& rs, const std::string& id) {
  for (const auto& r : rs) {
    if (r.kpi_id == id) return r;
  }
  throw std::runtime_error("no result for " + id);
}

class BroadcomTest : public ::testing::Test {
 protected:
  Gateway gw{testkit::stub_config()};
  VectorIndex idx = testkit::broadcom_index(gw);
};

}  // namespace

TEST(KpiRegistry, SevenBaselineKpis) {
  const auto reg = baseline();
  const auto list = reg.list();
  ASSERT_EQ(list.size(), 7u);
  for (const auto& k : list) {
    EXPECT_EQ(k.origin, KpiOrigin::Baseline);
    EXPECT_TRUE(k.enabled);
  }
  EXPECT_TRUE(reg.get("kpi-dividend").has_value());
  EXPECT_TRUE(reg.audit().empty());
}

TEST(KpiRegistry, CrudWithAudit) {
  auto reg = baseline();
  const auto created = reg.create(kpi("Backlog"), "alice");
  EXPECT_EQ(created.kpi_id, "kpi-backlog");
  EXPECT_EQ(created.origin, KpiOrigin::Analyst);
  ASSERT_EQ(reg.list().size(), 8u);

  auto edited = created;
  edited.description = "Order backlog at quarter end.";
  EXPECT_TRUE(reg.update(created.kpi_id, edited, "bob"));
  EXPECT_FALSE(reg.update(created.kpi_id, edited, "bob"));  // no-op
  EXPECT_EQ(reg.get(created.kpi_id)->description, "Order backlog at quarter end.");

  reg.remove(created.kpi_id, "carol");
  EXPECT_FALSE(reg.get(created.kpi_id).has_value());

  const auto audit = reg.audit();
  ASSERT_EQ(audit.size(), 3u);
  EXPECT_EQ(audit[0].action, "create");
  EXPECT_EQ(audit[0].who, "alice");
  EXPECT_TRUE(audit[0].before.is_null());
  EXPECT_EQ(audit[1].action, "update");
  EXPECT_EQ(audit[1].before.at("description"), "d");
  EXPECT_EQ(audit[1].after.at("description"), "Order backlog at quarter end.");
  EXPECT_EQ(audit[2].action, "delete");
  EXPECT_TRUE(audit[2].after.is_null());
  for (std::size_t i = 0; i < audit.size(); ++i) EXPECT_EQ(audit[i].seq, i + 1);
}

TEST(KpiRegistry, ValidationErrors) {
  auto reg = baseline();
  EXPECT_EQ(code_of([&] { reg.create(kpi("Revenue"), "a"); }), ErrorCode::DuplicateName);
  EXPECT_EQ(code_of([&] { reg.create(kpi(""), "a"); }), ErrorCode::InvalidParams);
  EXPECT_EQ(code_of([&] { reg.create(kpi("X", "Revenue of {ticker}?"), "a"); }), ErrorCode::InvalidParams);
  EXPECT_EQ(code_of([&] { reg.update("kpi-nope", kpi("X"), "a"); }), ErrorCode::NotFound);
  EXPECT_EQ(code_of([&] { reg.remove("kpi-nope", "a"); }), ErrorCode::NotFound);
  EXPECT_EQ(code_of([&] { reg.remove("kpi-revenue", "a"); }), ErrorCode::BaselineDeletionForbidden);
  EXPECT_TRUE(reg.audit().empty());

  // A disabled KPI frees its name.
  auto rev = *reg.get("kpi-revenue");
  rev.enabled = false;
  EXPECT_TRUE(reg.update("kpi-revenue", rev, "a"));
  const auto again = reg.create(kpi("Revenue"), "a");
  EXPECT_EQ(again.kpi_id, "kpi-revenue-2");
}

TEST(KpiRegistry, PersistsAcrossReopen) {
  testkit::TempDir dir;
  {
    auto reg = KpiRegistry::open(dir / "kpis.json", data_file("baseline_kpis.json"));
    reg.create(kpi("Backlog"), "alice");
  }
  const auto reg = KpiRegistry::open(dir / "kpis.json", data_file("baseline_kpis.json"));
  EXPECT_EQ(reg.list().size(), 8u);
  EXPECT_EQ(reg.audit().size(), 1u);
}

TEST_F(BroadcomTest, AskIsGroundedInRetrievedChunks) {
  const auto r = ask("What is Broadcom Inc.?", "AVGO", "2023Q3", 4, gw, idx, "m");
  EXPECT_FALSE(r.abstained) << r.answer;
  ASSERT_EQ(r.hits.size(), 4u);
  // Every sentence of the answer appears verbatim in a retrieved chunk.
  std::string all;
  for (const auto& h : r.hits) all += h.entry.text + "\n";
  const auto first_sentence = r.answer.substr(0, r.answer.find(". ") + 1);
  EXPECT_NE(all.find(first_sentence), std::string::npos) << r.answer;
  EXPECT_EQ(ask("What is Broadcom Inc.?", "AVGO", "2023Q3", 1, gw, idx, "m").hits.size(), 1u);
}

TEST_F(BroadcomTest, AskErrors) {
  EXPECT_EQ(code_of([&] { ask(" ", "AVGO", "2023Q3", 4, gw, idx, "m"); }), ErrorCode::InvalidParams);
  EXPECT_EQ(code_of([&] { ask("q?", "AVGO", "2023Q3", 0, gw, idx, "m"); }), ErrorCode::InvalidParams);
  VectorIndex empty(64);
  EXPECT_EQ(code_of([&] { ask("q?", "", "", 4, gw, empty, "m"); }), ErrorCode::EmptyIndex);
  const auto none = ask("What is revenue?", "NVDA", "2023Q3", 4, gw, idx, "m");
  EXPECT_TRUE(none.abstained);
  EXPECT_TRUE(none.hits.empty());
}

TEST_F(BroadcomTest, DividendKpiIsAnswered) {
  const auto reg = baseline();
  const auto results = evaluate_kpis("AVGO", "2023Q3", reg, gw, idx);
  ASSERT_EQ(results.size(), 7u);
  const auto& div = result_for(results, "kpi-dividend");
  EXPECT_EQ(div.status, KpiStatus::Answered);
  EXPECT_NE(div.answer_text.find("4.60"), std::string::npos) << div.answer_text;
  EXPECT_FALSE(div.supporting_chunk_ids.empty());
  for (std::size_t i = 1; i < div.retrieval_scores.size(); ++i) {
    EXPECT_GE(div.retrieval_scores[i - 1], div.retrieval_scores[i]);
  }
}

TEST(Analyst, DividendKpiNotFoundWithoutDividendText) {
  Gateway gw(testkit::stub_config());
  const auto idx = testkit::broadcom_index(gw, false);
  const auto results = evaluate_kpis("AVGO", "2023Q3", baseline(), gw, idx);
  const auto& div = result_for(results, "kpi-dividend");
  EXPECT_EQ(div.status, KpiStatus::NotFound);
  EXPECT_EQ(div.answer_text, "NOT FOUND");
  EXPECT_EQ(div.answer_text.find("4.60"), std::string::npos);
}

TEST_F(BroadcomTest, DisabledKpiIsSkipped) {
  auto reg = baseline();
  auto div = *reg.get("kpi-dividend");
  div.enabled = false;
  reg.update("kpi-dividend", div, "a");
  const auto results = evaluate_kpis("AVGO", "2023Q3", reg, gw, idx);
  EXPECT_EQ(results.size(), 6u);
  for (const auto& r : results) EXPECT_NE(r.kpi_id, "kpi-dividend");
}

TEST_F(BroadcomTest, ReportHasSixSectionsInSeedOrder) {
  const auto reg = baseline();
  const auto report = generate_report("AVGO", "2023Q3", reg, gw, idx);
  ASSERT_EQ(report.sections.size(), 6u);
  const auto& seeds = seed_instructions();
  for (std::size_t i = 0; i < 6; ++i) {
    EXPECT_EQ(report.sections[i].seed_type, seeds[i].seed_type);
    EXPECT_EQ(report.sections[i].title, seeds[i].title);
  }
  // The fixture never names a business sector, so section 1 may abstain;
  // revenue is stated outright.
  EXPECT_EQ(report.sections[1].status, KpiStatus::Answered);
  for (const auto& s : report.sections) {
    EXPECT_EQ(s.status == KpiStatus::NotFound, s.body == "NOT FOUND") << s.title;
  }
  // No research report indexed: the analysis section falls back and says so.
  EXPECT_FALSE(report.sections[5].note.empty());
  EXPECT_FALSE(report.sections[5].supporting_chunk_ids.empty());
  EXPECT_EQ(report.kpi_results.size(), 7u);
  EXPECT_FALSE(report.report_id.empty());

  const auto j = to_json(report);
  EXPECT_EQ(j.at("sections").size(), 6u);
}

TEST_F(BroadcomTest, ReportBodiesAreDeterministic) {
  const auto reg = baseline();
  const auto a = generate_report("AVGO", "2023Q3", reg, gw, idx);
  const auto b = generate_report("AVGO", "2023Q3", reg, gw, idx);
  EXPECT_NE(a.report_id, b.report_id);
  for (std::size_t i = 0; i < a.sections.size(); ++i) {
    EXPECT_EQ(a.sections[i].body, b.sections[i].body);
    EXPECT_EQ(a.sections[i].supporting_chunk_ids, b.sections[i].supporting_chunk_ids);
  }
}

TEST_F(BroadcomTest, ReportNeedsAnEnabledKpi) {
  auto reg = baseline();
  for (auto k : reg.list()) {
    k.enabled = false;
    reg.update(k.kpi_id, k, "a");
  }
  EXPECT_EQ(code_of([&] { generate_report("AVGO", "2023Q3", reg, gw, idx); }), ErrorCode::InvalidParams);
}

TEST_F(BroadcomTest, ServiceStoresReports) {
  auto reg = baseline();
  testkit::TempDir dir;
  ReportStore store(dir / "reports.jsonl");
  AnalystService svc(idx, gw, reg, store);
  std::vector<std::thread> threads;
  std::vector<std::string> ids(3);
  for (int i = 0; i < 3; ++i) {
    threads.emplace_back([&, i] { ids[i] = svc.generate_report("AVGO", "2023Q3").report_id; });
  }
  for (auto& t : threads) t.join();
  for (const auto& id : ids) {
    const auto got = store.get(id);
    ASSERT_TRUE(got.has_value()) << id;
    EXPECT_EQ(got->at("sections").size(), 6u);
  }
  EXPECT_EQ(store.list().size(), 3u);
  EXPECT_EQ(ReportStore(dir / "reports.jsonl").list().size(), 3u);
}
