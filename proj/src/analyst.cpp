#include "ragit/analyst.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <fstream>
#include <regex>
#include <sstream>

#include "ragit/error.hpp"
#include "ragit/prompts.hpp"
#include "ragit/util.hpp"

namespace ragit {

using nlohmann::json;
using nlohmann::ordered_json;

namespace {

std::string_view to_string(KpiOrigin o) { return o == KpiOrigin::Baseline ? "baseline" : "analyst"; }
std::string_view to_string(KpiStatus s) { return s == KpiStatus::Answered ? "answered" : "not_found"; }

KpiOrigin origin_from_string(std::string_view s) {
  if (s == "baseline") return KpiOrigin::Baseline;
  if (s == "analyst") return KpiOrigin::Analyst;
  fail(ErrorCode::InvalidParams, "origin must be 'baseline' or 'analyst'");
}

std::string slugify(std::string_view name) {
  std::string out;
  for (unsigned char c : name) {
    if (std::isalnum(c)) {
      out.push_back(static_cast<char>(std::tolower(c)));
    } else if (!out.empty() && out.back() != '-') {
      out.push_back('-');
    }
  }
  while (!out.empty() && out.back() == '-') out.pop_back();
  return out.empty() ? "kpi" : out;
}

}  // namespace

// KPI definitions -----------------------------------------------------------

ordered_json to_json(const KpiDefinition& k) {
  ordered_json j;
  j["kpi_id"] = k.kpi_id;
  j["name"] = k.name;
  j["description"] = k.description;
  j["extraction_query_template"] = k.extraction_query_template;
  j["unit_hint"] = k.unit_hint;
  j["enabled"] = k.enabled;
  j["origin"] = to_string(k.origin);
  return j;
}

KpiDefinition kpi_from_json(const json& j) {
  if (!j.is_object()) fail(ErrorCode::InvalidParams, "KPI definition must be a JSON object");
  try {
    KpiDefinition k;
    k.kpi_id = j.value("kpi_id", "");
    k.name = j.at("name").get<std::string>();
    k.description = j.value("description", "");
    k.extraction_query_template = j.at("extraction_query_template").get<std::string>();
    k.unit_hint = j.value("unit_hint", "");
    k.enabled = j.value("enabled", true);
    k.origin = origin_from_string(j.value("origin", "analyst"));
    return k;
  } catch (const json::exception& e) {
    fail(ErrorCode::InvalidParams, std::string("bad KPI definition: ") + e.what());
  }
}

std::string instantiate(const KpiDefinition& k, std::string_view company,
                        std::string_view fiscal_period) {
  auto out = replace_all(k.extraction_query_template, "{company}", company);
  return replace_all(std::move(out), "{fiscal_period}", fiscal_period);
}

// Registry ------------------------------------------------------------------

KpiRegistry KpiRegistry::from_baseline(const std::filesystem::path& baseline_path) {
  KpiRegistry reg;
  const auto j = json::parse(read_file(baseline_path), nullptr, false);
  if (j.is_discarded() || !j.is_array()) {
    fail(ErrorCode::ConfigError, baseline_path.string() + " is not a JSON array");
  }
  for (const auto& item : j) {
    auto k = kpi_from_json(item);
    k.origin = KpiOrigin::Baseline;
    if (k.kpi_id.empty()) k.kpi_id = "kpi-" + slugify(k.name);
    reg.validate_locked(k, nullptr);
    reg.kpis_.push_back(std::move(k));
  }
  return reg;
}

KpiRegistry KpiRegistry::open(const std::filesystem::path& registry_path,
                              const std::filesystem::path& baseline_path) {
  KpiRegistry reg;
  if (std::filesystem::exists(registry_path)) {
    const auto j = json::parse(read_file(registry_path), nullptr, false);
    if (j.is_discarded() || !j.is_array()) {
      fail(ErrorCode::ConfigError, registry_path.string() + " is not a JSON array");
    }
    for (const auto& item : j) reg.kpis_.push_back(kpi_from_json(item));
    auto audit_path = registry_path;
    audit_path += ".audit.jsonl";
    if (std::filesystem::exists(audit_path)) {
      std::istringstream in(read_file(audit_path));
      std::string line;
      while (std::getline(in, line)) {
        if (trim(line).empty()) continue;
        const auto a = json::parse(line);
        reg.audit_.push_back({a.at("seq").get<std::size_t>(), a.at("who").get<std::string>(),
                              a.at("when").get<std::string>(), a.at("action").get<std::string>(),
                              a.at("kpi_id").get<std::string>(), a.at("before"), a.at("after")});
      }
    }
  } else {
    reg = from_baseline(baseline_path);
  }
  reg.path_ = registry_path;
  {
    std::unique_lock lock(reg.mu_);
    reg.persist_locked();
  }
  return reg;
}

KpiRegistry::KpiRegistry(KpiRegistry&& other) noexcept {
  std::unique_lock lock(other.mu_);
  kpis_ = std::move(other.kpis_);
  audit_ = std::move(other.audit_);
  path_ = std::move(other.path_);
}

KpiRegistry& KpiRegistry::operator=(KpiRegistry&& other) noexcept {
  if (this != &other) {
    std::scoped_lock lock(mu_, other.mu_);
    kpis_ = std::move(other.kpis_);
    audit_ = std::move(other.audit_);
    path_ = std::move(other.path_);
  }
  return *this;
}

std::vector<KpiDefinition> KpiRegistry::list() const {
  std::shared_lock lock(mu_);
  return kpis_;
}

std::optional<KpiDefinition> KpiRegistry::get(const std::string& kpi_id) const {
  std::shared_lock lock(mu_);
  for (const auto& k : kpis_) {
    if (k.kpi_id == kpi_id) return k;
  }
  return std::nullopt;
}

void KpiRegistry::validate_locked(const KpiDefinition& def, const std::string* self_id) const {
  if (trim(def.name).empty()) fail(ErrorCode::InvalidParams, "KPI name must not be empty");
  if (trim(def.extraction_query_template).empty()) {
    fail(ErrorCode::InvalidParams, "KPI extraction_query_template must not be empty");
  }
  static const std::regex kPlaceholder(R"(\{[^{}]*\})");
  const auto probe = instantiate(def, "COMPANY", "PERIOD");
  std::smatch m;
  if (std::regex_search(probe, m, kPlaceholder)) {
    fail(ErrorCode::InvalidParams, "unresolved placeholder " + m.str() + " in KPI template");
  }
  if (!def.enabled) return;
  for (const auto& k : kpis_) {
    if (self_id && k.kpi_id == *self_id) continue;
    if (k.enabled && k.name == def.name) {
      fail(ErrorCode::DuplicateName, "an enabled KPI named '" + def.name + "' already exists");
    }
  }
}

void KpiRegistry::append_audit_locked(std::string who, std::string action,
                                      const std::string& kpi_id, json before, json after) {
  AuditEntry e{audit_.size() + 1, std::move(who), utc_now_iso8601(), std::move(action), kpi_id,
               std::move(before), std::move(after)};
  if (path_) {
    auto audit_path = *path_;
    audit_path += ".audit.jsonl";
    ordered_json j;
    j["seq"] = e.seq;
    j["who"] = e.who;
    j["when"] = e.when;
    j["action"] = e.action;
    j["kpi_id"] = e.kpi_id;
    j["before"] = e.before;
    j["after"] = e.after;
    std::ofstream out(audit_path, std::ios::app);
    if (!out) fail(ErrorCode::IoError, "cannot append to " + audit_path.string());
    out << j.dump() << "\n";
  }
  audit_.push_back(std::move(e));
}

void KpiRegistry::persist_locked() const {
  if (!path_) return;
  ordered_json arr = ordered_json::array();
  for (const auto& k : kpis_) arr.push_back(to_json(k));
  write_file(*path_, arr.dump(2) + "\n");
}

KpiDefinition KpiRegistry::create(KpiDefinition def, const std::string& who) {
  std::unique_lock lock(mu_);
  def.origin = KpiOrigin::Analyst;
  validate_locked(def, nullptr);
  auto id_taken = [&](const std::string& id) {
    return std::any_of(kpis_.begin(), kpis_.end(), [&](const auto& k) { return k.kpi_id == id; });
  };
  if (def.kpi_id.empty()) {
    const auto base = "kpi-" + slugify(def.name);
    def.kpi_id = base;
    for (int n = 2; id_taken(def.kpi_id); ++n) def.kpi_id = base + "-" + std::to_string(n);
  } else if (id_taken(def.kpi_id)) {
    fail(ErrorCode::DuplicateName, "a KPI with id '" + def.kpi_id + "' already exists");
  }
  kpis_.push_back(def);
  persist_locked();
  append_audit_locked(who, "create", def.kpi_id, nullptr, json(to_json(def)));
  return def;
}

bool KpiRegistry::update(const std::string& kpi_id, KpiDefinition def, const std::string& who) {
  std::unique_lock lock(mu_);
  auto it = std::find_if(kpis_.begin(), kpis_.end(),
                         [&](const KpiDefinition& k) { return k.kpi_id == kpi_id; });
  if (it == kpis_.end()) fail(ErrorCode::NotFound, "no KPI with id '" + kpi_id + "'");
  def.kpi_id = it->kpi_id;
  def.origin = it->origin;
  if (def == *it) return false;
  validate_locked(def, &kpi_id);
  json before = to_json(*it);
  *it = def;
  persist_locked();
  append_audit_locked(who, "update", kpi_id, std::move(before), json(to_json(def)));
  return true;
}

void KpiRegistry::remove(const std::string& kpi_id, const std::string& who) {
  std::unique_lock lock(mu_);
  auto it = std::find_if(kpis_.begin(), kpis_.end(),
                         [&](const KpiDefinition& k) { return k.kpi_id == kpi_id; });
  if (it == kpis_.end()) fail(ErrorCode::NotFound, "no KPI with id '" + kpi_id + "'");
  if (it->origin == KpiOrigin::Baseline) {
    fail(ErrorCode::BaselineDeletionForbidden,
         "baseline KPI '" + it->name + "' can be disabled but not deleted");
  }
  json before = to_json(*it);
  kpis_.erase(it);
  persist_locked();
  append_audit_locked(who, "delete", kpi_id, std::move(before), nullptr);
}

std::vector<AuditEntry> KpiRegistry::audit() const {
  std::shared_lock lock(mu_);
  return audit_;
}

// Serialization ---------------------------------------------------------------

ordered_json to_json(const KpiResult& r) {
  ordered_json j;
  j["kpi_id"] = r.kpi_id;
  j["name"] = r.name;
  j["company"] = r.company;
  j["fiscal_period"] = r.fiscal_period;
  j["answer_text"] = r.answer_text;
  j["supporting_chunk_ids"] = r.supporting_chunk_ids;
  j["retrieval_scores"] = r.retrieval_scores;
  j["status"] = to_string(r.status);
  return j;
}

ordered_json to_json(const AnalysisReport& r) {
  ordered_json j;
  j["report_id"] = r.report_id;
  j["company"] = r.company;
  j["fiscal_period"] = r.fiscal_period;
  j["sections"] = ordered_json::array();
  for (const auto& s : r.sections) {
    ordered_json sj;
    sj["seed_type"] = to_string(s.seed_type);
    sj["title"] = s.title;
    sj["prompt"] = s.prompt;
    sj["body"] = s.body;
    sj["supporting_chunk_ids"] = s.supporting_chunk_ids;
    sj["status"] = to_string(s.status);
    sj["note"] = s.note;
    j["sections"].push_back(std::move(sj));
  }
  j["kpi_results"] = ordered_json::array();
  for (const auto& k : r.kpi_results) j["kpi_results"].push_back(to_json(k));
  j["generated_at"] = r.generated_at;
  j["model_id"] = r.model_id;
  return j;
}

// Report store ----------------------------------------------------------------

ReportStore::ReportStore(std::filesystem::path path) : path_(std::move(path)) {
  if (!std::filesystem::exists(*path_)) return;
  std::istringstream in(read_file(*path_));
  std::string line;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    auto j = ordered_json::parse(line);
    const auto id = j.at("report_id").get<std::string>();
    if (!reports_.contains(id)) order_.push_back(id);
    reports_[id] = std::move(j);
  }
}

void ReportStore::put(const AnalysisReport& report) {
  auto j = to_json(report);
  std::lock_guard lock(mu_);
  if (path_) {
    if (path_->has_parent_path()) std::filesystem::create_directories(path_->parent_path());
    std::ofstream out(*path_, std::ios::app);
    if (!out) fail(ErrorCode::IoError, "cannot append to " + path_->string());
    out << j.dump() << "\n";
  }
  if (!reports_.contains(report.report_id)) order_.push_back(report.report_id);
  reports_[report.report_id] = std::move(j);
}

std::optional<ordered_json> ReportStore::get(const std::string& report_id) const {
  std::lock_guard lock(mu_);
  auto it = reports_.find(report_id);
  if (it == reports_.end()) return std::nullopt;
  return it->second;
}

std::vector<ordered_json> ReportStore::list() const {
  std::lock_guard lock(mu_);
  std::vector<ordered_json> out;
  for (auto it = order_.rbegin(); it != order_.rend(); ++it) {
    const auto& r = reports_.at(*it);
    out.push_back({{"report_id", r["report_id"]},
                   {"company", r["company"]},
                   {"fiscal_period", r["fiscal_period"]},
                   {"generated_at", r["generated_at"]}});
  }
  return out;
}

// Operations ------------------------------------------------------------------

AskResult ask(std::string_view question, std::string_view company, std::string_view fiscal_period,
              std::size_t k, Gateway& gateway, const VectorIndex& index,
              const std::string& model_id) {
  if (trim(question).empty()) fail(ErrorCode::InvalidParams, "question must not be empty");
  if (k == 0) fail(ErrorCode::InvalidParams, "k must be > 0");
  if (index.empty()) fail(ErrorCode::EmptyIndex, "no documents are indexed");

  const auto q = gateway.embed({std::string(question)}, "ask").front();
  QueryFilter filter;
  if (!company.empty()) filter.company = std::string(company);
  if (!fiscal_period.empty()) filter.fiscal_period = std::string(fiscal_period);
  AskResult result;
  result.hits = index.query(q, k, filter);
  if (result.hits.empty()) {
    result.answer = std::string(prompts::kNotFound);
    result.abstained = true;
    return result;
  }
  std::vector<std::string> parts;
  for (const auto& h : result.hits) parts.emplace_back(trim(h.entry.text));
  const auto context = join(parts, "\n" + std::string(prompts::kChunkSeparator) + "\n");

  ChatRequest req;
  req.model_id = model_id;
  req.temperature = kJudgeTemperature;
  req.request_tag = "ask";
  req.messages = {{Role::System, std::string(prompts::kAnswerSystem)},
                  {Role::User, prompts::render_answer_prompt(context, question)}};
  result.answer = std::string(trim(gateway.chat(req)));
  result.abstained = result.answer.starts_with(prompts::kNotFound);
  return result;
}

std::vector<KpiResult> evaluate_kpis(std::string_view company, std::string_view fiscal_period,
                                     const KpiRegistry& registry, Gateway& gateway,
                                     const VectorIndex& index, const ServiceOptions& opts) {
  if (index.empty()) fail(ErrorCode::EmptyIndex, "no documents are indexed");
  std::vector<KpiResult> out;
  for (const auto& kpi : registry.list()) {
    if (!kpi.enabled) continue;
    KpiResult r;
    r.kpi_id = kpi.kpi_id;
    r.name = kpi.name;
    r.company = std::string(company);
    r.fiscal_period = std::string(fiscal_period);
    AskResult a;
    try {
      a = ask(instantiate(kpi, company, fiscal_period), company, fiscal_period, opts.kpi_top_k,
              gateway, index, opts.answer_model_id);
    } catch (const Error& e) {
      throw Error(e.code(), e.detail() + " (kpi " + kpi.kpi_id + ")");
    }
    for (const auto& h : a.hits) {
      r.supporting_chunk_ids.push_back(h.entry.chunk_id);
      r.retrieval_scores.push_back(h.score);
    }
    const bool weak = a.hits.empty() || a.hits.front().score < opts.not_found_floor;
    r.status = (weak || a.abstained) ? KpiStatus::NotFound : KpiStatus::Answered;
    r.answer_text = r.status == KpiStatus::Answered ? a.answer : std::string(prompts::kNotFound);
    out.push_back(std::move(r));
  }
  return out;
}

namespace {

std::string kpi_context_block(std::string_view company, std::string_view fiscal_period,
                              const std::vector<KpiResult>& results) {
  std::string block = "Key performance indicators for " + std::string(company) + " " +
                      std::string(fiscal_period) + ":";
  bool any = false;
  for (const auto& r : results) {
    if (r.status != KpiStatus::Answered) continue;
    block += "\n" + r.name + ": " + r.answer_text;
    any = true;
  }
  return any ? block : std::string{};
}

std::atomic<std::uint64_t> g_report_counter{0};

}  // namespace

AnalysisReport generate_report(std::string_view company, std::string_view fiscal_period,
                               const KpiRegistry& registry, Gateway& gateway,
                               const VectorIndex& index, const ServiceOptions& opts) {
  const auto kpis = registry.list();
  if (std::none_of(kpis.begin(), kpis.end(), [](const KpiDefinition& k) { return k.enabled; })) {
    fail(ErrorCode::InvalidParams, "report generation needs at least one enabled KPI");
  }
  AnalysisReport report;
  report.company = std::string(company);
  report.fiscal_period = std::string(fiscal_period);
  report.model_id = opts.answer_model_id;
  report.kpi_results = evaluate_kpis(company, fiscal_period, registry, gateway, index, opts);

  GenerationJob job;
  job.job_id = "report";
  job.scope = ChunkScope::Retrieval;
  job.top_k = opts.section_top_k;
  job.teacher_model_id = opts.answer_model_id;
  job.temperature = kJudgeTemperature;
  ConversationOptions conv;
  conv.fallback_seeds = {SeedType::Analysis};
  const auto block = kpi_context_block(company, fiscal_period, report.kpi_results);
  conv.extra_context[SeedType::KeyFinancialIndicators] = block;
  conv.extra_context[SeedType::Analysis] = block;

  for (auto& turn : run_seed_conversation(company, fiscal_period, job, index, gateway, conv)) {
    ReportSection s;
    s.seed_type = turn.seed.seed_type;
    s.title = turn.seed.title;
    s.prompt = turn.prompt;
    if (turn.error) {
      s.status = KpiStatus::NotFound;
      s.body = std::string(prompts::kNotFound);
      s.note = *turn.error;
    } else {
      s.body = turn.sample->answer;
      s.supporting_chunk_ids = turn.sample->provenance.chunk_ids;
      s.status = s.body.starts_with(prompts::kNotFound) ? KpiStatus::NotFound : KpiStatus::Answered;
      if (turn.used_fallback) {
        s.note = "no documents of the preferred kinds; retrieved from all document kinds";
      }
    }
    report.sections.push_back(std::move(s));
  }

  report.generated_at = utc_now_iso8601();
  report.report_id = stable_id("rpt-", {company, fiscal_period, report.generated_at,
                                        std::to_string(g_report_counter++),
                                        std::to_string(std::chrono::steady_clock::now()
                                                           .time_since_epoch()
                                                           .count())});
  return report;
}

// Service -------------------------------------------------------------------

AnalystService::AnalystService(const VectorIndex& index, Gateway& gateway, KpiRegistry& registry,
                               ReportStore& reports, ServiceOptions opts)
    : index_(index), gateway_(gateway), registry_(registry), reports_(reports), opts_(std::move(opts)) {}

AskResult AnalystService::ask(std::string_view question, std::string_view company,
                              std::string_view fiscal_period, std::size_t k) {
  return ragit::ask(question, company, fiscal_period, k, gateway_, index_, opts_.answer_model_id);
}

std::vector<KpiResult> AnalystService::evaluate_kpis(std::string_view company,
                                                     std::string_view fiscal_period) {
  return ragit::evaluate_kpis(company, fiscal_period, registry_, gateway_, index_, opts_);
}

AnalysisReport AnalystService::generate_report(std::string_view company,
                                               std::string_view fiscal_period) {
  std::shared_ptr<std::mutex> key_lock;
  {
    std::lock_guard lock(keys_mu_);
    auto& slot = key_locks_[std::string(company) + "\x1f" + std::string(fiscal_period)];
    if (!slot) slot = std::make_shared<std::mutex>();
    key_lock = slot;
  }
  std::lock_guard serialize(*key_lock);
  auto report = ragit::generate_report(company, fiscal_period, registry_, gateway_, index_, opts_);
  reports_.put(report);
  return report;
}

}  // namespace ragit
