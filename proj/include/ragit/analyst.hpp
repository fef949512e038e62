#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ragit/instructgen.hpp"
#include "ragit/llmgate.hpp"
#include "ragit/vecindex.hpp"

namespace ragit {

// KPI registry --------------------------------------------------------------

enum class KpiOrigin { Baseline, Analyst };

struct KpiDefinition {
  std::string kpi_id;
  std::string name;
  std::string description;
  std::string extraction_query_template;  // {company}, {fiscal_period}
  std::string unit_hint;
  bool enabled = true;
  KpiOrigin origin = KpiOrigin::Analyst;

  bool operator==(const KpiDefinition&) const = default;
};

nlohmann::ordered_json to_json(const KpiDefinition& k);
KpiDefinition kpi_from_json(const nlohmann::json& j);
std::string instantiate(const KpiDefinition& k, std::string_view company,
                        std::string_view fiscal_period);

struct AuditEntry {
  std::size_t seq = 0;
  std::string who;
  std::string when;
  std::string action;  // create | update | delete
  std::string kpi_id;
  nlohmann::json before;  // null on create
  nlohmann::json after;   // null on delete
};

/// Analyst-editable KPI set. Baseline KPIs may be edited or disabled but
/// never deleted. Every effective mutation appends one audit entry.
/// Reads share a lock; mutations are exclusive and persisted immediately
/// when the registry is file-backed.
class KpiRegistry {
 public:
  /// In-memory registry seeded from a baseline file (JSON array).
  static KpiRegistry from_baseline(const std::filesystem::path& baseline_path);
  /// Loads `registry_path` if it exists, otherwise seeds it from the baseline
  /// file and writes it. Audit entries live in `<registry_path>.audit.jsonl`.
  static KpiRegistry open(const std::filesystem::path& registry_path,
                          const std::filesystem::path& baseline_path);

  KpiRegistry(KpiRegistry&& other) noexcept;
  KpiRegistry& operator=(KpiRegistry&& other) noexcept;

  std::vector<KpiDefinition> list() const;
  std::optional<KpiDefinition> get(const std::string& kpi_id) const;

  KpiDefinition create(KpiDefinition def, const std::string& who);
  /// Replaces the mutable fields. Returns false (and records nothing) when
  /// the body equals the current definition.
  bool update(const std::string& kpi_id, KpiDefinition def, const std::string& who);
  void remove(const std::string& kpi_id, const std::string& who);

  std::vector<AuditEntry> audit() const;

 private:
  KpiRegistry() = default;
  void validate_locked(const KpiDefinition& def, const std::string* self_id) const;
  void append_audit_locked(std::string who, std::string action, const std::string& kpi_id,
                           nlohmann::json before, nlohmann::json after);
  void persist_locked() const;

  mutable std::shared_mutex mu_;
  std::vector<KpiDefinition> kpis_;
  std::vector<AuditEntry> audit_;
  std::optional<std::filesystem::path> path_;
};

// Results and reports -------------------------------------------------------

enum class KpiStatus { Answered, NotFound };

struct KpiResult {
  std::string kpi_id;
  std::string name;
  std::string company;
  std::string fiscal_period;
  std::string answer_text;
  std::vector<std::string> supporting_chunk_ids;
  std::vector<double> retrieval_scores;
  KpiStatus status = KpiStatus::NotFound;
};

nlohmann::ordered_json to_json(const KpiResult& r);

struct ReportSection {
  SeedType seed_type = SeedType::CompanyCoreInformation;
  std::string title;
  std::string prompt;
  std::string body;
  std::vector<std::string> supporting_chunk_ids;
  KpiStatus status = KpiStatus::NotFound;
  std::string note;
};

struct AnalysisReport {
  std::string report_id;
  std::string company;
  std::string fiscal_period;
  std::vector<ReportSection> sections;
  std::vector<KpiResult> kpi_results;
  std::string generated_at;
  std::string model_id;
};

nlohmann::ordered_json to_json(const AnalysisReport& r);

/// Append-only JSONL store of rendered reports keyed by report_id.
class ReportStore {
 public:
  ReportStore() = default;
  explicit ReportStore(std::filesystem::path path);

  void put(const AnalysisReport& report);
  std::optional<nlohmann::ordered_json> get(const std::string& report_id) const;
  /// (report_id, company, fiscal_period, generated_at) newest first.
  std::vector<nlohmann::ordered_json> list() const;

 private:
  mutable std::mutex mu_;
  std::optional<std::filesystem::path> path_;
  std::map<std::string, nlohmann::ordered_json> reports_;
  std::vector<std::string> order_;
};

// Service -------------------------------------------------------------------

struct ServiceOptions {
  std::string answer_model_id = "ragit-analyst";
  std::size_t kpi_top_k = 4;
  std::size_t section_top_k = 4;
  double not_found_floor = 0.15;
};

struct AskResult {
  std::string answer;
  std::vector<RetrievalHit> hits;
  bool abstained = false;
};

/// Embeds the question, retrieves top-k chunks of the company/period (empty
/// strings disable that filter), and answers from that context.
AskResult ask(std::string_view question, std::string_view company, std::string_view fiscal_period,
              std::size_t k, Gateway& gateway, const VectorIndex& index,
              const std::string& model_id);

std::vector<KpiResult> evaluate_kpis(std::string_view company, std::string_view fiscal_period,
                                     const KpiRegistry& registry, Gateway& gateway,
                                     const VectorIndex& index, const ServiceOptions& opts = {});

/// Six sections in seed order; KPI results feed the key-indicator and
/// analysis sections. Missing documents for a section are recorded on it.
AnalysisReport generate_report(std::string_view company, std::string_view fiscal_period,
                               const KpiRegistry& registry, Gateway& gateway,
                               const VectorIndex& index, const ServiceOptions& opts = {});

/// Ties the pieces together for the HTTP layer. Report generation for the
/// same (company, period) is serialized; distinct keys run concurrently.
class AnalystService {
 public:
  AnalystService(const VectorIndex& index, Gateway& gateway, KpiRegistry& registry,
                 ReportStore& reports, ServiceOptions opts = {});

  AskResult ask(std::string_view question, std::string_view company,
                std::string_view fiscal_period, std::size_t k);
  std::vector<KpiResult> evaluate_kpis(std::string_view company, std::string_view fiscal_period);
  AnalysisReport generate_report(std::string_view company, std::string_view fiscal_period);

  KpiRegistry& registry() { return registry_; }
  ReportStore& reports() { return reports_; }
  const VectorIndex& index() const { return index_; }

 private:
  const VectorIndex& index_;
  Gateway& gateway_;
  KpiRegistry& registry_;
  ReportStore& reports_;
  ServiceOptions opts_;
  std::mutex keys_mu_;
  std::map<std::string, std::shared_ptr<std::mutex>> key_locks_;
};

}  // namespace ragit
