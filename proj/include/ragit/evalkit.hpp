#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "ragit/llmgate.hpp"

namespace ragit {

struct EvalCase {
  std::string case_id;
  std::string question;
  std::string ground_truth;
  std::string context;
  std::map<std::string, std::string> generated;  // model name -> answer
};

void validate(const EvalCase& c);
EvalCase eval_case_from_json(const nlohmann::json& j);
std::vector<EvalCase> read_cases_jsonl(const std::filesystem::path& path);

struct EvalRecord {
  std::string case_id;
  std::string model_name;
  int correctness = 1;             // 1..10
  double semantic_distance = 0.0;  // 1 - cosine, in [0, 2]
  std::string judge_raw;

  bool operator==(const EvalRecord&) const = default;
};

nlohmann::ordered_json to_json(const EvalRecord& r);
EvalRecord eval_record_from_json(const nlohmann::json& j);
std::vector<EvalRecord> read_records_jsonl(const std::filesystem::path& path);

struct EvalSummary {
  std::string model_name;
  double mean_correctness = 0.0;
  double mean_semantic_distance = 0.0;
  std::size_t n_cases = 0;

  bool operator==(const EvalSummary&) const = default;
};

/// Last "Score: <n>" in the completion. Throws UnparseableVerdict when
/// absent, non-integer, or outside 1..10; never clamps.
int parse_score(std::string_view completion);

struct JudgeVerdict {
  int correctness = 1;
  std::string raw;
};

/// Renders the versioned judge prompt at temperature 0 and re-asks up to
/// twice when the reply has no valid score line.
JudgeVerdict judge_correctness(const EvalCase& c, const std::string& model_name, Gateway& gateway,
                               const std::string& judge_model_id);

/// 1 - cosine of the normalized embeddings, clamped to [0, 2] against
/// rounding only.
double semantic_distance(std::string_view a, std::string_view b, Gateway& gateway);
double cosine_distance(const EmbeddingVector& a, const EmbeddingVector& b);

/// Judges every (case, model answer) pair using `workers` threads; the
/// result is sorted by (model_name, case_id).
std::vector<EvalRecord> evaluate(const std::vector<EvalCase>& cases, Gateway& gateway,
                                 const std::string& judge_model_id, std::size_t workers = 1);

/// One summary per model, ordered by model_name; means in double precision.
std::vector<EvalSummary> aggregate(const std::vector<EvalRecord>& records);

struct ComparisonReport {
  std::string table;
  nlohmann::ordered_json json;
};

/// Fixed-width table (model, correctness, semantic similarity) plus a JSON
/// report with the exact summary values. Correctness is printed with one
/// decimal and distance with five, matching the usual reporting precision.
ComparisonReport render_comparison(const std::vector<EvalSummary>& summaries);
std::vector<EvalSummary> summaries_from_json(const nlohmann::json& j);

}  // namespace ragit
