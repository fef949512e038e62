#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ragit/instructgen.hpp"

namespace ragit {

struct TrainingRecord {
  std::string sample_id;
  std::string text;
  std::size_t token_estimate = 0;  // whitespace word count of text

  bool operator==(const TrainingRecord&) const = default;
};

enum class TuneMethod { Lora, Qlora };
std::string_view to_string(TuneMethod m);
TuneMethod tune_method_from_string(std::string_view s);

struct TrainerConfig {
  std::string base_model = "llama-2-7b";
  TuneMethod method = TuneMethod::Qlora;
  int quant_bits = 4;
  double learning_rate = 2e-4;
  int epochs = 3;
  std::size_t max_seq_len = 2048;
  int lora_rank = 16;
  int lora_alpha = 32;
  std::string dataset_path = "train.jsonl";

  bool operator==(const TrainerConfig&) const = default;
};

void validate(const TrainerConfig& cfg);
nlohmann::ordered_json to_json(const TrainerConfig& cfg);
TrainerConfig trainer_config_from_json(const nlohmann::json& j);

struct SplitSpec {
  double train_fraction = 0.9;
  double eval_fraction = 0.1;
  std::uint64_t shuffle_seed = 13;
};

void validate(const SplitSpec& spec);

/// Renders the fixed training template:
///
///   We have provided context information below.
///   ---------------------
///   <context>
///   ---------------------
///   Given this information, please answer the question:
///   <query>
///   Answer: <answer>
///
/// Throws DelimiterInContext if the context contains a delimiter line, and
/// InvalidParams if the query contains a line starting with "Answer: ".
TrainingRecord render_record(const InstructionSample& s);

struct ParsedRecord {
  std::string context;
  std::string query;
  std::string answer;

  bool operator==(const ParsedRecord&) const = default;
};
/// Inverse of render_record; throws InvalidParams on text that does not
/// follow the template.
ParsedRecord parse_record(std::string_view text);

/// Throws TemplateOverflow when the record does not fit max_seq_len.
void check_overflow(const TrainingRecord& record, const TrainerConfig& config);

/// Deterministic Fisher-Yates shuffle (mt19937_64) then
/// eval = round(eval_fraction * n), train = the rest.
template <typename T>
std::pair<std::vector<T>, std::vector<T>> split(std::vector<T> items, const SplitSpec& spec);

struct EmitManifest {
  std::size_t train = 0;
  std::size_t eval = 0;
  std::size_t overflow = 0;
  std::vector<std::string> overflow_ids;
  std::vector<std::pair<std::string, std::string>> file_hashes;  // file name, sha256

  nlohmann::ordered_json to_json() const;
};

/// Writes train.jsonl, eval.jsonl, trainer_config.json and manifest.json.
/// Records whose token_estimate exceeds max_seq_len are flagged in the
/// manifest and left out of both splits; the rest are split per `spec`.
/// Throws EmptyDataset (before writing anything) when no record remains.
/// `created_at` only appears in manifest.json and is not hashed.
EmitManifest emit(const std::vector<TrainingRecord>& records, const TrainerConfig& config,
                  const SplitSpec& spec, const std::filesystem::path& out_dir,
                  const std::string& created_at = "");

// ---------------------------------------------------------------------------

namespace detail {
std::vector<std::size_t> shuffled_indices(std::size_t n, std::uint64_t seed);
std::size_t eval_count(std::size_t n, const SplitSpec& spec);
}  // namespace detail

template <typename T>
std::pair<std::vector<T>, std::vector<T>> split(std::vector<T> items, const SplitSpec& spec) {
  validate(spec);
  const auto order = detail::shuffled_indices(items.size(), spec.shuffle_seed);
  const auto n_eval = detail::eval_count(items.size(), spec);
  const auto n_train = items.size() - n_eval;
  std::pair<std::vector<T>, std::vector<T>> out;
  out.first.reserve(n_train);
  out.second.reserve(n_eval);
  for (std::size_t i = 0; i < order.size(); ++i) {
    (i < n_train ? out.first : out.second).push_back(std::move(items[order[i]]));
  }
  return out;
}

}  // namespace ragit
