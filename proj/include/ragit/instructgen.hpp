#pragma once

#include <array>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "ragit/corpus.hpp"
#include "ragit/llmgate.hpp"
#include "ragit/vecindex.hpp"

namespace ragit {

// Seed instructions ---------------------------------------------------------

enum class SeedType {
  CompanyCoreInformation,
  KeyFinancialIndicators,
  Comparison,
  Outlook,
  Summary,
  Analysis
};

std::string_view to_string(SeedType t);
SeedType seed_type_from_string(std::string_view s);

struct SeedInstruction {
  int seed_no = 0;  // 1..6
  SeedType seed_type = SeedType::CompanyCoreInformation;
  std::string title;
  std::string prompt_template;  // placeholders {company}, {fiscal_period}
  std::set<DocType> relevant_doc_types;
};

/// The six earnings-analysis seeds in conversation order.
const std::array<SeedInstruction, 6>& seed_instructions();
const SeedInstruction& seed_instruction(SeedType t);
std::string instantiate(const SeedInstruction& seed, std::string_view company,
                        std::string_view fiscal_period);

// Jobs and samples ----------------------------------------------------------

enum class ChunkScope { AllChunks, Retrieval };

struct QcLimits {
  std::size_t max_answer_words = 256;
  std::size_t min_overlap = 1;
};

struct GenerationJob {
  std::string job_id = "job";
  std::size_t num_questions_per_chunk = 10;
  ChunkScope scope = ChunkScope::AllChunks;
  std::size_t top_k = 4;  // retrieval scope only
  std::string teacher_model_id = "gpt-3.5-turbo";
  double temperature = kGenerationTemperature;
  std::vector<SeedType> seed_types = {SeedType::CompanyCoreInformation,
                                      SeedType::KeyFinancialIndicators,
                                      SeedType::Comparison,
                                      SeedType::Outlook,
                                      SeedType::Summary,
                                      SeedType::Analysis};
  std::string created_at = "1970-01-01T00:00:00Z";
  QcLimits qc;
};

void validate(const GenerationJob& job);

struct Provenance {
  std::vector<std::string> chunk_ids;
  std::vector<std::string> doc_ids;
  std::string teacher_model_id;
  std::string job_id;
  std::size_t question_index = 0;

  bool operator==(const Provenance&) const = default;
};

struct InstructionSample {
  std::string sample_id;
  std::string context;
  std::string query;
  std::string answer;
  std::optional<SeedType> seed_type;  // unset for chunk-sweep samples
  Provenance provenance;
  std::string created_at;

  bool operator==(const InstructionSample&) const = default;
};

std::string make_sample_id(std::string_view job_id, const std::vector<std::string>& chunk_ids,
                           std::size_t question_index);

nlohmann::ordered_json to_json(const InstructionSample& s);
InstructionSample sample_from_json(const nlohmann::json& j);
std::string to_jsonl(const std::vector<InstructionSample>& samples);
std::vector<InstructionSample> read_samples_jsonl(const std::filesystem::path& path);

// Operations ----------------------------------------------------------------

/// System message carries the analyst role; the user message carries the
/// task (with `n` substituted literally), the chunk between delimiter lines,
/// and the output-format directive.
ChatRequest render_generation_prompt(std::string_view chunk_text, std::size_t n,
                                     std::string_view model_id = "",
                                     double temperature = kGenerationTemperature);

struct QaPair {
  std::string query;
  std::string answer;

  bool operator==(const QaPair&) const = default;
};

/// Extracts numbered "i. Q: ... A: ..." blocks in order, at most
/// `expected_n`. Throws NoPairsFound when nothing parses.
std::vector<QaPair> parse_qa_completion(std::string_view text, std::size_t expected_n);

enum class QcReason { Form, AnswerLength, Grounding };
std::string_view to_string(QcReason r);

struct QcVerdict {
  bool pass = true;
  std::optional<QcReason> reason;
  std::string detail;
};

QcVerdict qc_gate(const InstructionSample& sample, const QcLimits& limits = {});

struct ChunkGeneration {
  std::vector<InstructionSample> samples;
  std::size_t parsed = 0;
  std::size_t shortfall = 0;  // expected - parsed
  std::map<QcReason, std::size_t> rejected;
};

ChunkGeneration generate_for_chunk(const Chunk& chunk, const GenerationJob& job, Gateway& gateway);

struct JobReport {
  std::string job_id;
  std::size_t chunks = 0;
  std::size_t samples = 0;
  std::size_t total_shortfall = 0;
  std::map<std::string, std::size_t> shortfall_by_chunk;
  std::map<QcReason, std::size_t> rejected;
  std::vector<std::string> seed_errors;

  nlohmann::ordered_json to_json() const;
};

struct GenerationOutput {
  std::vector<InstructionSample> samples;
  JobReport report;
};

/// Fans chunks out over `workers` threads; output order follows the input
/// chunk order then question index, independent of completion order.
GenerationOutput generate_for_chunks(const std::vector<Chunk>& chunks, const GenerationJob& job,
                                     Gateway& gateway, std::size_t workers = 1);

/// Chunks retrieved for a seed, sorted by (doc_id, ordinal).
struct SeedContext {
  std::vector<RetrievalHit> hits;
  std::string text;
};

/// Retrieves top_k chunks restricted to the seed's document kinds and the
/// company/period. Throws NoRelevantDocuments when the filter matches nothing.
SeedContext retrieve_for_seed(const SeedInstruction& seed, std::string_view company,
                              std::string_view fiscal_period, std::size_t top_k,
                              const VectorIndex& index, Gateway& gateway,
                              bool fallback_to_all_types = false);

InstructionSample generate_for_seed(const SeedInstruction& seed, std::string_view company,
                                    std::string_view fiscal_period, const GenerationJob& job,
                                    const VectorIndex& index, Gateway& gateway);

struct SeedTurn {
  SeedInstruction seed;
  std::string prompt;  // instantiated seed prompt
  std::optional<InstructionSample> sample;
  std::vector<RetrievalHit> hits;
  bool used_fallback = false;
  std::optional<std::string> error;  // e.g. NoRelevantDocuments
};

struct ConversationOptions {
  /// Seeds whose filter is empty retry with every document kind.
  std::set<SeedType> fallback_seeds;
  /// Extra text appended to the retrieved context of a seed's turn.
  std::map<SeedType, std::string> extra_context;
};

/// Runs the job's seeds in order as one chat history per (company, period).
/// Per-seed retrieval failures are recorded on the turn, not thrown.
std::vector<SeedTurn> run_seed_conversation(std::string_view company,
                                            std::string_view fiscal_period,
                                            const GenerationJob& job, const VectorIndex& index,
                                            Gateway& gateway, const ConversationOptions& opts = {});

struct DedupDrop {
  std::string dropped_id;
  std::string kept_id;
  double score = 0.0;
};

struct DedupResult {
  std::vector<InstructionSample> kept;
  std::vector<DedupDrop> dropped;
};

inline constexpr double kDefaultDedupThreshold = 0.92;

/// Greedy in sample order: drops a sample whose query embedding has cosine
/// similarity >= threshold with any kept query.
DedupResult dedup(const std::vector<InstructionSample>& samples, double threshold,
                  Gateway& gateway);

}  // namespace ragit
