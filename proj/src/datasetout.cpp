#include "ragit/datasetout.hpp"

#include <cmath>
#include <limits>
#include <random>

#include "ragit/error.hpp"
#include "ragit/prompts.hpp"
#include "ragit/util.hpp"

namespace ragit {

using nlohmann::json;
using nlohmann::ordered_json;

std::string_view to_string(TuneMethod m) { return m == TuneMethod::Lora ? "lora" : "qlora"; }

TuneMethod tune_method_from_string(std::string_view s) {
  if (s == "lora") return TuneMethod::Lora;
  if (s == "qlora") return TuneMethod::Qlora;
  fail(ErrorCode::ConfigError, "trainer.method must be 'lora' or 'qlora', got '" + std::string(s) + "'");
}

void validate(const TrainerConfig& cfg) {
  if (!(cfg.learning_rate > 0.0)) fail(ErrorCode::ConfigError, "trainer.learning_rate must be > 0");
  if (cfg.epochs < 1) fail(ErrorCode::ConfigError, "trainer.epochs must be >= 1");
  if (cfg.quant_bits != 4 && cfg.quant_bits != 8 && cfg.quant_bits != 16) {
    fail(ErrorCode::ConfigError, "trainer.quant_bits must be one of 4, 8, 16");
  }
  if (cfg.method == TuneMethod::Qlora && cfg.quant_bits != 4) {
    fail(ErrorCode::ConfigError, "trainer.quant_bits must be 4 when trainer.method = qlora");
  }
  if (cfg.max_seq_len == 0) fail(ErrorCode::ConfigError, "trainer.max_seq_len must be > 0");
  if (cfg.lora_rank <= 0 || cfg.lora_alpha <= 0) {
    fail(ErrorCode::ConfigError, "trainer.lora_rank and trainer.lora_alpha must be > 0");
  }
}

ordered_json to_json(const TrainerConfig& cfg) {
  ordered_json j;
  j["base_model"] = cfg.base_model;
  j["method"] = to_string(cfg.method);
  j["quant_bits"] = cfg.quant_bits;
  j["learning_rate"] = cfg.learning_rate;
  j["epochs"] = cfg.epochs;
  j["max_seq_len"] = cfg.max_seq_len;
  j["lora_rank"] = cfg.lora_rank;
  j["lora_alpha"] = cfg.lora_alpha;
  j["dataset_path"] = cfg.dataset_path;
  return j;
}

TrainerConfig trainer_config_from_json(const json& j) {
  TrainerConfig c;
  c.base_model = j.at("base_model").get<std::string>();
  c.method = tune_method_from_string(j.at("method").get<std::string>());
  c.quant_bits = j.at("quant_bits").get<int>();
  c.learning_rate = j.at("learning_rate").get<double>();
  c.epochs = j.at("epochs").get<int>();
  c.max_seq_len = j.at("max_seq_len").get<std::size_t>();
  c.lora_rank = j.at("lora_rank").get<int>();
  c.lora_alpha = j.at("lora_alpha").get<int>();
  c.dataset_path = j.at("dataset_path").get<std::string>();
  return c;
}

void validate(const SplitSpec& spec) {
  if (!(spec.train_fraction > 0.0 && spec.train_fraction <= 1.0)) {
    fail(ErrorCode::ConfigError, "split.train_fraction must be in (0, 1]");
  }
  if (spec.eval_fraction < 0.0 || std::abs(spec.train_fraction + spec.eval_fraction - 1.0) > 1e-9) {
    fail(ErrorCode::ConfigError, "split fractions must be non-negative and sum to 1");
  }
}

// Template ------------------------------------------------------------------

TrainingRecord render_record(const InstructionSample& s) {
  for (const auto& line : split_lines(s.context)) {
    if (line == prompts::kDelimiter) {
      fail(ErrorCode::DelimiterInContext,
           "context of " + s.sample_id + " contains a delimiter line");
    }
  }
  for (const auto& line : split_lines(s.query)) {
    if (line.starts_with(prompts::kAnswerLead)) {
      fail(ErrorCode::InvalidParams, "query of " + s.sample_id + " contains an answer line");
    }
  }
  std::string text;
  text.append(prompts::kContextHeader).append("\n");
  text.append(prompts::kDelimiter).append("\n");
  text.append(s.context).append("\n");
  text.append(prompts::kDelimiter).append("\n");
  text.append(prompts::kQuestionLead).append("\n");
  text.append(s.query).append("\n");
  text.append(prompts::kAnswerLead).append(s.answer);
  const auto tokens = word_count(text);
  return {s.sample_id, std::move(text), tokens};
}

ParsedRecord parse_record(std::string_view text) {
  const auto lines = split_lines(text);
  auto bad = [](const std::string& why) { fail(ErrorCode::InvalidParams, "not a training record: " + why); };
  if (lines.size() < 7 || lines[0] != prompts::kContextHeader || lines[1] != prompts::kDelimiter) {
    bad("missing header");
  }
  std::size_t close = 2;
  while (close < lines.size() && lines[close] != prompts::kDelimiter) ++close;
  if (close + 2 >= lines.size() || lines[close + 1] != prompts::kQuestionLead) {
    bad("missing closing delimiter or question lead");
  }
  std::size_t answer = close + 2;
  while (answer < lines.size() && !lines[answer].starts_with(prompts::kAnswerLead)) ++answer;
  if (answer >= lines.size()) bad("missing answer line");

  ParsedRecord r;
  r.context = join({lines.begin() + 2, lines.begin() + static_cast<std::ptrdiff_t>(close)}, "\n");
  r.query = join({lines.begin() + static_cast<std::ptrdiff_t>(close + 2),
                  lines.begin() + static_cast<std::ptrdiff_t>(answer)},
                 "\n");
  std::vector<std::string> tail(lines.begin() + static_cast<std::ptrdiff_t>(answer), lines.end());
  tail[0] = tail[0].substr(prompts::kAnswerLead.size());
  r.answer = join(tail, "\n");
  return r;
}

void check_overflow(const TrainingRecord& record, const TrainerConfig& config) {
  if (record.token_estimate > config.max_seq_len) {
    fail(ErrorCode::TemplateOverflow, "record " + record.sample_id + " has " +
                                          std::to_string(record.token_estimate) +
                                          " tokens, max_seq_len is " +
                                          std::to_string(config.max_seq_len));
  }
}

// Split ---------------------------------------------------------------------

namespace detail {

std::vector<std::size_t> shuffled_indices(std::size_t n, std::uint64_t seed) {
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  // mt19937_64's output sequence is fixed by the standard; the bounded draw
  // below is done by hand because uniform_int_distribution is not portable.
  std::mt19937_64 rng(seed);
  for (std::size_t i = n; i > 1; --i) {
    const std::uint64_t bound = i;
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                                std::numeric_limits<std::uint64_t>::max() % bound;
    std::uint64_t r;
    do {
      r = rng();
    } while (r >= limit);
    std::swap(idx[i - 1], idx[r % bound]);
  }
  return idx;
}

std::size_t eval_count(std::size_t n, const SplitSpec& spec) {
  const auto e = static_cast<std::size_t>(std::llround(spec.eval_fraction * static_cast<double>(n)));
  return std::min(e, n);
}

}  // namespace detail

// Emit ----------------------------------------------------------------------

ordered_json EmitManifest::to_json() const {
  ordered_json j;
  j["counts"] = {{"train", train}, {"eval", eval}, {"overflow", overflow}};
  j["overflow_ids"] = overflow_ids;
  j["files"] = ordered_json::object();
  for (const auto& [name, sha] : file_hashes) j["files"][name] = sha;
  return j;
}

namespace {

std::string records_jsonl(const std::vector<TrainingRecord>& records) {
  std::string out;
  for (const auto& r : records) {
    ordered_json j;
    j["sample_id"] = r.sample_id;
    j["text"] = r.text;
    out += j.dump() + "\n";
  }
  return out;
}

}  // namespace

EmitManifest emit(const std::vector<TrainingRecord>& records, const TrainerConfig& config,
                  const SplitSpec& spec, const std::filesystem::path& out_dir,
                  const std::string& created_at) {
  validate(config);
  validate(spec);
  EmitManifest manifest;
  std::vector<TrainingRecord> fitting;
  for (const auto& r : records) {
    if (r.token_estimate > config.max_seq_len) {
      ++manifest.overflow;
      manifest.overflow_ids.push_back(r.sample_id);
    } else {
      fitting.push_back(r);
    }
  }
  if (fitting.empty()) fail(ErrorCode::EmptyDataset, "no records to emit");

  auto [train, eval] = split(std::move(fitting), spec);
  manifest.train = train.size();
  manifest.eval = eval.size();

  const auto train_bytes = records_jsonl(train);
  const auto eval_bytes = records_jsonl(eval);
  const auto config_bytes = to_json(config).dump(2) + "\n";
  write_file(out_dir / "train.jsonl", train_bytes);
  write_file(out_dir / "eval.jsonl", eval_bytes);
  write_file(out_dir / "trainer_config.json", config_bytes);
  manifest.file_hashes = {{"train.jsonl", sha256_hex(train_bytes)},
                          {"eval.jsonl", sha256_hex(eval_bytes)},
                          {"trainer_config.json", sha256_hex(config_bytes)}};

  auto j = manifest.to_json();
  j["created_at"] = created_at.empty() ? utc_now_iso8601() : created_at;
  write_file(out_dir / "manifest.json", j.dump(2) + "\n");
  return manifest;
}

}  // namespace ragit
