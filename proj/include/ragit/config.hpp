#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "ragit/corpus.hpp"
#include "ragit/datasetout.hpp"
#include "ragit/instructgen.hpp"
#include "ragit/llmgate.hpp"

namespace ragit {

// Minimal TOML: [section] headers, key = value, # comments. Values are basic
// or literal strings, integers, floats, booleans, and single-line arrays of
// strings. Enough for the pipeline schema, nothing more.
using TomlValue = std::variant<std::string, std::int64_t, double, bool, std::vector<std::string>>;
using TomlTable = std::map<std::string, TomlValue>;  // "section.key" -> value

TomlTable parse_toml(std::string_view text, std::string_view source = "<string>");
std::string write_toml(const TomlTable& table);
std::string toml_value_string(const TomlValue& v);

struct PathsConfig {
  std::string sources = "sources.json";  // JSON list of documents to ingest
  std::string corpus = "corpus/manifest.json";
  std::string index = "index.bin";
  std::string samples = "samples.jsonl";
  std::string dataset = "dataset";
  std::string cases = "cases.jsonl";
  std::string kpis = "kpis.json";
  std::string reports = "reports.jsonl";
  std::string runs = "runs";
};

struct PipelineConfig {
  PathsConfig paths;
  BackendConfig backend = [] {
    BackendConfig b;
    b.seed = 7;
    return b;
  }();
  ChunkParams chunk;
  GenerationJob job;
  std::string mode = "chunks";  // chunks | seeds
  bool dedup = false;
  double dedup_threshold = kDefaultDedupThreshold;
  std::size_t workers = 1;
  TrainerConfig trainer;
  SplitSpec split;
};

/// Every key of the schema with its value; the inverse of config_from_table.
TomlTable to_table(const PipelineConfig& cfg);
/// Throws ConfigError naming the key path on unknown keys, wrong types, and
/// values the module validators reject.
PipelineConfig config_from_table(const TomlTable& table);

std::string to_toml(const PipelineConfig& cfg);

struct ConfigSources {
  std::optional<std::filesystem::path> file;
  std::map<std::string, std::string> env;    // RAGIT_<SECTION>_<KEY> -> raw
  std::vector<std::string> overrides;        // "section.key=value", highest precedence
};

/// Layers defaults < file < env < overrides. String values from env and
/// overrides are coerced to the type of the schema key. Relative paths
/// from the file are resolved against the file's directory.
PipelineConfig resolve_config(const ConfigSources& sources);

/// Collects RAGIT_* variables from the process environment.
std::map<std::string, std::string> ragit_environment();

/// Environment variable name for a key path, e.g. job.top_k -> RAGIT_JOB_TOP_K.
std::string env_name(std::string_view key_path);

}  // namespace ragit
