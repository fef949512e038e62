#include "ragit/config.hpp"

#include <cerrno>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <set>

#include "ragit/error.hpp"
#include "ragit/util.hpp"

extern char** environ;

namespace ragit {

// TOML subset ---------------------------------------------------------------

namespace {

struct Cursor {
  std::string_view s;
  std::size_t i = 0;
  std::string_view source;
  std::size_t line = 0;

  [[noreturn]] void error(const std::string& what) const {
    fail(ErrorCode::ConfigError,
         std::string(source) + ":" + std::to_string(line) + ": " + what);
  }
  bool done() const { return i >= s.size(); }
  char peek() const { return done() ? '\0' : s[i]; }
  void skip_ws() {
    while (!done() && (s[i] == ' ' || s[i] == '\t')) ++i;
  }
  void expect_end() {
    skip_ws();
    if (!done() && s[i] != '#') error("unexpected trailing characters");
  }
};

bool is_bare_key_char(char c) {
  return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-';
}

std::string parse_bare_key(Cursor& c) {
  const auto start = c.i;
  while (!c.done() && is_bare_key_char(c.s[c.i])) ++c.i;
  if (c.i == start) c.error("expected a key");
  return std::string(c.s.substr(start, c.i - start));
}

void append_utf8(std::string& out, std::uint32_t cp) {
  if (cp < 0x80) {
    out.push_back(static_cast<char>(cp));
  } else if (cp < 0x800) {
    out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else if (cp < 0x10000) {
    out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else {
    out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  }
}

std::string parse_string(Cursor& c) {
  const char quote = c.s[c.i++];
  std::string out;
  while (true) {
    if (c.done()) c.error("unterminated string");
    const char ch = c.s[c.i++];
    if (ch == quote) return out;
    if (ch == '\\' && quote == '"') {
      if (c.done()) c.error("unterminated escape");
      const char e = c.s[c.i++];
      switch (e) {
        case 'n': out.push_back('\n'); break;
        case 't': out.push_back('\t'); break;
        case 'r': out.push_back('\r'); break;
        case 'b': out.push_back('\b'); break;
        case 'f': out.push_back('\f'); break;
        case '"': out.push_back('"'); break;
        case '\\': out.push_back('\\'); break;
        case 'u':
        case 'U': {
          const std::size_t len = e == 'u' ? 4 : 8;
          if (c.i + len > c.s.size()) c.error("short unicode escape");
          std::uint32_t cp = 0;
          auto [p, ec] = std::from_chars(c.s.data() + c.i, c.s.data() + c.i + len, cp, 16);
          if (ec != std::errc() || p != c.s.data() + c.i + len) c.error("bad unicode escape");
          c.i += len;
          append_utf8(out, cp);
          break;
        }
        default:
          c.error(std::string("unknown escape \\") + e);
      }
    } else {
      out.push_back(ch);
    }
  }
}

TomlValue parse_scalar(Cursor& c) {
  const char ch = c.peek();
  if (ch == '"' || ch == '\'') return parse_string(c);
  const auto start = c.i;
  while (!c.done() && c.s[c.i] != ',' && c.s[c.i] != ']' && c.s[c.i] != '#' && c.s[c.i] != ' ' &&
         c.s[c.i] != '\t') {
    ++c.i;
  }
  std::string tok(c.s.substr(start, c.i - start));
  if (tok == "true") return true;
  if (tok == "false") return false;
  std::string digits;
  for (char d : tok) {
    if (d != '_') digits.push_back(d);
  }
  if (digits.empty()) c.error("expected a value");
  const bool is_float = digits.find_first_of(".eE") != std::string::npos || digits == "inf" ||
                        digits == "+inf" || digits == "-inf" || digits == "nan";
  if (!is_float) {
    std::int64_t v = 0;
    const char* b = digits.data() + (digits[0] == '+' ? 1 : 0);
    auto [p, ec] = std::from_chars(b, digits.data() + digits.size(), v);
    if (ec != std::errc() || p != digits.data() + digits.size()) c.error("bad value '" + tok + "'");
    return v;
  }
  errno = 0;
  char* end = nullptr;
  const double v = std::strtod(digits.c_str(), &end);
  if (errno != 0 || end != digits.c_str() + digits.size()) c.error("bad number '" + tok + "'");
  return v;
}

TomlValue parse_value(Cursor& c) {
  if (c.peek() != '[') return parse_scalar(c);
  ++c.i;
  std::vector<std::string> items;
  while (true) {
    c.skip_ws();
    if (c.peek() == ']') {
      ++c.i;
      return items;
    }
    if (c.peek() != '"' && c.peek() != '\'') c.error("arrays may only hold strings");
    items.push_back(parse_string(c));
    c.skip_ws();
    if (c.peek() == ',') {
      ++c.i;
    } else if (c.peek() != ']') {
      c.error("expected ',' or ']' in array");
    }
  }
}

std::string quote(std::string_view s) {
  std::string out = "\"";
  for (unsigned char ch : s) {
    switch (ch) {
      case '"': out += "\\\""; break;
      case '\\': out += "\\\\"; break;
      case '\n': out += "\\n"; break;
      case '\t': out += "\\t"; break;
      case '\r': out += "\\r"; break;
      default:
        if (ch < 0x20 || ch == 0x7F) {
          char buf[8];
          std::snprintf(buf, sizeof buf, "\\u%04X", ch);
          out += buf;
        } else {
          out.push_back(static_cast<char>(ch));
        }
    }
  }
  return out + "\"";
}

}  // namespace

TomlTable parse_toml(std::string_view text, std::string_view source) {
  TomlTable table;
  std::string section;
  std::size_t lineno = 0;
  for (const auto& raw : split_lines(text)) {
    ++lineno;
    Cursor c{raw, 0, source, lineno};
    c.skip_ws();
    if (c.done() || c.peek() == '#') continue;
    if (c.peek() == '[') {
      ++c.i;
      c.skip_ws();
      section = parse_bare_key(c);
      c.skip_ws();
      if (c.peek() != ']') c.error("expected ']'");
      ++c.i;
      c.expect_end();
      continue;
    }
    const auto key = parse_bare_key(c);
    c.skip_ws();
    if (c.peek() != '=') c.error("expected '=' after " + key);
    ++c.i;
    c.skip_ws();
    auto value = parse_value(c);
    c.expect_end();
    const auto path = section.empty() ? key : section + "." + key;
    if (!table.emplace(path, std::move(value)).second) c.error("duplicate key " + path);
  }
  return table;
}

std::string toml_value_string(const TomlValue& v) {
  return std::visit(
      [](const auto& x) -> std::string {
        using T = std::decay_t<decltype(x)>;
        if constexpr (std::is_same_v<T, std::string>) {
          return quote(x);
        } else if constexpr (std::is_same_v<T, bool>) {
          return x ? "true" : "false";
        } else if constexpr (std::is_same_v<T, std::int64_t>) {
          return std::to_string(x);
        } else if constexpr (std::is_same_v<T, double>) {
          if (std::isnan(x)) return "nan";
          if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
          char buf[32];
          std::snprintf(buf, sizeof buf, "%.17g", x);
          std::string s = buf;
          // Shortest form that still round-trips.
          for (int prec = 1; prec < 17; ++prec) {
            std::snprintf(buf, sizeof buf, "%.*g", prec, x);
            if (std::strtod(buf, nullptr) == x) {
              s = buf;
              break;
            }
          }
          if (s.find_first_of(".eE") == std::string::npos) s += ".0";
          return s;
        } else {
          std::string out = "[";
          for (std::size_t i = 0; i < x.size(); ++i) {
            if (i) out += ", ";
            out += quote(x[i]);
          }
          return out + "]";
        }
      },
      v);
}

std::string write_toml(const TomlTable& table) {
  std::map<std::string, std::vector<std::pair<std::string, const TomlValue*>>> sections;
  for (const auto& [path, value] : table) {
    const auto dot = path.find('.');
    const auto section = dot == std::string::npos ? std::string() : path.substr(0, dot);
    const auto key = dot == std::string::npos ? path : path.substr(dot + 1);
    sections[section].emplace_back(key, &value);
  }
  std::string out;
  for (const auto& [section, keys] : sections) {
    if (!section.empty()) out += (out.empty() ? "" : "\n") + ("[" + section + "]\n");
    for (const auto& [key, value] : keys) out += key + " = " + toml_value_string(*value) + "\n";
  }
  return out;
}

// Pipeline schema -----------------------------------------------------------

namespace {

std::string_view to_string(ChunkScope s) { return s == ChunkScope::AllChunks ? "all_chunks" : "retrieval"; }

ChunkScope chunk_scope_from_string(std::string_view s) {
  if (s == "all_chunks") return ChunkScope::AllChunks;
  if (s == "retrieval") return ChunkScope::Retrieval;
  fail(ErrorCode::ConfigError, "job.scope must be 'all_chunks' or 'retrieval', got '" + std::string(s) + "'");
}

const std::set<std::string>& path_keys() {
  static const std::set<std::string> keys = {
      "paths.sources", "paths.corpus",  "paths.index",   "paths.samples", "paths.dataset",
      "paths.cases",   "paths.kpis",    "paths.reports", "paths.runs"};
  return keys;
}

class Reader {
 public:
  explicit Reader(const TomlTable& t) : t_(t) {}

  template <typename T>
  const T& get(const std::string& key) {
    seen_.insert(key);
    auto it = t_.find(key);
    if (it == t_.end()) fail(ErrorCode::ConfigError, key + " is missing");
    const T* v = std::get_if<T>(&it->second);
    if (!v) fail(ErrorCode::ConfigError, key + " has the wrong type");
    return *v;
  }

  std::string str(const std::string& key) { return get<std::string>(key); }
  bool boolean(const std::string& key) { return get<bool>(key); }
  std::int64_t integer(const std::string& key) { return get<std::int64_t>(key); }

  std::size_t size(const std::string& key) {
    const auto v = integer(key);
    if (v < 0) fail(ErrorCode::ConfigError, key + " must be >= 0");
    return static_cast<std::size_t>(v);
  }

  int int32(const std::string& key) {
    const auto v = integer(key);
    if (v < INT32_MIN || v > INT32_MAX) fail(ErrorCode::ConfigError, key + " is out of range");
    return static_cast<int>(v);
  }

  double number(const std::string& key) {
    seen_.insert(key);
    auto it = t_.find(key);
    if (it != t_.end()) {
      if (const auto* i = std::get_if<std::int64_t>(&it->second)) return static_cast<double>(*i);
    }
    return get<double>(key);
  }

  std::optional<std::int64_t> optional_integer(const std::string& key) {
    if (!t_.contains(key)) return std::nullopt;
    return integer(key);
  }

  void reject_unknown() const {
    for (const auto& [key, value] : t_) {
      if (!seen_.contains(key)) fail(ErrorCode::ConfigError, key + " is not a known setting");
    }
  }

 private:
  const TomlTable& t_;
  std::set<std::string> seen_;
};

// Runs a module validator and prefixes its message with `section` when the
// validator does not already name the key.
void rethrow_as_config(const std::string& section, const std::function<void()>& check) {
  try {
    check();
  } catch (const Error& e) {
    if (e.code() == ErrorCode::ConfigError) throw;
    fail(ErrorCode::ConfigError, section + "." + e.detail());
  }
}

}  // namespace

TomlTable to_table(const PipelineConfig& cfg) {
  TomlTable t;
  t["paths.sources"] = cfg.paths.sources;
  t["paths.corpus"] = cfg.paths.corpus;
  t["paths.index"] = cfg.paths.index;
  t["paths.samples"] = cfg.paths.samples;
  t["paths.dataset"] = cfg.paths.dataset;
  t["paths.cases"] = cfg.paths.cases;
  t["paths.kpis"] = cfg.paths.kpis;
  t["paths.reports"] = cfg.paths.reports;
  t["paths.runs"] = cfg.paths.runs;

  const auto& b = cfg.backend;
  t["backend.kind"] = std::string(to_string(b.kind));
  t["backend.base_url"] = b.base_url;
  t["backend.api_key_env"] = b.api_key_env;
  t["backend.timeout_ms"] = std::int64_t{b.timeout_ms};
  t["backend.max_retries"] = std::int64_t{b.max_retries};
  t["backend.backoff_base_ms"] = std::int64_t{b.backoff_base_ms};
  if (b.seed) t["backend.seed"] = static_cast<std::int64_t>(*b.seed);
  t["backend.embed_model"] = b.embed_model;
  t["backend.embed_dim"] = static_cast<std::int64_t>(b.embed_dim);
  t["backend.max_in_flight"] = std::int64_t{b.max_in_flight};

  t["chunk.size"] = static_cast<std::int64_t>(cfg.chunk.chunk_size);
  t["chunk.overlap"] = static_cast<std::int64_t>(cfg.chunk.overlap);

  const auto& j = cfg.job;
  t["job.job_id"] = j.job_id;
  t["job.mode"] = cfg.mode;
  t["job.num_questions_per_chunk"] = static_cast<std::int64_t>(j.num_questions_per_chunk);
  t["job.scope"] = std::string(to_string(j.scope));
  t["job.top_k"] = static_cast<std::int64_t>(j.top_k);
  t["job.teacher_model_id"] = j.teacher_model_id;
  t["job.temperature"] = j.temperature;
  std::vector<std::string> seeds;
  for (auto s : j.seed_types) seeds.emplace_back(to_string(s));
  t["job.seed_types"] = seeds;
  t["job.created_at"] = j.created_at;
  t["job.max_answer_words"] = static_cast<std::int64_t>(j.qc.max_answer_words);
  t["job.min_overlap"] = static_cast<std::int64_t>(j.qc.min_overlap);
  t["job.dedup"] = cfg.dedup;
  t["job.dedup_threshold"] = cfg.dedup_threshold;
  t["job.workers"] = static_cast<std::int64_t>(cfg.workers);

  const auto& tr = cfg.trainer;
  t["trainer.base_model"] = tr.base_model;
  t["trainer.method"] = std::string(to_string(tr.method));
  t["trainer.quant_bits"] = std::int64_t{tr.quant_bits};
  t["trainer.learning_rate"] = tr.learning_rate;
  t["trainer.epochs"] = std::int64_t{tr.epochs};
  t["trainer.max_seq_len"] = static_cast<std::int64_t>(tr.max_seq_len);
  t["trainer.lora_rank"] = std::int64_t{tr.lora_rank};
  t["trainer.lora_alpha"] = std::int64_t{tr.lora_alpha};
  t["trainer.dataset_path"] = tr.dataset_path;

  t["split.train_fraction"] = cfg.split.train_fraction;
  t["split.eval_fraction"] = cfg.split.eval_fraction;
  t["split.seed"] = static_cast<std::int64_t>(cfg.split.shuffle_seed);
  return t;
}

PipelineConfig config_from_table(const TomlTable& table) {
  Reader r(table);
  PipelineConfig cfg;
  cfg.paths.sources = r.str("paths.sources");
  cfg.paths.corpus = r.str("paths.corpus");
  cfg.paths.index = r.str("paths.index");
  cfg.paths.samples = r.str("paths.samples");
  cfg.paths.dataset = r.str("paths.dataset");
  cfg.paths.cases = r.str("paths.cases");
  cfg.paths.kpis = r.str("paths.kpis");
  cfg.paths.reports = r.str("paths.reports");
  cfg.paths.runs = r.str("paths.runs");

  auto& b = cfg.backend;
  b.kind = backend_kind_from_string(r.str("backend.kind"));
  b.base_url = r.str("backend.base_url");
  b.api_key_env = r.str("backend.api_key_env");
  b.timeout_ms = r.int32("backend.timeout_ms");
  b.max_retries = r.int32("backend.max_retries");
  b.backoff_base_ms = r.int32("backend.backoff_base_ms");
  if (auto seed = r.optional_integer("backend.seed")) {
    b.seed = static_cast<std::uint64_t>(*seed);
  } else {
    b.seed.reset();
  }
  b.embed_model = r.str("backend.embed_model");
  b.embed_dim = r.size("backend.embed_dim");
  b.max_in_flight = r.int32("backend.max_in_flight");
  if (b.backoff_base_ms < 0) fail(ErrorCode::ConfigError, "backend.backoff_base_ms must be >= 0");
  validate(b);

  cfg.chunk.chunk_size = r.size("chunk.size");
  cfg.chunk.overlap = r.size("chunk.overlap");
  rethrow_as_config("chunk", [&] { validate(cfg.chunk); });

  auto& j = cfg.job;
  j.job_id = r.str("job.job_id");
  cfg.mode = r.str("job.mode");
  if (cfg.mode != "chunks" && cfg.mode != "seeds") {
    fail(ErrorCode::ConfigError, "job.mode must be 'chunks' or 'seeds', got '" + cfg.mode + "'");
  }
  j.num_questions_per_chunk = r.size("job.num_questions_per_chunk");
  j.scope = chunk_scope_from_string(r.str("job.scope"));
  j.top_k = r.size("job.top_k");
  j.teacher_model_id = r.str("job.teacher_model_id");
  j.temperature = r.number("job.temperature");
  j.seed_types.clear();
  for (const auto& s : r.get<std::vector<std::string>>("job.seed_types")) {
    rethrow_as_config("job.seed_types", [&] { j.seed_types.push_back(seed_type_from_string(s)); });
  }
  j.created_at = r.str("job.created_at");
  j.qc.max_answer_words = r.size("job.max_answer_words");
  j.qc.min_overlap = r.size("job.min_overlap");
  cfg.dedup = r.boolean("job.dedup");
  cfg.dedup_threshold = r.number("job.dedup_threshold");
  if (!(cfg.dedup_threshold > 0.0 && cfg.dedup_threshold <= 1.0)) {
    fail(ErrorCode::ConfigError, "job.dedup_threshold must be in (0, 1]");
  }
  cfg.workers = r.size("job.workers");
  if (cfg.workers == 0) fail(ErrorCode::ConfigError, "job.workers must be >= 1");
  validate(j);

  auto& tr = cfg.trainer;
  tr.base_model = r.str("trainer.base_model");
  tr.method = tune_method_from_string(r.str("trainer.method"));
  tr.quant_bits = r.int32("trainer.quant_bits");
  tr.learning_rate = r.number("trainer.learning_rate");
  tr.epochs = r.int32("trainer.epochs");
  tr.max_seq_len = r.size("trainer.max_seq_len");
  tr.lora_rank = r.int32("trainer.lora_rank");
  tr.lora_alpha = r.int32("trainer.lora_alpha");
  tr.dataset_path = r.str("trainer.dataset_path");
  validate(tr);

  cfg.split.train_fraction = r.number("split.train_fraction");
  cfg.split.eval_fraction = r.number("split.eval_fraction");
  const auto seed = r.integer("split.seed");
  if (seed < 0) fail(ErrorCode::ConfigError, "split.seed must be >= 0");
  cfg.split.shuffle_seed = static_cast<std::uint64_t>(seed);
  validate(cfg.split);

  r.reject_unknown();
  return cfg;
}

std::string to_toml(const PipelineConfig& cfg) { return write_toml(to_table(cfg)); }

std::string env_name(std::string_view key_path) {
  std::string out = "RAGIT_";
  for (char c : key_path) {
    out.push_back(c == '.' ? '_' : static_cast<char>(std::toupper(static_cast<unsigned char>(c))));
  }
  return out;
}

std::map<std::string, std::string> ragit_environment() {
  std::map<std::string, std::string> out;
  for (char** e = environ; e && *e; ++e) {
    std::string_view kv(*e);
    if (!kv.starts_with("RAGIT_")) continue;
    const auto eq = kv.find('=');
    if (eq == std::string_view::npos) continue;
    out.emplace(kv.substr(0, eq), kv.substr(eq + 1));
  }
  return out;
}

namespace {

// Coerces a raw command-line or environment string to the type the schema
// uses for `key`. `like` is the default value (absent for optional keys).
TomlValue coerce(const std::string& key, const std::string& raw, const TomlValue* like) {
  if (!like || std::holds_alternative<std::int64_t>(*like)) {
    std::int64_t v = 0;
    auto [p, ec] = std::from_chars(raw.data(), raw.data() + raw.size(), v);
    if (ec != std::errc() || p != raw.data() + raw.size()) {
      fail(ErrorCode::ConfigError, key + " expects an integer, got '" + raw + "'");
    }
    return v;
  }
  if (std::holds_alternative<std::string>(*like)) return raw;
  if (std::holds_alternative<bool>(*like)) {
    const auto l = to_lower_ascii(raw);
    if (l == "true" || l == "1" || l == "yes") return true;
    if (l == "false" || l == "0" || l == "no") return false;
    fail(ErrorCode::ConfigError, key + " expects a boolean, got '" + raw + "'");
  }
  if (std::holds_alternative<double>(*like)) {
    errno = 0;
    char* end = nullptr;
    const double v = std::strtod(raw.c_str(), &end);
    if (raw.empty() || errno != 0 || end != raw.c_str() + raw.size()) {
      fail(ErrorCode::ConfigError, key + " expects a number, got '" + raw + "'");
    }
    return v;
  }
  std::vector<std::string> items;
  std::size_t start = 0;
  while (start <= raw.size()) {
    auto end = raw.find(',', start);
    if (end == std::string::npos) end = raw.size();
    const auto t = trim(std::string_view(raw).substr(start, end - start));
    if (!t.empty()) items.emplace_back(t);
    start = end + 1;
  }
  return items;
}

}  // namespace

PipelineConfig resolve_config(const ConfigSources& sources) {
  const auto defaults = to_table(PipelineConfig{});
  auto schema_value = [&](const std::string& key) -> const TomlValue* {
    auto it = defaults.find(key);
    return it == defaults.end() ? nullptr : &it->second;
  };
  auto known = [&](const std::string& key) { return defaults.contains(key) || key == "backend.seed"; };

  TomlTable table = defaults;
  if (sources.file) {
    const auto file_table = parse_toml(read_file(*sources.file), sources.file->string());
    const auto base = sources.file->parent_path();
    for (auto [key, value] : file_table) {
      if (!known(key)) fail(ErrorCode::ConfigError, key + " is not a known setting");
      if (path_keys().contains(key)) {
        if (const auto* s = std::get_if<std::string>(&value); s && !s->empty()) {
          std::filesystem::path p(*s);
          if (p.is_relative()) value = (base / p).lexically_normal().string();
        }
      }
      table[key] = std::move(value);
    }
  }
  std::vector<std::string> keys;
  for (const auto& [key, value] : defaults) keys.push_back(key);
  keys.push_back("backend.seed");
  for (const auto& key : keys) {
    auto it = sources.env.find(env_name(key));
    if (it != sources.env.end()) table[key] = coerce(key, it->second, schema_value(key));
  }
  for (const auto& o : sources.overrides) {
    const auto eq = o.find('=');
    if (eq == std::string::npos) fail(ErrorCode::ConfigError, "override '" + o + "' is not key=value");
    const std::string key(trim(std::string_view(o).substr(0, eq)));
    if (!known(key)) fail(ErrorCode::ConfigError, key + " is not a known setting");
    table[key] = coerce(key, o.substr(eq + 1), schema_value(key));
  }
  return config_from_table(table);
}

}  // namespace ragit
