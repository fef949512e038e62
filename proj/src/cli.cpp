#include "ragit/cli.hpp"

#include <unistd.h>

#include <atomic>
#include <chrono>
#include <csignal>
#include <functional>
#include <map>
#include <optional>
#include <set>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "ragit/analyst.hpp"
#include "ragit/analyst_http.hpp"
#include "ragit/config.hpp"
#include "ragit/corpus.hpp"
#include "ragit/datasetout.hpp"
#include "ragit/error.hpp"
#include "ragit/evalkit.hpp"
#include "ragit/instructgen.hpp"
#include "ragit/llmgate.hpp"
#include "ragit/prompts.hpp"
#include "ragit/util.hpp"
#include "ragit/vecindex.hpp"

#ifndef RAGIT_VERSION
#define RAGIT_VERSION "0.0.0"
#endif
#ifndef RAGIT_DATA_DIR
#define RAGIT_DATA_DIR "data"
#endif

namespace ragit::cli {

using nlohmann::json;
using nlohmann::ordered_json;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

std::string version() { return RAGIT_VERSION; }

namespace {

const std::set<std::string> kSubcommands = {"ingest", "index",  "generate", "emit",
                                            "eval",   "serve", "pipeline"};

class Logger {
 public:
  Logger(std::ostream& sink, bool json_lines) : sink_(sink), json_(json_lines) {}

  void info(const std::string& msg, ordered_json fields = ordered_json::object()) {
    write("info", msg, std::move(fields));
  }
  void error(const std::string& msg, ordered_json fields = ordered_json::object()) {
    write("error", msg, std::move(fields));
  }

 private:
  void write(const char* level, const std::string& msg, ordered_json fields) {
    if (json_) {
      ordered_json j;
      j["ts"] = utc_now_iso8601();
      j["level"] = level;
      j["msg"] = msg;
      for (auto& [k, v] : fields.items()) j[k] = v;
      sink_ << j.dump() << "\n";
    } else {
      sink_ << "[" << level << "] " << msg;
      if (!fields.empty()) sink_ << " " << fields.dump();
      sink_ << "\n";
    }
  }

  std::ostream& sink_;
  bool json_;
};

// Per-invocation record of what was read, written, and how long it took.
class RunManifest {
 public:
  RunManifest(std::string subcommand, std::vector<std::string> args)
      : subcommand_(std::move(subcommand)), args_(std::move(args)), started_(utc_now_iso8601()),
        t0_(Clock::now()) {}

  void input(const fs::path& p) { hash_into(inputs_, p); }
  void output(const fs::path& p) { hash_into(outputs_, p); }

  template <typename Fn>
  auto stage(const std::string& name, Fn&& fn) {
    const auto t = Clock::now();
    struct Done {
      RunManifest* self;
      std::string name;
      Clock::time_point t;
      ~Done() { self->stages_.emplace_back(name, ms_since(t)); }
    } done{this, name, t};
    return fn();
  }

  void write(const fs::path& runs_dir, int exit_code, const std::string& error) const {
    ordered_json j;
    j["subcommand"] = subcommand_;
    j["args"] = args_;
    j["versions"] = {{"ragit", version()},
                     {"index_format", VectorIndex::kFormatVersion},
                     {"judge_prompt", prompts::kJudgePromptVersion}};
    j["started_at"] = started_;
    j["finished_at"] = utc_now_iso8601();
    j["duration_ms"] = ms_since(t0_);
    j["stages"] = ordered_json::array();
    for (const auto& [name, ms] : stages_) j["stages"].push_back({{"name", name}, {"ms", ms}});
    j["inputs"] = inputs_;
    j["outputs"] = outputs_;
    j["exit_code"] = exit_code;
    if (!error.empty()) j["error"] = error;

    std::string stamp = started_;
    std::erase_if(stamp, [](char c) { return c == ':' || c == '-'; });
    static std::atomic<int> seq{0};
    const auto name = subcommand_ + "-" + stamp + "-" + std::to_string(::getpid()) + "-" +
                      std::to_string(seq++) + ".json";
    write_file(runs_dir / name, j.dump(2) + "\n");
  }

 private:
  static double ms_since(Clock::time_point t) {
    return std::chrono::duration<double, std::milli>(Clock::now() - t).count();
  }

  static void hash_into(std::map<std::string, std::string>& into, const fs::path& p) {
    if (fs::is_directory(p)) {
      for (const auto& e : fs::recursive_directory_iterator(p)) {
        if (e.is_regular_file()) into[e.path().string()] = sha256_file(e.path());
      }
    } else if (fs::exists(p)) {
      into[p.string()] = sha256_file(p);
    }
  }

  std::string subcommand_;
  std::vector<std::string> args_;
  std::string started_;
  Clock::time_point t0_;
  std::vector<std::pair<std::string, double>> stages_;
  std::map<std::string, std::string> inputs_;
  std::map<std::string, std::string> outputs_;
};

struct Context {
  PipelineConfig cfg;
  Logger& log;
  RunManifest& manifest;
  std::ostream& out;
  std::optional<fs::path> call_log;

  std::unique_ptr<Gateway> gateway() const {
    auto g = std::make_unique<Gateway>(cfg.backend);
    if (call_log) g->set_call_log_file(*call_log);
    return g;
  }
};

// Stages ----------------------------------------------------------------------

struct SourceSpec {
  fs::path path;
  DocumentMeta meta;
};

std::vector<SourceSpec> read_sources(const fs::path& sources_file) {
  const auto j = json::parse(read_file(sources_file), nullptr, false);
  if (j.is_discarded() || !j.is_array()) {
    fail(ErrorCode::ConfigError, "paths.sources: " + sources_file.string() + " is not a JSON array");
  }
  std::vector<SourceSpec> out;
  for (const auto& item : j) {
    try {
      SourceSpec s;
      s.path = item.at("path").get<std::string>();
      if (s.path.is_relative()) s.path = sources_file.parent_path() / s.path;
      s.meta.company = item.at("company").get<std::string>();
      s.meta.fiscal_period = item.at("fiscal_period").get<std::string>();
      s.meta.doc_type = doc_type_from_string(item.at("doc_type").get<std::string>());
      s.meta.source_uri = item.value("source_uri", s.path.filename().string());
      out.push_back(std::move(s));
    } catch (const json::exception& e) {
      fail(ErrorCode::ConfigError, "paths.sources: bad entry: " + std::string(e.what()));
    }
  }
  return out;
}

std::vector<Document> ingest_sources(const std::vector<SourceSpec>& sources, const fs::path& corpus,
                                     Context& ctx) {
  CorpusStore store(corpus);
  std::vector<Document> docs;
  for (const auto& s : sources) {
    ctx.manifest.input(s.path);
    auto doc = ingest(read_file(s.path), s.meta);
    store.add(doc);
    ctx.manifest.output(store.document_path(doc.doc_id));
    docs.push_back(std::move(doc));
  }
  ctx.manifest.output(corpus);
  return docs;
}

std::vector<Document> load_corpus(const fs::path& corpus, Context& ctx) {
  ctx.manifest.input(corpus);
  auto docs = CorpusStore(corpus).load();
  std::sort(docs.begin(), docs.end(),
            [](const Document& a, const Document& b) { return a.doc_id < b.doc_id; });
  return docs;
}

std::vector<Chunk> chunk_all(const std::vector<Document>& docs, const ChunkParams& params) {
  std::vector<Chunk> out;
  for (const auto& d : docs) {
    auto cs = chunk(d, params);
    out.insert(out.end(), std::make_move_iterator(cs.begin()), std::make_move_iterator(cs.end()));
  }
  return out;
}

ordered_json stats_json(const CorpusStats& s) {
  ordered_json j;
  j["documents"] = s.document_count;
  j["chunks"] = s.chunk_count;
  j["total_tokens"] = s.total_tokens;
  j["documents_per_type"] = ordered_json::object();
  for (const auto& [t, n] : s.documents_per_type) j["documents_per_type"][std::string(to_string(t))] = n;
  j["chunks_per_type"] = ordered_json::object();
  for (const auto& [t, n] : s.chunks_per_type) j["chunks_per_type"][std::string(to_string(t))] = n;
  j["token_histogram"] = ordered_json::object();
  for (const auto& [bin, n] : s.token_histogram) j["token_histogram"][std::to_string(bin)] = n;
  return j;
}

void build_and_save_index(const std::vector<Document>& docs, Context& ctx) {
  const auto chunks = chunk_all(docs, ctx.cfg.chunk);
  auto gw = ctx.gateway();
  const auto index = build_index(docs, chunks, *gw);
  index.save(ctx.cfg.paths.index);
  ctx.manifest.output(ctx.cfg.paths.index);
  ctx.log.info("index built", {{"entries", index.size()}, {"dim", index.dim()}});
}

GenerationOutput generate_samples(const std::vector<Document>& docs, Context& ctx) {
  auto gw = ctx.gateway();
  GenerationOutput gen;
  if (ctx.cfg.mode == "chunks") {
    gen = generate_for_chunks(chunk_all(docs, ctx.cfg.chunk), ctx.cfg.job, *gw, ctx.cfg.workers);
  } else {
    ctx.manifest.input(ctx.cfg.paths.index);
    const auto index = VectorIndex::load(ctx.cfg.paths.index);
    std::set<std::pair<std::string, std::string>> keys;
    for (const auto& d : docs) keys.emplace(d.company, d.fiscal_period);
    ConversationOptions opts;
    opts.fallback_seeds = {SeedType::Analysis};
    gen.report.job_id = ctx.cfg.job.job_id;
    for (const auto& [company, period] : keys) {
      for (auto& turn : run_seed_conversation(company, period, ctx.cfg.job, index, *gw, opts)) {
        if (turn.sample) {
          gen.samples.push_back(std::move(*turn.sample));
        } else if (turn.error) {
          gen.report.seed_errors.push_back(company + "/" + period + "/" +
                                           std::string(to_string(turn.seed.seed_type)) + ": " +
                                           *turn.error);
        }
      }
    }
    gen.report.samples = gen.samples.size();
  }
  if (ctx.cfg.dedup) {
    auto d = dedup(gen.samples, ctx.cfg.dedup_threshold, *gw);
    ctx.log.info("dedup", {{"kept", d.kept.size()}, {"dropped", d.dropped.size()}});
    gen.samples = std::move(d.kept);
    gen.report.samples = gen.samples.size();
  }
  write_file(ctx.cfg.paths.samples, to_jsonl(gen.samples));
  auto report_path = fs::path(ctx.cfg.paths.samples);
  report_path += ".report.json";
  write_file(report_path, gen.report.to_json().dump(2) + "\n");
  ctx.manifest.output(ctx.cfg.paths.samples);
  ctx.manifest.output(report_path);
  ctx.log.info("samples written", {{"samples", gen.samples.size()}, {"path", ctx.cfg.paths.samples}});
  return gen;
}

EmitManifest emit_dataset(const std::vector<InstructionSample>& samples, Context& ctx) {
  std::vector<TrainingRecord> records;
  records.reserve(samples.size());
  for (const auto& s : samples) records.push_back(render_record(s));
  auto m = emit(records, ctx.cfg.trainer, ctx.cfg.split, ctx.cfg.paths.dataset, ctx.cfg.job.created_at);
  ctx.manifest.output(ctx.cfg.paths.dataset);
  ctx.log.info("dataset emitted", {{"train", m.train}, {"eval", m.eval}, {"overflow", m.overflow}});
  return m;
}

// Signal handling for `serve`.
std::atomic<AnalystHttpServer*> g_server{nullptr};

extern "C" void on_stop_signal(int) {
  if (auto* s = g_server.load()) s->stop();
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Retrieval-augmented instruction data toolkit for financial documents", "ragit"};
  app.require_subcommand(0, 1);

  bool show_version = false;
  bool json_logs = false;
  std::optional<std::string> call_log;
  std::optional<std::string> config_file;
  std::optional<std::string> backend;
  std::vector<std::string> sets;
  app.add_flag("--version", show_version, "Print the version and exit");
  app.add_flag("--json-logs", json_logs, "Structured (JSON lines) logging on stderr");
  app.add_option("--call-log", call_log, "Append one JSON line per model call to this file");
  app.add_option("--config", config_file, "TOML configuration file");
  app.add_option("--backend", backend, "Model backend: http or stub")
      ->check(CLI::IsMember({"http", "stub"}));
  app.add_option("--set", sets, "Override a setting, e.g. --set job.top_k=8")->allow_extra_args(false);

  // Subcommand-specific flags map onto config keys so one precedence rule
  // (flag > env > file > default) covers everything.
  std::map<std::string, std::optional<std::string>> flag_values;
  auto keyed = [&](CLI::App* sub, const std::string& flag, const std::string& key,
                   const std::string& help) {
    sub->add_option(flag, flag_values[flag + "|" + key], help);
  };

  auto* ingest_cmd = app.add_subcommand("ingest", "Normalize source documents into a corpus");
  keyed(ingest_cmd, "--sources", "paths.sources", "JSON list of {path, company, fiscal_period, doc_type}");
  keyed(ingest_cmd, "--corpus", "paths.corpus", "Corpus manifest to create or extend");
  std::optional<std::string> one_file, one_company, one_period, one_type;
  ingest_cmd->add_option("--file", one_file, "Single document to ingest instead of --sources");
  ingest_cmd->add_option("--company", one_company);
  ingest_cmd->add_option("--period", one_period);
  ingest_cmd->add_option("--type", one_type);

  auto* index_cmd = app.add_subcommand("index", "Build or query the vector index");
  index_cmd->require_subcommand(1);
  auto* index_build = index_cmd->add_subcommand("build", "Chunk and embed the corpus");
  keyed(index_build, "--corpus", "paths.corpus", "Corpus manifest");
  keyed(index_build, "--out", "paths.index", "Index file to write");
  auto* index_query = index_cmd->add_subcommand("query", "Top-k chunks for a text");
  keyed(index_query, "--index", "paths.index", "Index file");
  std::string query_text;
  std::size_t query_k = 5;
  std::optional<std::string> q_company, q_period, q_type;
  index_query->add_option("--text", query_text)->required();
  index_query->add_option("--k", query_k);
  index_query->add_option("--company", q_company);
  index_query->add_option("--period", q_period);
  index_query->add_option("--type", q_type);

  auto* gen_cmd = app.add_subcommand("generate", "Generate instruction samples");
  keyed(gen_cmd, "--corpus", "paths.corpus", "Corpus manifest");
  keyed(gen_cmd, "--index", "paths.index", "Index file (seeds mode)");
  keyed(gen_cmd, "--mode", "job.mode", "chunks or seeds");
  keyed(gen_cmd, "--n", "job.num_questions_per_chunk", "Questions per chunk");
  keyed(gen_cmd, "--out", "paths.samples", "Samples JSONL to write");
  keyed(gen_cmd, "--workers", "job.workers", "Concurrent chunk workers");
  keyed(gen_cmd, "--dedup-threshold", "job.dedup_threshold", "Cosine threshold for --dedup");
  bool dedup_flag = false;
  gen_cmd->add_flag("--dedup", dedup_flag, "Drop near-duplicate queries");

  auto* emit_cmd = app.add_subcommand("emit", "Render and split samples into a training dataset");
  keyed(emit_cmd, "--samples", "paths.samples", "Samples JSONL");
  keyed(emit_cmd, "--out", "paths.dataset", "Output directory");
  keyed(emit_cmd, "--seed", "split.seed", "Shuffle seed");
  std::optional<double> train_frac;
  emit_cmd->add_option("--train-frac", train_frac, "Train fraction; eval gets the rest");

  auto* eval_cmd = app.add_subcommand("eval", "Judge and compare model answers");
  keyed(eval_cmd, "--cases", "paths.cases", "EvalCase JSONL");
  std::string judge_model = "gpt-4";
  std::optional<std::string> records_in, summary_in;
  std::string eval_out = "eval";
  std::size_t eval_workers = 1;
  eval_cmd->add_option("--judge-model", judge_model);
  eval_cmd->add_option("--records", records_in, "Aggregate precomputed EvalRecord JSONL");
  eval_cmd->add_option("--summary", summary_in, "Render an existing summary.json");
  eval_cmd->add_option("--out", eval_out, "Output directory");
  eval_cmd->add_option("--workers", eval_workers);

  auto* serve_cmd = app.add_subcommand("serve", "Run the analyst HTTP service");
  keyed(serve_cmd, "--index", "paths.index", "Index file");
  keyed(serve_cmd, "--kpis", "paths.kpis", "KPI registry file (seeded from the baseline)");
  keyed(serve_cmd, "--reports", "paths.reports", "Report store JSONL");
  std::string host = "127.0.0.1";
  int port = 8080;
  std::string baseline = std::string(RAGIT_DATA_DIR) + "/baseline_kpis.json";
  std::optional<std::string> ui_dir;
  serve_cmd->add_option("--host", host);
  serve_cmd->add_option("--port", port);
  serve_cmd->add_option("--baseline", baseline, "Baseline KPI definitions");
  serve_cmd->add_option("--ui", ui_dir, "Static files served under /ui");

  auto* pipeline_cmd = app.add_subcommand("pipeline", "ingest, index, generate and emit in one run");

  for (auto* sub : {ingest_cmd, index_cmd, index_build, index_query, gen_cmd, emit_cmd, eval_cmd,
                    serve_cmd, pipeline_cmd}) {
    sub->fallthrough();
  }

  std::vector<std::string> argv_rest(args.begin() + (args.empty() ? 0 : 1), args.end());
  try {
    std::vector<std::string> reversed(argv_rest.rbegin(), argv_rest.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    for (const auto& a : argv_rest) {
      if (a.starts_with("-")) continue;
      if (!kSubcommands.contains(a)) {
        err << "error: " << to_string(ErrorCode::UnknownSubcommand) << ": '" << a
            << "' (expected one of ingest, index, generate, emit, eval, serve, pipeline)\n";
        return kExitValidation;
      }
      break;
    }
    err << "error: " << e.what() << "\n";
    return kExitValidation;
  }

  if (show_version) {
    out << "ragit " << version() << "\n";
    return kExitOk;
  }
  if (app.get_subcommands().empty()) {
    out << app.help();
    return kExitValidation;
  }

  auto* sub = app.get_subcommands().front();
  std::string sub_name = sub->get_name();
  if (sub == index_cmd) sub_name += " " + index_cmd->get_subcommands().front()->get_name();

  Logger log(err, json_logs);
  RunManifest manifest(sub_name, argv_rest);
  std::optional<fs::path> runs_dir;
  int code = kExitOk;
  std::string error_text;

  try {
    ConfigSources sources;
    if (config_file) sources.file = *config_file;
    sources.env = ragit_environment();
    if (backend) sources.overrides.push_back("backend.kind=" + *backend);
    for (const auto& [flag_key, value] : flag_values) {
      if (!value) continue;
      const auto key = flag_key.substr(flag_key.find('|') + 1);
      // Options shared by name across subcommands only apply to the chosen one.
      const auto flag = flag_key.substr(0, flag_key.find('|'));
      bool on_active = false;
      for (auto* s : {sub, sub == index_cmd ? index_cmd->get_subcommands().front() : sub}) {
        if (auto* opt = s->get_option_no_throw(flag); opt && opt->count() > 0) on_active = true;
      }
      if (on_active) sources.overrides.push_back(key + "=" + *value);
    }
    if (dedup_flag) sources.overrides.push_back("job.dedup=true");
    if (train_frac) {
      sources.overrides.push_back("split.train_fraction=" + std::to_string(*train_frac));
      sources.overrides.push_back("split.eval_fraction=" + std::to_string(1.0 - *train_frac));
    }
    for (const auto& s : sets) sources.overrides.push_back(s);

    Context ctx{resolve_config(sources), log, manifest, out, {}};
    if (call_log) ctx.call_log = fs::path(*call_log);
    runs_dir = ctx.cfg.paths.runs;
    if (config_file) manifest.input(*config_file);

    if (sub == ingest_cmd) {
      std::vector<SourceSpec> specs;
      if (one_file) {
        if (!one_company || !one_period || !one_type) {
          fail(ErrorCode::InvalidParams, "--file needs --company, --period and --type");
        }
        specs.push_back({*one_file, {*one_company, *one_period, doc_type_from_string(*one_type),
                                     fs::path(*one_file).filename().string()}});
      } else {
        ctx.manifest.input(ctx.cfg.paths.sources);
        specs = read_sources(ctx.cfg.paths.sources);
      }
      manifest.stage("ingest", [&] { return ingest_sources(specs, ctx.cfg.paths.corpus, ctx); });
      const auto docs = CorpusStore(ctx.cfg.paths.corpus).load();
      out << stats_json(corpus_stats(docs, chunk_all(docs, ctx.cfg.chunk))).dump(2) << "\n";
    } else if (sub == index_cmd && index_cmd->got_subcommand(index_build)) {
      const auto docs = load_corpus(ctx.cfg.paths.corpus, ctx);
      manifest.stage("index", [&] { build_and_save_index(docs, ctx); return 0; });
    } else if (sub == index_cmd) {
      ctx.manifest.input(ctx.cfg.paths.index);
      const auto index = VectorIndex::load(ctx.cfg.paths.index);
      auto gw = ctx.gateway();
      QueryFilter filter;
      if (q_company) filter.company = *q_company;
      if (q_period) filter.fiscal_period = *q_period;
      if (q_type) filter.doc_types = std::set<DocType>{doc_type_from_string(*q_type)};
      const auto q = gw->embed({query_text}, "query").front();
      ordered_json hits = ordered_json::array();
      for (const auto& h : index.query(q, query_k, filter)) {
        hits.push_back({{"chunk_id", h.entry.chunk_id}, {"doc_id", h.entry.doc_id},
                        {"score", h.score}, {"text", h.entry.text}});
      }
      out << hits.dump(2) << "\n";
    } else if (sub == gen_cmd) {
      const auto docs = load_corpus(ctx.cfg.paths.corpus, ctx);
      const auto gen = manifest.stage("generate", [&] { return generate_samples(docs, ctx); });
      out << gen.report.to_json().dump(2) << "\n";
    } else if (sub == emit_cmd) {
      ctx.manifest.input(ctx.cfg.paths.samples);
      const auto samples = read_samples_jsonl(ctx.cfg.paths.samples);
      const auto m = manifest.stage("emit", [&] { return emit_dataset(samples, ctx); });
      out << m.to_json().dump(2) << "\n";
    } else if (sub == eval_cmd) {
      std::vector<EvalSummary> summaries;
      const fs::path dir = eval_out;
      if (summary_in) {
        manifest.input(*summary_in);
        summaries = summaries_from_json(json::parse(read_file(*summary_in)));
      } else {
        std::vector<EvalRecord> records;
        if (records_in) {
          manifest.input(*records_in);
          records = read_records_jsonl(*records_in);
        } else {
          manifest.input(ctx.cfg.paths.cases);
          const auto cases = read_cases_jsonl(ctx.cfg.paths.cases);
          auto gw = ctx.gateway();
          records = manifest.stage("judge", [&] { return evaluate(cases, *gw, judge_model, eval_workers); });
        }
        std::string lines;
        for (const auto& r : records) lines += to_json(r).dump() + "\n";
        write_file(dir / "records.jsonl", lines);
        manifest.output(dir / "records.jsonl");
        summaries = aggregate(records);
      }
      const auto report = render_comparison(summaries);
      write_file(dir / "summary.json", report.json.dump(2) + "\n");
      write_file(dir / "table.txt", report.table);
      manifest.output(dir / "summary.json");
      manifest.output(dir / "table.txt");
      out << report.table;
    } else if (sub == serve_cmd) {
      manifest.input(ctx.cfg.paths.index);
      const auto index = VectorIndex::load(ctx.cfg.paths.index);
      auto registry = KpiRegistry::open(ctx.cfg.paths.kpis, baseline);
      ReportStore reports(ctx.cfg.paths.reports);
      auto gw = ctx.gateway();
      AnalystService service(index, *gw, registry, reports);
      HttpOptions hopts;
      if (ui_dir) hopts.ui_dir = fs::path(*ui_dir);
      AnalystHttpServer server(service, hopts);
      server.bind(host, port);
      manifest.write(*runs_dir, kExitOk, "");
      log.info("serving", {{"host", host}, {"port", port}, {"entries", index.size()}});
      g_server = &server;
      std::signal(SIGINT, on_stop_signal);
      std::signal(SIGTERM, on_stop_signal);
      server.listen();
      g_server = nullptr;
      return kExitOk;
    } else if (sub == pipeline_cmd) {
      ctx.manifest.input(ctx.cfg.paths.sources);
      const auto specs = read_sources(ctx.cfg.paths.sources);
      const auto docs_in =
          manifest.stage("ingest", [&] { return ingest_sources(specs, ctx.cfg.paths.corpus, ctx); });
      auto docs = CorpusStore(ctx.cfg.paths.corpus).load();
      std::sort(docs.begin(), docs.end(),
                [](const Document& a, const Document& b) { return a.doc_id < b.doc_id; });
      const auto stats = corpus_stats(docs, chunk_all(docs, ctx.cfg.chunk));
      manifest.stage("index", [&] { build_and_save_index(docs, ctx); return 0; });
      const auto gen = manifest.stage("generate", [&] { return generate_samples(docs, ctx); });
      const auto m = manifest.stage("emit", [&] { return emit_dataset(gen.samples, ctx); });
      ordered_json summary;
      summary["documents"] = stats.document_count;
      summary["ingested"] = docs_in.size();
      summary["chunks"] = stats.chunk_count;
      summary["samples"] = gen.samples.size();
      summary["dataset"] = m.to_json();
      out << summary.dump(2) << "\n";
    }
  } catch (const Error& e) {
    code = e.is_backend_failure() ? kExitBackend : kExitValidation;
    error_text = std::string(to_string(e.code())) + ": " + e.detail();
    log.error(error_text, {{"code", std::string(to_string(e.code()))}});
  } catch (const std::exception& e) {
    code = kExitValidation;
    error_text = e.what();
    log.error(error_text);
  }

  if (runs_dir) {
    try {
      manifest.write(*runs_dir, code, error_text);
    } catch (const std::exception& e) {
      log.error(std::string("cannot write run manifest: ") + e.what());
    }
  }
  return code;
}

}  // namespace ragit::cli
