#include "ragit/instructgen.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <regex>
#include <sstream>
#include <thread>

#include "ragit/error.hpp"
#include "ragit/prompts.hpp"
#include "ragit/util.hpp"

namespace ragit {

using nlohmann::json;
using nlohmann::ordered_json;

std::string_view to_string(SeedType t) {
  switch (t) {
    case SeedType::CompanyCoreInformation: return "company_core_information";
    case SeedType::KeyFinancialIndicators: return "key_financial_indicators";
    case SeedType::Comparison: return "comparison";
    case SeedType::Outlook: return "outlook";
    case SeedType::Summary: return "summary";
    case SeedType::Analysis: return "analysis";
  }
  return "unknown";
}

SeedType seed_type_from_string(std::string_view s) {
  for (const auto& seed : seed_instructions()) {
    if (to_string(seed.seed_type) == s) return seed.seed_type;
  }
  fail(ErrorCode::InvalidParams, "unknown seed_type '" + std::string(s) + "'");
}

const std::array<SeedInstruction, 6>& seed_instructions() {
  using enum DocType;
  static const std::array<SeedInstruction, 6> kSeeds = {{
      {1, SeedType::CompanyCoreInformation, "Company core information",
       "What is {company} and its business sector?", {PressRelease}},
      {2, SeedType::KeyFinancialIndicators, "Key financial indicators", "What is the revenue?",
       {PressRelease, EarningsReport}},
      {3, SeedType::Comparison, "Comparison",
       "Can you compare the revenue of {company} with its peer group in the semiconductors "
       "industry?",
       {PressRelease, EarningsReport}},
      {4, SeedType::Outlook, "Outlook",
       "Can you give the outlook for the revenue of {company} in the next quarter?",
       {PressRelease, EarningsReport}},
      {5, SeedType::Summary, "Summary",
       "Can you summarize the earnings report and executives' statements of {company}?",
       {PressRelease, EarningsCallTranscript}},
      {6, SeedType::Analysis, "Analysis",
       "Given the information above, can you generate an earnings report analysis for {company} "
       "in this quarter?",
       {EquityResearchReport}},
  }};
  return kSeeds;
}

const SeedInstruction& seed_instruction(SeedType t) {
  for (const auto& s : seed_instructions()) {
    if (s.seed_type == t) return s;
  }
  fail(ErrorCode::InvalidParams, "unknown seed type");
}

std::string instantiate(const SeedInstruction& seed, std::string_view company,
                        std::string_view fiscal_period) {
  auto out = replace_all(seed.prompt_template, "{company}", company);
  return replace_all(std::move(out), "{fiscal_period}", fiscal_period);
}

void validate(const GenerationJob& job) {
  if (job.num_questions_per_chunk < 1) {
    fail(ErrorCode::ConfigError, "job.num_questions_per_chunk must be >= 1");
  }
  if (job.scope == ChunkScope::Retrieval && job.top_k < 1) {
    fail(ErrorCode::ConfigError, "job.top_k must be >= 1");
  }
  if (job.job_id.empty()) fail(ErrorCode::ConfigError, "job.job_id must not be empty");
  if (!(job.temperature >= 0.0)) fail(ErrorCode::ConfigError, "job.temperature must be >= 0");
}

// Samples -------------------------------------------------------------------

std::string make_sample_id(std::string_view job_id, const std::vector<std::string>& chunk_ids,
                           std::size_t question_index) {
  const auto ids = join(chunk_ids, ",");
  const auto q = std::to_string(question_index);
  return stable_id("s_", {job_id, ids, q});
}

ordered_json to_json(const InstructionSample& s) {
  ordered_json j;
  j["sample_id"] = s.sample_id;
  j["context"] = s.context;
  j["query"] = s.query;
  j["answer"] = s.answer;
  j["seed_type"] = s.seed_type ? ordered_json(to_string(*s.seed_type)) : ordered_json(nullptr);
  ordered_json p;
  p["chunk_ids"] = s.provenance.chunk_ids;
  p["doc_ids"] = s.provenance.doc_ids;
  p["teacher_model_id"] = s.provenance.teacher_model_id;
  p["job_id"] = s.provenance.job_id;
  p["question_index"] = s.provenance.question_index;
  j["provenance"] = std::move(p);
  j["created_at"] = s.created_at;
  return j;
}

InstructionSample sample_from_json(const json& j) {
  InstructionSample s;
  s.sample_id = j.at("sample_id").get<std::string>();
  s.context = j.at("context").get<std::string>();
  s.query = j.at("query").get<std::string>();
  s.answer = j.at("answer").get<std::string>();
  if (j.contains("seed_type") && !j["seed_type"].is_null()) {
    s.seed_type = seed_type_from_string(j["seed_type"].get<std::string>());
  }
  const auto& p = j.at("provenance");
  s.provenance.chunk_ids = p.at("chunk_ids").get<std::vector<std::string>>();
  s.provenance.doc_ids = p.at("doc_ids").get<std::vector<std::string>>();
  s.provenance.teacher_model_id = p.value("teacher_model_id", "");
  s.provenance.job_id = p.value("job_id", "");
  s.provenance.question_index = p.value("question_index", std::size_t{0});
  s.created_at = j.value("created_at", "");
  return s;
}

std::string to_jsonl(const std::vector<InstructionSample>& samples) {
  std::string out;
  for (const auto& s : samples) out += to_json(s).dump() + "\n";
  return out;
}

std::vector<InstructionSample> read_samples_jsonl(const std::filesystem::path& path) {
  std::istringstream in(read_file(path));
  std::vector<InstructionSample> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    try {
      out.push_back(sample_from_json(json::parse(line)));
    } catch (const json::exception& e) {
      fail(ErrorCode::ConfigError,
           path.string() + ":" + std::to_string(lineno) + ": bad sample: " + e.what());
    }
  }
  return out;
}

// Prompting and parsing -----------------------------------------------------

ChatRequest render_generation_prompt(std::string_view chunk_text, std::size_t n,
                                     std::string_view model_id, double temperature) {
  if (n < 1) fail(ErrorCode::InvalidParams, "n must be >= 1");
  if (trim(chunk_text).empty()) fail(ErrorCode::InvalidParams, "chunk text is empty");
  const auto count = std::to_string(n);
  std::string user = replace_all(std::string(prompts::kGenerationTask), "{num_questions_per_chunk}",
                                 count);
  user += "\n\n";
  user.append(prompts::kGenerationContextLead).append("\n");
  user.append(prompts::kDelimiter).append("\n");
  user.append(chunk_text);
  if (!chunk_text.ends_with('\n')) user += "\n";
  user.append(prompts::kDelimiter).append("\n");
  user += replace_all(std::string(prompts::kFormatDirective), "{n}", count);

  ChatRequest req;
  req.model_id = std::string(model_id);
  req.temperature = temperature;
  req.max_tokens = 2048;
  req.request_tag = "generate";
  req.messages = {{Role::System, std::string(prompts::kAnalystRole)}, {Role::User, std::move(user)}};
  return req;
}

std::vector<QaPair> parse_qa_completion(std::string_view text, std::size_t expected_n) {
  static const std::regex kBlockStart(R"((?:^|\n)[ \t]*(?:[0-9]+[.)][ \t]*)?Q:)");
  const std::string s(text);
  std::vector<std::pair<std::size_t, std::size_t>> starts;  // (match begin, body begin)
  for (auto it = std::sregex_iterator(s.begin(), s.end(), kBlockStart);
       it != std::sregex_iterator(); ++it) {
    starts.emplace_back(static_cast<std::size_t>(it->position()),
                        static_cast<std::size_t>(it->position() + it->length()));
  }
  std::vector<QaPair> pairs;
  for (std::size_t i = 0; i < starts.size() && pairs.size() < expected_n; ++i) {
    const auto body_end = i + 1 < starts.size() ? starts[i + 1].first : s.size();
    const std::string_view body(s.data() + starts[i].second, body_end - starts[i].second);
    const auto a = body.find("A:");
    if (a == std::string_view::npos) continue;
    QaPair p{std::string(trim(body.substr(0, a))), std::string(trim(body.substr(a + 2)))};
    if (p.query.empty() || p.answer.empty()) continue;
    pairs.push_back(std::move(p));
  }
  if (pairs.empty()) fail(ErrorCode::NoPairsFound, "no Q:/A: pairs in completion");
  return pairs;
}

std::string_view to_string(QcReason r) {
  switch (r) {
    case QcReason::Form: return "form";
    case QcReason::AnswerLength: return "answer_length";
    case QcReason::Grounding: return "grounding";
  }
  return "unknown";
}

QcVerdict qc_gate(const InstructionSample& sample, const QcLimits& limits) {
  const auto query = trim(sample.query);
  if (query.empty() || !query.ends_with('?')) {
    return {false, QcReason::Form, "query must end with a question mark"};
  }
  if (trim(sample.context).empty()) return {false, QcReason::Form, "empty context"};
  const auto words = word_count(sample.answer);
  if (words < 1 || words > limits.max_answer_words) {
    return {false, QcReason::AnswerLength,
            "answer has " + std::to_string(words) + " words, limit " +
                std::to_string(limits.max_answer_words)};
  }
  const auto ctx_words = content_words(sample.context);
  const std::set<std::string> ctx(ctx_words.begin(), ctx_words.end());
  std::size_t grounded = 0;
  for (const auto& w : content_words(sample.answer)) grounded += ctx.contains(w) ? 1 : 0;
  if (grounded < limits.min_overlap) {
    return {false, QcReason::Grounding,
            std::to_string(grounded) + " answer content words found in context, need " +
                std::to_string(limits.min_overlap)};
  }
  return {};
}

// Chunk sweep ---------------------------------------------------------------

ChunkGeneration generate_for_chunk(const Chunk& chunk, const GenerationJob& job, Gateway& gateway) {
  validate(job);
  auto req = render_generation_prompt(chunk.text, job.num_questions_per_chunk,
                                      job.teacher_model_id, job.temperature);
  req.request_tag = "generate:" + chunk.chunk_id;
  const auto completion = gateway.chat(req);

  ChunkGeneration out;
  std::vector<QaPair> pairs;
  try {
    pairs = parse_qa_completion(completion, job.num_questions_per_chunk);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::NoPairsFound) throw;
  }
  out.parsed = pairs.size();
  out.shortfall = job.num_questions_per_chunk - pairs.size();
  for (std::size_t q = 0; q < pairs.size(); ++q) {
    InstructionSample s;
    s.provenance.chunk_ids = {chunk.chunk_id};
    s.provenance.doc_ids = {chunk.doc_id};
    s.provenance.teacher_model_id = job.teacher_model_id;
    s.provenance.job_id = job.job_id;
    s.provenance.question_index = q;
    s.sample_id = make_sample_id(job.job_id, s.provenance.chunk_ids, q);
    s.context = chunk.text;
    s.query = std::move(pairs[q].query);
    s.answer = std::move(pairs[q].answer);
    s.created_at = job.created_at;
    const auto verdict = qc_gate(s, job.qc);
    if (!verdict.pass) {
      ++out.rejected[*verdict.reason];
      continue;
    }
    out.samples.push_back(std::move(s));
  }
  return out;
}

ordered_json JobReport::to_json() const {
  ordered_json j;
  j["job_id"] = job_id;
  j["chunks"] = chunks;
  j["samples"] = samples;
  j["total_shortfall"] = total_shortfall;
  j["shortfall_by_chunk"] = ordered_json::object();
  for (const auto& [id, n] : shortfall_by_chunk) j["shortfall_by_chunk"][id] = n;
  j["qc_rejected"] = ordered_json::object();
  for (const auto& [r, n] : rejected) j["qc_rejected"][std::string(ragit::to_string(r))] = n;
  j["seed_errors"] = seed_errors;
  return j;
}

GenerationOutput generate_for_chunks(const std::vector<Chunk>& chunks, const GenerationJob& job,
                                     Gateway& gateway, std::size_t workers) {
  validate(job);
  std::vector<ChunkGeneration> results(chunks.size());
  std::vector<std::exception_ptr> errors(chunks.size());
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t i = next++; i < chunks.size(); i = next++) {
      try {
        results[i] = generate_for_chunk(chunks[i], job, gateway);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const std::size_t n_threads = std::clamp<std::size_t>(workers, 1, std::max<std::size_t>(1, chunks.size()));
  if (n_threads == 1) {
    work();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < n_threads; ++t) pool.emplace_back(work);
  }

  for (std::size_t i = 0; i < chunks.size(); ++i) {
    if (!errors[i]) continue;
    try {
      std::rethrow_exception(errors[i]);
    } catch (const Error& e) {
      throw Error(e.code(), e.detail() + " (chunk ordinal " + std::to_string(chunks[i].ordinal) +
                                ", doc " + chunks[i].doc_id + ")");
    }
  }

  GenerationOutput out;
  out.report.job_id = job.job_id;
  out.report.chunks = chunks.size();
  for (std::size_t i = 0; i < chunks.size(); ++i) {
    auto& r = results[i];
    if (r.shortfall > 0) out.report.shortfall_by_chunk[chunks[i].chunk_id] = r.shortfall;
    out.report.total_shortfall += r.shortfall;
    for (const auto& [reason, n] : r.rejected) out.report.rejected[reason] += n;
    for (auto& s : r.samples) out.samples.push_back(std::move(s));
  }
  out.report.samples = out.samples.size();
  return out;
}

// Seed-driven generation ----------------------------------------------------

SeedContext retrieve_for_seed(const SeedInstruction& seed, std::string_view company,
                              std::string_view fiscal_period, std::size_t top_k,
                              const VectorIndex& index, Gateway& gateway,
                              bool fallback_to_all_types) {
  if (index.empty()) fail(ErrorCode::EmptyIndex, "index is empty");
  const auto prompt = instantiate(seed, company, fiscal_period);
  const auto q = gateway.embed({prompt}, "seed-" + std::to_string(seed.seed_no)).front();
  QueryFilter filter;
  filter.company = std::string(company);
  filter.fiscal_period = std::string(fiscal_period);
  filter.doc_types = seed.relevant_doc_types;
  auto hits = index.query(q, top_k, filter);
  if (hits.empty() && fallback_to_all_types) {
    filter.doc_types.reset();
    hits = index.query(q, top_k, filter);
  }
  if (hits.empty()) {
    fail(ErrorCode::NoRelevantDocuments,
         "no indexed " + std::string(company) + " " + std::string(fiscal_period) +
             " documents of the kinds required by seed " + std::to_string(seed.seed_no));
  }
  SeedContext ctx;
  ctx.hits = std::move(hits);
  std::vector<const RetrievalHit*> ordered;
  for (const auto& h : ctx.hits) ordered.push_back(&h);
  std::sort(ordered.begin(), ordered.end(), [](const RetrievalHit* a, const RetrievalHit* b) {
    if (a->entry.doc_id != b->entry.doc_id) return a->entry.doc_id < b->entry.doc_id;
    return a->entry.ordinal < b->entry.ordinal;
  });
  std::vector<std::string> parts;
  for (const auto* h : ordered) parts.emplace_back(trim(h->entry.text));
  ctx.text = join(parts, "\n" + std::string(prompts::kChunkSeparator) + "\n");
  return ctx;
}

namespace {

InstructionSample seed_sample(const SeedInstruction& seed, const SeedContext& ctx,
                              std::string prompt, std::string answer, const GenerationJob& job) {
  InstructionSample s;
  std::vector<const RetrievalHit*> ordered;
  for (const auto& h : ctx.hits) ordered.push_back(&h);
  std::sort(ordered.begin(), ordered.end(), [](const RetrievalHit* a, const RetrievalHit* b) {
    if (a->entry.doc_id != b->entry.doc_id) return a->entry.doc_id < b->entry.doc_id;
    return a->entry.ordinal < b->entry.ordinal;
  });
  for (const auto* h : ordered) {
    s.provenance.chunk_ids.push_back(h->entry.chunk_id);
    if (std::find(s.provenance.doc_ids.begin(), s.provenance.doc_ids.end(), h->entry.doc_id) ==
        s.provenance.doc_ids.end()) {
      s.provenance.doc_ids.push_back(h->entry.doc_id);
    }
  }
  s.provenance.teacher_model_id = job.teacher_model_id;
  s.provenance.job_id = job.job_id;
  s.provenance.question_index = static_cast<std::size_t>(seed.seed_no - 1);
  s.sample_id = make_sample_id(job.job_id, s.provenance.chunk_ids, s.provenance.question_index);
  s.context = ctx.text;
  s.query = std::move(prompt);
  s.answer = std::string(trim(answer));
  s.seed_type = seed.seed_type;
  s.created_at = job.created_at;
  return s;
}

}  // namespace

InstructionSample generate_for_seed(const SeedInstruction& seed, std::string_view company,
                                    std::string_view fiscal_period, const GenerationJob& job,
                                    const VectorIndex& index, Gateway& gateway) {
  validate(job);
  const auto ctx = retrieve_for_seed(seed, company, fiscal_period, job.top_k, index, gateway);
  auto prompt = instantiate(seed, company, fiscal_period);
  ChatRequest req;
  req.model_id = job.teacher_model_id;
  req.temperature = job.temperature;
  req.request_tag = "seed-" + std::to_string(seed.seed_no);
  req.messages = {{Role::System, std::string(prompts::kAnswerSystem)},
                  {Role::User, prompts::render_answer_prompt(ctx.text, prompt)}};
  auto answer = gateway.chat(req);
  return seed_sample(seed, ctx, std::move(prompt), std::move(answer), job);
}

std::vector<SeedTurn> run_seed_conversation(std::string_view company,
                                            std::string_view fiscal_period,
                                            const GenerationJob& job, const VectorIndex& index,
                                            Gateway& gateway, const ConversationOptions& opts) {
  validate(job);
  std::vector<ChatMessage> history = {{Role::System, std::string(prompts::kAnswerSystem)}};
  std::vector<SeedTurn> turns;
  for (const auto type : job.seed_types) {
    const auto& seed = seed_instruction(type);
    SeedTurn turn;
    turn.seed = seed;
    turn.prompt = instantiate(seed, company, fiscal_period);
    SeedContext ctx;
    try {
      try {
        ctx = retrieve_for_seed(seed, company, fiscal_period, job.top_k, index, gateway);
      } catch (const Error& e) {
        if (e.code() != ErrorCode::NoRelevantDocuments || !opts.fallback_seeds.contains(type)) {
          throw;
        }
        ctx = retrieve_for_seed(seed, company, fiscal_period, job.top_k, index, gateway, true);
        turn.used_fallback = true;
      }
    } catch (const Error& e) {
      if (e.code() != ErrorCode::NoRelevantDocuments) throw;
      turn.error = e.what();
      turns.push_back(std::move(turn));
      continue;
    }
    if (auto it = opts.extra_context.find(type); it != opts.extra_context.end() && !it->second.empty()) {
      ctx.text += "\n" + std::string(prompts::kChunkSeparator) + "\n" + it->second;
    }
    history.push_back({Role::User, prompts::render_answer_prompt(ctx.text, turn.prompt)});
    ChatRequest req;
    req.model_id = job.teacher_model_id;
    req.temperature = job.temperature;
    req.request_tag = "seed-" + std::to_string(seed.seed_no);
    req.messages = history;
    auto answer = gateway.chat(req);
    history.push_back({Role::Assistant, answer});
    turn.hits = ctx.hits;
    turn.sample = seed_sample(seed, ctx, turn.prompt, std::move(answer), job);
    turns.push_back(std::move(turn));
  }
  return turns;
}

// Dedup ---------------------------------------------------------------------

DedupResult dedup(const std::vector<InstructionSample>& samples, double threshold,
                  Gateway& gateway) {
  if (!(threshold > 0.0 && threshold <= 1.0)) {
    fail(ErrorCode::InvalidParams, "dedup threshold must be in (0, 1]");
  }
  DedupResult out;
  if (samples.empty()) return out;
  std::vector<std::string> queries;
  queries.reserve(samples.size());
  for (const auto& s : samples) queries.push_back(s.query);
  auto vecs = gateway.embed_all(queries, "dedup");
  for (auto& v : vecs) v = normalize(v);

  std::vector<std::size_t> kept_idx;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    std::optional<std::size_t> best;
    double best_score = -2.0;
    for (auto k : kept_idx) {
      const double sim = dot(vecs[i], vecs[k]);
      if (sim > best_score) {
        best_score = sim;
        best = k;
      }
    }
    // Byte-identical queries are always duplicates, regardless of float rounding.
    if (best && (best_score >= threshold || samples[*best].query == samples[i].query)) {
      out.dropped.push_back({samples[i].sample_id, samples[*best].sample_id, best_score});
    } else {
      kept_idx.push_back(i);
      out.kept.push_back(samples[i]);
    }
  }
  return out;
}

}  // namespace ragit
