#include "ragit/evalkit.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
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

void validate(const EvalCase& c) {
  if (trim(c.ground_truth).empty()) {
    fail(ErrorCode::InvalidParams, "case " + c.case_id + " has an empty ground truth");
  }
  if (c.generated.empty()) {
    fail(ErrorCode::InvalidParams, "case " + c.case_id + " has no model answers");
  }
}

EvalCase eval_case_from_json(const json& j) {
  EvalCase c;
  try {
    c.case_id = j.at("case_id").get<std::string>();
    c.question = j.at("question").get<std::string>();
    c.ground_truth = j.at("ground_truth").get<std::string>();
    c.context = j.value("context", "");
    c.generated = j.at("generated").get<std::map<std::string, std::string>>();
  } catch (const json::exception& e) {
    fail(ErrorCode::InvalidParams, std::string("bad eval case: ") + e.what());
  }
  validate(c);
  return c;
}

namespace {

template <typename T, typename Fn>
std::vector<T> read_jsonl(const std::filesystem::path& path, Fn&& parse) {
  std::istringstream in(read_file(path));
  std::vector<T> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    try {
      out.push_back(parse(json::parse(line)));
    } catch (const json::exception& e) {
      fail(ErrorCode::ConfigError, path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace

std::vector<EvalCase> read_cases_jsonl(const std::filesystem::path& path) {
  return read_jsonl<EvalCase>(path, eval_case_from_json);
}

ordered_json to_json(const EvalRecord& r) {
  ordered_json j;
  j["case_id"] = r.case_id;
  j["model_name"] = r.model_name;
  j["correctness"] = r.correctness;
  j["semantic_distance"] = r.semantic_distance;
  j["judge_raw"] = r.judge_raw;
  return j;
}

EvalRecord eval_record_from_json(const json& j) {
  EvalRecord r;
  r.case_id = j.at("case_id").get<std::string>();
  r.model_name = j.at("model_name").get<std::string>();
  r.correctness = j.at("correctness").get<int>();
  r.semantic_distance = j.at("semantic_distance").get<double>();
  r.judge_raw = j.value("judge_raw", "");
  if (r.correctness < 1 || r.correctness > 10) {
    fail(ErrorCode::InvalidParams, "correctness out of range in record " + r.case_id);
  }
  if (r.semantic_distance < 0.0 || r.semantic_distance > 2.0) {
    fail(ErrorCode::InvalidParams, "semantic_distance out of range in record " + r.case_id);
  }
  return r;
}

std::vector<EvalRecord> read_records_jsonl(const std::filesystem::path& path) {
  return read_jsonl<EvalRecord>(path, eval_record_from_json);
}

// Metrics -------------------------------------------------------------------

int parse_score(std::string_view completion) {
  static const std::regex kScore(R"(Score\s*:\s*(-?[0-9]+(?:\.[0-9]+)?)(?:\s*/\s*10)?)");
  const std::string s(completion);
  std::smatch last;
  bool found = false;
  for (auto it = std::sregex_iterator(s.begin(), s.end(), kScore); it != std::sregex_iterator();
       ++it) {
    last = *it;
    found = true;
  }
  if (!found) fail(ErrorCode::UnparseableVerdict, "no 'Score: <n>' line in judge reply");
  const auto token = last[1].str();
  if (token.find('.') != std::string::npos) {
    fail(ErrorCode::UnparseableVerdict, "non-integer score '" + token + "'");
  }
  if (token.size() > 3) fail(ErrorCode::UnparseableVerdict, "score out of range: " + token);
  const int v = std::stoi(token);
  if (v < 1 || v > 10) fail(ErrorCode::UnparseableVerdict, "score out of range: " + token);
  return v;
}

JudgeVerdict judge_correctness(const EvalCase& c, const std::string& model_name, Gateway& gateway,
                               const std::string& judge_model_id) {
  auto it = c.generated.find(model_name);
  if (it == c.generated.end()) {
    fail(ErrorCode::InvalidParams, "case " + c.case_id + " has no answer from " + model_name);
  }
  ChatRequest req;
  req.model_id = judge_model_id;
  req.temperature = kJudgeTemperature;
  req.max_tokens = 256;
  req.request_tag = "judge:" + c.case_id + ":" + model_name;
  req.messages = {{Role::System, std::string(prompts::kJudgeSystem)},
                  {Role::User, prompts::render_judge_prompt(c.question, c.ground_truth, it->second)}};
  constexpr int kReasks = 2;
  for (int attempt = 0;; ++attempt) {
    auto reply = gateway.chat(req);
    try {
      return {parse_score(reply), reply};
    } catch (const Error& e) {
      if (attempt >= kReasks) throw;
      req.messages.push_back({Role::Assistant, reply});
      req.messages.push_back({Role::User, std::string(prompts::kJudgeReask)});
    }
  }
}

double cosine_distance(const EmbeddingVector& a, const EmbeddingVector& b) {
  const double d = 1.0 - dot(normalize(a), normalize(b));
  return std::clamp(d, 0.0, 2.0);
}

double semantic_distance(std::string_view a, std::string_view b, Gateway& gateway) {
  if (trim(a).empty() || trim(b).empty()) {
    fail(ErrorCode::InvalidParams, "semantic_distance needs two non-empty texts");
  }
  auto v = gateway.embed({std::string(a), std::string(b)}, "semantic-distance");
  return cosine_distance(v[0], v[1]);
}

std::vector<EvalRecord> evaluate(const std::vector<EvalCase>& cases, Gateway& gateway,
                                 const std::string& judge_model_id, std::size_t workers) {
  struct Job {
    const EvalCase* c;
    std::string model;
  };
  std::vector<Job> jobs;
  for (const auto& c : cases) {
    validate(c);
    for (const auto& [model, answer] : c.generated) jobs.push_back({&c, model});
  }
  std::vector<EvalRecord> records(jobs.size());
  std::vector<std::exception_ptr> errors(jobs.size());
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t i = next++; i < jobs.size(); i = next++) {
      try {
        const auto& [c, model] = jobs[i];
        auto verdict = judge_correctness(*c, model, gateway, judge_model_id);
        records[i] = {c->case_id, model, verdict.correctness,
                      semantic_distance(c->generated.at(model), c->ground_truth, gateway),
                      std::move(verdict.raw)};
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const auto n_threads = std::clamp<std::size_t>(workers, 1, std::max<std::size_t>(1, jobs.size()));
  if (n_threads == 1) {
    work();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < n_threads; ++t) pool.emplace_back(work);
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  std::sort(records.begin(), records.end(), [](const EvalRecord& a, const EvalRecord& b) {
    return std::tie(a.model_name, a.case_id) < std::tie(b.model_name, b.case_id);
  });
  return records;
}

std::vector<EvalSummary> aggregate(const std::vector<EvalRecord>& records) {
  if (records.empty()) fail(ErrorCode::InvalidParams, "aggregate needs at least one record");
  struct Acc {
    double correctness = 0.0;
    double distance = 0.0;
    std::size_t n = 0;
  };
  std::map<std::string, Acc> by_model;
  for (const auto& r : records) {
    auto& a = by_model[r.model_name];
    a.correctness += r.correctness;
    a.distance += r.semantic_distance;
    ++a.n;
  }
  std::vector<EvalSummary> out;
  for (const auto& [model, a] : by_model) {
    const auto n = static_cast<double>(a.n);
    out.push_back({model, a.correctness / n, a.distance / n, a.n});
  }
  return out;
}

// Reporting -----------------------------------------------------------------

namespace {

constexpr std::string_view kModelCaption = "Model";
constexpr std::string_view kCorrectnessCaption = "Correctness (1: worst, 10: best)";
constexpr std::string_view kSimilarityCaption = "Semantic Similarity (smaller is better)";

std::string fixed(double v, int decimals) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
  return buf;
}

std::string pad(std::string_view s, std::size_t width) {
  std::string out(s);
  if (out.size() < width) out.append(width - out.size(), ' ');
  return out;
}

}  // namespace

ComparisonReport render_comparison(const std::vector<EvalSummary>& summaries) {
  if (summaries.empty()) fail(ErrorCode::InvalidParams, "nothing to render");
  std::size_t w0 = kModelCaption.size();
  for (const auto& s : summaries) w0 = std::max(w0, s.model_name.size());
  const std::size_t w1 = kCorrectnessCaption.size();
  const std::size_t w2 = kSimilarityCaption.size();

  std::string table;
  auto row = [&](std::string_view a, std::string_view b, std::string_view c) {
    std::string line = pad(a, w0) + " | " + pad(b, w1) + " | " + pad(c, w2);
    while (!line.empty() && line.back() == ' ') line.pop_back();
    table += line + "\n";
  };
  row(kModelCaption, kCorrectnessCaption, kSimilarityCaption);
  table += std::string(w0, '-') + "-+-" + std::string(w1, '-') + "-+-" + std::string(w2, '-') + "\n";
  for (const auto& s : summaries) {
    row(s.model_name, fixed(s.mean_correctness, 1), fixed(s.mean_semantic_distance, 5));
  }

  ordered_json j;
  j["columns"] = {kModelCaption, kCorrectnessCaption, kSimilarityCaption};
  j["rows"] = ordered_json::array();
  for (const auto& s : summaries) {
    ordered_json r;
    r["model_name"] = s.model_name;
    r["mean_correctness"] = s.mean_correctness;
    r["mean_semantic_distance"] = s.mean_semantic_distance;
    r["n_cases"] = s.n_cases;
    j["rows"].push_back(std::move(r));
  }
  return {std::move(table), std::move(j)};
}

std::vector<EvalSummary> summaries_from_json(const json& j) {
  std::vector<EvalSummary> out;
  for (const auto& r : j.at("rows")) {
    out.push_back({r.at("model_name").get<std::string>(), r.at("mean_correctness").get<double>(),
                   r.at("mean_semantic_distance").get<double>(), r.at("n_cases").get<std::size_t>()});
  }
  return out;
}

}  // namespace ragit
