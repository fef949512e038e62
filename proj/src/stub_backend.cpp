// Deterministic offline backend. Every reply is a pure function of the seed
// and the request so that pipelines run reproducibly without a model server.

#include <algorithm>
#include <array>
#include <regex>
#include <set>

#include "ragit/llmgate.hpp"
#include "ragit/prompts.hpp"
#include "ragit/util.hpp"

namespace ragit {

namespace {

std::uint64_t seed_basis(std::uint64_t seed) {
  std::array<char, 8> bytes{};
  for (int i = 0; i < 8; ++i) bytes[i] = static_cast<char>((seed >> (8 * i)) & 0xff);
  return fnv1a64(std::string_view(bytes.data(), bytes.size()));
}

std::string hex64(std::uint64_t v) {
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i) {
    s[i] = kDigits[v & 0xf];
    v >>= 4;
  }
  return s;
}

/// Text between the first and last delimiter lines, or "" when absent.
std::string delimited_block(std::string_view message) {
  const auto lines = split_lines(message);
  std::optional<std::size_t> first, last;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (lines[i] == prompts::kDelimiter) {
      if (!first) first = i;
      last = i;
    }
  }
  if (!first || *first == *last) return {};
  std::vector<std::string> inner(lines.begin() + static_cast<std::ptrdiff_t>(*first) + 1,
                                 lines.begin() + static_cast<std::ptrdiff_t>(*last));
  return join(inner, "\n");
}

std::string strip_edges(std::string w, std::string_view chars) {
  while (!w.empty() && chars.find(w.back()) != std::string_view::npos) w.pop_back();
  while (!w.empty() && chars.find(w.front()) != std::string_view::npos) w.erase(w.begin());
  return w;
}

std::string generation_reply(std::uint64_t seed, std::string_view user, std::size_t n) {
  const std::string context = delimited_block(user);
  std::vector<std::string> words;
  for (auto span : split_words(context)) {
    std::string w(context.substr(span.begin, span.end - span.begin));
    w.erase(std::remove(w.begin(), w.end(), ':'), w.end());
    if (!w.empty()) words.push_back(std::move(w));
  }
  if (words.empty() || n == 0) return "There is not enough context to ask questions.";

  static constexpr std::array<std::string_view, 4> kTemplates = {
      "What does the report say about {k}?", "What information is given regarding {k}?",
      "How does the document describe {k}?", "What is disclosed about {k}?"};
  const std::size_t pairs = std::min(n, words.size());
  const std::uint64_t rot = seed_basis(seed) % kTemplates.size();
  std::vector<std::string> blocks;
  for (std::size_t i = 0; i < pairs; ++i) {
    const std::size_t b = i * words.size() / pairs;
    const std::size_t e = (i + 1) * words.size() / pairs;
    std::vector<std::string> window(words.begin() + static_cast<std::ptrdiff_t>(b),
                                    words.begin() + static_cast<std::ptrdiff_t>(e));
    std::vector<std::string> key;
    for (std::size_t k = 0; k < window.size() && k < 4; ++k) {
      auto kw = strip_edges(window[k], ".,;!?\"'()");
      if (!kw.empty()) key.push_back(std::move(kw));
    }
    if (key.empty()) key.push_back("this section");
    std::string q = replace_all(std::string(kTemplates[(rot + i) % kTemplates.size()]), "{k}",
                                "\"" + join(key, " ") + "\"");
    blocks.push_back(std::to_string(i + 1) + ". Q: " + q + " A: " + join(window, " "));
  }
  return join(blocks, "\n");
}

bool is_abbreviation(std::string_view before_dot) {
  static const std::set<std::string, std::less<>> kAbbrev = {"inc", "corp", "co", "ltd", "no",
                                                             "mr",  "ms",   "dr", "vs",  "u.s"};
  auto pos = before_dot.find_last_of(" \t\n(");
  auto word = to_lower_ascii(pos == std::string_view::npos ? before_dot : before_dot.substr(pos + 1));
  return kAbbrev.contains(word);
}

std::vector<std::string> split_sentences(std::string_view text) {
  std::vector<std::string> out;
  for (const auto& line : split_lines(text)) {
    const auto t = trim(line);
    if (t.empty() || t == prompts::kChunkSeparator) continue;
    std::size_t start = 0;
    for (std::size_t i = 0; i + 1 < t.size(); ++i) {
      const char c = t[i];
      if ((c == '.' || c == '?' || c == '!') && (t[i + 1] == ' ' || t[i + 1] == '\t')) {
        if (c == '.' && is_abbreviation(t.substr(start, i - start))) continue;
        auto s = trim(t.substr(start, i + 1 - start));
        if (!s.empty()) out.emplace_back(s);
        start = i + 1;
      }
    }
    auto s = trim(t.substr(start));
    if (!s.empty()) out.emplace_back(s);
  }
  return out;
}

bool is_open_ended(const std::vector<std::string>& question_tokens) {
  static const std::set<std::string, std::less<>> kCues = {
      "summarize", "summary", "analysis", "analyze", "compare", "comparison", "outlook",
      "overview"};
  return std::any_of(question_tokens.begin(), question_tokens.end(),
                     [](const std::string& t) { return kCues.contains(t); });
}

std::string answering_reply(std::string_view user) {
  const std::string context = delimited_block(user);
  const auto lines = split_lines(user);
  std::vector<std::string> qlines;
  bool in_question = false;
  for (const auto& l : lines) {
    if (l == prompts::kQuestionLead) {
      in_question = true;
      qlines.clear();
      continue;
    }
    if (in_question) {
      if (l == "Answer:" || starts_with(l, prompts::kAnswerLead)) break;
      qlines.push_back(l);
    }
  }
  const std::string question = join(qlines, " ");
  const auto qtokens = alnum_tokens(question);
  const auto qwords_vec = content_words(question);
  const std::set<std::string> qwords(qwords_vec.begin(), qwords_vec.end());
  const auto sentences = split_sentences(context);
  if (qwords.empty() || sentences.empty()) return std::string(prompts::kNotFound);

  std::vector<std::size_t> overlap(sentences.size(), 0);
  for (std::size_t i = 0; i < sentences.size(); ++i) {
    const auto sw = content_words(sentences[i]);
    const std::set<std::string> sset(sw.begin(), sw.end());
    for (const auto& w : qwords) overlap[i] += sset.contains(w) ? 1 : 0;
  }

  if (is_open_ended(qtokens)) {
    std::vector<std::size_t> order(sentences.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return overlap[a] > overlap[b]; });
    std::vector<std::size_t> picked;
    for (std::size_t i = 0; i < order.size() && picked.size() < 3; ++i) {
      if (overlap[order[i]] > 0) picked.push_back(order[i]);
    }
    if (picked.empty()) return std::string(prompts::kNotFound);
    std::sort(picked.begin(), picked.end());
    std::vector<std::string> parts;
    for (auto i : picked) parts.push_back(sentences[i]);
    return join(parts, " ");
  }

  std::size_t best = 0;
  for (std::size_t i = 1; i < sentences.size(); ++i) {
    if (overlap[i] > overlap[best]) best = i;
  }
  if (2 * overlap[best] < qwords.size()) return std::string(prompts::kNotFound);
  return sentences[best];
}

std::string section_between(std::string_view text, std::string_view open, std::string_view close) {
  const auto b = text.find(open);
  if (b == std::string_view::npos) return {};
  const auto start = b + open.size();
  const auto e = text.find(close, start);
  return std::string(trim(text.substr(start, e == std::string_view::npos ? e : e - start)));
}

std::vector<std::string> numeric_tokens(std::string_view text) {
  static const std::regex kNumber(R"([0-9]+(?:[.,][0-9]+)*)");
  std::vector<std::string> out;
  const std::string s(text);
  for (auto it = std::sregex_iterator(s.begin(), s.end(), kNumber); it != std::sregex_iterator();
       ++it) {
    out.push_back(it->str());
  }
  return out;
}

std::string judge_reply(std::string_view user) {
  const auto truth = section_between(user, prompts::kJudgeTruthTag, prompts::kJudgeCandidateTag);
  const auto candidate = section_between(user, prompts::kJudgeCandidateTag, prompts::kJudgeEndTag);
  int score = 3;
  std::string why = "The candidate does not match the ground truth.";
  if (candidate == truth) {
    score = 10;
    why = "The candidate matches the ground truth exactly.";
  } else {
    const auto cand_nums = numeric_tokens(candidate);
    for (const auto& n : numeric_tokens(truth)) {
      if (std::find(cand_nums.begin(), cand_nums.end(), n) != cand_nums.end()) {
        score = 7;
        why = "The candidate contains the key figure " + n + " from the ground truth.";
        break;
      }
    }
  }
  return "Rationale: " + why + "\nScore: " + std::to_string(score);
}

}  // namespace

std::string stub_chat(std::uint64_t seed, const ChatRequest& req) {
  const ChatMessage* last_user = nullptr;
  for (const auto& m : req.messages) {
    if (m.role == Role::User) last_user = &m;
  }
  if (last_user == nullptr) return "Acknowledged.";
  const std::string& user = last_user->content;

  if (user.find(prompts::kJudgeTruthTag) != std::string::npos &&
      user.find(prompts::kJudgeCandidateTag) != std::string::npos) {
    return judge_reply(user);
  }
  static const std::regex kBlocks(R"(Return exactly ([0-9]+) blocks)");
  std::smatch m;
  if (std::regex_search(user, m, kBlocks)) {
    return generation_reply(seed, user, std::stoul(m[1].str()));
  }
  if (user.find(prompts::kQuestionLead) != std::string::npos) return answering_reply(user);

  return "Acknowledged (" + hex64(fnv1a64(user, seed_basis(seed))) + ").";
}

EmbeddingVector stub_embed(std::uint64_t seed, std::string_view text, std::size_t dim) {
  EmbeddingVector v;
  v.values.assign(dim, 0.0f);
  const auto basis = seed_basis(seed);
  for (auto span : split_words(text)) {
    std::string w = to_lower_ascii(text.substr(span.begin, span.end - span.begin));
    w = strip_edges(std::move(w), ".,;:!?\"'()[]{}");
    if (w.empty()) continue;
    const std::string marked = "^" + w + "$";
    for (std::size_t i = 0; i + 3 <= marked.size(); ++i) {
      const auto h = fnv1a64(std::string_view(marked).substr(i, 3), basis);
      v.values[h % dim] += ((h >> 32) & 1) ? -1.0f : 1.0f;
    }
  }
  if (l2_norm(v) == 0.0) v.values[fnv1a64(text, basis) % dim] = 1.0f;
  return normalize(v);
}

}  // namespace ragit
