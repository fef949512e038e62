#include "ragit/corpus.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <set>
#include <sstream>

#include "ragit/error.hpp"
#include "ragit/util.hpp"

namespace ragit {

using nlohmann::ordered_json;

std::string_view to_string(DocType t) {
  switch (t) {
    case DocType::PressRelease: return "press_release";
    case DocType::EarningsReport: return "earnings_report";
    case DocType::EarningsCallTranscript: return "earnings_call_transcript";
    case DocType::EquityResearchReport: return "equity_research_report";
  }
  return "unknown";
}

DocType doc_type_from_string(std::string_view s) {
  for (auto t : kAllDocTypes) {
    if (to_string(t) == s) return t;
  }
  fail(ErrorCode::InvalidParams, "unknown doc_type '" + std::string(s) + "'");
}

std::string normalize_text(std::string_view raw) {
  std::string unix_text = replace_all(std::string(raw), "\r\n", "\n");
  auto lines = split_lines(unix_text);
  std::vector<std::string> out;
  out.reserve(lines.size());
  std::size_t blank_run = 0;
  for (auto& line : lines) {
    while (!line.empty() && (line.back() == ' ' || line.back() == '\t' || line.back() == '\r' ||
                             line.back() == '\v' || line.back() == '\f')) {
      line.pop_back();
    }
    if (line.empty()) {
      if (++blank_run > 2) continue;
    } else {
      blank_run = 0;
    }
    out.push_back(std::move(line));
  }
  return join(out, "\n");
}

Document ingest(std::string_view raw, const DocumentMeta& meta) {
  if (!is_valid_utf8(raw)) fail(ErrorCode::DecodeError, "input is not valid UTF-8");
  std::string text = normalize_text(raw);
  if (trim(text).empty()) fail(ErrorCode::EmptyDocument, "document is empty after normalization");
  if (meta.company.empty()) fail(ErrorCode::InvalidParams, "company is required");

  Document doc;
  doc.company = meta.company;
  doc.fiscal_period = meta.fiscal_period;
  doc.doc_type = meta.doc_type;
  doc.source_uri = meta.source_uri;
  doc.doc_id = meta.company + "-" + meta.fiscal_period + "-" + std::string(to_string(meta.doc_type)) +
               "-" + sha256_hex(text).substr(0, 8);
  doc.text = std::move(text);
  return doc;
}

void validate(const ChunkParams& params) {
  if (params.chunk_size < kMinChunkSize) {
    fail(ErrorCode::InvalidParams,
         "chunk_size must be >= " + std::to_string(kMinChunkSize) + ", got " +
             std::to_string(params.chunk_size));
  }
  if (params.overlap >= params.chunk_size) {
    fail(ErrorCode::InvalidParams, "overlap must be < chunk_size");
  }
}

std::vector<Chunk> chunk(const Document& doc, const ChunkParams& params) {
  validate(params);
  const auto words = split_words(doc.text);
  if (words.empty()) fail(ErrorCode::EmptyDocument, "document " + doc.doc_id + " has no words");

  const std::size_t step = params.chunk_size - params.overlap;
  std::vector<Chunk> chunks;
  std::size_t first = 0;
  while (true) {
    const std::size_t last = std::min(first + params.chunk_size, words.size());
    Chunk c;
    c.doc_id = doc.doc_id;
    c.ordinal = chunks.size();
    c.span_begin = first == 0 ? 0 : words[first].begin;
    c.span_end = last == words.size() ? doc.text.size() : words[last].begin;
    c.text = doc.text.substr(c.span_begin, c.span_end - c.span_begin);
    c.token_count = last - first;
    c.chunk_id = stable_id("c_", {doc.doc_id, std::to_string(c.ordinal),
                                  std::to_string(c.span_begin), std::to_string(c.span_end)});
    chunks.push_back(std::move(c));
    if (last == words.size()) break;
    first += step;
  }
  return chunks;
}

CorpusStats corpus_stats(const std::vector<Document>& docs, const std::vector<Chunk>& chunks,
                         std::size_t bin_width) {
  if (bin_width == 0) fail(ErrorCode::InvalidParams, "histogram bin width must be > 0");
  CorpusStats stats;
  stats.histogram_bin_width = bin_width;
  std::map<std::string, DocType> type_of;
  for (const auto& d : docs) {
    ++stats.document_count;
    ++stats.documents_per_type[d.doc_type];
    type_of[d.doc_id] = d.doc_type;
  }
  for (const auto& c : chunks) {
    auto it = type_of.find(c.doc_id);
    if (it == type_of.end()) {
      fail(ErrorCode::DanglingReference,
           "chunk " + c.chunk_id + " references unknown doc_id " + c.doc_id);
    }
    ++stats.chunk_count;
    ++stats.chunks_per_type[it->second];
    stats.total_tokens += c.token_count;
    ++stats.token_histogram[(c.token_count / bin_width) * bin_width];
  }
  return stats;
}

// CorpusStore ---------------------------------------------------------------

namespace {

ordered_json to_json(const ManifestEntry& e) {
  ordered_json j;
  j["doc_id"] = e.doc_id;
  j["company"] = e.company;
  j["fiscal_period"] = e.fiscal_period;
  j["doc_type"] = to_string(e.doc_type);
  j["source_uri"] = e.source_uri;
  j["sha256"] = e.sha256;
  return j;
}

ManifestEntry entry_from_json(const nlohmann::json& j) {
  ManifestEntry e;
  e.doc_id = j.at("doc_id").get<std::string>();
  e.company = j.at("company").get<std::string>();
  e.fiscal_period = j.at("fiscal_period").get<std::string>();
  e.doc_type = doc_type_from_string(j.at("doc_type").get<std::string>());
  e.source_uri = j.value("source_uri", "");
  e.sha256 = j.at("sha256").get<std::string>();
  return e;
}

}  // namespace

CorpusStore::CorpusStore(std::filesystem::path manifest_path)
    : manifest_path_(std::move(manifest_path)) {}

std::filesystem::path CorpusStore::document_path(std::string_view doc_id) const {
  return manifest_path_.parent_path() / (std::string(doc_id) + ".txt");
}

std::vector<ManifestEntry> CorpusStore::entries() const {
  std::vector<ManifestEntry> out;
  if (!std::filesystem::exists(manifest_path_)) return out;
  std::istringstream in(read_file(manifest_path_));
  std::string line;
  std::size_t lineno = 0;
  std::set<std::string> seen;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    try {
      auto e = entry_from_json(nlohmann::json::parse(line));
      if (!seen.insert(e.doc_id).second) {
        fail(ErrorCode::InvalidParams, "duplicate doc_id " + e.doc_id);
      }
      out.push_back(std::move(e));
    } catch (const nlohmann::json::exception& ex) {
      fail(ErrorCode::ConfigError, manifest_path_.string() + ":" + std::to_string(lineno) + ": " +
                                       ex.what());
    }
  }
  return out;
}

std::vector<Document> CorpusStore::load() const {
  std::vector<Document> docs;
  for (const auto& e : entries()) {
    Document d;
    d.doc_id = e.doc_id;
    d.company = e.company;
    d.fiscal_period = e.fiscal_period;
    d.doc_type = e.doc_type;
    d.source_uri = e.source_uri;
    d.text = read_file(document_path(e.doc_id));
    if (sha256_hex(d.text) != e.sha256) {
      fail(ErrorCode::CorruptFile, "text hash mismatch for " + e.doc_id);
    }
    docs.push_back(std::move(d));
  }
  return docs;
}

void CorpusStore::add(const Document& doc) {
  auto current = entries();
  ManifestEntry e{doc.doc_id, doc.company, doc.fiscal_period, doc.doc_type, doc.source_uri,
                  sha256_hex(doc.text)};
  auto it = std::find_if(current.begin(), current.end(),
                         [&](const ManifestEntry& m) { return m.doc_id == doc.doc_id; });
  if (it != current.end()) {
    *it = e;
  } else {
    current.push_back(e);
  }
  write_file(document_path(doc.doc_id), doc.text);
  std::string out;
  for (const auto& m : current) out += to_json(m).dump() + "\n";
  write_file(manifest_path_, out);
}

}  // namespace ragit
