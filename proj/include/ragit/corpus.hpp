#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace ragit {

/// Document kinds that seed instructions route to.
enum class DocType { PressRelease, EarningsReport, EarningsCallTranscript, EquityResearchReport };

inline constexpr std::array<DocType, 4> kAllDocTypes = {
    DocType::PressRelease, DocType::EarningsReport, DocType::EarningsCallTranscript,
    DocType::EquityResearchReport};

std::string_view to_string(DocType t);
/// Accepts the snake_case wire names ("press_release", ...).
DocType doc_type_from_string(std::string_view s);

struct DocumentMeta {
  std::string company;
  std::string fiscal_period;
  DocType doc_type = DocType::PressRelease;
  std::string source_uri;
};

struct Document {
  std::string doc_id;
  std::string company;
  std::string fiscal_period;
  DocType doc_type = DocType::PressRelease;
  std::string text;
  std::string source_uri;
};

struct Chunk {
  std::string chunk_id;
  std::string doc_id;
  std::size_t ordinal = 0;
  std::string text;
  std::size_t token_count = 0;
  std::size_t span_begin = 0;  // byte offsets into the document text, [begin, end)
  std::size_t span_end = 0;
};

struct ChunkParams {
  std::size_t chunk_size = 512;
  std::size_t overlap = 64;
};

inline constexpr std::size_t kMinChunkSize = 32;

/// Line-level normalization: CRLF -> LF, trailing whitespace stripped per
/// line, runs of more than two blank lines collapsed to two.
std::string normalize_text(std::string_view raw);

/// Validates UTF-8, normalizes, and builds a Document whose id is derived
/// from the metadata and the normalized text.
Document ingest(std::string_view raw, const DocumentMeta& meta);

/// Splits on whitespace words. Chunk i starts at word i*(chunk_size-overlap);
/// spans extend to the start of the next word outside the window so that the
/// non-overlapping parts tile the text with no gaps.
std::vector<Chunk> chunk(const Document& doc, const ChunkParams& params);
void validate(const ChunkParams& params);

struct CorpusStats {
  std::size_t document_count = 0;
  std::map<DocType, std::size_t> documents_per_type;
  std::size_t chunk_count = 0;
  std::map<DocType, std::size_t> chunks_per_type;
  std::size_t total_tokens = 0;
  std::size_t histogram_bin_width = 64;
  /// bin lower bound (in tokens) -> number of chunks.
  std::map<std::size_t, std::size_t> token_histogram;
};

CorpusStats corpus_stats(const std::vector<Document>& docs, const std::vector<Chunk>& chunks,
                         std::size_t bin_width = 64);

// Manifest ------------------------------------------------------------------

struct ManifestEntry {
  std::string doc_id;
  std::string company;
  std::string fiscal_period;
  DocType doc_type = DocType::PressRelease;
  std::string source_uri;
  std::string sha256;
};

/// A corpus on disk: a JSONL manifest plus one `<doc_id>.txt` per document
/// next to it.
class CorpusStore {
 public:
  explicit CorpusStore(std::filesystem::path manifest_path);

  const std::filesystem::path& manifest_path() const { return manifest_path_; }
  std::filesystem::path document_path(std::string_view doc_id) const;

  std::vector<ManifestEntry> entries() const;
  /// Loads every document, verifying text hashes against the manifest.
  std::vector<Document> load() const;
  /// Adds or replaces a document (keyed by doc_id) and rewrites the manifest.
  void add(const Document& doc);

 private:
  std::filesystem::path manifest_path_;
};

}  // namespace ragit
