#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <set>
#include <shared_mutex>
#include <string>
#include <unordered_map>
#include <vector>

#include "ragit/corpus.hpp"
#include "ragit/llmgate.hpp"

namespace ragit {

struct IndexEntry {
  std::string chunk_id;
  std::string doc_id;
  DocType doc_type = DocType::PressRelease;
  std::string company;
  std::string fiscal_period;
  std::uint32_t ordinal = 0;
  EmbeddingVector vector;  // L2-normalized
  std::string text;
};

struct RetrievalHit {
  IndexEntry entry;    // copied so hits outlive later index writes
  double score = 0.0;  // cosine similarity
};

/// Restricts a query; unset members match everything.
struct QueryFilter {
  std::optional<std::set<DocType>> doc_types;
  std::optional<std::string> company;
  std::optional<std::string> fiscal_period;

  bool matches(const IndexEntry& e) const;
};

/// Exact (brute-force) cosine index. Readers share, writers exclude:
/// query() takes a shared lock, upsert()/load() an exclusive one.
class VectorIndex {
 public:
  VectorIndex() = default;
  explicit VectorIndex(std::size_t dim) : dim_(dim) {}

  VectorIndex(const VectorIndex&) = delete;
  VectorIndex& operator=(const VectorIndex&) = delete;
  VectorIndex(VectorIndex&& other) noexcept;
  VectorIndex& operator=(VectorIndex&& other) noexcept;

  /// Inserts or replaces by chunk_id. Returns the number of entries written.
  std::size_t upsert(std::vector<IndexEntry> entries);

  /// Top-k by cosine similarity; ties broken by ascending chunk_id.
  std::vector<RetrievalHit> query(const EmbeddingVector& q, std::size_t k,
                                  const QueryFilter& filter = {}) const;

  std::size_t size() const;
  std::size_t dim() const;
  bool empty() const { return size() == 0; }
  const IndexEntry* find(const std::string& chunk_id) const;
  /// Entries sorted by chunk_id.
  std::vector<const IndexEntry*> entries() const;

  /// Versioned binary format: header, fixed-width records, string pool,
  /// trailing SHA-256 over everything before it. Records are written in
  /// chunk_id order so identical indexes produce identical bytes.
  void save(const std::filesystem::path& path) const;
  static VectorIndex load(const std::filesystem::path& path);

  static constexpr std::uint32_t kFormatVersion = 1;

 private:
  mutable std::shared_mutex mu_;
  std::size_t dim_ = 0;
  std::vector<IndexEntry> entries_;
  std::unordered_map<std::string, std::size_t> by_id_;
};

/// Embeds every chunk through the gateway (batched) and indexes it with the
/// metadata of its document. Throws DanglingReference for orphan chunks.
VectorIndex build_index(const std::vector<Document>& docs, const std::vector<Chunk>& chunks,
                        Gateway& gateway);

}  // namespace ragit
