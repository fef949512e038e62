#include "ragit/vecindex.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <mutex>

#include "ragit/error.hpp"
#include "ragit/util.hpp"

namespace ragit {

bool QueryFilter::matches(const IndexEntry& e) const {
  if (doc_types && !doc_types->contains(e.doc_type)) return false;
  if (company && *company != e.company) return false;
  if (fiscal_period && *fiscal_period != e.fiscal_period) return false;
  return true;
}

VectorIndex::VectorIndex(VectorIndex&& other) noexcept {
  std::unique_lock lock(other.mu_);
  dim_ = other.dim_;
  entries_ = std::move(other.entries_);
  by_id_ = std::move(other.by_id_);
}

VectorIndex& VectorIndex::operator=(VectorIndex&& other) noexcept {
  if (this != &other) {
    std::scoped_lock lock(mu_, other.mu_);
    dim_ = other.dim_;
    entries_ = std::move(other.entries_);
    by_id_ = std::move(other.by_id_);
  }
  return *this;
}

std::size_t VectorIndex::upsert(std::vector<IndexEntry> entries) {
  std::unique_lock lock(mu_);
  std::size_t dim = dim_;
  for (const auto& e : entries) {
    if (e.chunk_id.empty()) fail(ErrorCode::InvalidParams, "index entry without chunk_id");
    if (dim == 0) dim = e.vector.dim();
    if (e.vector.dim() == 0 || e.vector.dim() != dim) {
      fail(ErrorCode::DimMismatch, "entry " + e.chunk_id + " has dim " +
                                       std::to_string(e.vector.dim()) + ", index dim is " +
                                       std::to_string(dim));
    }
    if (std::abs(l2_norm(e.vector) - 1.0) > 1e-5) {
      fail(ErrorCode::InvalidParams, "entry " + e.chunk_id + " vector is not L2-normalized");
    }
  }
  dim_ = dim;
  std::size_t written = 0;
  for (auto& e : entries) {
    auto it = by_id_.find(e.chunk_id);
    if (it != by_id_.end()) {
      entries_[it->second] = std::move(e);
    } else {
      by_id_.emplace(e.chunk_id, entries_.size());
      entries_.push_back(std::move(e));
    }
    ++written;
  }
  return written;
}

std::vector<RetrievalHit> VectorIndex::query(const EmbeddingVector& q, std::size_t k,
                                             const QueryFilter& filter) const {
  std::shared_lock lock(mu_);
  if (entries_.empty()) fail(ErrorCode::EmptyIndex, "query on empty index");
  if (q.dim() != dim_) {
    fail(ErrorCode::DimMismatch, "query dim " + std::to_string(q.dim()) + " vs index dim " +
                                     std::to_string(dim_));
  }
  if (k == 0) fail(ErrorCode::InvalidParams, "k must be > 0");
  const auto unit = normalize(q);

  struct Scored {
    std::size_t idx;
    double score;
  };
  std::vector<Scored> scored;
  scored.reserve(entries_.size());
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    if (!filter.matches(entries_[i])) continue;
    scored.push_back({i, dot(unit, entries_[i].vector)});
  }
  auto better = [&](const Scored& a, const Scored& b) {
    if (a.score != b.score) return a.score > b.score;
    return entries_[a.idx].chunk_id < entries_[b.idx].chunk_id;
  };
  const auto take = std::min(k, scored.size());
  std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(take),
                    scored.end(), better);
  std::vector<RetrievalHit> hits;
  hits.reserve(take);
  for (std::size_t i = 0; i < take; ++i) {
    hits.push_back({entries_[scored[i].idx], scored[i].score});
  }
  return hits;
}

std::size_t VectorIndex::size() const {
  std::shared_lock lock(mu_);
  return entries_.size();
}

std::size_t VectorIndex::dim() const {
  std::shared_lock lock(mu_);
  return dim_;
}

const IndexEntry* VectorIndex::find(const std::string& chunk_id) const {
  std::shared_lock lock(mu_);
  auto it = by_id_.find(chunk_id);
  return it == by_id_.end() ? nullptr : &entries_[it->second];
}

std::vector<const IndexEntry*> VectorIndex::entries() const {
  std::shared_lock lock(mu_);
  std::vector<const IndexEntry*> out;
  out.reserve(entries_.size());
  for (const auto& e : entries_) out.push_back(&e);
  std::sort(out.begin(), out.end(),
            [](const IndexEntry* a, const IndexEntry* b) { return a->chunk_id < b->chunk_id; });
  return out;
}

// Persistence ---------------------------------------------------------------
//
// header  : magic[8] "RAGITIDX", u32 version, u32 dim, u64 count, u64 pool_bytes
// record  : 5 x (u64 offset, u32 length) for chunk_id, doc_id, company,
//           fiscal_period, text; u8 doc_type; u8 pad[3]; u32 ordinal; f32 x dim
// pool    : concatenated string bytes
// trailer : 32-byte SHA-256 of all preceding bytes
// All integers and floats little-endian.

namespace {

constexpr char kMagic[8] = {'R', 'A', 'G', 'I', 'T', 'I', 'D', 'X'};
constexpr std::size_t kHeaderBytes = 8 + 4 + 4 + 8 + 8;
constexpr std::size_t kStringFields = 5;
constexpr std::size_t kRecordFixedBytes = kStringFields * 12 + 4 + 4;
constexpr std::size_t kDigestBytes = 32;

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
void put_f32(std::string& out, float f) {
  std::uint32_t bits;
  std::memcpy(&bits, &f, 4);
  put_u32(out, bits);
}

struct Reader {
  std::string_view bytes;
  std::size_t pos = 0;

  void need(std::size_t n) const {
    if (pos + n > bytes.size()) fail(ErrorCode::CorruptFile, "index file truncated");
  }
  std::uint64_t uint(int width) {
    need(static_cast<std::size_t>(width));
    std::uint64_t v = 0;
    for (int i = 0; i < width; ++i) {
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes[pos + i])) << (8 * i);
    }
    pos += static_cast<std::size_t>(width);
    return v;
  }
  float f32() {
    const auto bits = static_cast<std::uint32_t>(uint(4));
    float f;
    std::memcpy(&f, &bits, 4);
    return f;
  }
};

std::string digest_bytes(std::string_view data) {
  const auto hex = sha256_hex(data);
  std::string raw;
  for (std::size_t i = 0; i < hex.size(); i += 2) {
    raw.push_back(static_cast<char>(std::stoi(hex.substr(i, 2), nullptr, 16)));
  }
  return raw;
}

}  // namespace

void VectorIndex::save(const std::filesystem::path& path) const {
  const auto sorted = entries();
  std::shared_lock lock(mu_);
  std::string pool;
  std::string records;
  for (const IndexEntry* e : sorted) {
    for (const std::string* s : {&e->chunk_id, &e->doc_id, &e->company, &e->fiscal_period, &e->text}) {
      put_u64(records, pool.size());
      put_u32(records, static_cast<std::uint32_t>(s->size()));
      pool += *s;
    }
    records.push_back(static_cast<char>(e->doc_type));
    records.append(3, '\0');
    put_u32(records, e->ordinal);
    for (float f : e->vector.values) put_f32(records, f);
  }
  std::string out(kMagic, sizeof kMagic);
  put_u32(out, kFormatVersion);
  put_u32(out, static_cast<std::uint32_t>(dim_));
  put_u64(out, sorted.size());
  put_u64(out, pool.size());
  out += records;
  out += pool;
  out += digest_bytes(out);
  write_file(path, out);
}

VectorIndex VectorIndex::load(const std::filesystem::path& path) {
  const std::string bytes = read_file(path);
  if (bytes.size() < kHeaderBytes + kDigestBytes) fail(ErrorCode::CorruptFile, "index file truncated");
  const std::string_view body(bytes.data(), bytes.size() - kDigestBytes);
  if (digest_bytes(body) != std::string_view(bytes).substr(body.size())) {
    fail(ErrorCode::CorruptFile, "checksum mismatch in " + path.string());
  }
  if (std::memcmp(bytes.data(), kMagic, sizeof kMagic) != 0) {
    fail(ErrorCode::CorruptFile, "bad magic in " + path.string());
  }
  Reader r{body, sizeof kMagic};
  const auto version = r.uint(4);
  if (version != kFormatVersion) {
    fail(ErrorCode::CorruptFile, "unsupported index version " + std::to_string(version));
  }
  const auto dim = static_cast<std::size_t>(r.uint(4));
  const auto count = r.uint(8);
  const auto pool_bytes = r.uint(8);
  const std::size_t record_bytes = kRecordFixedBytes + 4 * dim;
  if (count > body.size() || kHeaderBytes + count * record_bytes + pool_bytes != body.size()) {
    fail(ErrorCode::CorruptFile, "index file size does not match header");
  }
  const std::string_view pool = body.substr(kHeaderBytes + count * record_bytes);

  VectorIndex index(dim);
  std::vector<IndexEntry> entries;
  entries.reserve(count);
  for (std::uint64_t n = 0; n < count; ++n) {
    IndexEntry e;
    for (std::string* s : {&e.chunk_id, &e.doc_id, &e.company, &e.fiscal_period, &e.text}) {
      const auto off = r.uint(8);
      const auto len = r.uint(4);
      if (off > pool.size() || len > pool.size() - off) {
        fail(ErrorCode::CorruptFile, "string reference out of range");
      }
      *s = std::string(pool.substr(off, len));
    }
    const auto type = r.uint(1);
    if (type >= kAllDocTypes.size()) fail(ErrorCode::CorruptFile, "bad doc_type");
    e.doc_type = static_cast<DocType>(type);
    r.uint(3);
    e.ordinal = static_cast<std::uint32_t>(r.uint(4));
    e.vector.values.resize(dim);
    for (auto& f : e.vector.values) f = r.f32();
    entries.push_back(std::move(e));
  }
  if (!entries.empty()) index.upsert(std::move(entries));
  return index;
}

VectorIndex build_index(const std::vector<Document>& docs, const std::vector<Chunk>& chunks,
                        Gateway& gateway) {
  std::unordered_map<std::string, const Document*> by_id;
  for (const auto& d : docs) by_id.emplace(d.doc_id, &d);
  std::vector<std::string> texts;
  texts.reserve(chunks.size());
  for (const auto& c : chunks) {
    if (!by_id.contains(c.doc_id)) {
      fail(ErrorCode::DanglingReference, "chunk " + c.chunk_id + " names unknown document " + c.doc_id);
    }
    texts.push_back(c.text);
  }
  if (chunks.empty()) return VectorIndex(gateway.config().embed_dim);
  auto vectors = gateway.embed_all(texts, "index");
  std::vector<IndexEntry> entries;
  entries.reserve(chunks.size());
  for (std::size_t i = 0; i < chunks.size(); ++i) {
    const auto& c = chunks[i];
    const auto& d = *by_id.at(c.doc_id);
    entries.push_back({c.chunk_id, c.doc_id, d.doc_type, d.company, d.fiscal_period,
                       static_cast<std::uint32_t>(c.ordinal), normalize(vectors[i]), c.text});
  }
  VectorIndex index(entries.front().vector.values.size());
  index.upsert(std::move(entries));
  return index;
}

}  // namespace ragit
