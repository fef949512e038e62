#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <semaphore>
#include <string>
#include <string_view>
#include <vector>

namespace ragit {

enum class Role { System, User, Assistant };
std::string_view to_string(Role r);
Role role_from_string(std::string_view s);

struct ChatMessage {
  Role role = Role::User;
  std::string content;
};

struct ChatRequest {
  std::string model_id;
  std::vector<ChatMessage> messages;
  double temperature = 0.2;
  int max_tokens = 1024;
  std::string request_tag;
};

inline constexpr double kGenerationTemperature = 0.2;
inline constexpr double kJudgeTemperature = 0.0;

/// At least one message, temperature >= 0, max_tokens > 0, and no two
/// consecutive assistant turns.
void validate(const ChatRequest& req);

struct EmbeddingVector {
  std::vector<float> values;

  std::size_t dim() const { return values.size(); }
  bool operator==(const EmbeddingVector&) const = default;
};

double l2_norm(const EmbeddingVector& v);
/// Unit-length copy; throws ZeroVector for a zero (or non-finite) input.
EmbeddingVector normalize(const EmbeddingVector& v);
/// Dot product accumulated in double.
double dot(const EmbeddingVector& a, const EmbeddingVector& b);

enum class BackendKind { Http, Stub };
std::string_view to_string(BackendKind k);
BackendKind backend_kind_from_string(std::string_view s);

struct BackendConfig {
  BackendKind kind = BackendKind::Stub;
  std::string base_url;                        // http only, e.g. https://api.openai.com/v1
  std::string api_key_env = "RAGIT_API_KEY";   // name of the env var holding the key
  int timeout_ms = 60000;
  int max_retries = 3;
  int backoff_base_ms = 500;                   // full-jitter exponential backoff, factor 2
  std::optional<std::uint64_t> seed;          // stub only
  std::string embed_model = "text-embedding-3-small";
  std::size_t embed_dim = 64;                  // stub embedding dimension
  int max_in_flight = 4;                       // http concurrency cap
};

void validate(const BackendConfig& cfg);

inline constexpr std::size_t kEmbedBatchLimit = 256;

struct CallRecord {
  std::string kind;  // "chat" | "embed"
  std::string request_tag;
  std::string model_id;
  double latency_ms = 0.0;
  int retries = 0;
  bool ok = true;
  std::string error;
};

/// Chat-completion and embedding gateway over an OpenAI-compatible HTTP
/// backend or the deterministic offline stub. Thread-safe; HTTP calls are
/// capped at `max_in_flight` concurrent requests.
class Gateway {
 public:
  explicit Gateway(BackendConfig cfg);
  ~Gateway();
  Gateway(const Gateway&) = delete;
  Gateway& operator=(const Gateway&) = delete;

  std::string chat(const ChatRequest& req);
  /// 1..256 non-empty texts; returns exactly one vector per text or throws.
  std::vector<EmbeddingVector> embed(const std::vector<std::string>& texts,
                                     std::string_view request_tag = "embed");
  /// Splits into batches of at most 256 and concatenates.
  std::vector<EmbeddingVector> embed_all(const std::vector<std::string>& texts,
                                         std::string_view request_tag = "embed");

  const BackendConfig& config() const { return cfg_; }
  std::vector<CallRecord> call_log() const;
  std::size_t call_count() const;
  /// Appends one JSON line per call to `path` from now on.
  void set_call_log_file(std::filesystem::path path);

 private:
  struct HttpResult;
  HttpResult post_with_retries(const std::string& path, const std::string& body, int& retries);
  void record(CallRecord rec);

  BackendConfig cfg_;
  std::string api_key_;
  std::string host_;
  std::string path_prefix_;
  std::unique_ptr<std::counting_semaphore<>> in_flight_;
  mutable std::mutex log_mu_;
  std::vector<CallRecord> log_;
  std::optional<std::filesystem::path> log_file_;
};

// Deterministic stub backend, exposed for tests -----------------------------

/// Pure function of (seed, request). Recognizes the QA-generation, judge,
/// and context-answering prompt shapes; anything else gets an echo reply.
std::string stub_chat(std::uint64_t seed, const ChatRequest& req);

/// Feature-hashed character 3-grams of each lowercased word (with boundary
/// markers), signed, L2-normalized.
EmbeddingVector stub_embed(std::uint64_t seed, std::string_view text, std::size_t dim);

}  // namespace ragit
