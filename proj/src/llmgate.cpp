#include "ragit/llmgate.hpp"

#include <httplib.h>
#include <nlohmann/json.hpp>

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <random>
#include <thread>

#include "ragit/error.hpp"

namespace ragit {

using nlohmann::json;
using nlohmann::ordered_json;

std::string_view to_string(Role r) {
  switch (r) {
    case Role::System: return "system";
    case Role::User: return "user";
    case Role::Assistant: return "assistant";
  }
  return "user";
}

Role role_from_string(std::string_view s) {
  if (s == "system") return Role::System;
  if (s == "user") return Role::User;
  if (s == "assistant") return Role::Assistant;
  fail(ErrorCode::InvalidParams, "unknown role '" + std::string(s) + "'");
}

void validate(const ChatRequest& req) {
  if (req.messages.empty()) fail(ErrorCode::InvalidParams, "chat request has no messages");
  if (!(req.temperature >= 0.0)) fail(ErrorCode::InvalidParams, "temperature must be >= 0");
  if (req.max_tokens <= 0) fail(ErrorCode::InvalidParams, "max_tokens must be > 0");
  for (std::size_t i = 1; i < req.messages.size(); ++i) {
    if (req.messages[i].role == Role::Assistant && req.messages[i - 1].role == Role::Assistant) {
      fail(ErrorCode::InvalidParams, "two consecutive assistant messages");
    }
  }
}

double l2_norm(const EmbeddingVector& v) {
  double s = 0.0;
  for (float x : v.values) s += static_cast<double>(x) * x;
  return std::sqrt(s);
}

EmbeddingVector normalize(const EmbeddingVector& v) {
  const double n = l2_norm(v);
  if (!(n > 0.0) || !std::isfinite(n)) fail(ErrorCode::ZeroVector, "cannot normalize zero vector");
  EmbeddingVector out;
  out.values.reserve(v.values.size());
  for (float x : v.values) out.values.push_back(static_cast<float>(x / n));
  return out;
}

double dot(const EmbeddingVector& a, const EmbeddingVector& b) {
  if (a.dim() != b.dim()) {
    fail(ErrorCode::DimMismatch,
         "dot of dim " + std::to_string(a.dim()) + " and " + std::to_string(b.dim()));
  }
  double s = 0.0;
  for (std::size_t i = 0; i < a.values.size(); ++i) {
    s += static_cast<double>(a.values[i]) * b.values[i];
  }
  return s;
}

std::string_view to_string(BackendKind k) { return k == BackendKind::Http ? "http" : "stub"; }

BackendKind backend_kind_from_string(std::string_view s) {
  if (s == "http") return BackendKind::Http;
  if (s == "stub") return BackendKind::Stub;
  fail(ErrorCode::ConfigError, "backend.kind must be 'http' or 'stub', got '" + std::string(s) + "'");
}

void validate(const BackendConfig& cfg) {
  if (cfg.kind == BackendKind::Http && cfg.base_url.empty()) {
    fail(ErrorCode::ConfigError, "backend.base_url is required for the http backend");
  }
  if (cfg.kind == BackendKind::Stub && !cfg.seed) {
    fail(ErrorCode::ConfigError, "backend.seed is required for the stub backend");
  }
  if (cfg.max_retries < 0) fail(ErrorCode::ConfigError, "backend.max_retries must be >= 0");
  if (cfg.timeout_ms <= 0) fail(ErrorCode::ConfigError, "backend.timeout_ms must be > 0");
  if (cfg.max_in_flight <= 0) fail(ErrorCode::ConfigError, "backend.max_in_flight must be > 0");
  if (cfg.embed_dim == 0) fail(ErrorCode::ConfigError, "backend.embed_dim must be > 0");
}

// Gateway -------------------------------------------------------------------

struct Gateway::HttpResult {
  int status = 0;
  std::string body;
};

Gateway::Gateway(BackendConfig cfg) : cfg_(std::move(cfg)) {
  validate(cfg_);
  if (cfg_.kind == BackendKind::Http) {
    if (const char* key = std::getenv(cfg_.api_key_env.c_str())) api_key_ = key;
    // Split "scheme://host[:port]/prefix" into the client host and the path prefix.
    const auto scheme_end = cfg_.base_url.find("://");
    const auto host_begin = scheme_end == std::string::npos ? 0 : scheme_end + 3;
    const auto slash = cfg_.base_url.find('/', host_begin);
    host_ = cfg_.base_url.substr(0, slash);
    path_prefix_ = slash == std::string::npos ? "" : cfg_.base_url.substr(slash);
    while (!path_prefix_.empty() && path_prefix_.back() == '/') path_prefix_.pop_back();
    in_flight_ = std::make_unique<std::counting_semaphore<>>(cfg_.max_in_flight);
  }
}

Gateway::~Gateway() = default;

Gateway::HttpResult Gateway::post_with_retries(const std::string& path, const std::string& body,
                                               int& retries) {
  thread_local std::mt19937_64 jitter_rng{std::random_device{}()};
  for (int attempt = 0;; ++attempt) {
    HttpResult result;
    bool transient = false;
    std::string why;
    {
      in_flight_->acquire();
      httplib::Client cli(host_);
      const auto secs = cfg_.timeout_ms / 1000;
      const auto usecs = (cfg_.timeout_ms % 1000) * 1000;
      cli.set_connection_timeout(secs, usecs);
      cli.set_read_timeout(secs, usecs);
      cli.set_write_timeout(secs, usecs);
      httplib::Headers headers;
      if (!api_key_.empty()) headers.emplace("Authorization", "Bearer " + api_key_);
      auto res = cli.Post(path_prefix_ + path, headers, body, "application/json");
      in_flight_->release();
      if (!res) {
        transient = true;
        why = "transport error: " + httplib::to_string(res.error());
      } else {
        result.status = res->status;
        result.body = res->body;
        if (res->status >= 200 && res->status < 300) return result;
        if (res->status == 401 || res->status == 403) {
          fail(ErrorCode::AuthError, "HTTP " + std::to_string(res->status) + " from " + path);
        }
        transient = res->status == 429 || res->status >= 500;
        why = "HTTP " + std::to_string(res->status);
      }
    }
    if (!transient) fail(ErrorCode::BackendUnavailable, why + " from " + path);
    if (attempt >= cfg_.max_retries) {
      fail(ErrorCode::BackendUnavailable,
           "retries exhausted after " + std::to_string(attempt) + " retries: " + why);
    }
    const double cap = cfg_.backoff_base_ms * std::pow(2.0, attempt);
    std::uniform_real_distribution<double> full_jitter(0.0, cap);
    std::this_thread::sleep_for(std::chrono::duration<double, std::milli>(full_jitter(jitter_rng)));
    ++retries;
  }
}

std::string Gateway::chat(const ChatRequest& req) {
  validate(req);
  const auto t0 = std::chrono::steady_clock::now();
  CallRecord rec{"chat", req.request_tag, req.model_id, 0.0, 0, true, {}};
  auto finish = [&] {
    rec.latency_ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    record(rec);
  };
  try {
    std::string out;
    if (cfg_.kind == BackendKind::Stub) {
      out = stub_chat(*cfg_.seed, req);
    } else {
      ordered_json body;
      body["model"] = req.model_id;
      body["messages"] = json::array();
      for (const auto& m : req.messages) {
        body["messages"].push_back({{"role", to_string(m.role)}, {"content", m.content}});
      }
      body["temperature"] = req.temperature;
      body["max_tokens"] = req.max_tokens;
      auto res = post_with_retries("/chat/completions", body.dump(), rec.retries);
      json parsed = json::parse(res.body, nullptr, false);
      if (parsed.is_discarded() || !parsed.contains("choices") || !parsed["choices"].is_array() ||
          parsed["choices"].empty()) {
        fail(ErrorCode::MalformedResponse, "chat response has no choices");
      }
      const auto& msg = parsed["choices"][0];
      if (!msg.contains("message") || !msg["message"].contains("content") ||
          !msg["message"]["content"].is_string()) {
        fail(ErrorCode::MalformedResponse, "chat response has no completion content");
      }
      out = msg["message"]["content"].get<std::string>();
      if (out.empty()) fail(ErrorCode::MalformedResponse, "empty completion");
    }
    finish();
    return out;
  } catch (const Error& e) {
    rec.ok = false;
    rec.error = e.what();
    finish();
    throw;
  }
}

std::vector<EmbeddingVector> Gateway::embed(const std::vector<std::string>& texts,
                                            std::string_view request_tag) {
  if (texts.empty() || texts.size() > kEmbedBatchLimit) {
    fail(ErrorCode::InvalidParams,
         "embed batch size must be in [1, 256], got " + std::to_string(texts.size()));
  }
  for (const auto& t : texts) {
    if (t.empty()) fail(ErrorCode::InvalidParams, "cannot embed empty text");
  }
  const auto t0 = std::chrono::steady_clock::now();
  CallRecord rec{"embed", std::string(request_tag), cfg_.embed_model, 0.0, 0, true, {}};
  auto finish = [&] {
    rec.latency_ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    record(rec);
  };
  try {
    std::vector<EmbeddingVector> out;
    out.reserve(texts.size());
    if (cfg_.kind == BackendKind::Stub) {
      for (const auto& t : texts) out.push_back(stub_embed(*cfg_.seed, t, cfg_.embed_dim));
    } else {
      ordered_json body;
      body["model"] = cfg_.embed_model;
      body["input"] = texts;
      auto res = post_with_retries("/embeddings", body.dump(), rec.retries);
      json parsed = json::parse(res.body, nullptr, false);
      if (parsed.is_discarded() || !parsed.contains("data") || !parsed["data"].is_array()) {
        fail(ErrorCode::MalformedResponse, "embedding response has no data array");
      }
      const auto& data = parsed["data"];
      if (data.size() != texts.size()) {
        fail(ErrorCode::MalformedResponse, "embedding count mismatch: sent " +
                                               std::to_string(texts.size()) + ", got " +
                                               std::to_string(data.size()));
      }
      out.resize(texts.size());
      std::vector<bool> filled(texts.size(), false);
      for (std::size_t i = 0; i < data.size(); ++i) {
        const auto& item = data[i];
        const std::size_t idx = item.contains("index") ? item["index"].get<std::size_t>() : i;
        if (idx >= texts.size() || filled[idx] || !item.contains("embedding")) {
          fail(ErrorCode::MalformedResponse, "bad embedding item at position " + std::to_string(i));
        }
        out[idx].values = item["embedding"].get<std::vector<float>>();
        filled[idx] = true;
      }
      const auto dim = out.front().dim();
      for (const auto& v : out) {
        if (v.dim() == 0 || v.dim() != dim) {
          fail(ErrorCode::MalformedResponse, "inconsistent embedding dimensions");
        }
        for (float x : v.values) {
          if (!std::isfinite(x)) fail(ErrorCode::MalformedResponse, "non-finite embedding entry");
        }
      }
    }
    finish();
    return out;
  } catch (const Error& e) {
    rec.ok = false;
    rec.error = e.what();
    finish();
    throw;
  } catch (const json::exception& e) {
    rec.ok = false;
    rec.error = e.what();
    finish();
    fail(ErrorCode::MalformedResponse, e.what());
  }
}

std::vector<EmbeddingVector> Gateway::embed_all(const std::vector<std::string>& texts,
                                                std::string_view request_tag) {
  std::vector<EmbeddingVector> out;
  out.reserve(texts.size());
  for (std::size_t i = 0; i < texts.size(); i += kEmbedBatchLimit) {
    const auto end = std::min(texts.size(), i + kEmbedBatchLimit);
    std::vector<std::string> batch(texts.begin() + static_cast<std::ptrdiff_t>(i),
                                   texts.begin() + static_cast<std::ptrdiff_t>(end));
    auto vecs = embed(batch, request_tag);
    for (auto& v : vecs) out.push_back(std::move(v));
  }
  return out;
}

void Gateway::record(CallRecord rec) {
  std::lock_guard lock(log_mu_);
  if (log_file_) {
    ordered_json j;
    j["kind"] = rec.kind;
    j["request_tag"] = rec.request_tag;
    j["model_id"] = rec.model_id;
    j["latency_ms"] = rec.latency_ms;
    j["retries"] = rec.retries;
    j["ok"] = rec.ok;
    if (!rec.ok) j["error"] = rec.error;
    std::ofstream out(*log_file_, std::ios::app);
    out << j.dump() << "\n";
  }
  log_.push_back(std::move(rec));
}

std::vector<CallRecord> Gateway::call_log() const {
  std::lock_guard lock(log_mu_);
  return log_;
}

std::size_t Gateway::call_count() const {
  std::lock_guard lock(log_mu_);
  return log_.size();
}

void Gateway::set_call_log_file(std::filesystem::path path) {
  std::lock_guard lock(log_mu_);
  log_file_ = std::move(path);
}

}  // namespace ragit
