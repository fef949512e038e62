#pragma once

#include <string>
#include <thread>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "ragit/llmgate.hpp"

namespace ragit::testkit {

// A tiny OpenAI-compatible server whose behaviour each test scripts.
class FakeBackend {
 public:
  FakeBackend() {
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~FakeBackend() {
    server_.stop();
    thread_.join();
  }

  httplib::Server& server() { return server_; }
  BackendConfig config(int max_retries = 3) const {
    BackendConfig cfg;
    cfg.kind = BackendKind::Http;
    cfg.base_url = "http://127.0.0.1:" + std::to_string(port_) + "/v1";
    cfg.api_key_env = "RAGIT_TEST_KEY_UNSET";
    cfg.max_retries = max_retries;
    cfg.backoff_base_ms = 5;
    cfg.timeout_ms = 5000;
    return cfg;
  }

 private:
  httplib::Server server_;
  int port_ = 0;
  std::thread thread_;
};

inline std::string completion(const std::string& content) {
  return nlohmann::json{{"choices", {{{"message", {{"role", "assistant"}, {"content", content}}}}}}}
      .dump();
}

}  // namespace ragit::testkit
