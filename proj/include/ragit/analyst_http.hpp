#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <string>

#include "ragit/analyst.hpp"
#include "ragit/error.hpp"

namespace ragit {

/// HTTP status used for an error code in the /v1 API.
int http_status(ErrorCode code);

struct HttpOptions {
  std::optional<std::filesystem::path> ui_dir;  // served under /ui when set
  std::size_t default_k = 4;
};

/// JSON front end for AnalystService. Every response body is an object with
/// a request_id; failures are {request_id, code, message}.
class AnalystHttpServer {
 public:
  explicit AnalystHttpServer(AnalystService& service, HttpOptions opts = {});
  ~AnalystHttpServer();
  AnalystHttpServer(const AnalystHttpServer&) = delete;
  AnalystHttpServer& operator=(const AnalystHttpServer&) = delete;

  /// Throws IoError when the port cannot be bound.
  void bind(const std::string& host, int port);
  /// Binds an ephemeral port and returns it.
  int bind_to_any_port(const std::string& host = "127.0.0.1");
  /// Blocks until stop().
  void listen();
  void stop();
  bool is_running() const;
  void wait_until_ready() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace ragit
