#include "ragit/analyst_http.hpp"

#include <atomic>
#include <cstdio>

#include <httplib.h>

#include "ragit/util.hpp"

namespace ragit {

using nlohmann::json;
using nlohmann::ordered_json;

int http_status(ErrorCode code) {
  switch (code) {
    case ErrorCode::NotFound:
    case ErrorCode::NoRelevantDocuments:
      return 404;
    case ErrorCode::DuplicateName:
    case ErrorCode::BaselineDeletionForbidden:
      return 409;
    case ErrorCode::BackendUnavailable:
    case ErrorCode::AuthError:
    case ErrorCode::MalformedResponse:
    case ErrorCode::EmptyIndex:
      return 503;
    case ErrorCode::IoError:
    case ErrorCode::CorruptFile:
      return 500;
    default:
      return 400;
  }
}

struct AnalystHttpServer::Impl {
  AnalystService& service;
  HttpOptions opts;
  httplib::Server server;
  std::atomic<std::uint64_t> next_request{0};

  Impl(AnalystService& s, HttpOptions o) : service(s), opts(std::move(o)) {}

  std::string request_id(const httplib::Request& req) {
    if (req.has_header("X-Request-Id")) return req.get_header_value("X-Request-Id");
    char buf[32];
    std::snprintf(buf, sizeof buf, "req-%08llu",
                  static_cast<unsigned long long>(++next_request));
    return buf;
  }

  static std::string who(const httplib::Request& req) {
    return req.has_header("X-Analyst") ? req.get_header_value("X-Analyst") : "anonymous";
  }

  static json body(const httplib::Request& req) {
    if (req.body.empty()) return json::object();
    auto j = json::parse(req.body, nullptr, false);
    if (j.is_discarded() || !j.is_object()) {
      fail(ErrorCode::InvalidParams, "request body must be a JSON object");
    }
    return j;
  }

  static std::string required_string(const json& j, const char* key) {
    auto it = j.find(key);
    if (it == j.end() || !it->is_string() || trim(it->get<std::string>()).empty()) {
      fail(ErrorCode::InvalidParams, std::string("'") + key + "' must be a non-empty string");
    }
    return it->get<std::string>();
  }

  using Handler = std::function<std::pair<int, ordered_json>(const httplib::Request&)>;

  // Wraps a handler with request ids and the error mapping.
  httplib::Server::Handler wrap(Handler h) {
    return [this, h = std::move(h)](const httplib::Request& req, httplib::Response& res) {
      const auto rid = request_id(req);
      ordered_json out;
      int status = 200;
      try {
        auto [s, payload] = h(req);
        status = s;
        out["request_id"] = rid;
        for (auto& [k, v] : payload.items()) out[k] = v;
      } catch (const Error& e) {
        status = http_status(e.code());
        out = {{"request_id", rid}, {"code", std::string(to_string(e.code()))}, {"message", e.detail()}};
      } catch (const json::exception& e) {
        status = 400;
        out = {{"request_id", rid}, {"code", "InvalidParams"}, {"message", e.what()}};
      } catch (const std::exception& e) {
        status = 500;
        out = {{"request_id", rid}, {"code", "Internal"}, {"message", e.what()}};
      }
      res.status = status;
      res.set_header("X-Request-Id", rid);
      res.set_content(out.dump(), "application/json");
    };
  }

  void routes() {
    server.Get("/v1/health", wrap([](const auto&) {
      return std::pair{200, ordered_json{{"status", "ok"}}};
    }));

    server.Post("/v1/ask", wrap([this](const httplib::Request& req) {
      const auto j = body(req);
      const auto question = required_string(j, "question");
      const auto k = j.value("k", opts.default_k);
      if (k == 0) fail(ErrorCode::InvalidParams, "'k' must be >= 1");
      const auto r = service.ask(question, j.value("company", ""), j.value("fiscal_period", ""), k);
      ordered_json out;
      out["answer"] = r.answer;
      out["abstained"] = r.abstained;
      out["hits"] = ordered_json::array();
      for (const auto& h : r.hits) {
        out["hits"].push_back({{"chunk_id", h.entry.chunk_id},
                               {"doc_id", h.entry.doc_id},
                               {"doc_type", to_string(h.entry.doc_type)},
                               {"score", h.score},
                               {"text", h.entry.text}});
      }
      return std::pair{200, out};
    }));

    server.Get("/v1/kpis", wrap([this](const auto&) {
      ordered_json arr = ordered_json::array();
      for (const auto& k : service.registry().list()) arr.push_back(to_json(k));
      return std::pair{200, ordered_json{{"kpis", arr}}};
    }));

    server.Post("/v1/kpis", wrap([this](const httplib::Request& req) {
      auto def = kpi_from_json(body(req));
      auto created = service.registry().create(std::move(def), who(req));
      return std::pair{201, ordered_json{{"kpi", to_json(created)}}};
    }));

    // Registered ahead of the /v1/kpis/:id patterns.
    server.Post("/v1/kpis/evaluate", wrap([this](const httplib::Request& req) {
      const auto j = body(req);
      const auto results = service.evaluate_kpis(required_string(j, "company"),
                                                 required_string(j, "fiscal_period"));
      ordered_json arr = ordered_json::array();
      for (const auto& r : results) arr.push_back(to_json(r));
      return std::pair{200, ordered_json{{"results", arr}}};
    }));

    server.Get("/v1/audit", wrap([this](const auto&) {
      ordered_json arr = ordered_json::array();
      for (const auto& a : service.registry().audit()) {
        arr.push_back({{"seq", a.seq}, {"who", a.who}, {"when", a.when}, {"action", a.action},
                       {"kpi_id", a.kpi_id}, {"before", a.before}, {"after", a.after}});
      }
      return std::pair{200, ordered_json{{"audit", arr}}};
    }));

    static const char* kKpiPath = R"(/v1/kpis/([^/]+))";
    server.Get(kKpiPath, wrap([this](const httplib::Request& req) {
      const auto id = req.matches[1].str();
      auto k = service.registry().get(id);
      if (!k) fail(ErrorCode::NotFound, "no KPI with id '" + id + "'");
      return std::pair{200, ordered_json{{"kpi", to_json(*k)}}};
    }));

    // PUT merges the body over the stored definition, so partial bodies such
    // as {"enabled": false} work.
    server.Put(kKpiPath, wrap([this](const httplib::Request& req) {
      const auto id = req.matches[1].str();
      auto current = service.registry().get(id);
      if (!current) fail(ErrorCode::NotFound, "no KPI with id '" + id + "'");
      json merged = json(to_json(*current));
      merged.merge_patch(body(req));
      const bool changed = service.registry().update(id, kpi_from_json(merged), who(req));
      return std::pair{200, ordered_json{{"kpi", to_json(*service.registry().get(id))},
                                         {"changed", changed}}};
    }));

    server.Delete(kKpiPath, wrap([this](const httplib::Request& req) {
      const auto id = req.matches[1].str();
      service.registry().remove(id, who(req));
      return std::pair{200, ordered_json{{"deleted", id}}};
    }));

    server.Post("/v1/reports", wrap([this](const httplib::Request& req) {
      const auto j = body(req);
      const auto report = service.generate_report(required_string(j, "company"),
                                                  required_string(j, "fiscal_period"));
      return std::pair{201, ordered_json{{"report", to_json(report)}}};
    }));

    server.Get("/v1/reports", wrap([this](const auto&) {
      return std::pair{200, ordered_json{{"reports", service.reports().list()}}};
    }));

    server.Get(R"(/v1/reports/([^/]+))", wrap([this](const httplib::Request& req) {
      const auto id = req.matches[1].str();
      auto r = service.reports().get(id);
      if (!r) fail(ErrorCode::NotFound, "no report with id '" + id + "'");
      return std::pair{200, ordered_json{{"report", *r}}};
    }));

    if (opts.ui_dir) server.set_mount_point("/ui", opts.ui_dir->string());
  }
};

AnalystHttpServer::AnalystHttpServer(AnalystService& service, HttpOptions opts)
    : impl_(std::make_unique<Impl>(service, std::move(opts))) {
  // httplib defaults to SO_REUSEPORT, which lets a second server share a busy port.
  impl_->server.set_socket_options([](socket_t sock) {
    int yes = 1;
    setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, &yes, sizeof(yes));
  });
  impl_->routes();
}

AnalystHttpServer::~AnalystHttpServer() { stop(); }

void AnalystHttpServer::bind(const std::string& host, int port) {
  if (!impl_->server.bind_to_port(host, port)) {
    fail(ErrorCode::IoError, "cannot bind " + host + ":" + std::to_string(port) +
                                 " (port in use?)");
  }
}

int AnalystHttpServer::bind_to_any_port(const std::string& host) {
  const int port = impl_->server.bind_to_any_port(host);
  if (port <= 0) fail(ErrorCode::IoError, "cannot bind an ephemeral port on " + host);
  return port;
}

void AnalystHttpServer::listen() { impl_->server.listen_after_bind(); }

void AnalystHttpServer::stop() {
  if (impl_->server.is_running()) impl_->server.stop();
}

bool AnalystHttpServer::is_running() const { return impl_->server.is_running(); }

void AnalystHttpServer::wait_until_ready() const { impl_->server.wait_until_ready(); }

}  // namespace ragit
