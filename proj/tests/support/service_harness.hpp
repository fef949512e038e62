#pragma once

#include <memory>
#include <string>
#include <thread>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "ragit/analyst.hpp"
#include "ragit/analyst_http.hpp"
#include "support/test_support.hpp"

namespace ragit::testkit {

// Stub-backed analyst service over the Broadcom fixture, listening on an
// ephemeral localhost port.
class ServiceHarness {
 public:
  explicit ServiceHarness(bool with_dividend = true)
      : gw_(stub_config()),
        idx_(broadcom_index(gw_, with_dividend)),
        registry_(KpiRegistry::from_baseline(data_file("baseline_kpis.json"))),
        service_(idx_, gw_, registry_, reports_),
        server_(service_) {
    port_ = server_.bind_to_any_port();
    thread_ = std::thread([this] { server_.listen(); });
    server_.wait_until_ready();
    client_ = std::make_unique<httplib::Client>("127.0.0.1", port_);
    client_->set_read_timeout(60, 0);
  }
  ~ServiceHarness() {
    server_.stop();
    thread_.join();
  }

  struct Reply {
    int status = 0;
    nlohmann::json body;
    std::string request_id_header;
  };

  Reply call_raw(const std::string& method, const std::string& path, const std::string& body,
                 httplib::Headers headers = {}) {
    httplib::Result res(nullptr, httplib::Error::Unknown);
    if (method == "GET") {
      res = client_->Get(path, headers);
    } else if (method == "POST") {
      res = client_->Post(path, headers, body, "application/json");
    } else if (method == "PUT") {
      res = client_->Put(path, headers, body, "application/json");
    } else if (method == "DELETE") {
      res = client_->Delete(path, headers);
    }
    Reply r;
    if (!res) return r;
    r.status = res->status;
    r.body = nlohmann::json::parse(res->body, nullptr, false);
    r.request_id_header = res->get_header_value("X-Request-Id");
    return r;
  }
  Reply call(const std::string& method, const std::string& path,
             const nlohmann::json& body = nullptr, httplib::Headers headers = {}) {
    return call_raw(method, path, body.is_null() ? std::string() : body.dump(), std::move(headers));
  }

  int port() const { return port_; }
  KpiRegistry& registry() { return registry_; }

 private:
  Gateway gw_;
  VectorIndex idx_;
  KpiRegistry registry_;
  ReportStore reports_;
  AnalystService service_;
  AnalystHttpServer server_;
  int port_ = 0;
  std::thread thread_;
  std::unique_ptr<httplib::Client> client_;
};

}  // namespace ragit::testkit
