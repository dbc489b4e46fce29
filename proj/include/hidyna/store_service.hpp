#pragma once

#include <memory>
#include <string>
#include <thread>

#include <httplib.h>

#include "hidyna/graph_store.hpp"
#include "hidyna/json_codec.hpp"

namespace hidyna {

/// Read-side HTTP facade over a GraphStore. Endpoints return the canonical
/// JSON encodings:
///   GET /snapshot/latest
///   GET /object?name=<label>
///   GET /route?from=<region>&to=<region>
class StoreService {
 public:
  explicit StoreService(const GraphStore& store) : store_(store) {
    server_.Get("/snapshot/latest", [this](const httplib::Request&, httplib::Response& res) {
      auto snap = store_.latest();
      if (!snap) {
        res.status = 404;
        res.set_content(json{{"error", "no snapshot committed"}}.dump(), "application/json");
        return;
      }
      res.set_content(json(*snap).dump(), "application/json");
    });

    server_.Get("/object", [this](const httplib::Request& req, httplib::Response& res) {
      if (!req.has_param("name")) {
        res.status = 400;
        res.set_content(json{{"error", "missing 'name' parameter"}}.dump(), "application/json");
        return;
      }
      auto snap = store_.latest();
      if (!snap) {
        res.status = 404;
        res.set_content(json{{"error", "no snapshot committed"}}.dump(), "application/json");
        return;
      }
      res.set_content(json(find_object(req.get_param_value("name"), *snap)).dump(),
                      "application/json");
    });

    server_.Get("/route", [this](const httplib::Request& req, httplib::Response& res) {
      if (!req.has_param("from") || !req.has_param("to")) {
        res.status = 400;
        res.set_content(json{{"error", "missing 'from' or 'to' parameter"}}.dump(),
                        "application/json");
        return;
      }
      auto snap = store_.latest();
      if (!snap) {
        res.status = 404;
        res.set_content(json{{"error", "no snapshot committed"}}.dump(), "application/json");
        return;
      }
      try {
        auto route = plan_route(req.get_param_value("from"), req.get_param_value("to"), *snap);
        res.set_content(json{{"route", route}}.dump(), "application/json");
      } catch (const ValidationError& e) {
        res.status = 400;
        res.set_content(json{{"error", e.what()}}.dump(), "application/json");
      } catch (const std::exception& e) {
        res.status = 404;
        res.set_content(json{{"error", e.what()}}.dump(), "application/json");
      }
    });
  }

  /// Binds an ephemeral port and serves in a background thread (tests).
  int start_async(const std::string& host = "127.0.0.1") {
    int port = server_.bind_to_any_port(host);
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
    return port;
  }

  /// Blocking serve on a fixed port (CLI).
  bool listen(const std::string& host, int port) { return server_.listen(host, port); }

  void stop() {
    server_.stop();
    if (thread_.joinable()) thread_.join();
  }

  ~StoreService() { stop(); }

 private:
  const GraphStore& store_;
  httplib::Server server_;
  std::thread thread_;
};

/// Client-side fetch of /snapshot/latest from a serve-store instance.
inline UnifiedSnapshot fetch_latest_snapshot(const std::string& url) {
  auto scheme_end = url.find("://");
  auto path_start = url.find('/', scheme_end == std::string::npos ? 0 : scheme_end + 3);
  std::string base = path_start == std::string::npos ? url : url.substr(0, path_start);
  httplib::Client client(base);
  auto res = client.Get("/snapshot/latest");
  if (!res) throw std::runtime_error("store unreachable at " + url);
  if (res->status != 200)
    throw std::runtime_error("store returned status " + std::to_string(res->status));
  return json::parse(res->body).get<UnifiedSnapshot>();
}

}  // namespace hidyna
