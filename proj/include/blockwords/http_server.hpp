#pragma once

// HTTP binding for SessionManager. Routes:
//   POST /sessions                  create; body is a session config
//   GET  /sessions/{id}             current view
//   POST /sessions/{id}/actions     body {"action": "stack(i,n)"}
//   POST /sessions/{id}/undo        drop the last action
//   GET  /sessions/{id}/stream      server-sent events, one "update" per change
// Every body, errors included, is a JSON object with "v".

#include <atomic>
#include <chrono>
#include <memory>
#include <string>
#include <thread>

#include "blockwords/liveapi.hpp"
#include "httplib.h"
#include "json.hpp"

namespace blockwords {

class HttpServer {
 public:
  explicit HttpServer(std::shared_ptr<SessionManager> sessions) : sessions_(std::move(sessions)) { install(); }
  ~HttpServer() { stop(); }

  HttpServer(const HttpServer&) = delete;
  HttpServer& operator=(const HttpServer&) = delete;

  /// Binds and serves on a background thread. Port 0 picks a free port.
  /// Returns the bound port.
  int start(const std::string& host = "127.0.0.1", int port = 0) {
    port_ = port == 0 ? server_.bind_to_any_port(host) : (server_.bind_to_port(host, port) ? port : -1);
    if (port_ < 0) throw Error("cannot bind " + host + ":" + std::to_string(port));
    thread_ = std::jthread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
    return port_;
  }

  /// Serves on the calling thread until stop().
  void run(const std::string& host, int port) {
    if (!server_.listen(host, port)) throw Error("cannot listen on " + host + ":" + std::to_string(port));
  }

  void stop() {
    stopping_ = true;
    sessions_->close_all();
    server_.stop();
    if (thread_.joinable()) thread_.join();
  }

  int port() const noexcept { return port_; }

 private:
  static void send_json(httplib::Response& res, int status, const nlohmann::ordered_json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
  }

  template <class F>
  static void guarded(httplib::Response& res, F&& f) {
    try {
      f();
    } catch (const ApiError& e) {
      send_json(res, e.status(), error_body(e));
    } catch (const std::exception& e) {
      send_json(res, 500, error_body(ApiError(500, "internal", e.what())));
    }
  }

  static nlohmann::json parse_body(const httplib::Request& req) {
    if (req.body.empty()) return nlohmann::json::object();
    try {
      return nlohmann::json::parse(req.body);
    } catch (const nlohmann::json::parse_error& e) {
      throw ApiError(400, "invalid_json", e.what());
    }
  }

  void install() {
    server_.Post("/sessions", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] { send_json(res, 201, sessions_->create(parse_body(req))->view()); });
    });
    server_.Get(R"(/sessions/([0-9a-f]+))", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] { send_json(res, 200, sessions_->get(req.matches[1])->view()); });
    });
    server_.Post(R"(/sessions/([0-9a-f]+)/actions)", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] {
        auto session = sessions_->get(req.matches[1]);
        const auto body = parse_body(req);
        if (!body.is_object() || !body.contains("action") || !body.at("action").is_string())
          throw ApiError(400, "invalid_request", "body must be {\"action\": \"<action>\"}");
        send_json(res, 200, session->post_action(body.at("action").get<std::string>()));
      });
    });
    server_.Post(R"(/sessions/([0-9a-f]+)/undo)", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] { send_json(res, 200, sessions_->get(req.matches[1])->undo()); });
    });
    server_.Get(R"(/sessions/([0-9a-f]+)/stream)", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] {
        auto session = sessions_->get(req.matches[1]);
        // The first event is the current view; later ones follow each change.
        auto seen = std::make_shared<std::uint64_t>(session->version());
        auto first = std::make_shared<std::string>(session->view().dump());
        res.set_header("Cache-Control", "no-cache");
        res.set_chunked_content_provider(
            "text/event-stream", [this, session, seen, first](std::size_t, httplib::DataSink& sink) {
              if (!first->empty()) {
                const std::string ev = "event: update\ndata: " + *first + "\n\n";
                first->clear();
                return sink.write(ev.data(), ev.size());
              }
              while (!stopping_ && !session->closed()) {
                if (!sink.is_writable()) return false;
                if (auto u = session->wait_update(*seen, std::chrono::milliseconds(250))) {
                  *seen = u->first;
                  const std::string ev = "event: update\ndata: " + u->second + "\n\n";
                  return sink.write(ev.data(), ev.size());
                }
                // Comment line keeps proxies from timing out the stream.
                static constexpr char kPing[] = ": ping\n\n";
                if (!sink.write(kPing, sizeof(kPing) - 1)) return false;
              }
              sink.done();
              return true;
            });
      });
    });
    server_.set_error_handler([](const httplib::Request&, httplib::Response& res) {
      if (!res.body.empty()) return;
      send_json(res, res.status, error_body(ApiError(res.status, "not_found", "no such route")));
    });
  }

  std::shared_ptr<SessionManager> sessions_;
  httplib::Server server_;
  std::atomic<bool> stopping_{false};
  int port_ = -1;
  std::jthread thread_;
};

}  // namespace blockwords
