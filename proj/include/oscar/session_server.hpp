#pragma once

// HTTP front end for SessionManager.
//
//   POST   /v1/sessions                    {"recipe": object|string[, "config": {...}]} -> {"id"}
//   POST   /v1/sessions/{id}/frames        {"t_s", "path"} | {"t_s", "image_b64", "format"}
//                                          | multipart fields "image" (file) and "t_s"   -> log entry
//   GET    /v1/sessions/{id}/progress      -> progress state
//   POST   /v1/sessions/{id}/questions     {"question"[, "include_last_frame"]}           -> Q&A exchange
//   GET    /v1/sessions/{id}/events        server-sent events: snapshot, progress, qa, closed
//   DELETE /v1/sessions/{id}               -> {"closed": id}
//
// Errors come back as {"error": <kind>, "message": <text>}.

#include <atomic>
#include <chrono>
#include <memory>
#include <string>

#include <httplib.h>
#include <json.hpp>

#include "oscar/remote_backend.hpp"
#include "oscar/session_service.hpp"

namespace oscar {

class SessionServer {
 public:
  explicit SessionServer(SessionManager& manager) : manager_(manager) { routes(); }
  ~SessionServer() { stop(); }

  /// Binds and serves until stop(); blocks.
  bool listen(const std::string& host, int port) { return server_.listen(host, port); }

  /// Binds to a free port (returned) without serving yet; call listen_after_bind().
  int bind_to_any_port(const std::string& host) { return server_.bind_to_any_port(host); }
  bool listen_after_bind() { return server_.listen_after_bind(); }

  void wait_until_ready() const { server_.wait_until_ready(); }

  void stop() {
    if (stopping_.exchange(true)) return;
    manager_.shutdown();
    server_.stop();
  }

 private:
  static void reply(httplib::Response& res, int status, const nlohmann::json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
  }

  static void reply_error(httplib::Response& res, int status, const std::string& kind, const std::string& msg) {
    reply(res, status, {{"error", kind}, {"message", msg}});
  }

  template <typename F>
  static void guarded(httplib::Response& res, F&& f) {
    try {
      f();
    } catch (const UnknownSession& e) {
      reply_error(res, 404, "UnknownSession", e.what());
    } catch (const NonMonotoneTimestamp& e) {
      reply_error(res, 409, "NonMonotoneTimestamp", e.what());
    } catch (const BackendError& e) {
      reply_error(res, 502, "BackendError", e.what());
    } catch (const nlohmann::json::exception& e) {
      reply_error(res, 400, "BadRequest", e.what());
    } catch (const Error& e) {
      reply_error(res, 400, "BadRequest", e.what());
    } catch (const std::exception& e) {
      reply_error(res, 500, "InternalError", e.what());
    }
  }

  static Recipe recipe_from_request(const nlohmann::json& r) {
    if (r.is_string()) return parse_recipe(r.get<std::string>());
    return parse_recipe_json(r);
  }

  static FrameRef frame_from_request(const httplib::Request& req, double& t_s) {
    FrameRef f;
    if (req.is_multipart_form_data()) {
      if (!req.has_file("image") || !req.has_file("t_s")) throw SchemaError("multipart upload needs 'image' and 't_s'");
      const auto image = req.get_file_value("image");
      t_s = std::stod(req.get_file_value("t_s").content);
      f.payload.assign(image.content.begin(), image.content.end());
      f.format = image.content_type.find("jpeg") != std::string::npos ? "jpeg" : "png";
      return f;
    }
    const auto j = nlohmann::json::parse(req.body);
    t_s = j.at("t_s").get<double>();
    if (j.contains("image_b64")) {
      f.payload = base64_decode(j.at("image_b64").get<std::string>());
      f.format = j.value("format", std::string("png"));
    } else {
      f.path = j.at("path").get<std::string>();
    }
    return f;
  }

  void routes() {
    server_.set_default_headers({{"Access-Control-Allow-Origin", "*"}});
    server_.Options(R"(/v1/.*)", [](const httplib::Request&, httplib::Response& res) {
      res.set_header("Access-Control-Allow-Methods", "GET, POST, DELETE, OPTIONS");
      res.set_header("Access-Control-Allow-Headers", "Content-Type");
      res.status = 204;
    });

    server_.Post("/v1/sessions", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] {
        const auto j = nlohmann::json::parse(req.body);
        SessionConfig cfg = j.contains("config") ? session_config_from_json(j.at("config")) : SessionConfig{};
        const auto id = manager_.create_session(recipe_from_request(j.at("recipe")), cfg);
        reply(res, 201, {{"id", id}});
      });
    });

    server_.Post(R"(/v1/sessions/([^/]+)/frames)", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] {
        double t_s = 0.0;
        FrameRef f = frame_from_request(req, t_s);
        reply(res, 200, to_json(manager_.ingest_frame(req.matches[1], std::move(f), t_s)));
      });
    });

    server_.Get(R"(/v1/sessions/([^/]+)/progress)", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] { reply(res, 200, to_json(manager_.get_progress(req.matches[1]))); });
    });

    server_.Post(R"(/v1/sessions/([^/]+)/questions)", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] {
        const auto j = nlohmann::json::parse(req.body);
        const auto q = manager_.ask_question(req.matches[1], j.at("question").get<std::string>(),
                                             j.value("include_last_frame", false));
        reply(res, 200, to_json(q));
      });
    });

    server_.Get(R"(/v1/sessions/([^/]+)/events)", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] {
        auto sub = manager_.subscribe(req.matches[1]);
        res.set_header("Cache-Control", "no-cache");
        res.set_chunked_content_provider(
            "text/event-stream",
            [this, sub](std::size_t, httplib::DataSink& sink) {
              if (stopping_) {
                sink.done();
                return true;
              }
              if (auto e = sub->next(std::chrono::milliseconds(500))) {
                const auto text = to_sse(*e);
                if (!sink.write(text.data(), text.size())) return false;
              } else if (sub->ended()) {
                sink.done();
              }
              return sink.is_writable();
            },
            [sub](bool) { sub->cancel(); });
      });
    });

    server_.Delete(R"(/v1/sessions/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] {
        const std::string id = req.matches[1];
        manager_.close_session(id);
        reply(res, 200, {{"closed", id}});
      });
    });
  }

  SessionManager& manager_;
  httplib::Server server_;
  std::atomic<bool> stopping_{false};
};

}  // namespace oscar
