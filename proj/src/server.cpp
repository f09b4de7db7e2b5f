#include "dte/server.hpp"

#include <fmt/format.h>
#include <httplib.h>

namespace dte {
namespace {

using nlohmann::json;

int status_for(StudyError::Kind kind) {
  switch (kind) {
    case StudyError::Kind::kNotFound:
      return 404;
    case StudyError::Kind::kInvalid:
      return 400;
    case StudyError::Kind::kConflict:
      return 409;
    case StudyError::Kind::kUnauthorized:
      return 401;
  }
  return 500;
}

void send_json(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

json parse_body(const httplib::Request& req) {
  if (req.body.empty()) return json::object();
  try {
    return json::parse(req.body);
  } catch (const json::parse_error& e) {
    throw StudyError(StudyError::Kind::kInvalid, fmt::format("request body is not valid JSON: {}", e.what()));
  }
}

}  // namespace

StudyServer::StudyServer(StudyService& service, ServerOptions options)
    : service_(service), options_(std::move(options)), server_(std::make_unique<httplib::Server>()) {
  install_routes();
}

StudyServer::~StudyServer() { stop(); }

void StudyServer::install_routes() {
  auto& srv = *server_;

  // Every handler runs through this wrapper so library errors become JSON
  // error responses with a matching status.
  auto guarded = [this](bool admin, auto handler) {
    return [this, admin, handler](const httplib::Request& req, httplib::Response& res) {
      try {
        if (admin && !options_.admin_token.empty() &&
            req.get_header_value("Authorization") != "Bearer " + options_.admin_token) {
          throw StudyError(StudyError::Kind::kUnauthorized, "missing or invalid admin token");
        }
        handler(req, res);
      } catch (const StudyError& e) {
        send_json(res, status_for(e.kind()), {{"error", e.what()}});
      } catch (const json::exception& e) {
        send_json(res, 400, {{"error", e.what()}});
      } catch (const DataError& e) {
        send_json(res, 400, {{"error", e.what()}});
      } catch (const std::exception& e) {
        send_json(res, 500, {{"error", e.what()}});
      }
    };
  };

  srv.Post("/api/studies", guarded(true, [this](const httplib::Request& req, httplib::Response& res) {
             const json body = parse_body(req);
             const auto config = StudyConfig::from_json(body.value("config", json::object()));
             auto study = service_.create_study(body.at("tree_id").get<std::string>(),
                                                body.at("dataset_id").get<std::string>(), config);
             send_json(res, 201,
                       {{"study_id", study->id}, {"samples", study->samples.size()}, {"items", study->items.size()}});
           }));

  srv.Post(R"(/api/studies/([^/]+)/sessions)",
           guarded(false, [this](const httplib::Request& req, httplib::Response& res) {
             const json body = parse_body(req);
             auto session = service_.open_session(req.matches[1], body.at("evaluator").get<std::string>());
             send_json(res, 201,
                       {{"session_id", session->id},
                        {"study_id", session->study_id},
                        {"cursor", session->cursor()},
                        {"count", session->order.size()}});
           }));

  srv.Get(R"(/api/sessions/([^/]+)/next)", guarded(false, [this](const httplib::Request& req, httplib::Response& res) {
            send_json(res, 200, service_.next_item(req.matches[1]));
          }));

  srv.Post(R"(/api/sessions/([^/]+)/items/([^/]+)/answers)",
           guarded(false, [this](const httplib::Request& req, httplib::Response& res) {
             AnswerSheet sheet = sheet_from_json(parse_body(req));
             send_json(res, 200, service_.submit_item(req.matches[1], req.matches[2], std::move(sheet)));
           }));

  srv.Get(R"(/api/studies/([^/]+)/report)", guarded(true, [this](const httplib::Request& req, httplib::Response& res) {
            send_json(res, 200, service_.report(req.matches[1]).to_json());
          }));

  if (!options_.ui_dist.empty()) srv.set_mount_point("/", options_.ui_dist.string());
}

bool StudyServer::listen(const std::string& host, int port) { return server_->listen(host, port); }

int StudyServer::bind_any_port(const std::string& host) { return server_->bind_to_any_port(host); }

bool StudyServer::listen_after_bind() { return server_->listen_after_bind(); }

void StudyServer::wait_until_ready() const { server_->wait_until_ready(); }

void StudyServer::stop() {
  if (server_ && server_->is_running()) server_->stop();
}

}  // namespace dte
