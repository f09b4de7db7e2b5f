#pragma once

#include <filesystem>
#include <memory>
#include <string>

#include "dte/study.hpp"

namespace httplib {
class Server;
}

namespace dte {

struct ServerOptions {
  // Bearer token required by POST /api/studies and GET .../report. Empty
  // disables the check.
  std::string admin_token;
  // Static quiz UI bundle served at "/" when set.
  std::filesystem::path ui_dist;
};

// JSON API over a StudyService:
//   POST /api/studies                             {tree_id, dataset_id, config}
//   POST /api/studies/{id}/sessions               {evaluator}
//   GET  /api/sessions/{id}/next
//   POST /api/sessions/{id}/items/{item}/answers  {choices, ratings}
//   GET  /api/studies/{id}/report
class StudyServer {
 public:
  StudyServer(StudyService& service, ServerOptions options);
  ~StudyServer();
  StudyServer(const StudyServer&) = delete;
  StudyServer& operator=(const StudyServer&) = delete;

  // Blocks until stop(). Returns false if the port cannot be bound.
  bool listen(const std::string& host, int port);
  // Binds an ephemeral port and returns it; serve with listen_after_bind().
  int bind_any_port(const std::string& host);
  bool listen_after_bind();
  void wait_until_ready() const;
  void stop();

 private:
  void install_routes();

  StudyService& service_;
  ServerOptions options_;
  std::unique_ptr<httplib::Server> server_;
};

}  // namespace dte
