#pragma once

#include <chrono>
#include <cstdint>
#include <memory>

#include "palp/config.hpp"
#include "palp/feedback.hpp"
#include "palp/reference.hpp"

namespace palp::server {

struct ServerOptions {
  ListenConfig listen;
  std::chrono::milliseconds heartbeat{5000};
  const ReferenceModel* reference = nullptr;  // served by GET /reference-model
};

// Network front end of a FeedbackService:
//   HTTP       session commands, session list, reports, reference model
//   WebSocket  FeedbackMessage JSON text messages; "/?session=<id>" filters
//   TCP ingest "session <id>\n", then raw wire frames
// The protocol is documented in docs/feedback-protocol.md. Port 0 binds an
// ephemeral port; the bound ports are reported after start().
class Server {
 public:
  Server(feedback::FeedbackService& service, ServerOptions options);
  ~Server();

  Server(const Server&) = delete;
  Server& operator=(const Server&) = delete;

  // Throws Error(Io) when a listener cannot bind.
  void start();
  void stop();

  std::uint16_t http_port() const;
  std::uint16_t websocket_port() const;
  std::uint16_t ingest_port() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace palp::server
