#include "palp/server.hpp"

#include <array>
#include <atomic>
#include <deque>
#include <istream>
#include <future>
#include <map>
#include <thread>

#include <boost/asio.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/http.hpp>
#include <boost/beast/websocket.hpp>
#include <httplib.h>
#include <json.hpp>

#include "palp/error.hpp"
#include "palp/report.hpp"
#include "palp/version.hpp"

namespace palp::server {

namespace asio = boost::asio;
namespace beast = boost::beast;
namespace websocket = beast::websocket;
using tcp = asio::ip::tcp;
using nlohmann::json;

namespace {

int http_status(ErrorCode code) {
  switch (code) {
    case ErrorCode::DuplicateSession: return 409;
    case ErrorCode::UnknownSession: return 404;
    case ErrorCode::ParseError:
    case ErrorCode::FieldOutOfRange:
    case ErrorCode::InvalidConfig: return 400;
    default: return 422;
  }
}

json error_json(ErrorCode code, const std::string& message) {
  return {{"error", {{"code", to_string(code)}, {"message", message}}}};
}

void reply(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(2), "application/json");
}

json summary_json(const feedback::SessionSummary& s) {
  json j{{"info", s.info},
         {"open", s.open},
         {"frames", s.frames},
         {"codec_errors", s.codec_errors},
         {"presses", s.presses}};
  j["recording"] = s.recording ? json(s.recording->string()) : json(nullptr);
  return j;
}

// Runs a handler and maps engine errors to JSON error bodies.
template <typename F>
void guarded(httplib::Response& res, F&& f) {
  try {
    f();
  } catch (const Error& e) {
    reply(res, http_status(e.code()), error_json(e.code(), e.what()));
  } catch (const json::exception& e) {
    reply(res, 400, error_json(ErrorCode::ParseError, e.what()));
  } catch (const std::exception& e) {
    reply(res, 500, error_json(ErrorCode::Io, e.what()));
  }
}

// ---------------------------------------------------------------------------

class WsSession : public std::enable_shared_from_this<WsSession> {
 public:
  WsSession(tcp::socket socket, feedback::FeedbackService& service)
      : ws_(std::move(socket)), service_(service) {}

  void run() {
    beast::get_lowest_layer(ws_).expires_after(std::chrono::seconds(10));
    beast::http::async_read(beast::get_lowest_layer(ws_), buffer_, request_,
                            [self = shared_from_this()](beast::error_code ec, std::size_t) {
                              self->on_request(ec);
                            });
  }

  // Called on the io thread.
  void close() {
    shutdown();
    beast::error_code ec;
    beast::get_lowest_layer(ws_).socket().close(ec);
  }

 private:
  void on_request(beast::error_code ec) {
    if (ec || !websocket::is_upgrade(request_)) return;
    std::optional<std::string> filter;
    const std::string target(request_.target());
    if (auto q = target.find("session="); q != std::string::npos) {
      filter = target.substr(q + 8, target.find('&', q) - (q + 8));
    }
    beast::get_lowest_layer(ws_).expires_never();
    ws_.set_option(websocket::stream_base::timeout::suggested(beast::role_type::server));
    ws_.async_accept(request_, [self = shared_from_this(), filter](beast::error_code ec) {
      self->on_accept(ec, filter);
    });
  }

  void on_accept(beast::error_code ec, std::optional<std::string> filter) {
    if (ec) return;
    sub_ = service_.subscribe(std::move(filter));
    std::weak_ptr<WsSession> weak = shared_from_this();
    sub_->set_notify([weak] {
      if (auto self = weak.lock()) {
        asio::post(self->ws_.get_executor(), [self] { self->drain(); });
      }
    });
    buffer_.consume(buffer_.size());
    read();
    drain();
  }

  void read() {
    ws_.async_read(buffer_, [self = shared_from_this()](beast::error_code ec, std::size_t) {
      if (ec) {
        self->shutdown();
        return;
      }
      self->buffer_.consume(self->buffer_.size());  // inbound text is ignored
      self->read();
    });
  }

  void drain() {
    if (!sub_ || done_) return;
    while (auto m = sub_->try_pop()) outbox_.push_back(feedback::message_to_json(**m).dump());
    if (!writing_) write_next();
  }

  void write_next() {
    if (outbox_.empty() || done_) {
      writing_ = false;
      return;
    }
    writing_ = true;
    ws_.text(true);
    ws_.async_write(asio::buffer(outbox_.front()),
                    [self = shared_from_this()](beast::error_code ec, std::size_t) {
                      if (ec) {
                        self->shutdown();
                        return;
                      }
                      self->outbox_.pop_front();
                      self->write_next();
                    });
  }

  void shutdown() {
    if (done_) return;
    done_ = true;
    if (sub_) service_.unsubscribe(sub_);
  }

  websocket::stream<beast::tcp_stream> ws_;
  feedback::FeedbackService& service_;
  beast::flat_buffer buffer_;
  beast::http::request<beast::http::string_body> request_;
  std::shared_ptr<feedback::Subscription> sub_;
  std::deque<std::string> outbox_;
  bool writing_ = false;
  bool done_ = false;
};

// ---------------------------------------------------------------------------

class IngestConnection : public std::enable_shared_from_this<IngestConnection> {
 public:
  IngestConnection(tcp::socket socket, feedback::FeedbackService& service)
      : socket_(std::move(socket)), service_(service) {}

  void run() {
    asio::async_read_until(socket_, header_, '\n',
                           [self = shared_from_this()](boost::system::error_code ec,
                                                       std::size_t n) { self->on_header(ec, n); });
  }

  // Called on the io thread.
  void close() {
    boost::system::error_code ec;
    socket_.close(ec);
  }

 private:
  void on_header(boost::system::error_code ec, std::size_t n) {
    if (ec) return;
    std::string line(asio::buffers_begin(header_.data()), asio::buffers_begin(header_.data()) + n);
    header_.consume(n);
    while (!line.empty() && (line.back() == '\n' || line.back() == '\r')) line.pop_back();
    const std::string prefix = "session ";
    if (line.rfind(prefix, 0) != 0) {
      fail(ErrorCode::ParseError, "expected 'session <id>'");
      return;
    }
    handle_ = line.substr(prefix.size());
    if (auto s = service_.session(handle_); !s || !s->open) {
      fail(ErrorCode::UnknownSession, "no open session '" + handle_ + "'");
      return;
    }
    // Frame bytes that arrived with the header line.
    std::vector<std::uint8_t> rest(asio::buffers_begin(header_.data()),
                                   asio::buffers_end(header_.data()));
    header_.consume(header_.size());
    if (!rest.empty() && !feed(rest)) return;
    auto reply = std::make_shared<std::string>("ok\n");
    asio::async_write(socket_, asio::buffer(*reply),
                      [self = shared_from_this(), reply](boost::system::error_code ec, std::size_t) {
                        if (!ec) self->read();
                      });
  }

  void read() {
    socket_.async_read_some(asio::buffer(chunk_),
                            [self = shared_from_this()](boost::system::error_code ec,
                                                        std::size_t n) {
                              if (ec) return;
                              if (self->feed({self->chunk_.data(), n})) self->read();
                            });
  }

  bool feed(std::span<const std::uint8_t> bytes) {
    try {
      service_.ingest(handle_, bytes);
      return true;
    } catch (const Error& e) {
      fail(e.code(), e.what());
      return false;
    }
  }

  void fail(ErrorCode code, const std::string& message) {
    auto text = std::make_shared<std::string>(
        "error " + std::string(to_string(code)) + " " + message + "\n");
    asio::async_write(socket_, asio::buffer(*text),
                      [self = shared_from_this(), text](boost::system::error_code, std::size_t) {
                        boost::system::error_code ignored;
                        self->socket_.shutdown(tcp::socket::shutdown_both, ignored);
                        self->socket_.close(ignored);
                      });
  }

  tcp::socket socket_;
  feedback::FeedbackService& service_;
  asio::streambuf header_{4096};
  std::array<std::uint8_t, 4096> chunk_{};
  std::string handle_;
};

tcp::endpoint resolve(const Endpoint& e) {
  boost::system::error_code ec;
  auto addr = asio::ip::make_address(e.host == "localhost" ? "127.0.0.1" : e.host, ec);
  if (ec) throw Error(ErrorCode::InvalidConfig, "bad listen host '" + e.host + "'");
  return {addr, e.port};
}

void open_acceptor(tcp::acceptor& acc, const Endpoint& e) {
  const auto ep = resolve(e);
  boost::system::error_code ec;
  acc.open(ep.protocol(), ec);
  if (!ec) acc.set_option(asio::socket_base::reuse_address(true), ec);
  if (!ec) acc.bind(ep, ec);
  if (!ec) acc.listen(asio::socket_base::max_listen_connections, ec);
  if (ec) throw Error(ErrorCode::Io, "cannot listen on " + e.to_string() + ": " + ec.message());
}

}  // namespace

// ---------------------------------------------------------------------------

struct Server::Impl {
  Impl(feedback::FeedbackService& s, ServerOptions o)
      : service(s), options(std::move(o)), ws_acceptor(ioc), ingest_acceptor(ioc),
        heartbeat(ioc) {}

  feedback::FeedbackService& service;
  ServerOptions options;

  httplib::Server http;
  std::thread http_thread;
  std::uint16_t http_port = 0;
  std::uint16_t ws_port = 0;
  std::uint16_t ingest_port = 0;

  asio::io_context ioc;
  tcp::acceptor ws_acceptor;
  tcp::acceptor ingest_acceptor;
  asio::steady_timer heartbeat;
  std::thread io_thread;
  std::vector<std::weak_ptr<WsSession>> ws_sessions;
  std::vector<std::weak_ptr<IngestConnection>> ingest_conns;
  bool running = false;

  void routes();
  void accept_ws();
  void accept_ingest();
  void schedule_heartbeat();
};

void Server::Impl::routes() {
  http.Get("/health", [](const httplib::Request&, httplib::Response& res) {
    reply(res, 200, {{"status", "ok"}, {"engine", kEngineVersion}});
  });

  http.Post("/sessions", [this](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      const json body = json::parse(req.body);
      SessionInfo info;
      try {
        info = body.get<SessionInfo>();
      } catch (const json::exception& e) {
        throw Error(ErrorCode::ParseError, std::string("session metadata: ") + e.what());
      }
      const auto handle = service.open_session(info);
      reply(res, 201, {{"session_id", handle}});
    });
  });

  http.Get("/sessions", [this](const httplib::Request&, httplib::Response& res) {
    json list = json::array();
    for (const auto& s : service.sessions()) list.push_back(summary_json(s));
    reply(res, 200, {{"sessions", list}});
  });

  http.Get(R"(/sessions/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
    const std::string id = req.matches[1];
    if (auto s = service.session(id)) {
      reply(res, 200, summary_json(*s));
    } else {
      reply(res, 404, error_json(ErrorCode::UnknownSession, "unknown session '" + id + "'"));
    }
  });

  http.Post(R"(/sessions/([^/]+)/frames)",
            [this](const httplib::Request& req, httplib::Response& res) {
              guarded(res, [&] {
                const std::string id = req.matches[1];
                const auto* p = reinterpret_cast<const std::uint8_t*>(req.body.data());
                const auto r = service.ingest(id, {p, req.body.size()});
                reply(res, 200, {{"frames", r.frames}, {"codec_errors", r.codec_errors}});
              });
            });

  http.Post(R"(/sessions/([^/]+)/finalize)",
            [this](const httplib::Request& req, httplib::Response& res) {
              guarded(res, [&] {
                const std::string id = req.matches[1];
                service.finalize_task(id);
                reply(res, 200, summary_json(*service.session(id)));
              });
            });

  http.Post(R"(/participants/([^/]+)/finalize)",
            [this](const httplib::Request& req, httplib::Response& res) {
              guarded(res, [&] {
                const std::string pid = req.matches[1];
                std::vector<std::string> handles;
                if (!req.body.empty()) {
                  const json body = json::parse(req.body);
                  if (body.contains("sessions")) {
                    handles = body["sessions"].get<std::vector<std::string>>();
                  }
                }
                if (handles.empty()) {
                  for (const auto& s : service.sessions()) {
                    if (s.info.participant_id == pid) handles.push_back(s.info.session_id);
                  }
                }
                const auto report = service.finalize_participant(handles);
                res.status = 200;
                res.set_content(report_to_json(report), "application/json");
              });
            });

  http.Get(R"(/reports/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
    const std::string pid = req.matches[1];
    if (auto r = service.report(pid)) {
      res.status = 200;
      res.set_content(report_to_json(*r), "application/json");
    } else {
      reply(res, 404, error_json(ErrorCode::MissingTask, "no report for '" + pid + "'"));
    }
  });

  http.Get("/reference-model", [this](const httplib::Request&, httplib::Response& res) {
    if (options.reference == nullptr) {
      reply(res, 404, error_json(ErrorCode::NoExpertData, "no reference model loaded"));
      return;
    }
    res.status = 200;
    res.set_content(reference_to_json(*options.reference), "application/json");
  });
}

void Server::Impl::accept_ws() {
  ws_acceptor.async_accept(asio::make_strand(ioc),
                           [this](boost::system::error_code ec, tcp::socket socket) {
                             if (ec) return;
                             auto s = std::make_shared<WsSession>(std::move(socket), service);
                             std::erase_if(ws_sessions, [](const auto& w) { return w.expired(); });
                             ws_sessions.push_back(s);
                             s->run();
                             accept_ws();
                           });
}

void Server::Impl::accept_ingest() {
  ingest_acceptor.async_accept(
      asio::make_strand(ioc), [this](boost::system::error_code ec, tcp::socket socket) {
        if (ec) return;
        socket.set_option(tcp::no_delay(true), ec);
        auto c = std::make_shared<IngestConnection>(std::move(socket), service);
        std::erase_if(ingest_conns, [](const auto& w) { return w.expired(); });
        ingest_conns.push_back(c);
        c->run();
        accept_ingest();
      });
}

void Server::Impl::schedule_heartbeat() {
  heartbeat.expires_after(options.heartbeat);
  heartbeat.async_wait([this](boost::system::error_code ec) {
    if (ec) return;
    service.publish_heartbeat();
    schedule_heartbeat();
  });
}

Server::Server(feedback::FeedbackService& service, ServerOptions options)
    : impl_(std::make_unique<Impl>(service, std::move(options))) {}

Server::~Server() { stop(); }

void Server::start() {
  Impl& m = *impl_;
  if (m.running) return;
  m.routes();
  const auto& http_ep = m.options.listen.http;
  if (http_ep.port == 0) {
    const int port = m.http.bind_to_any_port(http_ep.host);
    if (port <= 0) throw Error(ErrorCode::Io, "cannot listen on " + http_ep.to_string());
    m.http_port = static_cast<std::uint16_t>(port);
  } else {
    if (!m.http.bind_to_port(http_ep.host, http_ep.port)) {
      throw Error(ErrorCode::Io, "cannot listen on " + http_ep.to_string());
    }
    m.http_port = http_ep.port;
  }
  open_acceptor(m.ws_acceptor, m.options.listen.websocket);
  open_acceptor(m.ingest_acceptor, m.options.listen.ingest);
  m.ws_port = m.ws_acceptor.local_endpoint().port();
  m.ingest_port = m.ingest_acceptor.local_endpoint().port();

  m.http_thread = std::thread([&m] { m.http.listen_after_bind(); });
  m.accept_ws();
  m.accept_ingest();
  m.schedule_heartbeat();
  m.io_thread = std::thread([&m] { m.ioc.run(); });
  m.running = true;
}

void Server::stop() {
  Impl& m = *impl_;
  if (!m.running) return;
  m.running = false;
  m.http.stop();
  if (m.http_thread.joinable()) m.http_thread.join();
  std::promise<void> closed;
  asio::post(m.ioc, [&m, &closed] {
    boost::system::error_code ec;
    m.ws_acceptor.close(ec);
    m.ingest_acceptor.close(ec);
    m.heartbeat.cancel();
    for (auto& w : m.ws_sessions) {
      if (auto s = w.lock()) s->close();
    }
    for (auto& w : m.ingest_conns) {
      if (auto c = w.lock()) c->close();
    }
    closed.set_value();
  });
  closed.get_future().wait();
  m.ioc.stop();
  if (m.io_thread.joinable()) m.io_thread.join();
}

std::uint16_t Server::http_port() const { return impl_->http_port; }

std::uint16_t Server::websocket_port() const { return impl_->ws_port; }
std::uint16_t Server::ingest_port() const { return impl_->ingest_port; }

}  // namespace palp::server
