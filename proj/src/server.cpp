#include "perfcity/server.hpp"

#include <chrono>
#include <cstdio>

namespace perfcity {

using namespace std::chrono_literals;

namespace {
constexpr auto kPollInterval = 100ms;
constexpr auto kHandshakeTimeout = 2000ms;
constexpr const char* kStreamPath = "/stream";
}  // namespace

Server::Server(ServerConfig config)
    : config_(std::move(config)),
      broadcaster_(StreamSettings{config_.pipeline.window_micros, config_.pipeline.tick_micros}),
      pipeline_(config_.pipeline, &broadcaster_) {}

Server::~Server() { stop(); }

void Server::start() {
  if (running_) return;
  ingest_listener_.emplace(config_.host, config_.ingest_port);
  ui_listener_.emplace(config_.host, config_.ui_port);
  mirror_listener_.emplace(config_.host, config_.mirror_port);
  ingest_port_ = ingest_listener_->port();
  ui_port_ = ui_listener_->port();
  mirror_port_ = mirror_listener_->port();

  running_ = true;
  workers_.emplace_back([this] { ingest_loop(); });
  workers_.emplace_back([this] { tick_loop(); });
  workers_.emplace_back([this] { accept_clients(*ui_listener_, true); });
  workers_.emplace_back([this] { accept_clients(*mirror_listener_, false); });
}

void Server::stop() {
  if (!running_.exchange(false)) return;
  for (auto& t : workers_) t.join();
  workers_.clear();
  std::vector<std::thread> clients;
  {
    std::lock_guard lock(clients_mu_);
    clients.swap(client_threads_);
  }
  for (auto& t : clients) t.join();
  ingest_listener_.reset();
  ui_listener_.reset();
  mirror_listener_.reset();
  if (record_.is_open()) record_.close();
}

IngestStats Server::ingest_stats() const { return pipeline_.session()->stats(); }

void Server::record_line(const std::string& line, bool first_in_session) {
  if (!config_.record_path) return;
  if (first_in_session) {
    if (record_.is_open()) record_.close();
    record_.open(*config_.record_path, std::ios::binary | std::ios::trunc);
    if (!record_) {
      std::fprintf(stderr, "perfcity: cannot write %s\n", config_.record_path->c_str());
      return;
    }
  }
  if (record_.is_open()) {
    record_ << line << '\n';
    record_.flush();
  }
}

void Server::ingest_loop() {
  while (running_) {
    auto conn = ingest_listener_->accept(kPollInterval);
    if (!conn) continue;
    auto session = pipeline_.start_session();
    ++sessions_;
    bool first = true;
    std::string line;
    while (running_) {
      bool overflow = false;
      const auto status = conn->read_line(line, kPollInterval, &overflow);
      if (status == net::Socket::ReadStatus::Closed) break;
      if (status == net::Socket::ReadStatus::Timeout) continue;
      if (overflow) line = "<oversized record>";
      if (line.empty()) continue;
      auto msg = session->handle_line(line);
      if (!msg) continue;
      if (first && !std::holds_alternative<SessionMetaMsg>(*msg)) {
        record_line(encode_line(SessionMetaMsg{"unknown", 0}), true);
        first = false;
      }
      record_line(line, first);
      first = false;
    }
  }
}

void Server::tick_loop() {
  const auto period = std::chrono::microseconds(config_.pipeline.tick_micros);
  auto next = std::chrono::steady_clock::now();
  while (running_) {
    next += period;
    std::this_thread::sleep_until(next);
    try {
      pipeline_.tick();
    } catch (const std::exception& e) {
      std::fprintf(stderr, "perfcity: tick failed: %s\n", e.what());
    }
  }
}

void Server::accept_clients(net::Listener& listener, bool websocket) {
  while (running_) {
    auto conn = listener.accept(kPollInterval);
    if (!conn) continue;
    std::lock_guard lock(clients_mu_);
    client_threads_.emplace_back([this, websocket, sock = std::move(*conn)]() mutable {
      serve_client(std::move(sock), websocket);
    });
  }
}

void Server::serve_client(net::Socket sock, bool websocket) {
  try {
    if (websocket && !net::ws::server_handshake(sock, kStreamPath, kHandshakeTimeout)) return;
  } catch (const net::IoError&) {
    return;
  }
  auto sub = broadcaster_.subscribe();
  try {
    while (running_) {
      if (auto msg = sub->pop(kPollInterval)) {
        if (websocket)
          sock.write_all(net::ws::encode_frame(net::ws::Opcode::Text, *msg->body));
        else
          sock.write_all(*msg->body + "\n");
      }
      if (!sock.wait_readable(0ms)) continue;
      if (websocket) {
        auto in = net::ws::read_message(sock, kPollInterval);
        if (!in || in->opcode == net::ws::Opcode::Close) {
          if (in) sock.write_all(net::ws::encode_frame(net::ws::Opcode::Close, {}));
          break;
        }
        if (in->opcode == net::ws::Opcode::Ping)
          sock.write_all(net::ws::encode_frame(net::ws::Opcode::Pong, in->payload));
      } else {
        std::string ignored;
        if (sock.read_line(ignored, 0ms) == net::Socket::ReadStatus::Closed) break;
      }
    }
  } catch (const net::IoError&) {
    // Client went away; the session carries on.
  }
  broadcaster_.unsubscribe(sub);
}

}  // namespace perfcity
