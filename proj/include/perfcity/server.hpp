#pragma once

#include <atomic>
#include <filesystem>
#include <fstream>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "perfcity/frame_stream.hpp"
#include "perfcity/net.hpp"
#include "perfcity/pipeline.hpp"

namespace perfcity {

struct ServerConfig {
  std::string host = "127.0.0.1";
  std::uint16_t ingest_port = 7071;
  std::uint16_t ui_port = 7072;
  std::uint16_t mirror_port = 7073;
  PipelineConfig pipeline;
  /// When set, every accepted ingest record is also appended here.
  std::optional<std::filesystem::path> record_path;
};

/// Live profiling server: one producer connection at a time on the ingest port,
/// WebSocket clients on the UI port (path /stream) and NDJSON clients on the
/// mirror port. A new producer connection starts a new session.
class Server {
 public:
  explicit Server(ServerConfig config);
  ~Server();
  Server(const Server&) = delete;
  Server& operator=(const Server&) = delete;

  /// Binds all listeners and starts the worker threads. Throws net::IoError.
  void start();
  void stop();
  bool running() const { return running_; }

  std::uint16_t ingest_port() const { return ingest_port_; }
  std::uint16_t ui_port() const { return ui_port_; }
  std::uint16_t mirror_port() const { return mirror_port_; }

  /// Stats of the current session.
  IngestStats ingest_stats() const;
  std::uint64_t sessions_started() const { return sessions_; }
  std::size_t client_count() const { return broadcaster_.subscriber_count(); }
  std::uint64_t rev() const { return broadcaster_.latest_rev(); }

 private:
  void ingest_loop();
  void tick_loop();
  void accept_clients(net::Listener& listener, bool websocket);
  void serve_client(net::Socket sock, bool websocket);
  void record_line(const std::string& line, bool first_in_session);

  ServerConfig config_;
  Broadcaster broadcaster_;
  CityPipeline pipeline_;

  std::optional<net::Listener> ingest_listener_;
  std::optional<net::Listener> ui_listener_;
  std::optional<net::Listener> mirror_listener_;
  std::uint16_t ingest_port_ = 0;
  std::uint16_t ui_port_ = 0;
  std::uint16_t mirror_port_ = 0;

  std::atomic<bool> running_{false};
  std::atomic<std::uint64_t> sessions_{0};
  std::vector<std::thread> workers_;
  std::mutex clients_mu_;
  std::vector<std::thread> client_threads_;
  std::ofstream record_;
};

}  // namespace perfcity
