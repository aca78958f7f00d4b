#pragma once

#include <chrono>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

#include "perfcity/trace_model.hpp"

namespace perfcity::net {

class IoError : public Error {
 public:
  using Error::Error;
};

class ConnectionRefused : public IoError {
 public:
  using IoError::IoError;
};

/// Owning wrapper around a connected TCP socket with a line-oriented reader.
class Socket {
 public:
  Socket() = default;
  explicit Socket(int fd) : fd_(fd) {}
  Socket(Socket&& other) noexcept;
  Socket& operator=(Socket&& other) noexcept;
  Socket(const Socket&) = delete;
  Socket& operator=(const Socket&) = delete;
  ~Socket();

  bool valid() const { return fd_ >= 0; }
  int fd() const { return fd_; }
  void close();
  /// Shuts down both directions without releasing the descriptor.
  void shutdown();

  /// Throws IoError when the peer is gone.
  void write_all(std::string_view data);

  enum class ReadStatus { Data, Timeout, Closed };
  /// Reads one LF-terminated line (terminator stripped). Lines longer than
  /// `max_length` are consumed and reported as Data with `overflow` set.
  ReadStatus read_line(std::string& line, std::chrono::milliseconds timeout, bool* overflow = nullptr,
                       std::size_t max_length = 16u << 20);
  /// Reads exactly `n` bytes.
  ReadStatus read_exact(std::string& out, std::size_t n, std::chrono::milliseconds timeout);

  /// True once bytes are buffered or readable within `timeout`.
  bool wait_readable(std::chrono::milliseconds timeout);

 private:
  ReadStatus fill(std::chrono::milliseconds timeout);

  int fd_ = -1;
  std::string buffer_;
  std::size_t offset_ = 0;
};

class Listener {
 public:
  /// Port 0 picks an ephemeral port.
  Listener(const std::string& host, std::uint16_t port);
  Listener(Listener&&) noexcept;
  Listener& operator=(Listener&&) noexcept;
  ~Listener();

  std::uint16_t port() const { return port_; }
  std::optional<Socket> accept(std::chrono::milliseconds timeout);
  void close();

 private:
  int fd_ = -1;
  std::uint16_t port_ = 0;
};

/// Throws ConnectionRefused when nothing listens on the endpoint.
Socket connect_tcp(const std::string& host, std::uint16_t port);

namespace ws {

/// Sec-WebSocket-Accept value for a client key.
std::string accept_key(std::string_view client_key);

/// Reads the HTTP upgrade request and answers 101 on success, 404 for a wrong
/// path and 400 for anything that is not a WebSocket upgrade. Returns false when
/// the handshake did not complete.
bool server_handshake(Socket& sock, std::string_view expected_path, std::chrono::milliseconds timeout);

/// Client side; used by tests and tools.
void client_handshake(Socket& sock, const std::string& host, std::string_view path,
                      std::chrono::milliseconds timeout);

enum class Opcode : std::uint8_t { Continuation = 0, Text = 1, Binary = 2, Close = 8, Ping = 9, Pong = 10 };

std::string encode_frame(Opcode op, std::string_view payload, bool mask = false);

struct Message {
  Opcode opcode = Opcode::Text;
  std::string payload;
};

/// Reads one complete (defragmented) message, unmasking if needed.
std::optional<Message> read_message(Socket& sock, std::chrono::milliseconds timeout);

}  // namespace ws

}  // namespace perfcity::net
