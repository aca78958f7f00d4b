#include "perfcity/net.hpp"

#include <arpa/inet.h>
#include <fcntl.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <openssl/evp.h>
#include <openssl/sha.h>

#include <algorithm>
#include <cctype>
#include <cerrno>
#include <cstring>
#include <map>

namespace perfcity::net {

namespace {

std::string errno_text(const char* what) { return std::string(what) + ": " + std::strerror(errno); }

int poll_timeout(std::chrono::milliseconds timeout) {
  return static_cast<int>(std::clamp<std::int64_t>(timeout.count(), -1, 1 << 30));
}

}  // namespace

// Socket

Socket::Socket(Socket&& other) noexcept
    : fd_(std::exchange(other.fd_, -1)), buffer_(std::move(other.buffer_)), offset_(other.offset_) {}

Socket& Socket::operator=(Socket&& other) noexcept {
  if (this != &other) {
    close();
    fd_ = std::exchange(other.fd_, -1);
    buffer_ = std::move(other.buffer_);
    offset_ = other.offset_;
  }
  return *this;
}

Socket::~Socket() { close(); }

void Socket::close() {
  if (fd_ >= 0) ::close(fd_);
  fd_ = -1;
}

void Socket::shutdown() {
  if (fd_ >= 0) ::shutdown(fd_, SHUT_RDWR);
}

void Socket::write_all(std::string_view data) {
  while (!data.empty()) {
    const auto n = ::send(fd_, data.data(), data.size(), MSG_NOSIGNAL);
    if (n < 0) {
      if (errno == EINTR) continue;
      throw IoError(errno_text("send"));
    }
    data.remove_prefix(static_cast<std::size_t>(n));
  }
}

bool Socket::wait_readable(std::chrono::milliseconds timeout) {
  if (offset_ < buffer_.size()) return true;
  pollfd pfd{fd_, POLLIN, 0};
  return ::poll(&pfd, 1, poll_timeout(timeout)) > 0;
}

Socket::ReadStatus Socket::fill(std::chrono::milliseconds timeout) {
  pollfd pfd{fd_, POLLIN, 0};
  const int ready = ::poll(&pfd, 1, poll_timeout(timeout));
  if (ready == 0) return ReadStatus::Timeout;
  if (ready < 0) return errno == EINTR ? ReadStatus::Timeout : ReadStatus::Closed;
  if (offset_ > 0 && offset_ == buffer_.size()) {
    buffer_.clear();
    offset_ = 0;
  } else if (offset_ > (1u << 20)) {
    buffer_.erase(0, offset_);
    offset_ = 0;
  }
  char chunk[64 * 1024];
  const auto n = ::recv(fd_, chunk, sizeof(chunk), 0);
  if (n < 0 && (errno == EINTR || errno == EAGAIN)) return ReadStatus::Timeout;
  if (n <= 0) return ReadStatus::Closed;
  buffer_.append(chunk, static_cast<std::size_t>(n));
  return ReadStatus::Data;
}

Socket::ReadStatus Socket::read_line(std::string& line, std::chrono::milliseconds timeout, bool* overflow,
                                     std::size_t max_length) {
  if (overflow) *overflow = false;
  std::size_t scanned = offset_;
  bool skipping = false;
  while (true) {
    const auto nl = buffer_.find('\n', scanned);
    if (nl != std::string::npos) {
      if (skipping || nl - offset_ > max_length) {
        line.clear();
        if (overflow) *overflow = true;
      } else {
        line.assign(buffer_, offset_, nl - offset_);
        if (!line.empty() && line.back() == '\r') line.pop_back();
      }
      offset_ = nl + 1;
      return ReadStatus::Data;
    }
    if (buffer_.size() - offset_ > max_length) {
      skipping = true;
      buffer_.clear();
      offset_ = 0;
    }
    scanned = buffer_.size();
    const auto rel = scanned - offset_;
    const auto status = fill(timeout);
    if (status != ReadStatus::Data) return status;
    scanned = offset_ + rel;
  }
}

Socket::ReadStatus Socket::read_exact(std::string& out, std::size_t n, std::chrono::milliseconds timeout) {
  while (buffer_.size() - offset_ < n) {
    const auto status = fill(timeout);
    if (status != ReadStatus::Data) return status;
  }
  out.assign(buffer_, offset_, n);
  offset_ += n;
  return ReadStatus::Data;
}

// Listener

Listener::Listener(const std::string& host, std::uint16_t port) {
  fd_ = ::socket(AF_INET, SOCK_STREAM | SOCK_CLOEXEC, 0);
  if (fd_ < 0) throw IoError(errno_text("socket"));
  int one = 1;
  ::setsockopt(fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(port);
  if (::inet_pton(AF_INET, host.c_str(), &addr.sin_addr) != 1) {
    close();
    throw IoError("invalid listen address " + host);
  }
  if (::bind(fd_, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) < 0 || ::listen(fd_, 16) < 0) {
    const auto msg = errno_text(("bind " + host + ":" + std::to_string(port)).c_str());
    close();
    throw IoError(msg);
  }
  socklen_t len = sizeof(addr);
  ::getsockname(fd_, reinterpret_cast<sockaddr*>(&addr), &len);
  port_ = ntohs(addr.sin_port);
}

Listener::Listener(Listener&& other) noexcept : fd_(std::exchange(other.fd_, -1)), port_(other.port_) {}

Listener& Listener::operator=(Listener&& other) noexcept {
  if (this != &other) {
    close();
    fd_ = std::exchange(other.fd_, -1);
    port_ = other.port_;
  }
  return *this;
}

Listener::~Listener() { close(); }

void Listener::close() {
  if (fd_ >= 0) ::close(fd_);
  fd_ = -1;
}

std::optional<Socket> Listener::accept(std::chrono::milliseconds timeout) {
  pollfd pfd{fd_, POLLIN, 0};
  if (::poll(&pfd, 1, poll_timeout(timeout)) <= 0) return std::nullopt;
  const int fd = ::accept4(fd_, nullptr, nullptr, SOCK_CLOEXEC);
  if (fd < 0) return std::nullopt;
  int one = 1;
  ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
  return Socket(fd);
}

Socket connect_tcp(const std::string& host, std::uint16_t port) {
  addrinfo hints{};
  hints.ai_family = AF_INET;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo* res = nullptr;
  if (::getaddrinfo(host.c_str(), std::to_string(port).c_str(), &hints, &res) != 0 || !res)
    throw IoError("cannot resolve " + host);
  const int fd = ::socket(res->ai_family, res->ai_socktype | SOCK_CLOEXEC, res->ai_protocol);
  if (fd < 0) {
    ::freeaddrinfo(res);
    throw IoError(errno_text("socket"));
  }
  Socket sock(fd);
  const int rc = ::connect(fd, res->ai_addr, res->ai_addrlen);
  const int err = errno;
  ::freeaddrinfo(res);
  if (rc < 0) {
    const auto where = host + ":" + std::to_string(port);
    if (err == ECONNREFUSED) throw ConnectionRefused("connection refused by " + where);
    errno = err;
    throw IoError(errno_text(("connect " + where).c_str()));
  }
  int one = 1;
  ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
  return sock;
}

// WebSocket

namespace ws {

namespace {

constexpr const char* kGuid = "258EAFA5-E914-47DA-95CA-C5AB0DC85B11";

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  return s;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t");
  return s.substr(b, e - b + 1);
}

struct HttpHead {
  std::string start_line;
  std::map<std::string, std::string> headers;  // lower-cased names
};

std::optional<HttpHead> read_head(Socket& sock, std::chrono::milliseconds timeout) {
  HttpHead head;
  std::string line;
  if (sock.read_line(line, timeout) != Socket::ReadStatus::Data) return std::nullopt;
  head.start_line = line;
  for (int i = 0; i < 100; ++i) {
    if (sock.read_line(line, timeout) != Socket::ReadStatus::Data) return std::nullopt;
    if (line.empty()) return head;
    const auto colon = line.find(':');
    if (colon == std::string::npos) continue;
    head.headers[lower(trim(line.substr(0, colon)))] = trim(line.substr(colon + 1));
  }
  return std::nullopt;
}

bool header_has_token(const HttpHead& head, const std::string& name, const std::string& token) {
  auto it = head.headers.find(name);
  return it != head.headers.end() && lower(it->second).find(token) != std::string::npos;
}

void send_status(Socket& sock, const char* status) {
  try {
    sock.write_all(std::string("HTTP/1.1 ") + status + "\r\nContent-Length: 0\r\nConnection: close\r\n\r\n");
  } catch (const IoError&) {
  }
}

}  // namespace

std::string accept_key(std::string_view client_key) {
  const std::string material = std::string(client_key) + kGuid;
  unsigned char digest[SHA_DIGEST_LENGTH];
  SHA1(reinterpret_cast<const unsigned char*>(material.data()), material.size(), digest);
  unsigned char encoded[4 * ((SHA_DIGEST_LENGTH + 2) / 3) + 1];
  const int n = EVP_EncodeBlock(encoded, digest, SHA_DIGEST_LENGTH);
  return std::string(reinterpret_cast<char*>(encoded), static_cast<std::size_t>(n));
}

bool server_handshake(Socket& sock, std::string_view expected_path, std::chrono::milliseconds timeout) {
  auto head = read_head(sock, timeout);
  if (!head) return false;
  // "GET /stream?host=... HTTP/1.1"
  const auto sp1 = head->start_line.find(' ');
  const auto sp2 = head->start_line.find(' ', sp1 + 1);
  if (sp1 == std::string::npos || sp2 == std::string::npos || head->start_line.substr(0, sp1) != "GET") {
    send_status(sock, "400 Bad Request");
    return false;
  }
  auto target = head->start_line.substr(sp1 + 1, sp2 - sp1 - 1);
  target = target.substr(0, target.find('?'));
  if (target != expected_path) {
    send_status(sock, "404 Not Found");
    return false;
  }
  auto key = head->headers.find("sec-websocket-key");
  if (!header_has_token(*head, "upgrade", "websocket") || key == head->headers.end()) {
    send_status(sock, "400 Bad Request");
    return false;
  }
  sock.write_all(
      "HTTP/1.1 101 Switching Protocols\r\n"
      "Upgrade: websocket\r\n"
      "Connection: Upgrade\r\n"
      "Sec-WebSocket-Accept: " +
      accept_key(key->second) + "\r\n\r\n");
  return true;
}

void client_handshake(Socket& sock, const std::string& host, std::string_view path,
                      std::chrono::milliseconds timeout) {
  const std::string key = "cGVyZmNpdHktdGVzdC1rZXk=";
  sock.write_all("GET " + std::string(path) + " HTTP/1.1\r\nHost: " + host +
                 "\r\nUpgrade: websocket\r\nConnection: Upgrade\r\nSec-WebSocket-Key: " + key +
                 "\r\nSec-WebSocket-Version: 13\r\n\r\n");
  auto head = read_head(sock, timeout);
  if (!head) throw IoError("no handshake response");
  if (head->start_line.find(" 101 ") == std::string::npos) throw IoError("handshake rejected: " + head->start_line);
  auto accept = head->headers.find("sec-websocket-accept");
  if (accept == head->headers.end() || accept->second != accept_key(key))
    throw IoError("bad Sec-WebSocket-Accept");
}

std::string encode_frame(Opcode op, std::string_view payload, bool mask) {
  std::string out;
  out.reserve(payload.size() + 14);
  out.push_back(static_cast<char>(0x80 | static_cast<std::uint8_t>(op)));
  const std::uint8_t mask_bit = mask ? 0x80 : 0;
  const auto n = payload.size();
  if (n < 126) {
    out.push_back(static_cast<char>(mask_bit | n));
  } else if (n <= 0xFFFF) {
    out.push_back(static_cast<char>(mask_bit | 126));
    out.push_back(static_cast<char>((n >> 8) & 0xFF));
    out.push_back(static_cast<char>(n & 0xFF));
  } else {
    out.push_back(static_cast<char>(mask_bit | 127));
    for (int shift = 56; shift >= 0; shift -= 8) out.push_back(static_cast<char>((n >> shift) & 0xFF));
  }
  if (!mask) {
    out.append(payload);
    return out;
  }
  const unsigned char key[4] = {0x5A, 0x17, 0xC3, 0x8E};
  out.append(reinterpret_cast<const char*>(key), 4);
  for (std::size_t i = 0; i < n; ++i) out.push_back(static_cast<char>(payload[i] ^ key[i % 4]));
  return out;
}

std::optional<Message> read_message(Socket& sock, std::chrono::milliseconds timeout) {
  Message msg;
  bool first = true;
  while (true) {
    std::string head;
    if (sock.read_exact(head, 2, timeout) != Socket::ReadStatus::Data) return std::nullopt;
    const auto b0 = static_cast<std::uint8_t>(head[0]);
    const auto b1 = static_cast<std::uint8_t>(head[1]);
    const bool fin = b0 & 0x80;
    const auto op = static_cast<Opcode>(b0 & 0x0F);
    std::uint64_t len = b1 & 0x7F;
    if (len >= 126) {
      std::string ext;
      const std::size_t bytes = len == 126 ? 2 : 8;
      if (sock.read_exact(ext, bytes, timeout) != Socket::ReadStatus::Data) return std::nullopt;
      len = 0;
      for (unsigned char c : ext) len = (len << 8) | c;
    }
    std::string key;
    if ((b1 & 0x80) && sock.read_exact(key, 4, timeout) != Socket::ReadStatus::Data) return std::nullopt;
    if (len > (64u << 20)) return std::nullopt;
    std::string payload;
    if (sock.read_exact(payload, static_cast<std::size_t>(len), timeout) != Socket::ReadStatus::Data)
      return std::nullopt;
    if (!key.empty())
      for (std::size_t i = 0; i < payload.size(); ++i) payload[i] = static_cast<char>(payload[i] ^ key[i % 4]);

    const bool control = static_cast<std::uint8_t>(op) >= 8;
    if (control) return Message{op, std::move(payload)};
    if (first) msg.opcode = op;
    first = false;
    msg.payload += payload;
    if (fin) return msg;
  }
}

}  // namespace ws

}  // namespace perfcity::net
