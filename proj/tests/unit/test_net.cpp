#include <thread>

#include "doctest.h"
#include "perfcity/net.hpp"

using namespace perfcity;
using namespace std::chrono_literals;

TEST_CASE("websocket accept key from the RFC example") {
  CHECK(net::ws::accept_key("dGhlIHNhbXBsZSBub25jZQ==") == "s3pPLMBiTxaQ9kYGzzhZRbK+xOo=");
}

TEST_CASE("frame header sizes") {
  CHECK(net::ws::encode_frame(net::ws::Opcode::Text, "hi").size() == 4);
  CHECK(net::ws::encode_frame(net::ws::Opcode::Text, std::string(200, 'x')).size() == 204);
  CHECK(net::ws::encode_frame(net::ws::Opcode::Text, std::string(70000, 'x')).size() == 70010);
  CHECK(net::ws::encode_frame(net::ws::Opcode::Text, "hi", true).size() == 8);
}

TEST_CASE("connecting to a closed port is refused") {
  std::uint16_t port;
  {
    net::Listener l("127.0.0.1", 0);
    port = l.port();
  }
  CHECK_THROWS_AS(net::connect_tcp("127.0.0.1", port), net::ConnectionRefused);
}

TEST_CASE("lines over tcp") {
  net::Listener l("127.0.0.1", 0);
  auto client = net::connect_tcp("127.0.0.1", l.port());
  auto server = l.accept(2000ms);
  REQUIRE(server);
  client.write_all("one\ntwo\nthree");
  std::string line;
  REQUIRE(server->read_line(line, 2000ms) == net::Socket::ReadStatus::Data);
  CHECK(line == "one");
  REQUIRE(server->read_line(line, 2000ms) == net::Socket::ReadStatus::Data);
  CHECK(line == "two");
  CHECK(server->read_line(line, 50ms) == net::Socket::ReadStatus::Timeout);
  client.write_all("\n");
  REQUIRE(server->read_line(line, 2000ms) == net::Socket::ReadStatus::Data);
  CHECK(line == "three");

  bool overflow = false;
  client.write_all(std::string(100, 'z') + "\nok\n");
  REQUIRE(server->read_line(line, 2000ms, &overflow, 10) == net::Socket::ReadStatus::Data);
  CHECK(overflow);
  REQUIRE(server->read_line(line, 2000ms, &overflow, 10) == net::Socket::ReadStatus::Data);
  CHECK_FALSE(overflow);
  CHECK(line == "ok");

  client.close();
  CHECK(server->read_line(line, 2000ms) == net::Socket::ReadStatus::Closed);
}

TEST_CASE("websocket handshake and masked round trip") {
  net::Listener l("127.0.0.1", 0);
  std::thread client_thread;
  std::string got_by_client;
  client_thread = std::thread([&] {
    auto c = net::connect_tcp("127.0.0.1", l.port());
    net::ws::client_handshake(c, "127.0.0.1", "/stream", 2000ms);
    c.write_all(net::ws::encode_frame(net::ws::Opcode::Text, std::string(300, 'q'), true));
    auto msg = net::ws::read_message(c, 2000ms);
    if (msg) got_by_client = msg->payload;
  });
  auto s = l.accept(2000ms);
  REQUIRE(s);
  REQUIRE(net::ws::server_handshake(*s, "/stream", 2000ms));
  auto msg = net::ws::read_message(*s, 2000ms);
  REQUIRE(msg);
  CHECK(msg->opcode == net::ws::Opcode::Text);
  CHECK(msg->payload == std::string(300, 'q'));
  s->write_all(net::ws::encode_frame(net::ws::Opcode::Text, "{\"type\":\"hello\"}"));
  client_thread.join();
  CHECK(got_by_client == "{\"type\":\"hello\"}");
}

TEST_CASE("fragmented messages are joined") {
  net::Listener l("127.0.0.1", 0);
  auto c = net::connect_tcp("127.0.0.1", l.port());
  auto s = l.accept(2000ms);
  REQUIRE(s);
  // FIN clear on the first fragment
  std::string first = net::ws::encode_frame(net::ws::Opcode::Text, "ab");
  first[0] = static_cast<char>(first[0] & 0x7f);
  c.write_all(first + net::ws::encode_frame(net::ws::Opcode::Continuation, "cd"));
  auto msg = net::ws::read_message(*s, 2000ms);
  REQUIRE(msg);
  CHECK(msg->payload == "abcd");
}

TEST_CASE("wrong path is refused") {
  net::Listener l("127.0.0.1", 0);
  auto c = net::connect_tcp("127.0.0.1", l.port());
  c.write_all(
      "GET /other HTTP/1.1\r\nHost: x\r\nUpgrade: websocket\r\nConnection: Upgrade\r\n"
      "Sec-WebSocket-Key: dGhlIHNhbXBsZSBub25jZQ==\r\nSec-WebSocket-Version: 13\r\n\r\n");
  auto s = l.accept(2000ms);
  REQUIRE(s);
  CHECK_FALSE(net::ws::server_handshake(*s, "/stream", 2000ms));
  std::string line;
  REQUIRE(c.read_line(line, 2000ms) == net::Socket::ReadStatus::Data);
  CHECK(line.find("404") != std::string::npos);
}
