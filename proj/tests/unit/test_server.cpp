#include <filesystem>
#include <fstream>
#include <thread>

#include "doctest.h"
#include "json.hpp"
#include "perfcity/ingest.hpp"
#include "perfcity/server.hpp"

using namespace perfcity;
using namespace std::chrono_literals;
using json = nlohmann::json;

namespace {

ServerConfig test_config() {
  ServerConfig cfg;
  cfg.ingest_port = 0;
  cfg.ui_port = 0;
  cfg.mirror_port = 0;
  cfg.pipeline.tick_micros = 20'000;
  return cfg;
}

/// Reads NDJSON messages until `done` returns true or the deadline passes.
template <typename Pred>
std::vector<json> read_until(net::Socket& sock, Pred done, std::chrono::milliseconds budget = 5000ms) {
  std::vector<json> out;
  const auto deadline = std::chrono::steady_clock::now() + budget;
  std::string line;
  while (std::chrono::steady_clock::now() < deadline) {
    if (sock.read_line(line, 50ms) != net::Socket::ReadStatus::Data) continue;
    out.push_back(json::parse(line));
    if (done(out.back())) break;
  }
  return out;
}

template <typename Pred>
bool wait_for(Pred pred, std::chrono::milliseconds budget = 5000ms) {
  const auto deadline = std::chrono::steady_clock::now() + budget;
  while (std::chrono::steady_clock::now() < deadline) {
    if (pred()) return true;
    std::this_thread::sleep_for(10ms);
  }
  return pred();
}

std::string producer_lines() {
  std::string out;
  out += encode_line(SessionMetaMsg{"test", 0}) + "\n";
  out += encode_line(RegisterMsg{{MethodId{1}, "run()", "Worker", {"app"}}}) + "\n";
  out += encode_line(EventsMsg{ThreadId{1}, {{0, MethodId{1}, Action::Enter}}}) + "\n";
  out += encode_line(EventsMsg{ThreadId{1}, {{500'000, MethodId{1}, Action::Exit}}}) + "\n";
  return out;
}

}  // namespace

TEST_CASE("a client that connects before any producer gets hello and an empty structure") {
  Server server(test_config());
  server.start();
  auto mirror = net::connect_tcp("127.0.0.1", server.mirror_port());
  auto msgs = read_until(mirror, [](const json& j) { return j["type"] == "structure"; });
  REQUIRE(msgs.size() == 2);
  CHECK(msgs[0]["type"] == "hello");
  CHECK(msgs[0]["window_ms"] == 3000);
  CHECK(msgs[0]["tick_ms"] == 20);
  CHECK(msgs[1]["rev"] == 0);
  CHECK(msgs[1]["methods"].empty());
  server.stop();
}

TEST_CASE("mirror and websocket clients receive structure then frames") {
  Server server(test_config());
  server.start();
  auto mirror = net::connect_tcp("127.0.0.1", server.mirror_port());
  auto ws = net::connect_tcp("127.0.0.1", server.ui_port());
  net::ws::client_handshake(ws, "127.0.0.1", "/stream", 2000ms);
  REQUIRE(wait_for([&] { return server.client_count() == 2; }));

  auto producer = net::connect_tcp("127.0.0.1", server.ingest_port());
  producer.write_all(producer_lines());

  auto msgs = read_until(mirror, [](const json& j) { return j["type"] == "frame"; });
  REQUIRE(!msgs.empty());
  CHECK(msgs.back()["type"] == "frame");
  std::uint64_t structure_rev = 0;
  for (const auto& m : msgs)
    if (m["type"] == "structure") structure_rev = m["rev"];
  CHECK(structure_rev >= 1);
  CHECK(msgs.back()["rev"] == structure_rev);
  CHECK(msgs.back()["rows"][0][0] == 1);

  bool ws_frame = false;
  for (int i = 0; i < 50 && !ws_frame; ++i) {
    auto m = net::ws::read_message(ws, 2000ms);
    REQUIRE(m);
    ws_frame = json::parse(m->payload)["type"] == "frame";
  }
  CHECK(ws_frame);
  ws.write_all(net::ws::encode_frame(net::ws::Opcode::Close, {}, true));
  server.stop();
}

TEST_CASE("malformed lines are counted and the session survives") {
  Server server(test_config());
  server.start();
  auto producer = net::connect_tcp("127.0.0.1", server.ingest_port());
  producer.write_all("garbage\n{\"type\":\"events\"}\n" + std::string(1000, '{') + "\n");
  producer.write_all(producer_lines());
  REQUIRE(wait_for([&] { return server.ingest_stats().events == 2; }));
  CHECK(server.ingest_stats().malformed == 3);
  CHECK(server.running());
  server.stop();
}

TEST_CASE("a reconnecting producer starts a new session") {
  Server server(test_config());
  server.start();
  {
    auto producer = net::connect_tcp("127.0.0.1", server.ingest_port());
    producer.write_all(producer_lines());
    REQUIRE(wait_for([&] { return server.ingest_stats().events == 2; }));
  }
  auto again = net::connect_tcp("127.0.0.1", server.ingest_port());
  REQUIRE(wait_for([&] { return server.sessions_started() == 2; }));
  CHECK(server.ingest_stats().events == 0);
  again.write_all(producer_lines());
  REQUIRE(wait_for([&] { return server.ingest_stats().events == 2; }));
  server.stop();
}

TEST_CASE("recording writes accepted records") {
  const auto path = std::filesystem::temp_directory_path() / "perfcity_test_record.trace.ndjson";
  std::filesystem::remove(path);
  auto cfg = test_config();
  cfg.record_path = path;
  Server server(cfg);
  server.start();
  {
    auto producer = net::connect_tcp("127.0.0.1", server.ingest_port());
    producer.write_all("bad line\n");
    producer.write_all(producer_lines());
    REQUIRE(wait_for([&] { return server.ingest_stats().events == 2; }));
  }
  server.stop();
  const auto trace = read_trace_file(path);
  CHECK(trace.errors.empty());
  REQUIRE(trace.messages.size() == 4);
  CHECK(std::holds_alternative<SessionMetaMsg>(trace.messages[0]));
  std::filesystem::remove(path);
}

TEST_CASE("recording without a session record gets one prepended") {
  const auto path = std::filesystem::temp_directory_path() / "perfcity_test_record2.trace.ndjson";
  auto cfg = test_config();
  cfg.record_path = path;
  Server server(cfg);
  server.start();
  {
    auto producer = net::connect_tcp("127.0.0.1", server.ingest_port());
    producer.write_all(encode_line(EventsMsg{ThreadId{1}, {{0, MethodId{1}, Action::Enter}}}) + "\n");
    REQUIRE(wait_for([&] { return server.ingest_stats().events == 1; }));
  }
  server.stop();
  const auto trace = read_trace_file(path);
  CHECK(trace.errors.empty());
  REQUIRE(trace.messages.size() == 2);
  CHECK(std::holds_alternative<SessionMetaMsg>(trace.messages[0]));
  std::filesystem::remove(path);
}

TEST_CASE("binding a busy port fails with an I/O error") {
  net::Listener busy("127.0.0.1", 0);
  auto cfg = test_config();
  cfg.ingest_port = busy.port();
  Server server(cfg);
  CHECK_THROWS_AS(server.start(), net::IoError);
}
