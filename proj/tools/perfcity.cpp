// perfcity: live software-city profiler server and workload tools.
//
// Exit codes: 0 success, 1 usage, 2 I/O, 3 protocol.

#include <csignal>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <thread>

#include "CLI11.hpp"
#include "perfcity/ingest.hpp"
#include "perfcity/net.hpp"
#include "perfcity/server.hpp"
#include "perfcity/workload.hpp"

namespace {

using namespace perfcity;

enum ExitCode { kOk = 0, kUsage = 1, kIo = 2, kProtocol = 3 };

std::atomic<bool> g_stop{false};

void on_signal(int) { g_stop = true; }

struct CommonFlags {
  std::string host = "127.0.0.1";
  std::uint16_t ingest_port = 7071;
  std::vector<std::string> excludes;
  std::int64_t window_ms = 3000;
  std::int64_t tick_ms = 100;

  void add_engine_flags(CLI::App* cmd) {
    cmd->add_option("--exclude", excludes, "Package prefix to exclude, e.g. org.ini4j (repeatable)");
    cmd->add_option("--window-ms", window_ms, "Sliding window length L in milliseconds")
        ->check(CLI::PositiveNumber);
    cmd->add_option("--tick-ms", tick_ms, "Tick length in milliseconds")->check(CLI::PositiveNumber);
  }
  void add_endpoint_flags(CLI::App* cmd) {
    cmd->add_option("--host", host, "Ingest host");
    cmd->add_option("--ingest-port", ingest_port, "Ingest TCP port");
  }
  PipelineConfig pipeline() const {
    PipelineConfig cfg;
    cfg.window_micros = window_ms * 1000;
    cfg.tick_micros = tick_ms * 1000;
    for (const auto& e : excludes) cfg.excluded_packages.push_back(split_package(e));
    return cfg;
  }
};

int run_server(const CommonFlags& flags, std::uint16_t ui_port, std::uint16_t mirror_port,
               std::optional<std::filesystem::path> record) {
  ServerConfig cfg;
  cfg.host = flags.host;
  cfg.ingest_port = flags.ingest_port;
  cfg.ui_port = ui_port;
  cfg.mirror_port = mirror_port;
  cfg.pipeline = flags.pipeline();
  cfg.record_path = std::move(record);
  Server server(cfg);
  try {
    server.start();
  } catch (const net::IoError& e) {
    std::fprintf(stderr, "perfcity: %s\n", e.what());
    return kIo;
  }
  std::fprintf(stderr, "perfcity: ingest %s:%u, ui ws://%s:%u/stream, mirror %s:%u\n", cfg.host.c_str(),
               server.ingest_port(), cfg.host.c_str(), server.ui_port(), cfg.host.c_str(), server.mirror_port());
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  while (!g_stop) std::this_thread::sleep_for(std::chrono::milliseconds(100));
  server.stop();
  const auto stats = server.ingest_stats();
  std::fprintf(stderr, "perfcity: %llu events, %llu malformed, %llu excluded, %llu out of order\n",
               static_cast<unsigned long long>(stats.events), static_cast<unsigned long long>(stats.malformed),
               static_cast<unsigned long long>(stats.excluded),
               static_cast<unsigned long long>(stats.out_of_order));
  return kOk;
}

/// Sends messages to the ingest endpoint at the given speed (nullopt = no pacing).
int send_messages(const std::vector<IngestMessage>& messages, const CommonFlags& flags,
                  std::optional<double> speed) {
  try {
    auto sock = net::connect_tcp(flags.host, flags.ingest_port);
    std::string pending;
    auto flush = [&] {
      if (!pending.empty()) sock.write_all(pending);
      pending.clear();
    };
    auto sink = [&](const IngestMessage& msg) {
      pending += encode_line(msg);
      pending += '\n';
      if (speed || pending.size() > (1u << 16)) flush();
    };
    auto sleep = [&](std::chrono::microseconds d) {
      if (speed) std::this_thread::sleep_for(d);
    };
    replay(messages, speed.value_or(1.0), sink, sleep);
    flush();
  } catch (const net::IoError& e) {
    std::fprintf(stderr, "perfcity: %s\n", e.what());
    return kIo;
  }
  return kOk;
}

std::optional<std::vector<IngestMessage>> load_trace(const std::string& path, int& code) {
  try {
    auto result = read_trace_file(path);
    if (!result.errors.empty()) {
      for (const auto& err : result.errors)
        std::fprintf(stderr, "perfcity: %s:%zu: %s\n", path.c_str(), err.line, err.message.c_str());
      code = kProtocol;
      return std::nullopt;
    }
    return std::move(result.messages);
  } catch (const std::filesystem::filesystem_error& e) {
    std::fprintf(stderr, "perfcity: %s\n", e.what());
    code = kIo;
    return std::nullopt;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Live software-city profiler"};
  app.require_subcommand(1);

  CommonFlags flags;
  std::uint16_t ui_port = 7072;
  std::uint16_t mirror_port = 7073;

  auto* serve = app.add_subcommand("serve", "Run the ingest and visualization server");
  flags.add_endpoint_flags(serve);
  flags.add_engine_flags(serve);
  serve->add_option("--ui-port", ui_port, "WebSocket port (path /stream)");
  serve->add_option("--mirror-port", mirror_port, "NDJSON mirror port");

  std::string record_out;
  auto* record = app.add_subcommand("record", "Serve and tee accepted ingest records to a trace file");
  flags.add_endpoint_flags(record);
  flags.add_engine_flags(record);
  record->add_option("--ui-port", ui_port, "WebSocket port (path /stream)");
  record->add_option("--mirror-port", mirror_port, "NDJSON mirror port");
  record->add_option("-o,--out", record_out, "Trace file (.trace.ndjson)")->required();

  ScenarioParams params;
  std::string scenario;
  std::string pace = "real";
  std::string sim_out;
  double restart_interval_ms = 150, period_ms = 1000, duration_ms = 10000, batch_ms = 100;
  auto* simulate_cmd = app.add_subcommand("simulate", "Generate a synthetic workload");
  simulate_cmd->add_option("scenario", scenario, "thread-leak | duty-cycle | figure3 | refactor-before | refactor-after")
      ->required();
  simulate_cmd->add_option("--restarts", params.restarts, "thread-leak: number of game restarts");
  simulate_cmd->add_option("--restart-interval-ms", restart_interval_ms, "thread-leak: time between restarts");
  simulate_cmd->add_option("--duty", params.duty, "duty-cycle: fraction of each period spent in work()");
  simulate_cmd->add_option("--period-ms", period_ms, "duty-cycle: period");
  simulate_cmd->add_option("--duration-ms", duration_ms, "Simulated duration");
  simulate_cmd->add_option("--batch-ms", batch_ms, "Producer batching interval");
  simulate_cmd->add_option("--seed", params.seed, "Random seed");
  simulate_cmd->add_option("--pace", pace, "real | fast");
  simulate_cmd->add_option("-o,--out", sim_out, "Write a trace file instead of connecting");
  flags.add_endpoint_flags(simulate_cmd);

  std::string trace_path;
  double speed = 1.0;
  auto* replay_cmd = app.add_subcommand("replay", "Send a recorded trace to a server");
  replay_cmd->add_option("trace", trace_path, "Trace file")->required();
  replay_cmd->add_option("--speed", speed, "Playback speed factor (> 0)");
  flags.add_endpoint_flags(replay_cmd);

  std::string format = "text";
  auto* analyze_cmd = app.add_subcommand("analyze", "Offline elevation report for a trace");
  analyze_cmd->add_option("trace", trace_path, "Trace file")->required();
  analyze_cmd->add_option("--format", format, "text | json")->check(CLI::IsMember({"text", "json"}));
  flags.add_engine_flags(analyze_cmd);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kUsage;
  }

  try {
    if (serve->parsed()) return run_server(flags, ui_port, mirror_port, std::nullopt);
    if (record->parsed()) return run_server(flags, ui_port, mirror_port, record_out);

    if (simulate_cmd->parsed()) {
      auto kind = parse_scenario(scenario);
      auto pace_kind = parse_pace(pace);
      if (!kind || !pace_kind) {
        std::fprintf(stderr, "perfcity: unknown scenario or pace\n");
        return kUsage;
      }
      params.kind = *kind;
      params.restart_interval_micros = static_cast<Micros>(restart_interval_ms * 1000);
      params.period_micros = static_cast<Micros>(period_ms * 1000);
      params.duration_micros = static_cast<Micros>(duration_ms * 1000);
      params.batch_micros = static_cast<Micros>(batch_ms * 1000);
      const auto messages = simulate(params);
      if (!sim_out.empty()) {
        write_trace_file(sim_out, messages);
        return kOk;
      }
      return send_messages(messages, flags,
                           *pace_kind == Pace::Real ? std::optional<double>(1.0) : std::nullopt);
    }

    if (replay_cmd->parsed()) {
      if (!(speed > 0.0)) {
        std::fprintf(stderr, "perfcity: --speed must be positive\n");
        return kUsage;
      }
      int code = kOk;
      auto messages = load_trace(trace_path, code);
      if (!messages) return code;
      return send_messages(*messages, flags, speed);
    }

    if (analyze_cmd->parsed()) {
      int code = kOk;
      auto messages = load_trace(trace_path, code);
      if (!messages) return code;
      const auto report = analyze(*messages, flags.pipeline());
      std::cout << (format == "json" ? format_report_json(report) + "\n" : format_report_text(report));
      return kOk;
    }
  } catch (const InvalidArgument& e) {
    std::fprintf(stderr, "perfcity: %s\n", e.what());
    return kUsage;
  } catch (const std::filesystem::filesystem_error& e) {
    std::fprintf(stderr, "perfcity: %s\n", e.what());
    return kIo;
  } catch (const MalformedMessage& e) {
    std::fprintf(stderr, "perfcity: %s\n", e.what());
    return kProtocol;
  } catch (const Error& e) {
    std::fprintf(stderr, "perfcity: %s\n", e.what());
    return kProtocol;
  }
  return kUsage;
}
