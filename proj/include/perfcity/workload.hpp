#pragma once

#include <chrono>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "perfcity/ingest.hpp"
#include "perfcity/pipeline.hpp"

namespace perfcity {

class InvalidArgument : public Error {
 public:
  using Error::Error;
};

enum class ScenarioKind { ThreadLeak, DutyCycle, Figure3, RefactorBefore, RefactorAfter };

std::optional<ScenarioKind> parse_scenario(std::string_view name);
std::string_view scenario_name(ScenarioKind kind);

struct ScenarioParams {
  ScenarioKind kind = ScenarioKind::Figure3;
  int restarts = 16;
  Micros restart_interval_micros = 150'000;
  double duty = 0.3;
  Micros period_micros = 1'000'000;
  Micros duration_micros = 10'000'000;
  Micros batch_micros = 100'000;
  std::uint64_t seed = 1;
};

/// Synthetic producer output: a session record, one registration per method,
/// then per-thread event batches in batch-time order. Equal parameters give an
/// identical message sequence.
std::vector<IngestMessage> simulate(const ScenarioParams& params);

/// Methods of the Tetris-like program used by the thread-leak and refactor
/// scenarios. `refactored` selects the layout after game.* moved under main.
std::vector<MethodDescriptor> tetris_program(bool refactored);

using MessageSink = std::function<void(const IngestMessage&)>;
using Sleeper = std::function<void(std::chrono::microseconds)>;

/// Sends `messages` through `sink`, sleeping between event batches for the gap
/// between their first timestamps divided by `speed`. Timestamps are forwarded
/// unchanged. Throws InvalidArgument unless speed is positive and finite.
void replay(const std::vector<IngestMessage>& messages, double speed, const MessageSink& sink,
            const Sleeper& sleep);

/// Emits `messages` at producer-time pace (speed 1) or back to back.
enum class Pace { Real, Fast };
std::optional<Pace> parse_pace(std::string_view name);

/// Feeds a finished trace through a pipeline, ticking at tick resolution of
/// producer time from the first event. Events up to each tick time are applied
/// before that tick. Registrations are applied up front.
void sweep_trace(const std::vector<IngestMessage>& messages, const PipelineConfig& config,
                 const std::function<void(const Frame&, const CityPipeline&)>& on_frame);

struct MethodReport {
  MethodDescriptor method;
  double peak_elevation = 0.0;
  Micros total_self_micros = 0;
  std::uint32_t thread_count = 0;
};

struct AnalysisReport {
  std::vector<MethodReport> methods;  // peak elevation descending, then id
  std::size_t frames = 0;
  EngineStats engine;
};

AnalysisReport analyze(const std::vector<IngestMessage>& messages, const PipelineConfig& config);

std::string format_report_text(const AnalysisReport& report);
std::string format_report_json(const AnalysisReport& report);

}  // namespace perfcity
