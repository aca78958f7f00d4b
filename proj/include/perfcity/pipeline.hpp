#pragma once

#include <memory>
#include <mutex>
#include <optional>

#include "perfcity/engine.hpp"
#include "perfcity/frame_stream.hpp"
#include "perfcity/ingest.hpp"
#include "perfcity/layout.hpp"

namespace perfcity {

struct PipelineConfig {
  Micros window_micros = 3'000'000;
  Micros tick_micros = 100'000;
  std::vector<PackagePath> excluded_packages;
};

struct TickResult {
  std::uint64_t rev = 0;
  bool structure_published = false;
  std::optional<Frame> frame;  // absent until the session has produced events
};

/// One tick of the live city: drains the session, feeds the engine, rebuilds
/// the layout when the registry changed and composes a frame. Every structure
/// revision is published before the first frame that refers to it.
///
/// Producers talk to session(); tick() and tick_at() belong to a single tick
/// thread.
class CityPipeline {
 public:
  explicit CityPipeline(PipelineConfig config, Broadcaster* broadcaster = nullptr);

  /// Replaces the session; the engine is reset on the next tick.
  std::shared_ptr<Session> start_session();
  std::shared_ptr<Session> session() const;

  /// Window end is the latest ingested timestamp, or the previous end plus one
  /// tick when nothing arrived.
  TickResult tick();
  /// Window end is `now`, which must not go backwards within a session.
  TickResult tick_at(Micros now);

  const ElevationEngine& engine() const { return engine_; }
  const CityLayout* layout() const { return layout_ ? &*layout_ : nullptr; }
  std::uint64_t rev() const { return rev_; }
  const PipelineConfig& config() const { return config_; }

 private:
  TickResult run_tick(std::optional<Micros> now);
  bool refresh_structure(std::uint64_t registry_revision);

  PipelineConfig config_;
  Broadcaster* broadcaster_;

  mutable std::mutex session_mu_;
  std::shared_ptr<Session> session_;
  std::shared_ptr<Session> pending_session_;

  ElevationEngine engine_;
  std::optional<CityLayout> layout_;
  std::optional<std::uint64_t> published_registry_rev_;
  std::uint64_t rev_ = 0;
  std::optional<Micros> now_;
  bool saw_events_ = false;
};

}  // namespace perfcity
