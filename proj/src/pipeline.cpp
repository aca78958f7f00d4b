#include "perfcity/pipeline.hpp"

#include <algorithm>

namespace perfcity {

CityPipeline::CityPipeline(PipelineConfig config, Broadcaster* broadcaster)
    : config_(std::move(config)),
      broadcaster_(broadcaster),
      session_(std::make_shared<Session>(config_.excluded_packages)),
      engine_(config_.window_micros),
      published_registry_rev_(session_->registry_revision()) {
  if (config_.tick_micros <= 0) throw Error("tick length must be positive");
}

std::shared_ptr<Session> CityPipeline::start_session() {
  auto fresh = std::make_shared<Session>(config_.excluded_packages);
  std::lock_guard lock(session_mu_);
  pending_session_ = fresh;
  return fresh;
}

std::shared_ptr<Session> CityPipeline::session() const {
  std::lock_guard lock(session_mu_);
  return pending_session_ ? pending_session_ : session_;
}

bool CityPipeline::refresh_structure(std::uint64_t registry_revision) {
  if (published_registry_rev_ == registry_revision) return false;
  published_registry_rev_ = registry_revision;
  const auto methods = session_->visible_methods();
  ++rev_;
  if (methods.empty())
    layout_.reset();
  else
    layout_ = build_layout(methods, rev_);
  if (broadcaster_) broadcaster_->publish_structure(rev_, structure_message(rev_, methods, layout()));
  return true;
}

TickResult CityPipeline::run_tick(std::optional<Micros> now) {
  {
    std::lock_guard lock(session_mu_);
    if (pending_session_) {
      session_ = std::move(pending_session_);
      pending_session_.reset();
      engine_ = ElevationEngine(config_.window_micros);
      published_registry_rev_.reset();
      now_.reset();
      saw_events_ = false;
    }
  }

  auto drained = session_->drain();
  bool got_events = false;
  for (const auto& batch : drained.batches) {
    engine_.apply(batch.thread, batch.events);
    got_events = got_events || !batch.events.empty();
  }

  TickResult result;
  result.structure_published = refresh_structure(drained.registry_revision);
  result.rev = rev_;
  saw_events_ = saw_events_ || got_events;
  if (!saw_events_) return result;

  Micros end;
  if (now) {
    end = *now;
  } else if (got_events) {
    end = std::max(now_.value_or(*engine_.latest_timestamp()), *engine_.latest_timestamp());
  } else {
    end = now_.value_or(*engine_.latest_timestamp()) + config_.tick_micros;
  }
  now_ = end;

  auto rows = engine_.tick(end);
  if (layout_) {
    std::erase_if(rows, [&](const ElevationRow& r) { return layout_->plot_of(r.method) == nullptr; });
  } else {
    rows.clear();
  }
  result.frame = compose_frame(rows, rev_, end);
  if (broadcaster_) broadcaster_->publish_frame(rev_, frame_message(*result.frame));
  return result;
}

TickResult CityPipeline::tick() { return run_tick(std::nullopt); }

TickResult CityPipeline::tick_at(Micros now) { return run_tick(now); }

}  // namespace perfcity
