#include "perfcity/engine.hpp"

#include <algorithm>

namespace perfcity {

namespace {

Micros overlap(Micros a_start, Micros a_end, Micros b_start, Micros b_end) {
  return std::max<Micros>(0, std::min(a_end, b_end) - std::max(a_start, b_start));
}

}  // namespace

// ThreadTimeline

void ThreadTimeline::close_interval(Micros end) {
  if (stack_.empty() || end <= last_ts_) return;
  const MethodId top = stack_.back().method;
  intervals_.push_back({top, thread_, last_ts_, end});
  const Micros len = end - last_ts_;
  retained_[top.value] += len;
  ++retained_count_[top.value];
  lifetime_[top.value] += len;
}

ApplyOutcome ThreadTimeline::apply(const TraceEvent& e) {
  if (has_events_ && e.timestamp < last_ts_) return ApplyOutcome::DroppedOutOfOrder;

  std::size_t match = stack_.size();
  if (e.action == Action::Exit) {
    for (std::size_t i = stack_.size(); i-- > 0;) {
      if (stack_[i].method == e.method) {
        match = i;
        break;
      }
    }
    if (match == stack_.size()) return ApplyOutcome::DroppedUnmatchedExit;
  }

  close_interval(e.timestamp);
  last_ts_ = e.timestamp;
  has_events_ = true;

  if (e.action == Action::Enter) {
    stack_.push_back({e.method, e.timestamp});
    return ApplyOutcome::Applied;
  }
  const bool resync = match + 1 != stack_.size();
  stack_.resize(match);
  return resync ? ApplyOutcome::Resynced : ApplyOutcome::Applied;
}

Micros ThreadTimeline::self_time(MethodId m, const Window& w) const {
  const Micros start = w.start_micros();
  const Micros end = w.end_micros;
  Micros total = 0;
  for (const auto& iv : intervals_)
    if (iv.method == m) total += overlap(iv.start, iv.end, start, end);
  if (!stack_.empty() && stack_.back().method == m)
    total += overlap(last_ts_, std::max(last_ts_, end), start, end);
  return total;
}

void ThreadTimeline::prune_before(Micros start) {
  while (!intervals_.empty() && intervals_.front().end <= start) {
    const auto& iv = intervals_.front();
    const auto key = iv.method.value;
    retained_[key] -= iv.end - iv.start;
    if (--retained_count_[key] == 0) {
      retained_.erase(key);
      retained_count_.erase(key);
    }
    intervals_.pop_front();
  }
}

// ElevationEngine

ElevationEngine::ElevationEngine(Micros window_length) : window_length_(window_length) {
  if (window_length <= 0) throw Error("window length must be positive");
}

ThreadTimeline& ElevationEngine::timeline(ThreadId thread) {
  auto& slot = threads_[thread.value];
  if (!slot) slot = std::make_unique<ThreadTimeline>(thread);
  if (active_ids_.insert(thread.value).second) active_.push_back(slot.get());
  return *slot;
}

ApplyOutcome ElevationEngine::apply(ThreadId thread, const TraceEvent& e) {
  auto& tl = timeline(thread);
  const auto outcome = tl.apply(e);
  switch (outcome) {
    case ApplyOutcome::DroppedOutOfOrder:
      ++stats_.out_of_order;
      return outcome;
    case ApplyOutcome::DroppedUnmatchedExit:
      ++stats_.dropped_exits;
      return outcome;
    case ApplyOutcome::Resynced:
      ++stats_.resyncs;
      break;
    case ApplyOutcome::Applied:
      break;
  }
  ++stats_.events;
  if (!latest_ts_ || e.timestamp > *latest_ts_) latest_ts_ = e.timestamp;
  if (e.action == Action::Enter) entered_by_[e.method.value].insert(thread.value);
  return outcome;
}

void ElevationEngine::apply(ThreadId thread, std::span<const TraceEvent> events) {
  for (const auto& e : events) apply(thread, e);
}

Micros ElevationEngine::self_time(ThreadId thread, MethodId m, const Window& w) const {
  auto it = threads_.find(thread.value);
  return it == threads_.end() ? 0 : it->second->self_time(m, w);
}

ElevationRow ElevationEngine::elevation(MethodId m, const Window& w) const {
  Micros best = 0;
  for (const auto& [id, tl] : threads_) best = std::max(best, tl->self_time(m, w));
  return {m, static_cast<double>(best) / static_cast<double>(w.length_micros), thread_count(m)};
}

std::vector<ElevationRow> ElevationEngine::tick(Micros now) {
  if (ticked_ && now < last_tick_) throw Error("tick time moved backwards");
  ticked_ = true;
  last_tick_ = now;
  const Micros start = now - window_length_;

  std::unordered_map<std::uint32_t, Micros> best;
  std::unordered_map<std::uint32_t, Micros> local;

  std::size_t keep = 0;
  for (std::size_t i = 0; i < active_.size(); ++i) {
    ThreadTimeline& tl = *active_[i];
    tl.prune_before(start);
    if (tl.stack().empty() && tl.intervals().empty()) {
      active_ids_.erase(tl.thread().value);
      continue;
    }
    active_[keep++] = &tl;

    local = tl.retained_totals();
    const auto& ivs = tl.intervals();
    if (!ivs.empty() && ivs.front().start < start) {
      local[ivs.front().method.value] -= start - ivs.front().start;
    }
    for (auto it = ivs.rbegin(); it != ivs.rend() && it->end > now; ++it) {
      local[it->method.value] -= it->end - std::max({it->start, now, start});
    }
    if (!tl.stack().empty()) {
      const Micros open_start = std::max(tl.last_timestamp(), start);
      if (now > open_start) local[tl.stack().back().method.value] += now - open_start;
    }
    for (const auto& [m, t] : local) {
      if (t <= 0) continue;
      auto& slot = best[m];
      slot = std::max(slot, t);
    }
  }
  active_.resize(keep);

  std::vector<ElevationRow> rows;
  rows.reserve(best.size() + last_nonzero_.size());
  std::unordered_set<std::uint32_t> nonzero;
  const double length = static_cast<double>(window_length_);
  for (const auto& [m, t] : best) {
    rows.push_back({MethodId{m}, static_cast<double>(t) / length, thread_count(MethodId{m})});
    nonzero.insert(m);
  }
  for (auto m : last_nonzero_) {
    if (!nonzero.count(m)) rows.push_back({MethodId{m}, 0.0, thread_count(MethodId{m})});
  }
  last_nonzero_ = std::move(nonzero);
  std::sort(rows.begin(), rows.end(),
            [](const ElevationRow& a, const ElevationRow& b) { return a.method < b.method; });
  return rows;
}

Micros ElevationEngine::total_self_time(MethodId m) const {
  Micros total = 0;
  const Micros horizon = latest_ts_.value_or(0);
  for (const auto& [id, tl] : threads_) {
    const auto& life = tl->lifetime_totals();
    if (auto it = life.find(m.value); it != life.end()) total += it->second;
    if (!tl->stack().empty() && tl->stack().back().method == m && horizon > tl->last_timestamp())
      total += horizon - tl->last_timestamp();
  }
  return total;
}

std::uint32_t ElevationEngine::thread_count(MethodId m) const {
  auto it = entered_by_.find(m.value);
  return it == entered_by_.end() ? 0 : static_cast<std::uint32_t>(it->second.size());
}

std::optional<Micros> ElevationEngine::latest_timestamp() const { return latest_ts_; }

}  // namespace perfcity
