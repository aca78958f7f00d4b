#pragma once

#include <deque>
#include <map>
#include <memory>
#include <span>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "perfcity/trace_model.hpp"

namespace perfcity {

struct StackFrame {
  MethodId method;
  Micros entered_at = 0;
};

/// Time attributed to `method` while it was on top of `thread`'s stack.
struct SelfTimeInterval {
  MethodId method;
  ThreadId thread;
  Micros start = 0;
  Micros end = 0;
  friend bool operator==(const SelfTimeInterval&, const SelfTimeInterval&) = default;
};

struct ElevationRow {
  MethodId method;
  double elevation = 0.0;  // in [0, 1]
  std::uint32_t thread_count = 0;
  friend bool operator==(const ElevationRow&, const ElevationRow&) = default;
};

enum class ApplyOutcome { Applied, Resynced, DroppedUnmatchedExit, DroppedOutOfOrder };

/// Reconstructed call stack of one thread plus the self-time intervals it produced.
///
/// Intervals are kept in time order and never overlap. The interval belonging to
/// the current top of stack stays open until the next event; queries treat it as
/// ending at the window end.
class ThreadTimeline {
 public:
  explicit ThreadTimeline(ThreadId thread) : thread_(thread) {}

  ApplyOutcome apply(const TraceEvent& e);

  /// Self time of `m` clipped to `w`. Only intervals not yet pruned are seen.
  Micros self_time(MethodId m, const Window& w) const;

  /// Drops closed intervals that end at or before `start`.
  void prune_before(Micros start);

  ThreadId thread() const { return thread_; }
  const std::vector<StackFrame>& stack() const { return stack_; }
  const std::deque<SelfTimeInterval>& intervals() const { return intervals_; }
  bool has_events() const { return has_events_; }
  Micros last_timestamp() const { return last_ts_; }

  /// Sum of retained closed interval lengths per method.
  const std::unordered_map<std::uint32_t, Micros>& retained_totals() const { return retained_; }

  /// Closed self time per method since the thread started, including pruned intervals.
  const std::unordered_map<std::uint32_t, Micros>& lifetime_totals() const { return lifetime_; }

 private:
  void close_interval(Micros end);

  ThreadId thread_;
  std::vector<StackFrame> stack_;
  std::deque<SelfTimeInterval> intervals_;
  std::unordered_map<std::uint32_t, Micros> retained_;
  std::unordered_map<std::uint32_t, std::uint32_t> retained_count_;
  std::unordered_map<std::uint32_t, Micros> lifetime_;
  Micros last_ts_ = 0;
  bool has_events_ = false;
};

struct EngineStats {
  std::uint64_t events = 0;
  std::uint64_t resyncs = 0;
  std::uint64_t dropped_exits = 0;
  std::uint64_t out_of_order = 0;
};

/// Windowed self-time elevations over many threads, max-aggregated per method.
///
/// Single-threaded: the owner feeds events and calls tick() from one thread.
class ElevationEngine {
 public:
  explicit ElevationEngine(Micros window_length = 3'000'000);

  ApplyOutcome apply(ThreadId thread, const TraceEvent& e);
  void apply(ThreadId thread, std::span<const TraceEvent> events);

  Micros self_time(ThreadId thread, MethodId m, const Window& w) const;

  /// Elevation of `m` over `w`: the maximum per-thread self time divided by the
  /// window length, together with the cumulative thread count.
  ElevationRow elevation(MethodId m, const Window& w) const;

  /// Advances the window end to `now` and returns one row per method with positive
  /// elevation plus one zero row for each method that was positive on the previous
  /// tick. Rows are ordered by method id.
  std::vector<ElevationRow> tick(Micros now);

  Micros window_length() const { return window_length_; }
  Micros last_tick() const { return last_tick_; }

  /// Self time accumulated over the whole session, summed across threads.
  Micros total_self_time(MethodId m) const;
  std::uint32_t thread_count(MethodId m) const;

  /// Largest timestamp applied so far, if any.
  std::optional<Micros> latest_timestamp() const;

  const EngineStats& stats() const { return stats_; }
  std::size_t thread_total() const { return threads_.size(); }
  std::size_t active_thread_count() const { return active_.size(); }

 private:
  ThreadTimeline& timeline(ThreadId thread);

  Micros window_length_;
  std::map<std::uint64_t, std::unique_ptr<ThreadTimeline>> threads_;
  std::vector<ThreadTimeline*> active_;
  std::unordered_set<std::uint64_t> active_ids_;

  std::unordered_map<std::uint32_t, std::unordered_set<std::uint64_t>> entered_by_;
  std::unordered_set<std::uint32_t> last_nonzero_;

  std::optional<Micros> latest_ts_;
  Micros last_tick_ = 0;
  bool ticked_ = false;
  EngineStats stats_;
};

}  // namespace perfcity
