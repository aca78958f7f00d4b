#pragma once

// Brute-force reference for windowed self time. Shares no code with the engine:
// it replays each thread's stack from the start for every query and attributes
// every gap between consecutive events to the method on top, clipped to the
// window. Used to derive and freeze expected values in tests.

#include <algorithm>
#include <cstdint>
#include <map>
#include <random>
#include <set>
#include <vector>

#include "perfcity/trace_model.hpp"

namespace perfcity::testing {

struct ThreadTrace {
  ThreadId thread;
  std::vector<TraceEvent> events;
};

struct OracleRow {
  std::int64_t best_self = 0;  // max over threads
  std::uint32_t threads = 0;
};

/// Per-thread self time of every method in [end - length, end], considering
/// only events with timestamp <= end. Applies the same recovery rules as the
/// live engine: a mismatched exit pops down to its frame, an exit of a method
/// that is not on the stack is ignored.
inline std::map<std::uint32_t, std::int64_t> oracle_thread_self(const ThreadTrace& t, std::int64_t end,
                                                                std::int64_t length) {
  std::map<std::uint32_t, std::int64_t> out;
  const std::int64_t start = end - length;
  std::vector<std::uint32_t> stack;
  std::int64_t prev = 0;
  bool have_prev = false;
  auto attribute = [&](std::int64_t from, std::int64_t to) {
    if (stack.empty()) return;
    const std::int64_t lo = std::max(from, start);
    const std::int64_t hi = std::min(to, end);
    if (hi > lo) out[stack.back()] += hi - lo;
  };
  for (const auto& e : t.events) {
    if (e.timestamp > end) break;
    if (have_prev && e.timestamp < prev) continue;
    if (e.action == Action::Exit) {
      auto it = std::find(stack.rbegin(), stack.rend(), e.method.value);
      if (it == stack.rend()) continue;
      if (have_prev) attribute(prev, e.timestamp);
      stack.erase(std::next(it).base(), stack.end());
    } else {
      if (have_prev) attribute(prev, e.timestamp);
      stack.push_back(e.method.value);
    }
    prev = e.timestamp;
    have_prev = true;
  }
  if (have_prev) attribute(prev, end);
  return out;
}

inline std::map<std::uint32_t, OracleRow> oracle_rows(const std::vector<ThreadTrace>& threads, std::int64_t end,
                                                      std::int64_t length) {
  std::map<std::uint32_t, OracleRow> rows;
  std::map<std::uint32_t, std::set<std::uint64_t>> entered;
  for (const auto& t : threads) {
    for (const auto& e : t.events)
      if (e.timestamp <= end && e.action == Action::Enter) entered[e.method.value].insert(t.thread.value);
    for (const auto& [m, self] : oracle_thread_self(t, end, length)) {
      auto& row = rows[m];
      row.best_self = std::max(row.best_self, self);
    }
  }
  for (auto& [m, row] : rows) row.threads = static_cast<std::uint32_t>(entered[m].size());
  return rows;
}

/// Random balanced trace: every thread's enters are matched by exits in LIFO
/// order. Gaps may be zero.
inline std::vector<ThreadTrace> random_balanced_trace(std::uint64_t seed, int max_threads, int max_methods,
                                                      int max_events) {
  std::mt19937_64 rng(seed);
  auto pick = [&](std::int64_t lo, std::int64_t hi) {
    return lo + static_cast<std::int64_t>(rng() % static_cast<std::uint64_t>(hi - lo + 1));
  };
  const int n_threads = static_cast<int>(pick(1, max_threads));
  const int n_methods = static_cast<int>(pick(1, max_methods));
  const int budget = static_cast<int>(pick(2, max_events));
  const int per_thread = std::max(2, budget / n_threads);

  std::vector<ThreadTrace> out;
  for (int t = 0; t < n_threads; ++t) {
    ThreadTrace tr;
    tr.thread = ThreadId{static_cast<std::uint64_t>(t + 1)};
    std::vector<std::uint32_t> stack;
    std::int64_t now = pick(0, 500'000);
    const int pairs = static_cast<int>(pick(1, per_thread / 2));
    int opened = 0;
    while (opened < pairs || !stack.empty()) {
      const bool can_open = opened < pairs && stack.size() < 24;
      const bool open = can_open && (stack.empty() || pick(0, 99) < 55);
      now += pick(0, 3) == 0 ? 0 : pick(1, 20'000);
      if (open) {
        const auto m = static_cast<std::uint32_t>(pick(1, n_methods));
        tr.events.push_back({now, MethodId{m}, Action::Enter});
        stack.push_back(m);
        ++opened;
      } else {
        tr.events.push_back({now, MethodId{stack.back()}, Action::Exit});
        stack.pop_back();
      }
    }
    out.push_back(std::move(tr));
  }
  return out;
}

}  // namespace perfcity::testing
