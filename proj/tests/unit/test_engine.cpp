#include <cmath>
#include <map>

#include "doctest.h"
#include "perfcity/engine.hpp"
#include "trace_oracle.hpp"

using namespace perfcity;
using perfcity::testing::oracle_rows;
using perfcity::testing::random_balanced_trace;

namespace {

constexpr Micros kSec = 1'000'000;
const MethodId kMain{1}, kA{2}, kC{3}, kB{4};
using Events = std::vector<TraceEvent>;

std::vector<TraceEvent> figure3() {
  return {{0 * kSec, kMain, Action::Enter}, {1 * kSec, kA, Action::Enter}, {2 * kSec, kC, Action::Enter},
          {3 * kSec, kC, Action::Exit},     {4 * kSec, kA, Action::Exit},  {5 * kSec, kB, Action::Enter},
          {6 * kSec, kB, Action::Exit}};
}

std::map<std::uint32_t, ElevationRow> by_id(const std::vector<ElevationRow>& rows) {
  std::map<std::uint32_t, ElevationRow> out;
  for (const auto& r : rows) out[r.method.value] = r;
  return out;
}

}  // namespace

TEST_CASE("enter closes the caller's interval") {
  ThreadTimeline tl(ThreadId{1});
  tl.apply({0, kMain, Action::Enter});
  CHECK(tl.apply({10, kA, Action::Enter}) == ApplyOutcome::Applied);
  REQUIRE(tl.intervals().size() == 1);
  CHECK(tl.intervals()[0] == SelfTimeInterval{kMain, ThreadId{1}, 0, 10});
  REQUIRE(tl.stack().size() == 2);
  CHECK(tl.stack().back().method == kA);
}

TEST_CASE("exit of the top closes its interval") {
  ThreadTimeline tl(ThreadId{1});
  tl.apply({0, kMain, Action::Enter});
  tl.apply({1, kA, Action::Enter});
  tl.apply({2, kC, Action::Enter});
  CHECK(tl.apply({3, kC, Action::Exit}) == ApplyOutcome::Applied);
  CHECK(tl.intervals().back() == SelfTimeInterval{kC, ThreadId{1}, 2, 3});
  CHECK(tl.stack().size() == 2);
}

TEST_CASE("mismatched exit pops down to the match") {
  ElevationEngine eng;
  const ThreadId t{1};
  eng.apply(t, {0, kMain, Action::Enter});
  eng.apply(t, {1, kA, Action::Enter});
  eng.apply(t, {2, kC, Action::Enter});
  CHECK(eng.apply(t, {5, kA, Action::Exit}) == ApplyOutcome::Resynced);
  CHECK(eng.stats().resyncs == 1);
  const Window w(10, 5);
  CHECK(eng.self_time(t, kC, w) == 3);
  CHECK(eng.self_time(t, kA, w) == 1);
  // main is alone on the stack again
  eng.apply(t, {7, kB, Action::Enter});
  CHECK(eng.self_time(t, kMain, Window(10, 7)) == 1 + 2);
}

TEST_CASE("exit of a method not on the stack is dropped") {
  ElevationEngine eng;
  eng.apply(ThreadId{1}, {0, kMain, Action::Enter});
  CHECK(eng.apply(ThreadId{1}, {1, kB, Action::Exit}) == ApplyOutcome::DroppedUnmatchedExit);
  CHECK(eng.stats().dropped_exits == 1);
  CHECK(eng.self_time(ThreadId{1}, kMain, Window(10, 4)) == 4);
}

TEST_CASE("events older than the thread's last are dropped") {
  ElevationEngine eng;
  eng.apply(ThreadId{1}, {10, kMain, Action::Enter});
  CHECK(eng.apply(ThreadId{1}, {5, kMain, Action::Exit}) == ApplyOutcome::DroppedOutOfOrder);
  CHECK(eng.stats().out_of_order == 1);
}

TEST_CASE("reference trace self times") {
  ElevationEngine eng(6 * kSec);
  eng.apply(ThreadId{1}, figure3());
  const Window w(6 * kSec, 6 * kSec);
  CHECK(eng.self_time(ThreadId{1}, kA, w) == 2 * kSec);
  CHECK(eng.self_time(ThreadId{1}, kC, w) == 1 * kSec);
  CHECK(eng.elevation(kA, w).elevation == doctest::Approx(2.0 / 6.0).epsilon(1e-12));
}

TEST_CASE("reference trace tick rows") {
  ElevationEngine eng(6 * kSec);
  eng.apply(ThreadId{1}, figure3());
  const auto rows = eng.tick(6 * kSec);
  REQUIRE(rows.size() == 4);
  auto m = by_id(rows);
  CHECK(std::abs(m[kMain.value].elevation - 1.0 / 3.0) < 1e-9);
  CHECK(std::abs(m[kA.value].elevation - 1.0 / 3.0) < 1e-9);
  CHECK(std::abs(m[kC.value].elevation - 1.0 / 6.0) < 1e-9);
  CHECK(std::abs(m[kB.value].elevation - 1.0 / 6.0) < 1e-9);
  double sum = 0;
  for (const auto& r : rows) {
    sum += r.elevation;
    CHECK(r.thread_count == 1);
  }
  CHECK(std::abs(sum - 1.0) < 1e-9);
  for (std::size_t i = 1; i < rows.size(); ++i) CHECK(rows[i - 1].method < rows[i].method);
}

TEST_CASE("open interval is clipped to the window") {
  ElevationEngine eng(3 * kSec);
  const MethodId run{9};
  eng.apply(ThreadId{1}, {0, run, Action::Enter});
  // entered 10 s before the window starts, never exits
  const Window w(3 * kSec, 13 * kSec);
  CHECK(eng.self_time(ThreadId{1}, run, w) == 3 * kSec);
  CHECK(eng.elevation(run, w).elevation == 1.0);
}

TEST_CASE("max over threads, not sum") {
  ElevationEngine eng(3 * kSec);
  const MethodId m{5};
  eng.apply(ThreadId{1}, Events{{0, m, Action::Enter}, {1'500'000, m, Action::Exit}});
  eng.apply(ThreadId{2}, Events{{1'000'000, m, Action::Enter}, {1'900'000, m, Action::Exit}});
  const auto row = eng.elevation(m, Window(3 * kSec, 3 * kSec));
  CHECK(row.elevation == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(row.thread_count == 2);
}

TEST_CASE("never-returning run() on many threads stays at 1.0") {
  ElevationEngine eng(3 * kSec);
  const MethodId run{3};
  for (std::uint64_t k = 0; k < 16; ++k)
    eng.apply(ThreadId{100 + k}, {static_cast<Micros>(k) * 150'000, run, Action::Enter});
  for (Micros now = 3 * kSec; now <= 20 * kSec; now += 100'000) {
    auto rows = eng.tick(now);
    REQUIRE(rows.size() == 1);
    CHECK(rows[0].elevation == 1.0);
    CHECK(rows[0].thread_count == 16);
  }
}

TEST_CASE("tick emits a zero row once, then drops the method") {
  ElevationEngine eng(3 * kSec);
  CHECK(eng.tick(0).empty());
  eng.apply(ThreadId{1}, Events{{0, kA, Action::Enter}, {kSec, kA, Action::Exit}});
  auto rows = eng.tick(2 * kSec);
  REQUIRE(rows.size() == 1);
  CHECK(rows[0].elevation > 0);
  rows = eng.tick(5 * kSec);
  REQUIRE(rows.size() == 1);
  CHECK(rows[0].method == kA);
  CHECK(rows[0].elevation == 0.0);
  CHECK(rows[0].thread_count == 1);
  CHECK(eng.tick(6 * kSec).empty());
  CHECK(eng.active_thread_count() == 0);
}

TEST_CASE("tick rejects time going backwards") {
  ElevationEngine eng;
  eng.tick(10);
  CHECK_THROWS_AS(eng.tick(5), Error);
}

TEST_CASE("oracle equivalence on small random traces") {
  for (std::uint64_t seed = 1; seed <= 60; ++seed) {
    CAPTURE(seed);
    const auto threads = random_balanced_trace(seed, 5, 12, 600);
    const Micros L = 200'000 + static_cast<Micros>(seed % 7) * 150'000;
    ElevationEngine eng(L);
    Micros last = 0;
    for (const auto& t : threads) last = std::max(last, t.events.back().timestamp);

    // Feed events in time order across threads, ticking along the way.
    std::vector<std::pair<ThreadId, TraceEvent>> all;
    for (const auto& t : threads)
      for (const auto& e : t.events) all.emplace_back(t.thread, e);
    std::stable_sort(all.begin(), all.end(),
                     [](const auto& a, const auto& b) { return a.second.timestamp < b.second.timestamp; });
    std::size_t next = 0;
    for (Micros now = 0; now <= last + L; now += 37'000) {
      while (next < all.size() && all[next].second.timestamp <= now) {
        eng.apply(all[next].first, all[next].second);
        ++next;
      }
      const auto got = by_id(eng.tick(now));
      const auto want = oracle_rows(threads, now, L);
      for (const auto& [id, row] : want) {
        const double expected = static_cast<double>(row.best_self) / static_cast<double>(L);
        if (expected == 0.0) continue;
        REQUIRE(got.count(id));
        CHECK(std::abs(got.at(id).elevation - expected) <= 1e-9 * std::max(1.0, expected));
        CHECK(got.at(id).thread_count == row.threads);
      }
      for (const auto& [id, row] : got) {
        auto it = want.find(id);
        const double expected =
            it == want.end() ? 0.0 : static_cast<double>(it->second.best_self) / static_cast<double>(L);
        CHECK(std::abs(row.elevation - expected) <= 1e-9);
      }
    }
  }
}

TEST_CASE("per-thread elevations sum to at most one") {
  for (std::uint64_t seed = 100; seed < 130; ++seed) {
    const auto threads = random_balanced_trace(seed, 1, 20, 400);
    ElevationEngine eng(300'000);
    eng.apply(threads[0].thread, threads[0].events);
    const Micros end = threads[0].events.back().timestamp;
    for (Micros now = end / 4; now <= end; now += end / 4 + 1) {
      const Window w(300'000, now);
      double sum = 0;
      for (std::uint32_t m = 1; m <= 20; ++m) sum += eng.elevation(MethodId{m}, w).elevation;
      CHECK(sum <= 1.0 + 1e-12);
    }
  }
}

TEST_CASE("shifting all timestamps leaves elevations unchanged") {
  const auto threads = random_balanced_trace(77, 3, 10, 500);
  const Micros shift = 123'456'789;
  ElevationEngine a(400'000), b(400'000);
  Micros last = 0;
  for (const auto& t : threads) {
    a.apply(t.thread, t.events);
    auto moved = t.events;
    for (auto& e : moved) e.timestamp += shift;
    b.apply(t.thread, moved);
    last = std::max(last, t.events.back().timestamp);
  }
  for (Micros now = 0; now <= last; now += 50'000) {
    const auto ra = a.tick(now);
    const auto rb = b.tick(now + shift);
    CHECK(ra == rb);
  }
}

TEST_CASE("total self time and thread count") {
  ElevationEngine eng(6 * kSec);
  eng.apply(ThreadId{1}, figure3());
  eng.apply(ThreadId{2}, Events{{7 * kSec, kA, Action::Enter}, {8 * kSec, kA, Action::Exit}});
  CHECK(eng.total_self_time(kA) == 3 * kSec);
  CHECK(eng.thread_count(kA) == 2);
  CHECK(eng.thread_count(kC) == 1);
  CHECK(eng.latest_timestamp() == 8 * kSec);
}
