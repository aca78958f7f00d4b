#include <random>

#include "doctest.h"
#include "perfcity/ingest.hpp"
#include "perfcity/trace_model.hpp"

using namespace perfcity;

namespace {
MethodDescriptor run_desc() { return {MethodId{7}, "run()", "MainSinglePlayerThread", {"main"}}; }
}  // namespace

TEST_CASE("register into an empty registry") {
  MethodRegistry reg;
  CHECK(reg.register_method(run_desc()));
  CHECK(reg.size() == 1);
  CHECK(reg.lookup(MethodId{7})->method_name == "run()");
}

TEST_CASE("re-registering identical content is a no-op") {
  MethodRegistry reg;
  reg.register_method(run_desc());
  const auto rev = reg.revision();
  CHECK_FALSE(reg.register_method(run_desc()));
  CHECK(reg.size() == 1);
  CHECK(reg.revision() == rev);
}

TEST_CASE("binding a registered id to a different method conflicts") {
  MethodRegistry reg;
  reg.register_method(run_desc());
  auto other = run_desc();
  other.method_name = "stop()";
  CHECK_THROWS_AS(reg.register_method(other), ConflictingRegistration);
  CHECK(reg.lookup(MethodId{7})->method_name == "run()");
}

TEST_CASE("the same qualified name under two ids conflicts") {
  MethodRegistry reg;
  reg.register_method(run_desc());
  auto dup = run_desc();
  dup.id = MethodId{8};
  CHECK_THROWS_AS(reg.register_method(dup), ConflictingRegistration);
  CHECK(reg.size() == 1);
}

TEST_CASE("empty method names are rejected") {
  MethodRegistry reg;
  auto d = run_desc();
  d.method_name.clear();
  CHECK_THROWS_AS(reg.register_method(d), Error);
}

TEST_CASE("lookup of unknown ids is absent") {
  MethodRegistry reg;
  CHECK_FALSE(reg.lookup(MethodId{99}).has_value());
}

TEST_CASE("placeholder from an early event, then the real descriptor replaces it") {
  Session session;
  session.accept_events(EventsMsg{ThreadId{1}, {{0, MethodId{99}, Action::Enter}}});
  auto placeholder = session.lookup(MethodId{99});
  REQUIRE(placeholder);
  CHECK(placeholder->method_name == "method#99");
  CHECK(placeholder->class_name == "?");
  CHECK(placeholder->package_path.empty());
  CHECK(placeholder->is_placeholder());

  const auto rev = session.registry_revision();
  CHECK(session.register_method({MethodId{99}, "tick()", "Board", {"game"}}));
  CHECK(session.registry_revision() > rev);
  CHECK(session.lookup(MethodId{99})->method_name == "tick()");
  CHECK(session.registry_size() == 1);
}

TEST_CASE("property: lookup returns the last accepted descriptor per id") {
  std::mt19937_64 rng(11);
  for (int round = 0; round < 50; ++round) {
    MethodRegistry reg;
    std::map<std::uint32_t, MethodDescriptor> expected;
    for (int i = 0; i < 200; ++i) {
      const auto id = static_cast<std::uint32_t>(rng() % 40);
      MethodDescriptor d = rng() % 3 == 0
                               ? MethodDescriptor::placeholder(MethodId{id})
                               : MethodDescriptor{MethodId{id}, "m" + std::to_string(id) + "()",
                                                  "C" + std::to_string(rng() % 2), {"p"}};
      try {
        reg.register_method(d);
        expected[id] = d;
      } catch (const ConflictingRegistration&) {
        // rejected: previous binding stays
      }
    }
    CHECK(reg.size() == expected.size());
    for (const auto& [id, d] : expected) CHECK(reg.lookup(MethodId{id}) == d);
  }
}

TEST_CASE("window validation and bounds") {
  CHECK_THROWS_AS(Window(0, 10), Error);
  CHECK_THROWS_AS(Window(-5, 10), Error);
  Window w(3'000'000, 10'000'000);
  CHECK(w.start_micros() == 7'000'000);
}

TEST_CASE("package paths") {
  CHECK(split_package("org.ini4j.spi") == PackagePath{"org", "ini4j", "spi"});
  CHECK(split_package("").empty());
  CHECK(join_package({"org", "ini4j"}) == "org.ini4j");
  CHECK(has_prefix({"org", "ini4j", "spi"}, {"org", "ini4j"}));
  CHECK_FALSE(has_prefix({"org"}, {"org", "ini4j"}));
  CHECK_FALSE(has_prefix({"org", "ini4jx"}, {"org", "ini4j"}));
  CHECK(has_prefix({"anything"}, {}));
}
