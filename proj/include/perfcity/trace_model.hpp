#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <tuple>
#include <stdexcept>
#include <string>
#include <vector>

namespace perfcity {

/// Producer-supplied timestamp or duration in microseconds.
using Micros = std::int64_t;

/// Base class of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConflictingRegistration : public Error {
 public:
  using Error::Error;
};

struct MethodId {
  std::uint32_t value = 0;
  friend auto operator<=>(const MethodId&, const MethodId&) = default;
};

struct ThreadId {
  std::uint64_t value = 0;
  friend auto operator<=>(const ThreadId&, const ThreadId&) = default;
};

enum class Action : std::uint8_t { Enter = 0, Exit = 1 };

struct TraceEvent {
  Micros timestamp = 0;
  MethodId method;
  Action action = Action::Enter;
  friend bool operator==(const TraceEvent&, const TraceEvent&) = default;
};

using PackagePath = std::vector<std::string>;

struct MethodDescriptor {
  MethodId id;
  std::string method_name;
  std::string class_name;
  PackagePath package_path;  // outermost first; empty for the default package

  friend bool operator==(const MethodDescriptor&, const MethodDescriptor&) = default;

  /// True for descriptors synthesized for ids seen in events before registration.
  bool is_placeholder() const;
  static MethodDescriptor placeholder(MethodId id);
};

/// Sliding window [end - length, end].
struct Window {
  Micros length_micros = 3'000'000;
  Micros end_micros = 0;

  Window() = default;
  Window(Micros length, Micros end);
  Micros start_micros() const { return end_micros - length_micros; }
};

/// True when `path` starts with every element of `prefix`.
bool has_prefix(const PackagePath& path, const PackagePath& prefix);

/// Parses "org.ini4j" into {"org", "ini4j"}. An empty string is the default package.
PackagePath split_package(const std::string& dotted);
std::string join_package(const PackagePath& path);

/// Identity and placement of every known method in a session.
///
/// Writes are serialized by the owner; readers either hold the owner's lock or
/// work on a copy obtained through snapshot().
class MethodRegistry {
 public:
  /// Returns true if the registry changed. Re-registering identical content is a
  /// no-op; a real descriptor replaces a placeholder for the same id.
  bool register_method(const MethodDescriptor& desc);

  std::optional<MethodDescriptor> lookup(MethodId id) const;
  bool contains(MethodId id) const { return by_id_.count(id.value) != 0; }
  std::size_t size() const { return by_id_.size(); }
  bool empty() const { return by_id_.empty(); }

  /// Bumped on every accepted change; used to detect structure revisions.
  std::uint64_t revision() const { return revision_; }

  /// Descriptors ordered by id.
  std::vector<MethodDescriptor> descriptors() const;

 private:
  using Key = std::tuple<PackagePath, std::string, std::string>;
  static Key key_of(const MethodDescriptor& d);

  std::map<std::uint32_t, MethodDescriptor> by_id_;
  std::map<Key, std::uint32_t> by_name_;
  std::uint64_t revision_ = 0;
};

}  // namespace perfcity
