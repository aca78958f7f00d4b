#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <mutex>
#include <string>
#include <string_view>
#include <unordered_map>
#include <variant>
#include <vector>

#include "perfcity/trace_model.hpp"

namespace perfcity {

class MalformedMessage : public Error {
 public:
  explicit MalformedMessage(const std::string& what, std::size_t line = 0);
  /// 1-based line number when the message came from a file, 0 otherwise.
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

struct RegisterMsg {
  MethodDescriptor method;
  friend bool operator==(const RegisterMsg&, const RegisterMsg&) = default;
};

struct EventsMsg {
  ThreadId thread;
  std::vector<TraceEvent> events;  // non-empty, timestamp-sorted
  friend bool operator==(const EventsMsg&, const EventsMsg&) = default;
};

struct SessionMetaMsg {
  std::string program_name;
  Micros time_origin_micros = 0;
  friend bool operator==(const SessionMetaMsg&, const SessionMetaMsg&) = default;
};

using IngestMessage = std::variant<RegisterMsg, EventsMsg, SessionMetaMsg>;

/// Parses one NDJSON record. Wire forms:
///   {"type":"register","id":7,"method":"run()","class":"C","package":["main"]}
///   {"type":"events","thread":1,"events":[[1000,7,0],[4000,7,1]]}   0=Enter 1=Exit
///   {"type":"session","program":"tetris","time_origin_us":0}
IngestMessage decode_line(std::string_view line);

/// Serializes without the trailing newline.
std::string encode_line(const IngestMessage& msg);

struct IngestStats {
  std::uint64_t messages = 0;
  std::uint64_t events = 0;
  std::uint64_t excluded = 0;
  std::uint64_t out_of_order = 0;
  std::uint64_t malformed = 0;
  std::uint64_t placeholders = 0;
  std::uint64_t conflicts = 0;
};

enum class AcceptStatus { Ok, OutOfOrderBatch };

struct AcceptResult {
  AcceptStatus status = AcceptStatus::Ok;
  std::size_t appended = 0;
  std::size_t excluded = 0;
  std::size_t dropped = 0;
};

/// Events accepted for one thread, waiting for the engine to drain them.
struct PendingBatch {
  ThreadId thread;
  std::vector<TraceEvent> events;
};

/// Registry, exclusion filter and per-thread ordering state of one producer
/// connection. All members are safe to call concurrently; drain() hands the
/// tick loop a consistent prefix of everything accepted so far.
class Session {
 public:
  explicit Session(std::vector<PackagePath> excluded_packages = {});

  /// Returns true if the registry changed.
  bool register_method(const MethodDescriptor& desc);
  AcceptResult accept_events(const EventsMsg& msg);
  void set_meta(const SessionMetaMsg& meta);

  /// Dispatches a decoded message. Registration conflicts propagate.
  void handle(const IngestMessage& msg);

  /// Decodes and handles one line. Malformed lines and registration conflicts
  /// are counted and yield nullopt instead of throwing.
  std::optional<IngestMessage> handle_line(std::string_view line, std::string* error = nullptr);

  struct Drained {
    std::vector<PendingBatch> batches;
    std::uint64_t registry_revision = 0;
  };
  Drained drain();

  bool is_excluded(const MethodDescriptor& desc) const;
  std::optional<MethodDescriptor> lookup(MethodId id) const;

  /// Copy of the non-excluded descriptors, ordered by id.
  std::vector<MethodDescriptor> visible_methods() const;
  std::uint64_t registry_revision() const;
  std::size_t registry_size() const;

  IngestStats stats() const;
  std::optional<SessionMetaMsg> meta() const;
  const std::vector<PackagePath>& excluded_packages() const { return excluded_; }

 private:
  bool excluded_locked(const MethodDescriptor& desc) const;

  mutable std::mutex mu_;
  std::vector<PackagePath> excluded_;
  MethodRegistry registry_;
  std::unordered_map<std::uint64_t, Micros> last_seen_;
  std::vector<PendingBatch> pending_;
  std::optional<SessionMetaMsg> meta_;
  IngestStats stats_;
};

struct TraceLineError {
  std::size_t line = 0;
  std::string message;
};

struct TraceReadResult {
  std::vector<IngestMessage> messages;
  std::vector<TraceLineError> errors;
};

/// Reads a newline-delimited trace. Each line is decoded independently; bad
/// lines are reported with their 1-based number and skipped. A first record that
/// is not a session record is reported as an error on line 1. Throws
/// std::filesystem::filesystem_error on I/O failure.
TraceReadResult read_trace_file(const std::filesystem::path& path);
TraceReadResult read_trace(std::istream& in);

void write_trace_file(const std::filesystem::path& path, const std::vector<IngestMessage>& messages);
void write_trace(std::ostream& out, const std::vector<IngestMessage>& messages);

}  // namespace perfcity
