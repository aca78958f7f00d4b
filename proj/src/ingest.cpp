#include "perfcity/ingest.hpp"

#include <fstream>
#include <limits>

#include "json.hpp"

namespace perfcity {

using nlohmann::json;

MalformedMessage::MalformedMessage(const std::string& what, std::size_t line)
    : Error(line ? "line " + std::to_string(line) + ": " + what : what), line_(line) {}

namespace {

const json& field(const json& obj, const char* name) {
  auto it = obj.find(name);
  if (it == obj.end()) throw MalformedMessage(std::string("missing field '") + name + "'");
  return *it;
}

std::uint64_t as_unsigned(const json& v, const char* what, std::uint64_t max) {
  if (!v.is_number_unsigned()) throw MalformedMessage(std::string(what) + " must be a non-negative integer");
  const auto n = v.get<std::uint64_t>();
  if (n > max) throw MalformedMessage(std::string(what) + " out of range");
  return n;
}

std::string as_string(const json& v, const char* what) {
  if (!v.is_string()) throw MalformedMessage(std::string(what) + " must be a string");
  return v.get<std::string>();
}

constexpr auto kMaxU32 = std::numeric_limits<std::uint32_t>::max();
constexpr auto kMaxU64 = std::numeric_limits<std::uint64_t>::max();
constexpr auto kMaxTimestamp = static_cast<std::uint64_t>(std::numeric_limits<Micros>::max());

RegisterMsg decode_register(const json& obj) {
  RegisterMsg msg;
  auto& d = msg.method;
  d.id = MethodId{static_cast<std::uint32_t>(as_unsigned(field(obj, "id"), "id", kMaxU32))};
  d.method_name = as_string(field(obj, "method"), "method");
  if (d.method_name.empty()) throw MalformedMessage("method must be non-empty");
  d.class_name = as_string(field(obj, "class"), "class");
  const auto& pkg = field(obj, "package");
  if (!pkg.is_array()) throw MalformedMessage("package must be an array of strings");
  for (const auto& part : pkg) d.package_path.push_back(as_string(part, "package element"));
  return msg;
}

EventsMsg decode_events(const json& obj) {
  EventsMsg msg;
  msg.thread = ThreadId{as_unsigned(field(obj, "thread"), "thread", kMaxU64)};
  const auto& events = field(obj, "events");
  if (!events.is_array()) throw MalformedMessage("events must be an array");
  if (events.empty()) throw MalformedMessage("events must be non-empty");
  msg.events.reserve(events.size());
  for (const auto& e : events) {
    if (!e.is_array() || e.size() != 3) throw MalformedMessage("event must be [timestamp, id, action]");
    TraceEvent ev;
    ev.timestamp = static_cast<Micros>(as_unsigned(e[0], "timestamp", kMaxTimestamp));
    ev.method = MethodId{static_cast<std::uint32_t>(as_unsigned(e[1], "method id", kMaxU32))};
    const auto action = as_unsigned(e[2], "action", kMaxU64);
    if (action > 1) throw MalformedMessage("action must be 0 (enter) or 1 (exit)");
    ev.action = action == 0 ? Action::Enter : Action::Exit;
    if (!msg.events.empty() && ev.timestamp < msg.events.back().timestamp)
      throw MalformedMessage("events must be sorted by timestamp");
    msg.events.push_back(ev);
  }
  return msg;
}

SessionMetaMsg decode_meta(const json& obj) {
  SessionMetaMsg msg;
  msg.program_name = as_string(field(obj, "program"), "program");
  msg.time_origin_micros =
      static_cast<Micros>(as_unsigned(field(obj, "time_origin_us"), "time_origin_us", kMaxTimestamp));
  return msg;
}

}  // namespace

IngestMessage decode_line(std::string_view line) {
  while (!line.empty() && (line.back() == '\n' || line.back() == '\r')) line.remove_suffix(1);
  json obj;
  try {
    obj = json::parse(line);
  } catch (const json::parse_error& e) {
    throw MalformedMessage(std::string("bad syntax: ") + e.what());
  }
  if (!obj.is_object()) throw MalformedMessage("record must be a JSON object");
  const auto type = as_string(field(obj, "type"), "type");
  if (type == "events") return decode_events(obj);
  if (type == "register") return decode_register(obj);
  if (type == "session") return decode_meta(obj);
  throw MalformedMessage("unknown type '" + type + "'");
}

std::string encode_line(const IngestMessage& msg) {
  nlohmann::ordered_json out;
  if (const auto* reg = std::get_if<RegisterMsg>(&msg)) {
    out["type"] = "register";
    out["id"] = reg->method.id.value;
    out["method"] = reg->method.method_name;
    out["class"] = reg->method.class_name;
    out["package"] = reg->method.package_path;
  } else if (const auto* ev = std::get_if<EventsMsg>(&msg)) {
    out["type"] = "events";
    out["thread"] = ev->thread.value;
    auto& arr = out["events"] = nlohmann::ordered_json::array();
    for (const auto& e : ev->events)
      arr.push_back({e.timestamp, e.method.value, static_cast<int>(e.action)});
  } else {
    const auto& meta = std::get<SessionMetaMsg>(msg);
    out["type"] = "session";
    out["program"] = meta.program_name;
    out["time_origin_us"] = meta.time_origin_micros;
  }
  return out.dump();
}

// Session

Session::Session(std::vector<PackagePath> excluded_packages) : excluded_(std::move(excluded_packages)) {}

bool Session::excluded_locked(const MethodDescriptor& desc) const {
  for (const auto& prefix : excluded_)
    if (has_prefix(desc.package_path, prefix)) return true;
  return false;
}

bool Session::is_excluded(const MethodDescriptor& desc) const {
  std::lock_guard lock(mu_);
  return excluded_locked(desc);
}

bool Session::register_method(const MethodDescriptor& desc) {
  std::lock_guard lock(mu_);
  return registry_.register_method(desc);
}

AcceptResult Session::accept_events(const EventsMsg& msg) {
  std::lock_guard lock(mu_);
  AcceptResult result;
  auto seen = last_seen_.try_emplace(msg.thread.value, std::numeric_limits<Micros>::min()).first;

  PendingBatch batch{msg.thread, {}};
  batch.events.reserve(msg.events.size());
  for (const auto& e : msg.events) {
    if (e.timestamp < seen->second) {
      ++result.dropped;
      continue;
    }
    seen->second = e.timestamp;
    auto desc = registry_.lookup(e.method);
    if (!desc) {
      registry_.register_method(MethodDescriptor::placeholder(e.method));
      ++stats_.placeholders;
    } else if (excluded_locked(*desc)) {
      ++result.excluded;
      continue;
    }
    batch.events.push_back(e);
  }
  if (result.dropped) result.status = AcceptStatus::OutOfOrderBatch;
  result.appended = batch.events.size();

  stats_.events += result.appended;
  stats_.excluded += result.excluded;
  stats_.out_of_order += result.dropped;
  if (!batch.events.empty()) {
    if (!pending_.empty() && pending_.back().thread == batch.thread) {
      auto& tail = pending_.back().events;
      tail.insert(tail.end(), batch.events.begin(), batch.events.end());
    } else {
      pending_.push_back(std::move(batch));
    }
  }
  return result;
}

void Session::set_meta(const SessionMetaMsg& meta) {
  std::lock_guard lock(mu_);
  meta_ = meta;
}

void Session::handle(const IngestMessage& msg) {
  {
    std::lock_guard lock(mu_);
    ++stats_.messages;
  }
  if (const auto* reg = std::get_if<RegisterMsg>(&msg)) {
    register_method(reg->method);
  } else if (const auto* ev = std::get_if<EventsMsg>(&msg)) {
    accept_events(*ev);
  } else {
    set_meta(std::get<SessionMetaMsg>(msg));
  }
}

std::optional<IngestMessage> Session::handle_line(std::string_view line, std::string* error) {
  try {
    auto msg = decode_line(line);
    handle(msg);
    return msg;
  } catch (const ConflictingRegistration& e) {
    std::lock_guard lock(mu_);
    ++stats_.conflicts;
    if (error) *error = e.what();
  } catch (const Error& e) {
    std::lock_guard lock(mu_);
    ++stats_.malformed;
    if (error) *error = e.what();
  }
  return std::nullopt;
}

Session::Drained Session::drain() {
  std::lock_guard lock(mu_);
  Drained out;
  out.batches.swap(pending_);
  out.registry_revision = registry_.revision();
  return out;
}

std::optional<MethodDescriptor> Session::lookup(MethodId id) const {
  std::lock_guard lock(mu_);
  return registry_.lookup(id);
}

std::vector<MethodDescriptor> Session::visible_methods() const {
  std::lock_guard lock(mu_);
  std::vector<MethodDescriptor> out;
  for (auto& d : registry_.descriptors())
    if (!excluded_locked(d)) out.push_back(std::move(d));
  return out;
}

std::uint64_t Session::registry_revision() const {
  std::lock_guard lock(mu_);
  return registry_.revision();
}

std::size_t Session::registry_size() const {
  std::lock_guard lock(mu_);
  return registry_.size();
}

IngestStats Session::stats() const {
  std::lock_guard lock(mu_);
  return stats_;
}

std::optional<SessionMetaMsg> Session::meta() const {
  std::lock_guard lock(mu_);
  return meta_;
}

// Trace files

TraceReadResult read_trace(std::istream& in) {
  TraceReadResult result;
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    try {
      auto msg = decode_line(line);
      if (number == 1 && !std::holds_alternative<SessionMetaMsg>(msg))
        result.errors.push_back({1, "first record must be a session record"});
      result.messages.push_back(std::move(msg));
    } catch (const MalformedMessage& e) {
      result.errors.push_back({number, e.what()});
    }
  }
  return result;
}

TraceReadResult read_trace_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw std::filesystem::filesystem_error("cannot open trace", path,
                                            std::make_error_code(std::errc::no_such_file_or_directory));
  return read_trace(in);
}

void write_trace(std::ostream& out, const std::vector<IngestMessage>& messages) {
  for (const auto& msg : messages) out << encode_line(msg) << '\n';
}

void write_trace_file(const std::filesystem::path& path, const std::vector<IngestMessage>& messages) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out)
    throw std::filesystem::filesystem_error("cannot create trace", path,
                                            std::make_error_code(std::errc::permission_denied));
  write_trace(out, messages);
  out.flush();
  if (!out)
    throw std::filesystem::filesystem_error("write failed", path, std::make_error_code(std::errc::io_error));
}

}  // namespace perfcity
