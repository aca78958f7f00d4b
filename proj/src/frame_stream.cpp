#include "perfcity/frame_stream.hpp"

#include <algorithm>
#include <cmath>

#include "json.hpp"

namespace perfcity {

using ojson = nlohmann::ordered_json;

double round_elevation(double value) {
  constexpr double kScale = 10000.0;
  constexpr double kTieTolerance = 1e-9;
  const double scaled = value * kScale;
  const double floor = std::floor(scaled);
  const double frac = scaled - floor;
  double rounded;
  if (std::abs(frac - 0.5) <= kTieTolerance)
    rounded = std::fmod(floor, 2.0) == 0.0 ? floor : floor + 1.0;
  else
    rounded = std::round(scaled);
  return rounded / kScale;
}

Frame compose_frame(std::span<const ElevationRow> rows, std::uint64_t rev, Micros t_micros) {
  Frame f;
  f.rev = rev;
  f.t_micros = t_micros;
  f.rows.reserve(rows.size());
  for (const auto& r : rows) f.rows.push_back({r.method, round_elevation(r.elevation), r.thread_count});
  std::sort(f.rows.begin(), f.rows.end(),
            [](const FrameRow& a, const FrameRow& b) { return a.method < b.method; });
  return f;
}

std::string hello_message(const StreamSettings& settings) {
  ojson j;
  j["type"] = "hello";
  j["version"] = 1;
  j["window_ms"] = settings.window_micros / 1000;
  j["tick_ms"] = settings.tick_micros / 1000;
  return j.dump();
}

namespace {

ojson rect_json(const Rect& r) { return ojson::array({r.x, r.z, r.width, r.depth}); }

ojson block_json(const Block& b) {
  ojson j;
  j["kind"] = "block";
  j["class"] = b.class_name;
  j["rect"] = rect_json(b.area);
  auto& plots = j["plots"] = ojson::array();
  for (const auto& p : b.plots) plots.push_back({p.method.value, p.x, p.z});
  return j;
}

ojson district_json(const District& d) {
  ojson j;
  j["kind"] = "district";
  j["package"] = d.package_path;
  j["depth"] = d.depth;
  j["methods"] = d.method_count;
  j["rect"] = rect_json(d.area);
  auto& children = j["children"] = ojson::array();
  for (const auto& c : d.children) {
    if (const auto* b = std::get_if<Block>(&c))
      children.push_back(block_json(*b));
    else
      children.push_back(district_json(*std::get<std::unique_ptr<District>>(c)));
  }
  return j;
}

}  // namespace

std::string structure_message(std::uint64_t rev, std::span<const MethodDescriptor> methods,
                              const CityLayout* layout) {
  ojson j;
  j["type"] = "structure";
  j["rev"] = rev;
  auto& table = j["methods"] = ojson::array();
  for (const auto& m : methods) {
    ojson row;
    row["id"] = m.id.value;
    row["method"] = m.method_name;
    row["class"] = m.class_name;
    row["package"] = m.package_path;
    table.push_back(std::move(row));
  }
  ojson lay;
  if (layout) {
    lay["bounds"] = rect_json(layout->bounds);
    auto& districts = lay["districts"] = ojson::array();
    for (const auto& d : layout->districts) districts.push_back(district_json(d));
  } else {
    lay["bounds"] = rect_json({});
    lay["districts"] = ojson::array();
  }
  j["layout"] = std::move(lay);
  return j.dump();
}

std::string frame_message(const Frame& frame) {
  ojson j;
  j["type"] = "frame";
  j["rev"] = frame.rev;
  j["t_us"] = frame.t_micros;
  auto& rows = j["rows"] = ojson::array();
  for (const auto& r : frame.rows) rows.push_back({r.method.value, r.elevation, r.thread_count});
  return j.dump();
}

// Subscriber

void Subscriber::push(OutboundMessage msg, const OutboundMessage* latest_structure) {
  {
    std::lock_guard lock(mu_);
    if (closed_) return;
    if (msg.kind == MessageKind::Frame && frames_ >= kMaxLag) {
      queue_.clear();
      frames_ = 0;
      ++resyncs_;
      if (latest_structure && latest_structure->body) queue_.push_back(*latest_structure);
    }
    if (msg.kind == MessageKind::Frame) ++frames_;
    queue_.push_back(std::move(msg));
  }
  cv_.notify_one();
}

std::optional<OutboundMessage> Subscriber::pop(std::chrono::milliseconds timeout) {
  std::unique_lock lock(mu_);
  cv_.wait_for(lock, timeout, [&] { return closed_ || !queue_.empty(); });
  if (queue_.empty()) return std::nullopt;
  auto msg = std::move(queue_.front());
  queue_.pop_front();
  if (msg.kind == MessageKind::Frame) --frames_;
  return msg;
}

std::vector<OutboundMessage> Subscriber::pop_all() {
  std::lock_guard lock(mu_);
  std::vector<OutboundMessage> out(std::make_move_iterator(queue_.begin()),
                                   std::make_move_iterator(queue_.end()));
  queue_.clear();
  frames_ = 0;
  return out;
}

void Subscriber::close() {
  {
    std::lock_guard lock(mu_);
    closed_ = true;
  }
  cv_.notify_all();
}

bool Subscriber::closed() const {
  std::lock_guard lock(mu_);
  return closed_;
}

std::uint64_t Subscriber::resyncs() const {
  std::lock_guard lock(mu_);
  return resyncs_;
}

std::size_t Subscriber::queued_frames() const {
  std::lock_guard lock(mu_);
  return frames_;
}

// Broadcaster

Broadcaster::Broadcaster(StreamSettings settings) : settings_(settings) {
  hello_ = {MessageKind::Hello, 0, std::make_shared<const std::string>(hello_message(settings_))};
  structure_ = {MessageKind::Structure, 0,
                std::make_shared<const std::string>(structure_message(0, {}, nullptr))};
}

std::shared_ptr<Subscriber> Broadcaster::subscribe() {
  auto sub = std::make_shared<Subscriber>();
  std::lock_guard lock(mu_);
  sub->push(hello_, nullptr);
  sub->push(structure_, nullptr);
  subs_.push_back(sub);
  return sub;
}

void Broadcaster::unsubscribe(const std::shared_ptr<Subscriber>& sub) {
  sub->close();
  std::lock_guard lock(mu_);
  std::erase(subs_, sub);
}

void Broadcaster::publish(OutboundMessage msg) {
  std::lock_guard lock(mu_);
  if (msg.kind == MessageKind::Structure) structure_ = msg;
  for (const auto& sub : subs_) sub->push(msg, &structure_);
}

void Broadcaster::publish_structure(std::uint64_t rev, std::string body) {
  publish({MessageKind::Structure, rev, std::make_shared<const std::string>(std::move(body))});
}

void Broadcaster::publish_frame(std::uint64_t rev, std::string body) {
  publish({MessageKind::Frame, rev, std::make_shared<const std::string>(std::move(body))});
}

std::size_t Broadcaster::subscriber_count() const {
  std::lock_guard lock(mu_);
  return subs_.size();
}

std::uint64_t Broadcaster::latest_rev() const {
  std::lock_guard lock(mu_);
  return structure_.rev;
}

}  // namespace perfcity
