#pragma once

#include <chrono>
#include <condition_variable>
#include <deque>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "perfcity/engine.hpp"
#include "perfcity/layout.hpp"

namespace perfcity {

struct FrameRow {
  MethodId method;
  double elevation = 0.0;  // rounded to 4 decimals
  std::uint32_t thread_count = 0;
  friend bool operator==(const FrameRow&, const FrameRow&) = default;
};

struct Frame {
  std::uint64_t rev = 0;
  Micros t_micros = 0;
  std::vector<FrameRow> rows;  // ordered by method id
  friend bool operator==(const Frame&, const Frame&) = default;
};

/// Rounds to 4 decimals, ties to even. Values within 1e-9 of a half step count as
/// ties so that decimal inputs such as 0.33335 round the way they read.
double round_elevation(double value);

Frame compose_frame(std::span<const ElevationRow> rows, std::uint64_t rev, Micros t_micros = 0);

struct StreamSettings {
  Micros window_micros = 3'000'000;
  Micros tick_micros = 100'000;
};

std::string hello_message(const StreamSettings& settings);
/// Self-contained structure snapshot. `layout` may be null for an empty city.
std::string structure_message(std::uint64_t rev, std::span<const MethodDescriptor> methods,
                              const CityLayout* layout);
std::string frame_message(const Frame& frame);

enum class MessageKind { Hello, Structure, Frame };

struct OutboundMessage {
  MessageKind kind = MessageKind::Frame;
  std::uint64_t rev = 0;
  std::shared_ptr<const std::string> body;
};

/// Bounded outbound queue of one connected client.
class Subscriber {
 public:
  static constexpr std::size_t kMaxLag = 50;

  /// Blocks until a message is available, the subscriber is closed or the
  /// timeout elapses.
  std::optional<OutboundMessage> pop(std::chrono::milliseconds timeout);
  std::vector<OutboundMessage> pop_all();
  void close();
  bool closed() const;

  std::uint64_t resyncs() const;
  std::size_t queued_frames() const;

 private:
  friend class Broadcaster;
  void push(OutboundMessage msg, const OutboundMessage* latest_structure);

  mutable std::mutex mu_;
  std::condition_variable cv_;
  std::deque<OutboundMessage> queue_;
  std::size_t frames_ = 0;
  std::uint64_t resyncs_ = 0;
  bool closed_ = false;
};

/// Fans structure and frame messages out to every subscriber. A new subscriber
/// starts with hello and the latest structure; a subscriber more than kMaxLag
/// frames behind has its backlog replaced by the latest structure and frame.
class Broadcaster {
 public:
  explicit Broadcaster(StreamSettings settings = {});

  std::shared_ptr<Subscriber> subscribe();
  void unsubscribe(const std::shared_ptr<Subscriber>& sub);

  void publish_structure(std::uint64_t rev, std::string body);
  void publish_frame(std::uint64_t rev, std::string body);

  std::size_t subscriber_count() const;
  std::uint64_t latest_rev() const;
  const StreamSettings& settings() const { return settings_; }

 private:
  void publish(OutboundMessage msg);

  StreamSettings settings_;
  mutable std::mutex mu_;
  std::vector<std::shared_ptr<Subscriber>> subs_;
  OutboundMessage hello_;
  OutboundMessage structure_;
};

}  // namespace perfcity
