#pragma once

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "voxstream/wire/framing.hpp"

namespace voxstream {

/// Receives the messages of one connection, in order, on the connection's
/// dispatch thread. on_close runs exactly once, after the last on_message.
class MessageHandler {
 public:
  virtual ~MessageHandler() = default;
  virtual void on_message(Message&& message) = 0;
  virtual void on_close() = 0;
};

/// One framed, bidirectional connection (raw TCP or WebSocket).
class Channel {
 public:
  virtual ~Channel() = default;
  /// Queues one complete encoded frame. Blocks while the outgoing queue is
  /// above its byte limit. Returns false once the channel is closing.
  virtual bool send(std::vector<std::uint8_t> frame) = 0;
  /// Flushes queued frames, then closes.
  virtual void close() = 0;
  /// Closes immediately, dropping queued frames.
  virtual void abort() = 0;
  virtual bool is_open() const = 0;
  virtual std::string peer() const = 0;
  virtual std::uint64_t bytes_sent() const = 0;
  virtual std::uint64_t bytes_received() const = 0;
};

struct Endpoint {
  std::string host = "127.0.0.1";
  std::uint16_t port = 0;
  std::string to_string() const { return host + ":" + std::to_string(port); }
};

/// Parses "host:port" (":port" means all interfaces for listeners).
Endpoint parse_endpoint(const std::string& s);

enum class Transport { kTcp, kWebSocket };

inline constexpr std::uint16_t kDefaultTcpPort = 7801;
inline constexpr std::uint16_t kDefaultWsPort = 7802;
inline constexpr const char* kWebSocketPath = "/ws";

/// Handler that queues messages for a consumer thread.
class Inbox : public MessageHandler {
 public:
  void on_message(Message&& message) override;
  void on_close() override;
  /// Next message, or nullopt on timeout or once closed and drained.
  std::optional<Message> receive(std::chrono::milliseconds timeout);
  bool closed() const;

 private:
  mutable std::mutex mu_;
  std::condition_variable cv_;
  std::deque<Message> queue_;
  bool closed_ = false;
};

}  // namespace voxstream
