#pragma once

#include <functional>
#include <memory>

#include "voxstream/net/channel.hpp"

namespace voxstream {

/// Creates the handler of a freshly accepted connection.
using AcceptFn = std::function<std::shared_ptr<MessageHandler>(std::shared_ptr<Channel>)>;

struct ChannelLimits {
  std::size_t max_outgoing_bytes = 64u << 20;
  std::size_t max_incoming_bytes = 64u << 20;
};

/// Event loop threads plus the connections and listeners running on them.
/// Destruction aborts every connection and waits for their handlers.
class NetService {
 public:
  explicit NetService(unsigned io_threads = 1, ChannelLimits limits = {});
  ~NetService();
  NetService(const NetService&) = delete;
  NetService& operator=(const NetService&) = delete;

  /// Starts accepting; returns the bound port (useful with port 0).
  std::uint16_t listen(Transport transport, const Endpoint& at, AcceptFn on_accept);

  /// Blocking connect (and WebSocket handshake); throws std::runtime_error.
  std::shared_ptr<Channel> connect(Transport transport, const Endpoint& to, std::shared_ptr<MessageHandler> handler);

  /// Stops listeners, aborts all connections and waits for their handlers.
  void shutdown();

  std::size_t live_connections() const;

  struct Impl;

 private:
  std::unique_ptr<Impl> impl_;
};

}  // namespace voxstream
