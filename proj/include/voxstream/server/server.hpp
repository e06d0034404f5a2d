#pragma once

#include <array>
#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <thread>
#include <vector>

#include "voxstream/common/clock.hpp"
#include "voxstream/hash/block_store.hpp"
#include "voxstream/hash/stream_set.hpp"
#include "voxstream/mc/mc_block.hpp"
#include "voxstream/net/channel.hpp"
#include "voxstream/wire/messages.hpp"

namespace voxstream {

struct ServerConfig {
  float voxel_size = 0.005f;
  /// Model maps and every per-client stream set.
  HashConfig hash{};
  Codec codec = Codec::kZstd;
  std::chrono::seconds retention{3600};
  /// Upper bound applied to BLOCK_REQUEST max_blocks.
  std::uint32_t max_request = 4096;
  /// Relay texture images to every exploration client, not only requesters.
  bool texture_broadcast = false;
  double pose_rate_hz = 20.0;
  /// Threads for MC recomputation of one batch.
  unsigned workers = 1;

  void validate() const;
};

/// Per-message-type byte totals, header included.
struct TrafficCounters {
  std::array<std::atomic<std::uint64_t>, 16> in{};
  std::array<std::atomic<std::uint64_t>, 16> out{};

  void count_in(MessageType t, std::size_t n) { in[static_cast<std::size_t>(t) & 15] += n; }
  void count_out(MessageType t, std::size_t n) { out[static_cast<std::size_t>(t) & 15] += n; }
  std::uint64_t received(MessageType t) const { return in[static_cast<std::size_t>(t) & 15].load(); }
  std::uint64_t sent(MessageType t) const { return out[static_cast<std::size_t>(t) & 15].load(); }
};

struct SessionInfo {
  ClientId client_id{};
  ClientRole role = ClientRole::kExploration;
  bool connected = false;
  std::size_t pending = 0;
};

/// Central model and session state. Transport-agnostic: `accept` turns any
/// Channel into a connection handler, so it plugs into NetService listeners
/// for both TCP and WebSocket.
///
/// Exploration clients request blocks stop-and-wait. The keys of the latest
/// MC_BATCH stay "unconfirmed" until the next request arrives and go back into
/// the stream set if the connection drops first. DELETE_BLOCKS are confirmed
/// one request later than batches (a request proves receipt of everything
/// sent before the previous response) and are re-sent on resume otherwise.
/// For reconstruction clients the server counts processed TSDF_BATCH and
/// RESET_BLOCKS messages; HELLO_ACK and STATS reports carry that count so the
/// client can re-send whatever was lost.
class Server {
 public:
  explicit Server(ServerConfig cfg);
  ~Server();
  Server(const Server&) = delete;
  Server& operator=(const Server&) = delete;

  /// Handler for a newly accepted connection.
  std::shared_ptr<MessageHandler> accept(std::shared_ptr<Channel> channel);

  /// Starts the pose/retention/metrics ticker. An empty path disables the CSV.
  void start(const std::string& metrics_csv = {});
  void stop();

  /// Sends coalesced POSE_BROADCASTs that are due at `now`.
  void tick_pose_broadcast(Clock::time_point now);
  /// Drops disconnected sessions older than the retention window.
  std::size_t expire_sessions(Clock::time_point now);

  const ServerConfig& config() const { return cfg_; }
  std::size_t tsdf_size() const { return tsdf_.size(); }
  std::size_t mc_size() const { return mc_.size(); }
  std::vector<BlockKey> mc_keys() const { return mc_.keys(); }
  std::vector<BlockKey> tsdf_keys() const { return tsdf_.keys(); }
  std::optional<McVoxels> mc_block(const BlockKey& key) const { return mc_.get(key); }
  std::optional<TsdfVoxels> tsdf_block(const BlockKey& key) const { return tsdf_.get(key); }
  std::vector<SessionInfo> sessions() const;
  /// Stream-set size of an exploration session.
  std::optional<std::size_t> pending(const ClientId& id) const;
  /// Reliable messages processed for a reconstruction client.
  std::uint64_t rc_processed(const ClientId& id) const;
  const TrafficCounters& traffic() const { return traffic_; }

  /// Model updates as the network path applies them (exposed for tests).
  void apply_tsdf_batch(const TsdfBatch& batch);
  void apply_reset(const std::vector<BlockKey>& keys);

 private:
  friend class ServerConnection;
  struct Session;

  void on_hello(const std::shared_ptr<Channel>& ch, const Hello& hello, std::shared_ptr<Session>& out);
  void on_disconnect(const std::shared_ptr<Session>& s, const std::shared_ptr<Channel>& ch);
  void on_block_request(Session& s, const BlockRequest& req);
  void on_pose(Session& s, const PoseUpdate& p);
  void on_texture_request(const std::shared_ptr<Session>& s);
  void on_texture_image(const Message& m);
  void on_rc_stats(const Stats& st, Session& rc);
  void on_reset_request(Session& s);
  void on_stats_query(Session& s);

  void apply_batch_locked(const TsdfBatch& batch, std::unique_lock<std::mutex>& model);
  void apply_reset_locked(const std::vector<BlockKey>& keys);
  std::vector<BlockKey> extract(Session& s, const BlockRequest& req, std::uint32_t n);
  void recompute_and_queue(const std::vector<BlockKey>& updated);
  std::vector<std::shared_ptr<Session>> sessions_of(ClientRole role) const;
  std::shared_ptr<Session> connected_rc() const;
  bool send_locked(Session& s, MessageType type, std::vector<std::uint8_t> frame);
  void send_to(Session& s, MessageType type, std::vector<std::uint8_t> frame);
  void detach_locked(Session& s);
  void ticker_loop(std::string metrics_csv);

  ServerConfig cfg_;
  BlockStore<TsdfVoxels> tsdf_;
  BlockStore<McVoxels> mc_;
  std::mutex model_mu_;

  mutable std::shared_mutex sessions_mu_;
  std::map<ClientId, std::shared_ptr<Session>> sessions_;

  std::mutex texture_mu_;
  std::vector<std::shared_ptr<Session>> texture_waiters_;
  bool texture_outstanding_ = false;

  TrafficCounters traffic_;

  std::mutex ticker_mu_;
  std::condition_variable ticker_cv_;
  bool ticker_stop_ = false;
  std::thread ticker_;
};

}  // namespace voxstream
