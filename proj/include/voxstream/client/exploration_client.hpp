#pragma once

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include "voxstream/common/clock.hpp"
#include "voxstream/hash/block_store.hpp"
#include "voxstream/mc/mesh.hpp"
#include "voxstream/net/io.hpp"
#include "voxstream/wire/messages.hpp"

namespace voxstream {

/// Eye and look-at target at time t (seconds since start).
struct PoseWaypoint {
  double t = 0.0;
  Eigen::Vector3f eye = Eigen::Vector3f::Zero();
  Eigen::Vector3f target = Eigen::Vector3f::UnitZ();
};

/// Piecewise-linear camera path; held constant outside the waypoint range.
/// Empty scripts yield the identity pose.
class PoseScript {
 public:
  PoseScript() = default;
  /// Throws std::invalid_argument unless times are strictly increasing.
  explicit PoseScript(std::vector<PoseWaypoint> waypoints);
  /// One waypoint per line: "t ex ey ez tx ty tz"; '#' starts a comment.
  static PoseScript load(const std::filesystem::path& path);
  static PoseScript fixed(const Pose& pose);

  Pose at(double t) const;
  bool empty() const { return waypoints_.empty() && !fixed_; }
  const std::vector<PoseWaypoint>& waypoints() const { return waypoints_; }

 private:
  std::vector<PoseWaypoint> waypoints_;
  std::optional<Pose> fixed_;
};

/// The exploration client's copy of the model: MC blocks, the member index
/// of each 15^3 mesh-block region, dirty regions and built mesh blocks.
class LocalModel {
 public:
  LocalModel(HashConfig hash, float voxel_size);

  /// Upserts every block and marks its region dirty. Returns the block count.
  std::size_t apply_batch(const McBatch& batch);
  /// Removes blocks and marks their regions dirty. Returns the number removed.
  std::size_t apply_delete(const std::vector<BlockKey>& keys);
  void clear();

  /// Triangulates up to `budget` dirty regions (lowest keys first) and clears
  /// their dirty flags. Regions left without members lose their mesh block.
  std::size_t rebuild_dirty(std::size_t budget, unsigned threads = 1);
  std::size_t dirty_count() const;
  std::vector<BlockKey> dirty_regions() const;
  std::optional<MeshBlock> mesh_block(const BlockKey& region) const;
  std::size_t mesh_block_count() const;
  /// Member keys of a region, sorted.
  std::vector<BlockKey> members(const BlockKey& region) const;

  std::size_t size() const { return blocks_.size(); }
  std::vector<BlockKey> keys() const;
  std::optional<McVoxels> block(const BlockKey& key) const { return blocks_.get(key); }
  float voxel_size() const { return voxel_size_; }

 private:
  void mark_locked(const BlockKey& key, bool present);

  float voxel_size_;
  BlockStore<McVoxels> blocks_;
  // Guards members_ and dirty_; held across a block update and its marking
  // so a rebuild never misses a change.
  mutable std::mutex index_mu_;
  std::map<BlockKey, std::set<BlockKey>> members_;
  std::set<BlockKey> dirty_;
  mutable std::mutex mesh_mu_;
  std::map<BlockKey, MeshBlock> meshes_;
};

/// |local ∩ reference| / |reference|; 1 for an empty reference.
double completeness(const std::vector<BlockKey>& local, const std::vector<BlockKey>& reference);

struct EcConfig {
  Endpoint server{"127.0.0.1", kDefaultTcpPort};
  Transport transport = Transport::kTcp;
  float voxel_size = 0.005f;
  double request_rate_hz = 100.0;
  std::uint32_t max_blocks = 512;
  RequestStrategy strategy = RequestStrategy::kRandom;
  PoseScript poses;
  RequestIntrinsics intrinsics{};
  /// Benchmark mode: count received blocks, keep nothing.
  bool discard = false;
  /// Stop after this many seconds of empty responses; 0 runs until stop().
  double idle_stop_s = 0.0;
  double pose_rate_hz = 10.0;
  /// Regions triangulated per request tick; 0 disables meshing.
  std::size_t rebuild_budget = 8;
  unsigned threads = 1;
  HashConfig hash{};
  ClientId client_id = random_client_id();
  /// A request unanswered this long drops the connection.
  std::chrono::milliseconds response_timeout{10000};

  void validate() const;
};

struct EcStats {
  std::uint64_t requests = 0;
  std::uint64_t responses = 0;
  std::uint64_t empty_responses = 0;
  std::uint64_t blocks_received = 0;
  /// MC_BATCH bytes on the wire, headers included.
  std::uint64_t batch_bytes = 0;
  std::uint64_t delete_messages = 0;
  std::uint64_t blocks_deleted = 0;
  std::uint64_t connects = 0;
  /// Sessions the server did not know (local model cleared).
  std::uint64_t fresh_sessions = 0;
  /// Seconds since start() of the first and last non-empty MC_BATCH.
  double first_block_s = -1.0;
  double last_block_s = -1.0;
};

/// Headless exploration and benchmark client. Requests are stop-and-wait:
/// the next BLOCK_REQUEST leaves after the previous MC_BATCH arrived and the
/// rate period elapsed. Reconnects reuse the client id so the server resumes
/// the session; an unknown session restarts from an empty local model.
class ExplorationClient {
 public:
  explicit ExplorationClient(EcConfig cfg);
  ~ExplorationClient();
  ExplorationClient(const ExplorationClient&) = delete;
  ExplorationClient& operator=(const ExplorationClient&) = delete;

  /// Starts the request loop. An empty path disables the CSV.
  void start(const std::string& metrics_csv = {});
  void stop();
  /// The idle stop condition was reached (the loop has ended).
  bool finished() const;
  bool wait_finished(std::chrono::milliseconds timeout) const;

  void request_reset();
  void request_texture();
  std::optional<TextureImage> latest_texture() const;
  std::vector<PeerPose> peers() const;
  /// Latest STATS report from the server.
  std::optional<Stats> server_report() const;

  /// Drops the connection and keeps it down for `duration`.
  void inject_outage(std::chrono::milliseconds duration);
  bool connected() const;
  bool rejected() const;

  const LocalModel& local() const { return local_; }
  LocalModel& local() { return local_; }
  EcStats stats() const;
  const EcConfig& config() const { return cfg_; }

 private:
  class Handler;

  bool try_connect();
  void on_message(const std::shared_ptr<Channel>& ch, Message&& m);
  void on_closed(const std::shared_ptr<Channel>& ch);
  bool send(std::vector<std::uint8_t> frame);
  double elapsed_s() const;
  void loop(std::string metrics_csv);

  EcConfig cfg_;
  LocalModel local_;
  NetService net_{1};
  Clock::time_point t0_{};

  mutable std::mutex mu_;
  std::condition_variable cv_;
  std::shared_ptr<Channel> channel_;
  std::shared_ptr<Channel> hello_channel_;
  std::optional<HelloAck> hello_ack_;
  bool awaiting_ = false;
  std::uint64_t responses_seen_ = 0;
  Clock::time_point outage_until_{};
  bool rejected_ = false;
  bool running_ = false;
  bool finished_ = false;
  std::optional<TextureImage> texture_;
  std::vector<PeerPose> peers_;
  std::optional<Stats> report_;
  EcStats stats_;
  mutable std::condition_variable finished_cv_;

  std::thread thread_;
};

}  // namespace voxstream
