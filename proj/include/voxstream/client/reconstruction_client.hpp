#pragma once

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <deque>
#include <functional>
#include <limits>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "voxstream/common/clock.hpp"
#include "voxstream/hash/stream_set.hpp"
#include "voxstream/net/io.hpp"
#include "voxstream/voxel/dataset.hpp"
#include "voxstream/voxel/voxel_model.hpp"
#include "voxstream/wire/messages.hpp"

namespace voxstream {

/// Exponential moving average of the stream-set size over irregular samples.
struct EmaState {
  double value = 0.0;
  double tau = 5.0;
  double last_t = 0.0;
  double threshold = 64.0;
  double last_prefetch_t = -std::numeric_limits<double>::infinity();
  double cooldown = 5.0;
};

/// a = (t_next - last_t) / tau, u = e^-a, v = (1 - u) / a,
/// value <- u value + (v - u) s_n + (1 - v) s_next.
/// Throws std::invalid_argument unless t_next > last_t.
double ema_update(EmaState& state, double t_next, double s_n, double s_next);

/// Queues every visible key when the average fell below the threshold and the
/// last prefetch is at least `cooldown` old. Returns the keys newly queued.
std::vector<BlockKey> maybe_prefetch(EmaState& state, double now, const std::vector<BlockKey>& visible,
                                     StreamSet& stream);

/// Yields frames in timestamp order; nullopt at the end.
using FrameSource = std::function<std::optional<Frame>()>;

struct RcConfig {
  Endpoint server{"127.0.0.1", kDefaultTcpPort};
  Transport transport = Transport::kTcp;
  FusionConfig fusion{};
  /// Local model and stream set.
  HashConfig hash{};
  std::uint32_t package_size = 512;
  double send_rate_hz = 100.0;
  Codec codec = Codec::kZstd;
  double ema_tau_s = 5.0;
  double prefetch_threshold = 64.0;
  double prefetch_cooldown_s = 5.0;
  /// Frustum growth before a block counts as out of view.
  float retire_margin_m = 0.1f;
  /// Replay speed multiplier for dataset timestamps; 0 replays unpaced.
  double speed = 1.0;
  ClientId client_id = random_client_id();
  unsigned threads = 1;

  void validate() const;
};

struct RcStats {
  std::uint64_t frames = 0;
  std::uint64_t batches_sent = 0;
  std::uint64_t blocks_sent = 0;
  std::uint64_t tsdf_bytes_sent = 0;
  std::uint64_t bytes_sent = 0;
  std::uint64_t resets = 0;
  std::uint64_t prefetches = 0;
  std::uint64_t reconnects = 0;
};

/// Fuses frames, gates streaming on retirement and prefetch, and streams TSDF
/// batches to the server over a reconnecting connection.
///
/// Every TSDF_BATCH and RESET_BLOCKS gets a sequence number and stays in a log
/// until the server reports it processed (STATS report or HELLO_ACK pending).
/// After a reconnect, unprocessed resets are re-sent and the keys of
/// unprocessed batches go back into the stream set, so they are re-sent with
/// their current content.
class ReconstructionClient {
 public:
  ReconstructionClient(RcConfig cfg, CameraIntrinsics intrinsics, float near_m, float far_m);
  ~ReconstructionClient();
  ReconstructionClient(const ReconstructionClient&) = delete;
  ReconstructionClient& operator=(const ReconstructionClient&) = delete;

  /// Starts the network thread (connect, pump, reconnect).
  void start(const std::string& metrics_csv = {});
  void stop();

  /// Fusion, retirement, EMA/prefetch and pose update for one frame.
  void process_frame(const Frame& frame);
  /// Plays a whole source, paced by timestamps and `speed`, then flushes.
  std::size_t run(const FrameSource& source);
  /// End of acquisition: queues the still-visible blocks and the allocated
  /// blocks that were never updated.
  void final_flush();
  /// Stream set empty and every reliable message processed by the server.
  bool quiescent() const;
  bool wait_quiescent(std::chrono::milliseconds timeout) const;

  /// Extracts one package and sends it; returns the number of blocks sent.
  std::size_t pump_stream();
  /// Deletes visible blocks and sends RESET_BLOCKS; returns the keys.
  std::vector<BlockKey> handle_reset_request();
  void handle_texture_request();

  /// Drops the connection and keeps it down for `duration`.
  void inject_outage(std::chrono::milliseconds duration);
  bool connected() const;
  /// The server refused the HELLO (configuration mismatch); no retries.
  bool rejected() const;

  const VoxelModel& model() const { return model_; }
  const StreamSet& stream() const { return stream_; }
  EmaState ema() const;
  RcStats stats() const;
  const RcConfig& config() const { return cfg_; }

 private:
  class Handler;
  struct LogEntry {
    std::uint64_t seq = 0;
    bool reset = false;
    std::vector<BlockKey> keys;
  };

  bool try_connect();
  void on_message(const std::shared_ptr<Channel>& ch, Message&& m);
  void on_closed(const std::shared_ptr<Channel>& ch);
  void acknowledge(std::uint64_t processed);
  bool send_reliable_locked(MessageType type, std::vector<std::uint8_t> frame, LogEntry entry);
  bool send_plain(MessageType type, std::vector<std::uint8_t> frame);
  void network_loop(std::string metrics_csv);

  RcConfig cfg_;
  CameraIntrinsics intrinsics_;
  float near_m_, far_m_;
  VoxelModel model_;
  StreamSet stream_;
  NetService net_{1};

  mutable std::mutex frame_mu_;
  EmaState ema_;
  bool ema_started_ = false;
  double last_stream_size_ = 0.0;
  std::optional<Frame> last_frame_;

  // Guards the channel, the log and sequence numbers; held across
  // extract + read + send so wire order matches log order.
  mutable std::mutex send_mu_;
  std::shared_ptr<Channel> channel_;
  std::deque<LogEntry> log_;
  std::uint64_t next_seq_ = 0;
  std::uint64_t acked_ = 0;
  Clock::time_point outage_until_{};
  bool rejected_ = false;

  std::mutex hello_mu_;
  std::condition_variable hello_cv_;
  std::optional<HelloAck> hello_ack_;
  std::shared_ptr<Channel> hello_channel_;

  mutable std::mutex stats_mu_;
  RcStats stats_;

  std::mutex run_mu_;
  std::condition_variable run_cv_;
  bool running_ = false;
  std::thread network_;
};

}  // namespace voxstream
