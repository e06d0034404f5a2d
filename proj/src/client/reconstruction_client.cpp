#include "voxstream/client/reconstruction_client.hpp"

#include <algorithm>
#include <cmath>
#include <iterator>
#include <cstring>
#include <fstream>
#include <iostream>
#include <stdexcept>

namespace voxstream {

double ema_update(EmaState& state, double t_next, double s_n, double s_next) {
  if (!(t_next > state.last_t)) throw std::invalid_argument("ema_update: timestamps must increase");
  if (!(state.tau > 0.0)) throw std::invalid_argument("ema_update: tau must be positive");
  const double a = (t_next - state.last_t) / state.tau;
  const double u = std::exp(-a);
  const double v = -std::expm1(-a) / a;
  state.value = u * state.value + (v - u) * s_n + (1.0 - v) * s_next;
  state.last_t = t_next;
  return state.value;
}

std::vector<BlockKey> maybe_prefetch(EmaState& state, double now, const std::vector<BlockKey>& visible,
                                     StreamSet& stream) {
  std::vector<BlockKey> queued;
  if (state.value >= state.threshold || now - state.last_prefetch_t < state.cooldown) return queued;
  for (const auto& k : visible)
    if (stream.insert(k)) queued.push_back(k);
  state.last_prefetch_t = now;
  return queued;
}

void RcConfig::validate() const {
  fusion.validate();
  hash.validate();
  if (package_size == 0) throw std::invalid_argument("rc: package size must be at least 1");
  if (!(send_rate_hz > 0.0)) throw std::invalid_argument("rc: send rate must be positive");
  if (!(ema_tau_s > 0.0)) throw std::invalid_argument("rc: EMA tau must be positive");
  if (speed < 0.0) throw std::invalid_argument("rc: speed must be non-negative");
}

class ReconstructionClient::Handler : public MessageHandler {
 public:
  explicit Handler(ReconstructionClient& rc) : rc_(rc) {}
  void bind(std::shared_ptr<Channel> ch) {
    std::lock_guard lock(mu_);
    ch_ = std::move(ch);
  }
  void on_message(Message&& m) override { rc_.on_message(channel(), std::move(m)); }
  void on_close() override {
    rc_.on_closed(channel());
    bind(nullptr);
  }

 private:
  std::shared_ptr<Channel> channel() {
    std::lock_guard lock(mu_);
    return ch_;
  }
  ReconstructionClient& rc_;
  std::mutex mu_;
  std::shared_ptr<Channel> ch_;
};

ReconstructionClient::ReconstructionClient(RcConfig cfg, CameraIntrinsics intrinsics, float near_m, float far_m)
    : cfg_((cfg.validate(), std::move(cfg))),
      intrinsics_(intrinsics),
      near_m_(near_m),
      far_m_(far_m),
      model_(cfg_.fusion, cfg_.hash, 0, cfg_.threads),
      stream_(cfg_.hash) {
  intrinsics_.validate();
  ema_.tau = cfg_.ema_tau_s;
  ema_.threshold = cfg_.prefetch_threshold;
  ema_.cooldown = cfg_.prefetch_cooldown_s;
}

ReconstructionClient::~ReconstructionClient() {
  stop();
  net_.shutdown();
}

void ReconstructionClient::start(const std::string& metrics_csv) {
  std::lock_guard lock(run_mu_);
  if (running_) return;
  running_ = true;
  network_ = std::thread([this, metrics_csv] { network_loop(metrics_csv); });
}

void ReconstructionClient::stop() {
  {
    std::lock_guard lock(run_mu_);
    running_ = false;
  }
  run_cv_.notify_all();
  if (network_.joinable()) network_.join();
  std::shared_ptr<Channel> ch;
  {
    std::lock_guard lock(send_mu_);
    ch = channel_;
  }
  if (ch) ch->close();
}

void ReconstructionClient::process_frame(const Frame& frame) {
  std::lock_guard lock(frame_mu_);
  model_.fuse_frame(frame, intrinsics_);
  const Frustum fr{frame.pose, intrinsics_, near_m_, far_m_, cfg_.retire_margin_m};
  stream_.insert_all(model_.retire_invisible(fr));

  const double t = static_cast<double>(frame.timestamp_us) * 1e-6;
  const double s = static_cast<double>(stream_.size());
  if (!ema_started_) {
    ema_.value = s;
    ema_.last_t = t;
    ema_.last_prefetch_t = t;
    ema_started_ = true;
  } else if (t > ema_.last_t) {
    ema_update(ema_, t, last_stream_size_, s);
  }
  last_stream_size_ = s;
  const bool prefetched = !maybe_prefetch(ema_, t, model_.visible_keys(), stream_).empty();
  last_frame_ = frame;
  {
    std::lock_guard stats_lock(stats_mu_);
    ++stats_.frames;
    stats_.prefetches += prefetched ? 1 : 0;
  }
  send_plain(MessageType::kPoseUpdate, make_frame(PoseUpdate{frame.pose}));
}

std::size_t ReconstructionClient::run(const FrameSource& source) {
  const auto wall0 = Clock::now();
  std::optional<std::uint64_t> ts0;
  std::size_t n = 0;
  while (auto frame = source()) {
    if (!ts0) ts0 = frame->timestamp_us;
    if (cfg_.speed > 0.0) {
      const double dt = static_cast<double>(frame->timestamp_us - *ts0) * 1e-6 / cfg_.speed;
      std::this_thread::sleep_until(wall0 + std::chrono::duration_cast<Clock::duration>(std::chrono::duration<double>(dt)));
    }
    process_frame(*frame);
    ++n;
  }
  final_flush();
  return n;
}

void ReconstructionClient::final_flush() {
  std::lock_guard lock(frame_mu_);
  // Retired blocks are already queued or sent; what remains are the visible
  // ones and allocated blocks no frame ever updated.
  std::vector<BlockKey> keys = model_.visible_keys();
  std::vector<BlockKey> all = model_.keys(), updated = model_.updated_keys();
  std::sort(all.begin(), all.end());
  std::sort(updated.begin(), updated.end());
  std::set_difference(all.begin(), all.end(), updated.begin(), updated.end(), std::back_inserter(keys));
  stream_.insert_all(keys);
}

bool ReconstructionClient::quiescent() const {
  std::lock_guard lock(send_mu_);
  return channel_ && log_.empty() && stream_.empty();
}

bool ReconstructionClient::wait_quiescent(std::chrono::milliseconds timeout) const {
  const auto deadline = Clock::now() + timeout;
  while (Clock::now() < deadline) {
    if (quiescent()) return true;
    std::this_thread::sleep_for(std::chrono::milliseconds(10));
  }
  return quiescent();
}

bool ReconstructionClient::send_reliable_locked(MessageType type, std::vector<std::uint8_t> frame, LogEntry entry) {
  entry.seq = ++next_seq_;
  log_.push_back(std::move(entry));
  if (!channel_) return false;
  const std::size_t n = frame.size();
  if (!channel_->send(std::move(frame))) return false;
  std::lock_guard lock(stats_mu_);
  stats_.bytes_sent += n;
  if (type == MessageType::kTsdfBatch) stats_.tsdf_bytes_sent += n;
  return true;
}

bool ReconstructionClient::send_plain(MessageType, std::vector<std::uint8_t> frame) {
  std::lock_guard lock(send_mu_);
  if (!channel_) return false;
  const std::size_t n = frame.size();
  if (!channel_->send(std::move(frame))) return false;
  std::lock_guard stats_lock(stats_mu_);
  stats_.bytes_sent += n;
  return true;
}

std::size_t ReconstructionClient::pump_stream() {
  std::lock_guard lock(send_mu_);
  if (!channel_) return 0;
  const std::vector<BlockKey> keys = stream_.extract_batch(cfg_.package_size);
  if (keys.empty()) return 0;
  std::vector<std::uint8_t> payload(4);
  payload.reserve(4 + keys.size() * kTsdfBatchBytesPerBlock);
  std::vector<BlockKey> sent;
  sent.reserve(keys.size());
  for (const auto& k : keys) {
    if (model_.store().read(k, [&](const VoxelModel::Block& b) { append_tsdf_batch_entry(k, b.voxels, payload); })) {
      sent.push_back(k);
    }
  }
  if (sent.empty()) return 0;
  const auto count = static_cast<std::uint32_t>(sent.size());
  std::memcpy(payload.data(), &count, 4);
  auto frame = encode_frame(MessageType::kTsdfBatch, payload, cfg_.codec);
  if (!send_reliable_locked(MessageType::kTsdfBatch, std::move(frame), {0, false, sent})) {
    stream_.insert_all(sent);
    return 0;
  }
  std::lock_guard stats_lock(stats_mu_);
  ++stats_.batches_sent;
  stats_.blocks_sent += sent.size();
  return sent.size();
}

std::vector<BlockKey> ReconstructionClient::handle_reset_request() {
  std::lock_guard frame_lock(frame_mu_);
  std::lock_guard lock(send_mu_);
  std::vector<BlockKey> keys = model_.visible_keys();
  if (keys.empty()) return keys;
  model_.delete_blocks(keys);
  for (const auto& k : keys) stream_.erase(k);
  // Logged even when offline: the reset is replayed after reconnecting.
  send_reliable_locked(MessageType::kResetBlocks, make_frame(ResetBlocks{keys}, cfg_.codec), {0, true, keys});
  std::lock_guard stats_lock(stats_mu_);
  ++stats_.resets;
  return keys;
}

void ReconstructionClient::handle_texture_request() {
  std::optional<Frame> frame;
  {
    std::lock_guard lock(frame_mu_);
    frame = last_frame_;
  }
  if (!frame) {
    Stats st;
    st.code = StatsCode::kNoFrame;
    st.text = "no frame captured yet";
    send_plain(MessageType::kStats, make_frame(st));
    return;
  }
  TextureImage img;
  img.pose = frame->pose;
  img.fx = intrinsics_.fx;
  img.fy = intrinsics_.fy;
  img.cx = intrinsics_.cx;
  img.cy = intrinsics_.cy;
  img.width = frame->width;
  img.height = frame->height;
  img.rgb = std::move(frame->rgb);
  send_plain(MessageType::kTextureImage, make_frame(img, cfg_.codec));
}

void ReconstructionClient::acknowledge(std::uint64_t processed) {
  while (!log_.empty() && log_.front().seq <= processed) log_.pop_front();
  acked_ = std::max(acked_, processed);
}

void ReconstructionClient::on_message(const std::shared_ptr<Channel>& ch, Message&& m) {
  switch (m.type) {
    case MessageType::kHelloAck: {
      std::lock_guard lock(hello_mu_);
      if (hello_channel_ == ch) hello_ack_ = parse<HelloAck>(m);
      hello_cv_.notify_all();
      break;
    }
    case MessageType::kTextureRequest: handle_texture_request(); break;
    case MessageType::kResetRequest: handle_reset_request(); break;
    case MessageType::kStats: {
      const Stats st = parse<Stats>(m);
      if (st.code != StatsCode::kReport) break;
      std::lock_guard lock(send_mu_);
      if (channel_ == ch) acknowledge(st.pending);
      break;
    }
    default: break;
  }
}

void ReconstructionClient::on_closed(const std::shared_ptr<Channel>& ch) {
  {
    std::lock_guard lock(send_mu_);
    if (channel_ && channel_ == ch) channel_.reset();
  }
  {
    std::lock_guard lock(hello_mu_);
    if (hello_channel_ == ch) hello_channel_.reset();
  }
  hello_cv_.notify_all();
  run_cv_.notify_all();
}

bool ReconstructionClient::try_connect() {
  {
    std::lock_guard lock(send_mu_);
    if (channel_) return true;
    if (rejected_ || Clock::now() < outage_until_) return false;
  }
  auto handler = std::make_shared<Handler>(*this);
  std::shared_ptr<Channel> ch;
  try {
    ch = net_.connect(cfg_.transport, cfg_.server, handler);
  } catch (const std::exception&) {
    return false;
  }
  handler->bind(ch);
  {
    std::lock_guard lock(hello_mu_);
    hello_ack_.reset();
    hello_channel_ = ch;
  }
  Hello hello;
  hello.role = ClientRole::kReconstruction;
  hello.client_id = cfg_.client_id;
  hello.voxel_size = cfg_.fusion.voxel_size;
  ch->send(make_frame(hello));
  std::optional<HelloAck> ack;
  {
    std::unique_lock lock(hello_mu_);
    hello_cv_.wait_for(lock, std::chrono::seconds(5), [&] { return hello_ack_.has_value() || hello_channel_ != ch; });
    ack = hello_ack_;
    hello_channel_.reset();
  }
  if (!ack || ack->status != AckStatus::kOk) {
    if (ack) {
      std::cerr << "rc: server rejected HELLO (status " << static_cast<int>(ack->status) << ", server voxel size "
                << ack->voxel_size << ")\n";
      std::lock_guard lock(send_mu_);
      rejected_ = true;
    }
    ch->abort();
    return false;
  }

  std::lock_guard frame_lock(frame_mu_);
  std::lock_guard lock(send_mu_);
  if (!ch->is_open()) return false;
  std::deque<LogEntry> unprocessed;
  if (ack->resumed) {
    acknowledge(ack->pending);
    unprocessed.swap(log_);
    next_seq_ = ack->pending;
  } else {
    // Unknown to the server: everything is re-sent, resets first.
    unprocessed.swap(log_);
    next_seq_ = 0;
    acked_ = 0;
  }
  channel_ = ch;
  for (auto& e : unprocessed) {
    if (e.reset) send_reliable_locked(MessageType::kResetBlocks, make_frame(ResetBlocks{e.keys}, cfg_.codec), {0, true, e.keys});
  }
  if (ack->resumed) {
    for (const auto& e : unprocessed)
      if (!e.reset) stream_.insert_all(e.keys);
  } else {
    stream_.insert_all(model_.keys());
  }
  std::lock_guard stats_lock(stats_mu_);
  ++stats_.reconnects;
  return true;
}

void ReconstructionClient::inject_outage(std::chrono::milliseconds duration) {
  std::shared_ptr<Channel> ch;
  {
    std::lock_guard lock(send_mu_);
    outage_until_ = Clock::now() + duration;
    ch = channel_;
  }
  if (ch) ch->abort();
}

bool ReconstructionClient::connected() const {
  std::lock_guard lock(send_mu_);
  return channel_ != nullptr;
}

bool ReconstructionClient::rejected() const {
  std::lock_guard lock(send_mu_);
  return rejected_;
}

EmaState ReconstructionClient::ema() const {
  std::lock_guard lock(frame_mu_);
  return ema_;
}

RcStats ReconstructionClient::stats() const {
  std::lock_guard lock(stats_mu_);
  return stats_;
}

void ReconstructionClient::network_loop(std::string metrics_csv) {
  std::ofstream csv;
  if (!metrics_csv.empty()) {
    csv.open(metrics_csv);
    csv << "t_s,tsdf_bytes,bytes,stream_size,ema,model_blocks,frames\n";
  }
  const auto period = std::chrono::duration_cast<Clock::duration>(std::chrono::duration<double>(1.0 / cfg_.send_rate_hz));
  const auto t0 = Clock::now();
  auto next_row = t0 + std::chrono::seconds(1);
  auto next_query = t0;
  auto next_tick = t0;
  auto backoff = std::chrono::milliseconds(50);
  RcStats last{};
  std::unique_lock lock(run_mu_);
  while (running_) {
    lock.unlock();
    if (!connected()) {
      if (!try_connect()) {
        lock.lock();
        run_cv_.wait_for(lock, backoff, [&] { return !running_; });
        backoff = std::min(backoff * 2, std::chrono::milliseconds(1000));
        continue;
      }
      backoff = std::chrono::milliseconds(50);
      next_tick = Clock::now();
    }
    pump_stream();
    const auto now = Clock::now();
    if (now >= next_query) {
      // Progress reports prune the resend log; ask often while waiting on them.
      bool waiting;
      {
        std::lock_guard send_lock(send_mu_);
        waiting = !log_.empty();
      }
      send_plain(MessageType::kStats, make_frame(Stats{}));
      next_query = now + (waiting && stream_.empty() ? std::chrono::milliseconds(50) : std::chrono::milliseconds(500));
    }
    if (csv.is_open() && now >= next_row) {
      next_row += std::chrono::seconds(1);
      const RcStats s = stats();
      const EmaState e = ema();
      csv << std::chrono::duration<double>(now - t0).count() << ',' << s.tsdf_bytes_sent - last.tsdf_bytes_sent << ','
          << s.bytes_sent - last.bytes_sent << ',' << stream_.size() << ',' << e.value << ',' << model_.size() << ','
          << s.frames << '\n'
          << std::flush;
      last = s;
    }
    next_tick += period;
    if (next_tick < Clock::now()) next_tick = Clock::now();
    lock.lock();
    run_cv_.wait_until(lock, next_tick, [&] { return !running_; });
  }
}

}  // namespace voxstream
