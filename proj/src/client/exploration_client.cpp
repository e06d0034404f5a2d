#include "voxstream/client/exploration_client.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>
#include <iostream>
#include <sstream>
#include <stdexcept>

#include "voxstream/common/parallel.hpp"

namespace voxstream {

PoseScript::PoseScript(std::vector<PoseWaypoint> waypoints) : waypoints_(std::move(waypoints)) {
  for (std::size_t i = 1; i < waypoints_.size(); ++i) {
    if (!(waypoints_[i].t > waypoints_[i - 1].t)) {
      throw std::invalid_argument("pose script: waypoint times must increase");
    }
  }
  for (const auto& w : waypoints_) {
    if ((w.target - w.eye).norm() <= 0.f) throw std::invalid_argument("pose script: eye equals target");
  }
}

PoseScript PoseScript::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("pose script: cannot open " + path.string());
  std::vector<PoseWaypoint> out;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::istringstream ss(line);
    PoseWaypoint w;
    if (!(ss >> w.t)) continue;
    if (!(ss >> w.eye.x() >> w.eye.y() >> w.eye.z() >> w.target.x() >> w.target.y() >> w.target.z())) {
      throw std::invalid_argument("pose script: line " + std::to_string(n) + " needs t ex ey ez tx ty tz");
    }
    out.push_back(w);
  }
  return PoseScript(std::move(out));
}

PoseScript PoseScript::fixed(const Pose& pose) {
  PoseScript s;
  s.fixed_ = pose;
  return s;
}

Pose PoseScript::at(double t) const {
  if (fixed_) return *fixed_;
  if (waypoints_.empty()) return Pose{};
  if (t <= waypoints_.front().t) return Pose::look_at(waypoints_.front().eye, waypoints_.front().target);
  if (t >= waypoints_.back().t) return Pose::look_at(waypoints_.back().eye, waypoints_.back().target);
  const auto hi = std::upper_bound(waypoints_.begin(), waypoints_.end(), t,
                                   [](double v, const PoseWaypoint& w) { return v < w.t; });
  const auto lo = hi - 1;
  const float f = static_cast<float>((t - lo->t) / (hi->t - lo->t));
  const Eigen::Vector3f eye = lo->eye + (hi->eye - lo->eye) * f;
  Eigen::Vector3f target = lo->target + (hi->target - lo->target) * f;
  if ((target - eye).norm() <= 0.f) target = hi->target;
  return Pose::look_at(eye, target);
}

LocalModel::LocalModel(HashConfig hash, float voxel_size) : voxel_size_(voxel_size), blocks_(hash) {
  if (!(voxel_size > 0.f)) throw std::invalid_argument("local model: voxel size must be positive");
}

void LocalModel::mark_locked(const BlockKey& key, bool present) {
  const BlockKey region = mesh_block_of(key);
  if (present) {
    members_[region].insert(key);
  } else if (const auto it = members_.find(region); it != members_.end()) {
    it->second.erase(key);
    if (it->second.empty()) members_.erase(it);
  }
  dirty_.insert(region);
}

std::size_t LocalModel::apply_batch(const McBatch& batch) {
  std::lock_guard lock(index_mu_);
  for (const McBlock& b : batch.blocks) {
    if (!blocks_.put(b.key, b.voxels).ok()) throw std::runtime_error("local model: hash capacity exhausted");
    mark_locked(b.key, true);
  }
  return batch.blocks.size();
}

std::size_t LocalModel::apply_delete(const std::vector<BlockKey>& keys) {
  std::lock_guard lock(index_mu_);
  std::size_t n = 0;
  for (const BlockKey& k : keys) {
    if (blocks_.erase(k)) {
      ++n;
      mark_locked(k, false);
    }
  }
  return n;
}

void LocalModel::clear() {
  std::lock_guard lock(index_mu_);
  for (const BlockKey& k : blocks_.keys()) blocks_.erase(k);
  members_.clear();
  dirty_.clear();
  std::lock_guard mesh_lock(mesh_mu_);
  meshes_.clear();
}

std::size_t LocalModel::rebuild_dirty(std::size_t budget, unsigned threads) {
  struct Job {
    BlockKey region;
    std::vector<McBlock> blocks;
    std::optional<MeshBlock> built;
  };
  std::vector<Job> jobs;
  {
    std::lock_guard lock(index_mu_);
    while (jobs.size() < budget && !dirty_.empty()) {
      Job job;
      job.region = *dirty_.begin();
      dirty_.erase(dirty_.begin());
      if (const auto it = members_.find(job.region); it != members_.end()) {
        for (const BlockKey& k : it->second) {
          if (auto v = blocks_.get(k)) job.blocks.push_back({k, *v});
        }
      }
      jobs.push_back(std::move(job));
    }
  }
  parallel_for(
      jobs.size(),
      [&](std::size_t b, std::size_t e) {
        for (std::size_t i = b; i < e; ++i) {
          if (jobs[i].blocks.empty()) continue;
          std::vector<const McBlock*> ptrs;
          for (const McBlock& m : jobs[i].blocks) ptrs.push_back(&m);
          jobs[i].built = build_mesh_block(jobs[i].region, ptrs, voxel_size_);
        }
      },
      threads);
  std::lock_guard lock(mesh_mu_);
  for (Job& job : jobs) {
    if (job.built) {
      meshes_[job.region] = std::move(*job.built);
    } else {
      meshes_.erase(job.region);
    }
  }
  return jobs.size();
}

std::size_t LocalModel::dirty_count() const {
  std::lock_guard lock(index_mu_);
  return dirty_.size();
}

std::vector<BlockKey> LocalModel::dirty_regions() const {
  std::lock_guard lock(index_mu_);
  return {dirty_.begin(), dirty_.end()};
}

std::optional<MeshBlock> LocalModel::mesh_block(const BlockKey& region) const {
  std::lock_guard lock(mesh_mu_);
  const auto it = meshes_.find(region);
  if (it == meshes_.end()) return std::nullopt;
  return it->second;
}

std::size_t LocalModel::mesh_block_count() const {
  std::lock_guard lock(mesh_mu_);
  return meshes_.size();
}

std::vector<BlockKey> LocalModel::members(const BlockKey& region) const {
  std::lock_guard lock(index_mu_);
  const auto it = members_.find(region);
  if (it == members_.end()) return {};
  return {it->second.begin(), it->second.end()};
}

std::vector<BlockKey> LocalModel::keys() const {
  std::vector<BlockKey> out = blocks_.keys();
  std::sort(out.begin(), out.end());
  return out;
}

double completeness(const std::vector<BlockKey>& local, const std::vector<BlockKey>& reference) {
  if (reference.empty()) return 1.0;
  std::vector<BlockKey> a(local), b(reference);
  std::sort(a.begin(), a.end());
  a.erase(std::unique(a.begin(), a.end()), a.end());
  std::sort(b.begin(), b.end());
  b.erase(std::unique(b.begin(), b.end()), b.end());
  std::vector<BlockKey> common;
  std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(common));
  return static_cast<double>(common.size()) / static_cast<double>(b.size());
}

void EcConfig::validate() const {
  if (!(request_rate_hz > 0.0)) throw std::invalid_argument("ec: request rate must be positive");
  if (max_blocks == 0) throw std::invalid_argument("ec: max blocks must be positive");
  if (!(voxel_size > 0.f)) throw std::invalid_argument("ec: voxel size must be positive");
  if (!(pose_rate_hz >= 0.0)) throw std::invalid_argument("ec: pose rate must be non-negative");
  if (!(idle_stop_s >= 0.0)) throw std::invalid_argument("ec: idle stop must be non-negative");
  if (response_timeout.count() <= 0) throw std::invalid_argument("ec: response timeout must be positive");
  hash.validate();
}

class ExplorationClient::Handler : public MessageHandler {
 public:
  explicit Handler(ExplorationClient& ec) : ec_(ec) {}
  void bind(std::shared_ptr<Channel> ch) {
    std::lock_guard lock(mu_);
    ch_ = std::move(ch);
  }
  void on_message(Message&& m) override { ec_.on_message(channel(), std::move(m)); }
  void on_close() override {
    ec_.on_closed(channel());
    bind(nullptr);
  }

 private:
  std::shared_ptr<Channel> channel() {
    std::lock_guard lock(mu_);
    return ch_;
  }
  ExplorationClient& ec_;
  std::mutex mu_;
  std::shared_ptr<Channel> ch_;
};

ExplorationClient::ExplorationClient(EcConfig cfg)
    : cfg_((cfg.validate(), std::move(cfg))), local_(cfg_.hash, cfg_.voxel_size), t0_(Clock::now()) {}

ExplorationClient::~ExplorationClient() {
  stop();
  net_.shutdown();
}

void ExplorationClient::start(const std::string& metrics_csv) {
  std::lock_guard lock(mu_);
  if (running_) return;
  running_ = true;
  finished_ = false;
  t0_ = Clock::now();
  thread_ = std::thread([this, metrics_csv] { loop(metrics_csv); });
}

void ExplorationClient::stop() {
  std::shared_ptr<Channel> ch;
  {
    std::lock_guard lock(mu_);
    running_ = false;
    ch = channel_;
  }
  cv_.notify_all();
  if (thread_.joinable()) thread_.join();
  if (ch) ch->close();
}

bool ExplorationClient::finished() const {
  std::lock_guard lock(mu_);
  return finished_;
}

bool ExplorationClient::wait_finished(std::chrono::milliseconds timeout) const {
  std::unique_lock lock(mu_);
  return finished_cv_.wait_for(lock, timeout, [&] { return finished_; });
}

bool ExplorationClient::send(std::vector<std::uint8_t> frame) {
  std::shared_ptr<Channel> ch;
  {
    std::lock_guard lock(mu_);
    ch = channel_;
  }
  return ch && ch->send(std::move(frame));
}

void ExplorationClient::request_reset() { send(make_frame(ResetRequest{})); }

void ExplorationClient::request_texture() { send(make_frame(TextureRequest{})); }

std::optional<TextureImage> ExplorationClient::latest_texture() const {
  std::lock_guard lock(mu_);
  return texture_;
}

std::vector<PeerPose> ExplorationClient::peers() const {
  std::lock_guard lock(mu_);
  return peers_;
}

std::optional<Stats> ExplorationClient::server_report() const {
  std::lock_guard lock(mu_);
  return report_;
}

void ExplorationClient::inject_outage(std::chrono::milliseconds duration) {
  std::shared_ptr<Channel> ch;
  {
    std::lock_guard lock(mu_);
    outage_until_ = Clock::now() + duration;
    ch.swap(channel_);
  }
  cv_.notify_all();
  if (ch) ch->abort();
}

bool ExplorationClient::connected() const {
  std::lock_guard lock(mu_);
  return channel_ != nullptr;
}

bool ExplorationClient::rejected() const {
  std::lock_guard lock(mu_);
  return rejected_;
}

EcStats ExplorationClient::stats() const {
  std::lock_guard lock(mu_);
  return stats_;
}

double ExplorationClient::elapsed_s() const { return std::chrono::duration<double>(Clock::now() - t0_).count(); }

void ExplorationClient::on_message(const std::shared_ptr<Channel>& ch, Message&& m) {
  if (!ch) return;
  if (m.type == MessageType::kHelloAck) {
    const HelloAck ack = parse<HelloAck>(m);
    std::lock_guard lock(mu_);
    if (ch != hello_channel_) return;
    if (ack.status == AckStatus::kOk) {
      // Later messages on this channel belong to the session, so it becomes
      // current before they are dispatched.
      if (!ack.resumed) {
        local_.clear();
        ++stats_.fresh_sessions;
      }
      channel_ = ch;
      ++stats_.connects;
    }
    hello_ack_ = ack;
    cv_.notify_all();
    return;
  }
  {
    // Messages of a connection that was given up are dropped; the server
    // re-sends anything not confirmed on the current connection.
    std::lock_guard lock(mu_);
    if (ch != channel_) return;
  }
  switch (m.type) {
    case MessageType::kMcBatch: {
      std::uint64_t n = 0;
      if (cfg_.discard) {
        if (m.payload.size() < 4) throw ProtocolError(ProtocolErrc::kMalformedPayload, "short MC_BATCH");
        std::uint32_t count = 0;
        std::memcpy(&count, m.payload.data(), 4);
        n = count;
      } else {
        n = local_.apply_batch(parse<McBatch>(m));
      }
      std::lock_guard lock(mu_);
      ++stats_.responses;
      stats_.batch_bytes += m.wire_bytes;
      stats_.blocks_received += n;
      if (n == 0) {
        ++stats_.empty_responses;
      } else {
        const double t = elapsed_s();
        if (stats_.first_block_s < 0) stats_.first_block_s = t;
        stats_.last_block_s = t;
      }
      ++responses_seen_;
      awaiting_ = false;
      cv_.notify_all();
      break;
    }
    case MessageType::kDeleteBlocks: {
      const DeleteBlocks del = parse<DeleteBlocks>(m);
      const std::size_t n = cfg_.discard ? del.keys.size() : local_.apply_delete(del.keys);
      std::lock_guard lock(mu_);
      ++stats_.delete_messages;
      stats_.blocks_deleted += n;
      break;
    }
    case MessageType::kPoseBroadcast: {
      PoseBroadcast b = parse<PoseBroadcast>(m);
      std::lock_guard lock(mu_);
      peers_ = std::move(b.poses);
      break;
    }
    case MessageType::kTextureImage: {
      TextureImage img = parse<TextureImage>(m);
      std::lock_guard lock(mu_);
      texture_ = std::move(img);
      break;
    }
    case MessageType::kStats: {
      Stats s = parse<Stats>(m);
      std::lock_guard lock(mu_);
      if (s.code == StatsCode::kReport) report_ = std::move(s);
      break;
    }
    default:
      break;
  }
}

void ExplorationClient::on_closed(const std::shared_ptr<Channel>& ch) {
  std::lock_guard lock(mu_);
  if (ch && ch == channel_) channel_.reset();
  if (ch && ch == hello_channel_) hello_channel_.reset();
  cv_.notify_all();
}

bool ExplorationClient::try_connect() {
  {
    std::lock_guard lock(mu_);
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
  {
    std::lock_guard lock(mu_);
    hello_ack_.reset();
    hello_channel_ = ch;
  }
  handler->bind(ch);
  Hello hello;
  hello.role = ClientRole::kExploration;
  hello.client_id = cfg_.client_id;
  hello.voxel_size = cfg_.voxel_size;
  ch->send(make_frame(hello));
  std::unique_lock lock(mu_);
  cv_.wait_for(lock, std::chrono::seconds(5),
               [&] { return hello_ack_.has_value() || hello_channel_ != ch || !running_; });
  const std::optional<HelloAck> ack = hello_ack_;
  hello_channel_.reset();
  if (ack && ack->status == AckStatus::kOk && channel_ == ch) {
    awaiting_ = false;
    return true;
  }
  if (ack && ack->status != AckStatus::kOk) {
    std::cerr << "ec: server rejected HELLO (status " << static_cast<int>(ack->status) << ", server voxel size "
              << ack->voxel_size << ")\n";
    rejected_ = true;
  }
  lock.unlock();
  ch->abort();
  return false;
}

void ExplorationClient::loop(std::string metrics_csv) {
  std::ofstream csv;
  if (!metrics_csv.empty()) {
    csv.open(metrics_csv);
    if (!csv) throw std::runtime_error("ec: cannot write " + metrics_csv);
    csv << "t_s,mc_bytes,blocks,local_blocks,server_mc_blocks,pending,completeness,dirty_regions\n";
  }
  const auto period = std::chrono::duration_cast<Clock::duration>(std::chrono::duration<double>(1.0 / cfg_.request_rate_hz));
  const auto pose_period =
      cfg_.pose_rate_hz > 0 ? std::chrono::duration_cast<Clock::duration>(std::chrono::duration<double>(1.0 / cfg_.pose_rate_hz))
                            : Clock::duration::max();
  auto backoff = std::chrono::milliseconds(50);
  auto next_tick = Clock::now();
  auto next_pose = Clock::now();
  auto next_row = Clock::now() + std::chrono::seconds(1);
  std::optional<Clock::time_point> idle_since;
  EcStats last{};

  for (;;) {
    {
      std::lock_guard lock(mu_);
      if (!running_) break;
      if (rejected_) break;
    }
    if (!try_connect()) {
      if (rejected()) break;
      std::unique_lock lock(mu_);
      cv_.wait_for(lock, backoff, [&] { return !running_; });
      backoff = std::min(backoff * 2, std::chrono::milliseconds(1000));
      continue;
    }
    backoff = std::chrono::milliseconds(50);

    const Pose pose = cfg_.poses.at(elapsed_s());
    if (cfg_.pose_rate_hz > 0 && Clock::now() >= next_pose) {
      send(make_frame(PoseUpdate{pose}));
      next_pose = Clock::now() + pose_period;
    }

    BlockRequest req;
    req.max_blocks = cfg_.max_blocks;
    req.strategy = cfg_.strategy;
    req.pose = pose;
    req.intrinsics = cfg_.intrinsics;
    std::shared_ptr<Channel> ch;
    std::uint64_t seen = 0;
    std::uint64_t empty_before = 0;
    {
      std::lock_guard lock(mu_);
      ch = channel_;
      seen = responses_seen_;
      empty_before = stats_.empty_responses;
      awaiting_ = true;
      ++stats_.requests;
    }
    if (!ch || !ch->send(make_frame(req))) continue;
    bool answered = false;
    {
      std::unique_lock lock(mu_);
      answered = cv_.wait_for(lock, cfg_.response_timeout,
                              [&] { return responses_seen_ != seen || channel_ != ch || !running_; });
      answered = answered && responses_seen_ != seen;
      if (!answered && channel_ == ch && running_) {
        std::cerr << "ec: no response within " << cfg_.response_timeout.count() << " ms, reconnecting\n";
        channel_.reset();
        lock.unlock();
        ch->abort();
      }
    }

    if (!cfg_.discard && cfg_.rebuild_budget > 0) local_.rebuild_dirty(cfg_.rebuild_budget, cfg_.threads);

    const auto now = Clock::now();
    if (answered) {
      const bool empty = stats().empty_responses != empty_before;
      if (!empty) {
        idle_since.reset();
      } else if (!idle_since) {
        idle_since = now;
      }
      if (cfg_.idle_stop_s > 0 && idle_since &&
          std::chrono::duration<double>(now - *idle_since).count() >= cfg_.idle_stop_s) {
        break;
      }
    }
    if (now >= next_row) {
      send(make_frame(Stats{}));
      if (csv.is_open()) {
        const EcStats s = stats();
        const std::optional<Stats> rep = server_report();
        csv << elapsed_s() << ',' << s.batch_bytes - last.batch_bytes << ',' << s.blocks_received - last.blocks_received
            << ',' << (cfg_.discard ? 0 : local_.size()) << ',';
        if (rep) {
          csv << rep->mc_blocks << ',' << rep->pending << ',';
          if (!cfg_.discard) {
            csv << (rep->mc_blocks == 0 ? 1.0
                                        : std::min(1.0, static_cast<double>(local_.size()) /
                                                            static_cast<double>(rep->mc_blocks)));
          }
        } else {
          csv << ",,";
        }
        csv << ',' << local_.dirty_count() << '\n' << std::flush;
        last = s;
      }
      next_row += std::chrono::seconds(1);
    }
    next_tick += period;
    if (next_tick < Clock::now()) next_tick = Clock::now();
    std::unique_lock lock(mu_);
    cv_.wait_until(lock, next_tick, [&] { return !running_; });
  }
  std::lock_guard lock(mu_);
  finished_ = true;
  finished_cv_.notify_all();
}

}  // namespace voxstream
