#include "voxstream/server/server.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <iostream>
#include <unordered_map>
#include <unordered_set>

#include "voxstream/common/parallel.hpp"
#include "voxstream/voxel/voxel_model.hpp"

namespace voxstream {

void ServerConfig::validate() const {
  if (!(voxel_size > 0.f)) throw std::invalid_argument("server: voxel_size must be positive");
  hash.validate();
  if (max_request == 0) throw std::invalid_argument("server: max_request must be at least 1");
  if (!(pose_rate_hz > 0.0)) throw std::invalid_argument("server: pose rate must be positive");
}

struct Server::Session {
  ClientId id{};
  ClientRole role = ClientRole::kExploration;

  std::mutex mu;
  std::shared_ptr<Channel> channel;
  bool expired = false;
  Clock::time_point disconnected_at{};

  // Exploration clients.
  std::unique_ptr<StreamSet> stream;
  std::vector<BlockKey> unconfirmed;
  std::vector<BlockKey> deletes_before_response;
  std::vector<BlockKey> deletes_after_response;
  std::vector<BlockKey> pending_deletes;

  // Reconstruction clients: TSDF_BATCH + RESET_BLOCKS messages applied.
  std::uint64_t processed = 0;

  std::optional<Pose> pose;
  std::uint64_t pose_seq = 0;
  std::uint64_t seen_foreign_poses = 0;
  Clock::time_point last_broadcast{};
};

/// Per-connection handler: HELLO first, then role-specific dispatch.
class ServerConnection : public MessageHandler {
 public:
  ServerConnection(Server& server, std::shared_ptr<Channel> ch) : server_(server), ch_(std::move(ch)) {}

  void on_message(Message&& m) override {
    server_.traffic_.count_in(m.type, m.wire_bytes);
    if (!session_) {
      if (m.type != MessageType::kHello) {
        std::cerr << "server: " << ch_->peer() << " sent " << message_type_name(m.type) << " before HELLO\n";
        ch_->abort();
        return;
      }
      server_.on_hello(ch_, parse<Hello>(m), session_);
      return;
    }
    if (!current()) return;  // superseded by a newer connection with the same id
    Server::Session& s = *session_;
    if (s.role == ClientRole::kExploration) {
      switch (m.type) {
        case MessageType::kBlockRequest: server_.on_block_request(s, parse<BlockRequest>(m)); break;
        case MessageType::kPoseUpdate: server_.on_pose(s, parse<PoseUpdate>(m)); break;
        case MessageType::kTextureRequest: server_.on_texture_request(session_); break;
        case MessageType::kResetRequest: server_.on_reset_request(s); break;
        case MessageType::kStats: server_.on_stats_query(s); break;
        default: break;
      }
      return;
    }
    switch (m.type) {
      case MessageType::kTsdfBatch: {
        const TsdfBatch batch = parse<TsdfBatch>(m);
        std::unique_lock model(server_.model_mu_);
        if (!current()) return;
        server_.apply_batch_locked(batch, model);
        std::lock_guard lock(s.mu);
        ++s.processed;
        break;
      }
      case MessageType::kResetBlocks: {
        const ResetBlocks reset = parse<ResetBlocks>(m);
        std::unique_lock model(server_.model_mu_);
        if (!current()) return;
        server_.apply_reset_locked(reset.keys);
        std::lock_guard lock(s.mu);
        ++s.processed;
        break;
      }
      case MessageType::kPoseUpdate: server_.on_pose(s, parse<PoseUpdate>(m)); break;
      case MessageType::kTextureImage: server_.on_texture_image(m); break;
      case MessageType::kStats: server_.on_rc_stats(parse<Stats>(m), s); break;
      default: break;
    }
  }

  void on_close() override {
    if (session_) server_.on_disconnect(session_, ch_);
    session_.reset();
    ch_.reset();
  }

 private:
  bool current() {
    std::lock_guard lock(session_->mu);
    return session_->channel == ch_;
  }

  Server& server_;
  std::shared_ptr<Channel> ch_;
  std::shared_ptr<Server::Session> session_;
};

Server::Server(ServerConfig cfg)
    : cfg_((cfg.validate(), cfg)), tsdf_(cfg_.hash), mc_(cfg_.hash) {}

Server::~Server() { stop(); }

std::shared_ptr<MessageHandler> Server::accept(std::shared_ptr<Channel> channel) {
  return std::make_shared<ServerConnection>(*this, std::move(channel));
}

bool Server::send_locked(Session& s, MessageType type, std::vector<std::uint8_t> frame) {
  if (!s.channel) return false;
  const std::size_t n = frame.size();
  if (!s.channel->send(std::move(frame))) return false;
  traffic_.count_out(type, n);
  return true;
}

void Server::send_to(Session& s, MessageType type, std::vector<std::uint8_t> frame) {
  std::lock_guard lock(s.mu);
  send_locked(s, type, std::move(frame));
}

void Server::detach_locked(Session& s) {
  s.channel.reset();
  s.disconnected_at = Clock::now();
  if (s.stream) {
    s.stream->insert_all(s.unconfirmed);
    s.unconfirmed.clear();
    auto& p = s.pending_deletes;
    p.insert(p.end(), s.deletes_before_response.begin(), s.deletes_before_response.end());
    p.insert(p.end(), s.deletes_after_response.begin(), s.deletes_after_response.end());
    s.deletes_before_response.clear();
    s.deletes_after_response.clear();
  }
}

void Server::on_hello(const std::shared_ptr<Channel>& ch, const Hello& hello, std::shared_ptr<Session>& out) {
  HelloAck ack;
  ack.voxel_size = cfg_.voxel_size;
  ack.block_edge = kBlockEdge;
  const bool role_ok = hello.role == ClientRole::kReconstruction || hello.role == ClientRole::kExploration;
  if (!role_ok || hello.block_edge != kBlockEdge || hello.voxel_size != cfg_.voxel_size) {
    ack.status = role_ok ? AckStatus::kConfigMismatch : AckStatus::kBadRole;
    std::cerr << "server: rejecting " << ch->peer() << " (" << (role_ok ? "config mismatch" : "bad role") << ")\n";
    const auto frame = make_frame(ack);
    traffic_.count_out(MessageType::kHelloAck, frame.size());
    ch->send(frame);
    ch->close();
    return;
  }
  const bool rc = hello.role == ClientRole::kReconstruction;
  // A reconstruction client's processed count must not move while it is
  // reported, so its handshake is serialized with model updates.
  std::unique_lock<std::mutex> model;
  if (rc) model = std::unique_lock(model_mu_);

  for (;;) {
    std::shared_ptr<Session> s;
    {
      std::shared_lock lock(sessions_mu_);
      const auto it = sessions_.find(hello.client_id);
      if (it != sessions_.end()) s = it->second;
    }
    if (s) {
      std::shared_ptr<Channel> previous;
      {
        std::lock_guard lock(s->mu);
        if (s->expired) continue;
        if (s->role != hello.role) {
          ack.status = AckStatus::kBadRole;
          const auto frame = make_frame(ack);
          ch->send(frame);
          ch->close();
          return;
        }
        if (s->channel) {
          previous = s->channel;
          detach_locked(*s);
        }
        s->channel = ch;
        ack.resumed = true;
        ack.pending = static_cast<std::uint32_t>(rc ? s->processed : s->stream->size());
        send_locked(*s, MessageType::kHelloAck, make_frame(ack));
        if (!s->pending_deletes.empty()) {
          DeleteBlocks del{std::move(s->pending_deletes)};
          s->pending_deletes.clear();
          if (send_locked(*s, MessageType::kDeleteBlocks, make_frame(del, cfg_.codec))) {
            s->deletes_after_response = std::move(del.keys);
          } else {
            s->pending_deletes = std::move(del.keys);
          }
        }
      }
      if (previous) previous->abort();
      std::cerr << "server: " << (rc ? "reconstruction" : "exploration") << " client " << to_hex(hello.client_id)
                << " resumed from " << ch->peer() << "\n";
      out = s;
      return;
    }

    s = std::make_shared<Session>();
    s->id = hello.client_id;
    s->role = hello.role;
    if (!rc) s->stream = std::make_unique<StreamSet>(cfg_.hash);
    std::lock_guard lock(s->mu);
    {
      std::unique_lock map_lock(sessions_mu_);
      if (!sessions_.emplace(hello.client_id, s).second) continue;
    }
    s->channel = ch;
    // Registered before the snapshot, so no concurrent update can fall between.
    if (!rc) s->stream->insert_all(mc_.keys());
    ack.resumed = false;
    ack.pending = static_cast<std::uint32_t>(rc ? 0 : s->stream->size());
    send_locked(*s, MessageType::kHelloAck, make_frame(ack));
    std::cerr << "server: " << (rc ? "reconstruction" : "exploration") << " client " << to_hex(hello.client_id)
              << " joined from " << ch->peer() << " (" << ack.pending << " pending)\n";
    out = s;
    return;
  }
}

void Server::on_disconnect(const std::shared_ptr<Session>& s, const std::shared_ptr<Channel>& ch) {
  {
    std::lock_guard lock(s->mu);
    if (s->channel != ch) return;
    detach_locked(*s);
  }
  std::cerr << "server: client " << to_hex(s->id) << " disconnected\n";
  if (s->role == ClientRole::kReconstruction && !connected_rc()) {
    std::vector<std::shared_ptr<Session>> waiters;
    {
      std::lock_guard lock(texture_mu_);
      waiters.swap(texture_waiters_);
      texture_outstanding_ = false;
    }
    Stats st;
    st.code = StatsCode::kNoReconstruction;
    st.text = "reconstruction client disconnected";
    for (auto& w : waiters) send_to(*w, MessageType::kStats, make_frame(st));
  }
}

std::vector<std::shared_ptr<Server::Session>> Server::sessions_of(ClientRole role) const {
  std::vector<std::shared_ptr<Session>> out;
  std::shared_lock lock(sessions_mu_);
  for (const auto& [id, s] : sessions_)
    if (s->role == role) out.push_back(s);
  return out;
}

std::shared_ptr<Server::Session> Server::connected_rc() const {
  for (auto& s : sessions_of(ClientRole::kReconstruction)) {
    std::lock_guard lock(s->mu);
    if (s->channel) return s;
  }
  return nullptr;
}

void Server::apply_tsdf_batch(const TsdfBatch& batch) {
  std::unique_lock model(model_mu_);
  apply_batch_locked(batch, model);
}

void Server::apply_reset(const std::vector<BlockKey>& keys) {
  std::lock_guard model(model_mu_);
  apply_reset_locked(keys);
}

void Server::apply_batch_locked(const TsdfBatch& batch, std::unique_lock<std::mutex>& model) {
  std::vector<BlockKey> updated;
  updated.reserve(batch.blocks.size());
  bool warned = false;
  for (const auto& b : batch.blocks) {
    // No block may be dropped: stall this client until space frees up.
    while (!tsdf_.put(b.key, b.voxels).ok()) {
      if (!warned) std::cerr << "server: TSDF model capacity exhausted, stalling reconstruction input\n";
      warned = true;
      model.unlock();
      std::this_thread::sleep_for(std::chrono::milliseconds(50));
      model.lock();
    }
    updated.push_back(b.key);
  }
  recompute_and_queue(updated);
}

void Server::apply_reset_locked(const std::vector<BlockKey>& keys) {
  std::vector<BlockKey> removed;
  for (const auto& k : keys) {
    const bool t = tsdf_.erase(k);
    const bool m = mc_.erase(k);
    if (t || m) removed.push_back(k);
  }
  if (removed.empty()) return;
  for (auto& s : sessions_of(ClientRole::kExploration)) {
    std::lock_guard lock(s->mu);
    for (const auto& k : removed) s->stream->erase(k);
    if (s->channel && send_locked(*s, MessageType::kDeleteBlocks, make_frame(DeleteBlocks{removed}, cfg_.codec))) {
      auto& d = s->deletes_after_response;
      d.insert(d.end(), removed.begin(), removed.end());
    } else {
      s->pending_deletes.insert(s->pending_deletes.end(), removed.begin(), removed.end());
    }
  }
  // Neighbors that read corners from the removed blocks change too.
  recompute_and_queue(removed);
}

void Server::recompute_and_queue(const std::vector<BlockKey>& updated) {
  std::unordered_set<BlockKey, BlockKeyHasher> target_set;
  for (const auto& k : updated)
    for (const auto& a : affected_mc_blocks(k))
      if (tsdf_.contains(a)) target_set.insert(a);
  if (target_set.empty()) return;
  std::vector<BlockKey> targets(target_set.begin(), target_set.end());
  std::sort(targets.begin(), targets.end());

  std::unordered_map<BlockKey, std::optional<TsdfVoxels>, BlockKeyHasher> sources;
  for (const auto& t : targets) {
    for (int d = 0; d < 8; ++d) {
      const BlockKey k{t.x + (d & 1), t.y + ((d >> 1) & 1), t.z + ((d >> 2) & 1)};
      if (!sources.contains(k)) sources.emplace(k, tsdf_.get(k));
    }
  }
  parallel_for(
      targets.size(),
      [&](std::size_t begin, std::size_t end) {
        for (std::size_t i = begin; i < end; ++i) {
          const BlockKey& t = targets[i];
          std::array<const TsdfVoxels*, 8> src{};
          for (int d = 0; d < 8; ++d) {
            const auto& found = sources.at({t.x + (d & 1), t.y + ((d >> 1) & 1), t.z + ((d >> 2) & 1)});
            src[d] = found ? &*found : nullptr;
          }
          const McBlock mc = recompute_mc_block(t, src);
          while (!mc_.put(t, mc.voxels).ok()) std::this_thread::sleep_for(std::chrono::milliseconds(50));
        }
      },
      cfg_.workers);
  for (auto& s : sessions_of(ClientRole::kExploration)) s->stream->insert_all(targets);
}

std::vector<BlockKey> Server::extract(Session& s, const BlockRequest& req, std::uint32_t n) {
  switch (req.strategy) {
    case RequestStrategy::kGenerationOrder: return s.stream->extract_in_order(n);
    case RequestStrategy::kRandom: return s.stream->extract_batch(n);
    case RequestStrategy::kVisibleFirst: break;
  }
  Frustum fr;
  fr.pose = req.pose;
  fr.intrinsics = {req.intrinsics.fx,
                   req.intrinsics.fy,
                   req.intrinsics.cx,
                   req.intrinsics.cy,
                   static_cast<std::uint32_t>(std::lround(std::max(0.f, 2.f * (req.intrinsics.cx + 0.5f)))),
                   static_cast<std::uint32_t>(std::lround(std::max(0.f, 2.f * (req.intrinsics.cy + 0.5f))))};
  fr.near_m = req.intrinsics.near_m;
  fr.far_m = req.intrinsics.far_m;
  try {
    fr.validate();
  } catch (const std::invalid_argument&) {
    return s.stream->extract_batch(n);
  }
  FusionConfig fusion;
  fusion.voxel_size = cfg_.voxel_size;
  std::vector<BlockKey> out =
      s.stream->extract_matching(n, [&](const BlockKey& k) { return frustum_intersects_block(fr, k, fusion); });
  if (out.size() < n) {
    auto rest = s.stream->extract_batch(n - out.size());
    out.insert(out.end(), rest.begin(), rest.end());
  }
  return out;
}

void Server::on_block_request(Session& s, const BlockRequest& req) {
  const std::uint32_t n = std::clamp<std::uint32_t>(req.max_blocks, 1, cfg_.max_request);
  std::lock_guard lock(s.mu);
  s.unconfirmed.clear();
  s.deletes_before_response = std::move(s.deletes_after_response);
  s.deletes_after_response.clear();

  const std::vector<BlockKey> keys = extract(s, req, n);
  std::vector<std::uint8_t> payload(4);
  payload.reserve(4 + keys.size() * kMcBatchBytesPerBlock);
  std::uint32_t count = 0;
  for (const auto& k : keys) {
    // Keys deleted since they were queued are skipped.
    if (mc_.read(k, [&](const McVoxels& v) { append_mc_batch_entry(k, v, payload); })) {
      s.unconfirmed.push_back(k);
      ++count;
    }
  }
  std::memcpy(payload.data(), &count, 4);
  send_locked(s, MessageType::kMcBatch, encode_frame(MessageType::kMcBatch, payload, cfg_.codec));
}

void Server::on_pose(Session& s, const PoseUpdate& p) {
  std::lock_guard lock(s.mu);
  s.pose = p.pose;
  ++s.pose_seq;
}

void Server::tick_pose_broadcast(Clock::time_point now) {
  std::vector<std::shared_ptr<Session>> all;
  {
    std::shared_lock lock(sessions_mu_);
    for (const auto& [id, s] : sessions_) all.push_back(s);
  }
  struct Snapshot {
    PeerPose peer;
    std::uint64_t seq = 0;
    bool live = false;
  };
  std::vector<Snapshot> snap(all.size());
  for (std::size_t i = 0; i < all.size(); ++i) {
    std::lock_guard lock(all[i]->mu);
    snap[i].seq = all[i]->pose_seq;
    snap[i].live = all[i]->channel && all[i]->pose.has_value();
    if (snap[i].live) snap[i].peer = {all[i]->id, all[i]->role, *all[i]->pose};
  }
  const auto period = std::chrono::duration_cast<Clock::duration>(std::chrono::duration<double>(1.0 / cfg_.pose_rate_hz));
  for (std::size_t r = 0; r < all.size(); ++r) {
    PoseBroadcast msg;
    std::uint64_t signature = 0;
    for (std::size_t i = 0; i < all.size(); ++i) {
      if (i == r || !snap[i].live) continue;
      msg.poses.push_back(snap[i].peer);
      signature += snap[i].seq + 1;
    }
    Session& s = *all[r];
    std::lock_guard lock(s.mu);
    if (!s.channel || signature == s.seen_foreign_poses) continue;
    if (s.last_broadcast != Clock::time_point{} && now - s.last_broadcast < period) continue;
    s.seen_foreign_poses = signature;
    if (msg.poses.empty()) continue;
    s.last_broadcast = now;
    send_locked(s, MessageType::kPoseBroadcast, make_frame(msg));
  }
}

void Server::on_texture_request(const std::shared_ptr<Session>& s) {
  const auto rc = connected_rc();
  if (!rc) {
    Stats st;
    st.code = StatsCode::kNoReconstruction;
    st.text = "no reconstruction client connected";
    send_to(*s, MessageType::kStats, make_frame(st));
    return;
  }
  std::lock_guard lock(texture_mu_);
  if (std::find(texture_waiters_.begin(), texture_waiters_.end(), s) == texture_waiters_.end()) {
    texture_waiters_.push_back(s);
  }
  if (!texture_outstanding_) {
    texture_outstanding_ = true;
    send_to(*rc, MessageType::kTextureRequest, make_frame(TextureRequest{}));
  }
}

void Server::on_texture_image(const Message& m) {
  std::vector<std::shared_ptr<Session>> targets;
  {
    std::lock_guard lock(texture_mu_);
    targets.swap(texture_waiters_);
    texture_outstanding_ = false;
  }
  if (cfg_.texture_broadcast) targets = sessions_of(ClientRole::kExploration);
  if (targets.empty()) return;
  const auto frame = encode_frame(MessageType::kTextureImage, m.payload, cfg_.codec);
  for (auto& t : targets) send_to(*t, MessageType::kTextureImage, frame);
}

void Server::on_rc_stats(const Stats& st, Session& rc) {
  if (st.code == StatsCode::kQuery) {
    Stats report;
    report.code = StatsCode::kReport;
    report.tsdf_blocks = tsdf_.size();
    report.mc_blocks = mc_.size();
    std::lock_guard model(model_mu_);
    std::lock_guard lock(rc.mu);
    report.pending = static_cast<std::uint32_t>(rc.processed);
    send_locked(rc, MessageType::kStats, make_frame(report));
    return;
  }
  if (st.code == StatsCode::kNoFrame || st.code == StatsCode::kError) {
    std::vector<std::shared_ptr<Session>> waiters;
    {
      std::lock_guard lock(texture_mu_);
      waiters.swap(texture_waiters_);
      texture_outstanding_ = false;
    }
    for (auto& w : waiters) send_to(*w, MessageType::kStats, make_frame(st));
  }
}

void Server::on_reset_request(Session& s) {
  const auto rc = connected_rc();
  if (!rc) {
    Stats st;
    st.code = StatsCode::kNoReconstruction;
    st.text = "no reconstruction client connected";
    send_to(s, MessageType::kStats, make_frame(st));
    return;
  }
  send_to(*rc, MessageType::kResetRequest, make_frame(ResetRequest{}));
}

void Server::on_stats_query(Session& s) {
  Stats report;
  report.code = StatsCode::kReport;
  report.tsdf_blocks = tsdf_.size();
  report.mc_blocks = mc_.size();
  report.pending = static_cast<std::uint32_t>(s.stream->size());
  send_to(s, MessageType::kStats, make_frame(report));
}

std::size_t Server::expire_sessions(Clock::time_point now) {
  std::unique_lock lock(sessions_mu_);
  std::size_t n = 0;
  for (auto it = sessions_.begin(); it != sessions_.end();) {
    Session& s = *it->second;
    std::lock_guard session_lock(s.mu);
    if (!s.channel && now - s.disconnected_at >= cfg_.retention) {
      s.expired = true;
      it = sessions_.erase(it);
      ++n;
    } else {
      ++it;
    }
  }
  return n;
}

std::vector<SessionInfo> Server::sessions() const {
  std::vector<SessionInfo> out;
  std::shared_lock lock(sessions_mu_);
  for (const auto& [id, s] : sessions_) {
    std::lock_guard session_lock(s->mu);
    out.push_back({id, s->role, s->channel != nullptr, s->stream ? s->stream->size() : 0});
  }
  return out;
}

std::optional<std::size_t> Server::pending(const ClientId& id) const {
  std::shared_lock lock(sessions_mu_);
  const auto it = sessions_.find(id);
  if (it == sessions_.end() || !it->second->stream) return std::nullopt;
  return it->second->stream->size();
}

std::uint64_t Server::rc_processed(const ClientId& id) const {
  std::shared_lock lock(sessions_mu_);
  const auto it = sessions_.find(id);
  if (it == sessions_.end()) return 0;
  std::lock_guard session_lock(it->second->mu);
  return it->second->processed;
}

void Server::start(const std::string& metrics_csv) {
  std::lock_guard lock(ticker_mu_);
  if (ticker_.joinable()) return;
  ticker_stop_ = false;
  ticker_ = std::thread([this, metrics_csv] { ticker_loop(metrics_csv); });
}

void Server::stop() {
  {
    std::lock_guard lock(ticker_mu_);
    ticker_stop_ = true;
  }
  ticker_cv_.notify_all();
  if (ticker_.joinable()) ticker_.join();
}

void Server::ticker_loop(std::string metrics_csv) {
  std::ofstream csv;
  if (!metrics_csv.empty()) {
    csv.open(metrics_csv);
    csv << "t_s,tsdf_in_bytes,mc_out_bytes,in_bytes,out_bytes,pending_blocks,tsdf_blocks,mc_blocks,sessions\n";
  }
  const auto t0 = Clock::now();
  auto next_second = t0 + std::chrono::seconds(1);
  const auto period = std::chrono::duration_cast<Clock::duration>(std::chrono::duration<double>(1.0 / cfg_.pose_rate_hz));
  std::uint64_t last_tsdf = 0, last_mc = 0, last_in = 0, last_out = 0;
  const auto total = [](const std::array<std::atomic<std::uint64_t>, 16>& a) {
    std::uint64_t sum = 0;
    for (const auto& v : a) sum += v.load();
    return sum;
  };
  std::unique_lock lock(ticker_mu_);
  while (!ticker_stop_) {
    ticker_cv_.wait_for(lock, period, [&] { return ticker_stop_; });
    if (ticker_stop_) break;
    lock.unlock();
    const auto now = Clock::now();
    tick_pose_broadcast(now);
    if (now >= next_second) {
      next_second += std::chrono::seconds(1);
      expire_sessions(now);
      if (csv.is_open()) {
        const std::uint64_t tsdf = traffic_.received(MessageType::kTsdfBatch);
        const std::uint64_t mc = traffic_.sent(MessageType::kMcBatch);
        const std::uint64_t in = total(traffic_.in), out = total(traffic_.out);
        std::size_t pending_blocks = 0, count = 0;
        for (const auto& s : sessions()) {
          pending_blocks += s.pending;
          count += s.connected ? 1 : 0;
        }
        csv << std::chrono::duration<double>(now - t0).count() << ',' << tsdf - last_tsdf << ',' << mc - last_mc << ','
            << in - last_in << ',' << out - last_out << ',' << pending_blocks << ',' << tsdf_.size() << ','
            << mc_.size() << ',' << count << '\n'
            << std::flush;
        last_tsdf = tsdf;
        last_mc = mc;
        last_in = in;
        last_out = out;
      }
    }
    lock.lock();
  }
}

}  // namespace voxstream
