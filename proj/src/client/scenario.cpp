#include "voxstream/client/scenario.hpp"

#include <algorithm>
#include <atomic>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>
#include <thread>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "voxstream/server/server.hpp"
#include "voxstream/voxel/dataset.hpp"

namespace voxstream {
namespace {

using namespace std::chrono_literals;
namespace pt = boost::property_tree;

const std::map<std::string, std::set<std::string>>& known_keys() {
  static const std::map<std::string, std::set<std::string>> keys = {
      {"scene", {"kind", "frames", "width", "height", "sweep", "dataset"}},
      {"server", {"voxel_size", "codec", "transport", "max_request", "workers"}},
      {"rc",
       {"package_size", "send_rate_hz", "codec", "speed", "ema_tau_s", "prefetch_threshold", "prefetch_cooldown_s"}},
      {"ec", {"count", "rate_hz", "max_blocks", "strategy", "discard", "join", "rebuild_budget"}},
      {"faults", {"ec_outage_at_s", "ec_outage_s", "rc_outage_at_s", "rc_outage_s", "reset_at_frame"}},
      {"run", {"name", "timeout_s", "hash_buckets", "metrics_dir"}},
  };
  return keys;
}

template <class T>
T get(const pt::ptree& tree, const std::string& path, T fallback) {
  const auto v = tree.get_optional<std::string>(path);
  if (!v) return fallback;
  try {
    return tree.get<T>(path);
  } catch (const pt::ptree_error&) {
    throw std::invalid_argument("scenario: bad value for " + path + ": " + *v);
  }
}

Transport parse_transport(const std::string& s) {
  if (s == "tcp") return Transport::kTcp;
  if (s == "ws" || s == "websocket") return Transport::kWebSocket;
  throw std::invalid_argument("scenario: transport must be tcp or ws, got " + s);
}

bool parse_bool(const std::string& s) {
  if (s == "true" || s == "1" || s == "yes" || s == "on") return true;
  if (s == "false" || s == "0" || s == "no" || s == "off") return false;
  throw std::invalid_argument("scenario: expected a boolean, got " + s);
}

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string metrics_path(const ScenarioSpec& spec, const std::string& file) {
  if (spec.metrics_dir.empty()) return {};
  return (spec.metrics_dir / file).string();
}

}  // namespace

void ScenarioSpec::validate() const {
  if (scene != "room" && scene != "sphere" && scene != "file") {
    throw std::invalid_argument("scenario: scene kind must be room, sphere or file");
  }
  if (scene == "file" && dataset.empty()) throw std::invalid_argument("scenario: kind = file needs a dataset path");
  if (scene != "file" && (frames == 0 || width == 0 || height == 0)) {
    throw std::invalid_argument("scenario: frames, width and height must be positive");
  }
  if (!(voxel_size > 0.f)) throw std::invalid_argument("scenario: voxel size must be positive");
  if (package_size == 0 || ec_max_blocks == 0) throw std::invalid_argument("scenario: package sizes must be positive");
  if (!(rc_send_rate_hz > 0.0) || !(ec_rate_hz > 0.0)) throw std::invalid_argument("scenario: rates must be positive");
  if (speed < 0.0) throw std::invalid_argument("scenario: speed must be non-negative");
  if (!(timeout_s > 0.0)) throw std::invalid_argument("scenario: timeout must be positive");
  if (ec_outage_at_s >= 0.0 && !(ec_outage_s > 0.0)) throw std::invalid_argument("scenario: ec outage must be positive");
  if (rc_outage_at_s >= 0.0 && !(rc_outage_s > 0.0)) throw std::invalid_argument("scenario: rc outage must be positive");
  if (hash_buckets == 0) throw std::invalid_argument("scenario: hash buckets must be positive");
}

ScenarioSpec parse_scenario(std::istream& in) {
  pt::ptree tree;
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw std::invalid_argument(std::string("scenario: ") + e.what());
  }
  for (const auto& [section, body] : tree) {
    const auto it = known_keys().find(section);
    if (it == known_keys().end()) throw std::invalid_argument("scenario: unknown section [" + section + "]");
    for (const auto& [key, value] : body) {
      if (!it->second.contains(key)) throw std::invalid_argument("scenario: unknown key " + section + "." + key);
    }
  }
  ScenarioSpec s;
  s.name = get(tree, "run.name", s.name);
  s.scene = get(tree, "scene.kind", s.scene);
  s.frames = get(tree, "scene.frames", s.frames);
  s.width = get(tree, "scene.width", s.width);
  s.height = get(tree, "scene.height", s.height);
  s.sweep = get(tree, "scene.sweep", s.sweep);
  s.dataset = get(tree, "scene.dataset", s.dataset.string());

  s.voxel_size = get(tree, "server.voxel_size", s.voxel_size);
  if (auto c = tree.get_optional<std::string>("server.codec")) s.server_codec = parse_codec(*c);
  if (auto t = tree.get_optional<std::string>("server.transport")) s.transport = parse_transport(*t);
  s.max_request = get(tree, "server.max_request", s.max_request);
  s.server_workers = get(tree, "server.workers", s.server_workers);

  s.package_size = get(tree, "rc.package_size", s.package_size);
  s.rc_send_rate_hz = get(tree, "rc.send_rate_hz", s.rc_send_rate_hz);
  if (auto c = tree.get_optional<std::string>("rc.codec")) s.rc_codec = parse_codec(*c);
  s.speed = get(tree, "rc.speed", s.speed);
  s.ema_tau_s = get(tree, "rc.ema_tau_s", s.ema_tau_s);
  s.prefetch_threshold = get(tree, "rc.prefetch_threshold", s.prefetch_threshold);
  s.prefetch_cooldown_s = get(tree, "rc.prefetch_cooldown_s", s.prefetch_cooldown_s);

  s.ec_count = get(tree, "ec.count", s.ec_count);
  s.ec_rate_hz = get(tree, "ec.rate_hz", s.ec_rate_hz);
  s.ec_max_blocks = get(tree, "ec.max_blocks", s.ec_max_blocks);
  if (auto v = tree.get_optional<std::string>("ec.strategy")) s.ec_strategy = parse_strategy(*v);
  if (auto v = tree.get_optional<std::string>("ec.discard")) s.ec_discard = parse_bool(*v);
  if (auto v = tree.get_optional<std::string>("ec.join")) {
    if (*v != "start" && *v != "after_rc") throw std::invalid_argument("scenario: ec.join must be start or after_rc");
    s.ec_join_after_rc = *v == "after_rc";
  }
  s.ec_rebuild_budget = get(tree, "ec.rebuild_budget", s.ec_rebuild_budget);

  s.ec_outage_at_s = get(tree, "faults.ec_outage_at_s", s.ec_outage_at_s);
  s.ec_outage_s = get(tree, "faults.ec_outage_s", s.ec_outage_s);
  s.rc_outage_at_s = get(tree, "faults.rc_outage_at_s", s.rc_outage_at_s);
  s.rc_outage_s = get(tree, "faults.rc_outage_s", s.rc_outage_s);
  s.reset_at_frame = get(tree, "faults.reset_at_frame", s.reset_at_frame);

  s.timeout_s = get(tree, "run.timeout_s", s.timeout_s);
  s.hash_buckets = get(tree, "run.hash_buckets", s.hash_buckets);
  s.metrics_dir = get(tree, "run.metrics_dir", s.metrics_dir.string());
  s.validate();
  return s;
}

ScenarioSpec load_scenario(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("scenario: cannot open " + path.string());
  ScenarioSpec s = parse_scenario(in);
  if (s.name == "scenario") s.name = path.stem().string();
  if (s.scene == "file" && s.dataset.is_relative()) s.dataset = path.parent_path() / s.dataset;
  return s;
}

double r_squared_through_origin(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) throw std::invalid_argument("r_squared: need two or more paired points");
  double sxy = 0, sxx = 0, mean = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += x[i] * y[i];
    sxx += x[i] * x[i];
    mean += y[i];
  }
  if (sxx == 0) throw std::invalid_argument("r_squared: x must not be all zero");
  mean /= static_cast<double>(y.size());
  const double b = sxy / sxx;
  double res = 0, tot = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    res += (y[i] - b * x[i]) * (y[i] - b * x[i]);
    tot += (y[i] - mean) * (y[i] - mean);
  }
  if (tot == 0) return res == 0 ? 1.0 : 0.0;
  return 1.0 - res / tot;
}

ScenarioResult run_scenario(const ScenarioSpec& spec) {
  ScenarioResult r;
  try {
    spec.validate();
    if (!spec.metrics_dir.empty()) std::filesystem::create_directories(spec.metrics_dir);

    // Frames.
    SensorInfo sensor;
    FrameSource source;
    if (spec.scene == "file") {
      auto reader = std::make_shared<SequenceReader>(spec.dataset);
      sensor = reader->sensor();
      source = [reader] { return reader->next(); };
    } else {
      SyntheticConfig sc;
      sc.scene = parse_scene_kind(spec.scene);
      sc.frames = spec.frames;
      sc.width = spec.width;
      sc.height = spec.height;
      sc.sweep = spec.sweep;
      sensor = synthetic_sensor(sc);
      auto i = std::make_shared<std::uint32_t>(0);
      source = [sc, i]() -> std::optional<Frame> {
        if (*i >= sc.frames) return std::nullopt;
        return render_synthetic(sc, (*i)++);
      };
    }
    const HashConfig hash{spec.hash_buckets, spec.hash_buckets};

    // Server.
    ServerConfig scfg;
    scfg.voxel_size = spec.voxel_size;
    scfg.hash = hash;
    scfg.codec = spec.server_codec;
    scfg.max_request = spec.max_request;
    scfg.workers = spec.server_workers;
    Server server(scfg);
    NetService net(1);
    const std::uint16_t port =
        net.listen(spec.transport, {"127.0.0.1", 0}, [&server](auto ch) { return server.accept(ch); });
    server.start(metrics_path(spec, "server.csv"));
    const Endpoint endpoint{"127.0.0.1", port};

    // Clients.
    RcConfig rcfg;
    rcfg.server = endpoint;
    rcfg.transport = spec.transport;
    rcfg.fusion.voxel_size = spec.voxel_size;
    rcfg.hash = hash;
    rcfg.package_size = spec.package_size;
    rcfg.send_rate_hz = spec.rc_send_rate_hz;
    rcfg.codec = spec.rc_codec;
    rcfg.speed = spec.speed;
    rcfg.ema_tau_s = spec.ema_tau_s;
    rcfg.prefetch_threshold = spec.prefetch_threshold;
    rcfg.prefetch_cooldown_s = spec.prefetch_cooldown_s;
    ReconstructionClient rc(rcfg, sensor.intrinsics, sensor.near_m, sensor.far_m);

    std::vector<std::unique_ptr<ExplorationClient>> ecs;
    for (unsigned i = 0; i < spec.ec_count; ++i) {
      EcConfig ecfg;
      ecfg.server = endpoint;
      ecfg.transport = spec.transport;
      ecfg.voxel_size = spec.voxel_size;
      ecfg.request_rate_hz = spec.ec_rate_hz;
      ecfg.max_blocks = spec.ec_max_blocks;
      ecfg.strategy = spec.ec_strategy;
      ecfg.discard = spec.ec_discard;
      ecfg.rebuild_budget = spec.ec_rebuild_budget;
      ecfg.hash = hash;
      ecfg.intrinsics = {sensor.intrinsics.fx, sensor.intrinsics.fy, sensor.intrinsics.cx,
                         sensor.intrinsics.cy, sensor.near_m,         sensor.far_m};
      ecs.push_back(std::make_unique<ExplorationClient>(ecfg));
    }
    auto start_ecs = [&] {
      for (std::size_t i = 0; i < ecs.size(); ++i) ecs[i]->start(metrics_path(spec, "ec" + std::to_string(i) + ".csv"));
    };

    const auto t0 = Clock::now();
    const auto deadline = t0 + std::chrono::duration_cast<Clock::duration>(std::chrono::duration<double>(spec.timeout_s));
    if (!spec.ec_join_after_rc) start_ecs();
    rc.start(metrics_path(spec, "rc.csv"));

    // Per-second sampler and fault injection.
    std::atomic<bool> sampling{true};
    std::vector<std::vector<double>> coverage(ecs.size());
    std::vector<std::uint64_t> last_ec_bytes(ecs.size(), 0);
    std::uint64_t last_tsdf = 0;
    std::atomic<bool> ec_outage_done = spec.ec_outage_at_s < 0 || ecs.empty();
    std::atomic<bool> rc_outage_done = spec.rc_outage_at_s < 0;
    std::ofstream series;
    if (!spec.metrics_dir.empty()) {
      series.open(spec.metrics_dir / "scenario.csv");
      series << "t_s,tsdf_bytes,mc_bytes,server_mc_blocks";
      for (std::size_t i = 0; i < ecs.size(); ++i) series << ",ec" << i << "_completeness";
      series << '\n';
    }
    std::thread sampler([&] {
      auto next = t0 + 1s;
      while (sampling.load()) {
        const double t = seconds_since(t0);
        if (!ec_outage_done && t >= spec.ec_outage_at_s) {
          ec_outage_done = true;
          ecs[0]->inject_outage(std::chrono::milliseconds(static_cast<std::int64_t>(spec.ec_outage_s * 1000)));
        }
        if (!rc_outage_done && t >= spec.rc_outage_at_s) {
          rc_outage_done = true;
          rc.inject_outage(std::chrono::milliseconds(static_cast<std::int64_t>(spec.rc_outage_s * 1000)));
        }
        if (Clock::now() >= next) {
          next += 1s;
          const std::uint64_t tsdf = server.traffic().received(MessageType::kTsdfBatch);
          r.tsdf_max_bps = std::max(r.tsdf_max_bps, static_cast<double>(tsdf - last_tsdf));
          last_tsdf = tsdf;
          const std::vector<BlockKey> ref = server.mc_keys();
          if (series.is_open()) series << t << ',' << tsdf << ',' << server.traffic().sent(MessageType::kMcBatch) << ','
                                       << ref.size();
          for (std::size_t i = 0; i < ecs.size(); ++i) {
            const std::uint64_t b = ecs[i]->stats().batch_bytes;
            r.mc_max_bps = std::max(r.mc_max_bps, static_cast<double>(b - last_ec_bytes[i]));
            last_ec_bytes[i] = b;
            const double c = spec.ec_discard ? 0.0 : completeness(ecs[i]->local().keys(), ref);
            coverage[i].push_back(c);
            if (series.is_open()) series << ',' << c;
          }
          if (series.is_open()) series << '\n' << std::flush;
        }
        std::this_thread::sleep_for(20ms);
      }
    });
    struct StopSampler {
      std::atomic<bool>& flag;
      std::thread& th;
      ~StopSampler() {
        flag = false;
        if (th.joinable()) th.join();
      }
    } stop_sampler{sampling, sampler};

    // Reconstruction.
    std::int64_t index = 0;
    std::string reset_route;
    const FrameSource paced = [&]() -> std::optional<Frame> {
      if (index - 1 == spec.reset_at_frame && spec.reset_at_frame >= 0) {
        // The reset travels the full path (EC -> server -> RC) when possible.
        if (!ecs.empty() && !spec.ec_join_after_rc && ecs[0]->connected()) {
          ecs[0]->request_reset();
          reset_route = "exploration client";
        } else {
          rc.handle_reset_request();
          reset_route = "reconstruction client";
        }
      }
      auto f = source();
      if (f) ++index;
      return f;
    };
    r.frames = rc.run(paced);
    if (!rc.wait_quiescent(std::chrono::duration_cast<std::chrono::milliseconds>(deadline - Clock::now()))) {
      throw std::runtime_error("reconstruction client did not drain before the timeout");
    }
    r.rc_s = seconds_since(t0);
    if (spec.ec_join_after_rc) start_ecs();

    // Convergence: each client's stream set is empty, the outage is over and
    // an empty response arrived after that was observed.
    std::vector<std::optional<std::uint64_t>> marks(ecs.size());
    std::vector<bool> done(ecs.size(), false);
    for (;;) {
      if (Clock::now() > deadline) throw std::runtime_error("exploration clients did not converge before the timeout");
      bool all = ec_outage_done && rc_outage_done;
      // The RC must stay quiescent: a late reset or outage reopens its log.
      all = all && rc.quiescent();
      for (std::size_t i = 0; i < ecs.size(); ++i) {
        if (done[i]) continue;
        const EcStats s = ecs[i]->stats();
        const auto pending = server.pending(ecs[i]->config().client_id);
        if (!ecs[i]->connected() || !pending || *pending != 0) {
          marks[i].reset();
        } else if (!marks[i]) {
          marks[i] = s.empty_responses;
        } else if (s.empty_responses > *marks[i]) {
          done[i] = true;
        }
        all = all && done[i];
      }
      if (all) break;
      std::this_thread::sleep_for(20ms);
    }
    r.run_s = seconds_since(t0);
    sampling = false;
    sampler.join();

    // Outcome.
    r.tsdf_bytes = server.traffic().received(MessageType::kTsdfBatch);
    r.mc_bytes = server.traffic().sent(MessageType::kMcBatch);
    r.server_tsdf_blocks = server.tsdf_size();
    r.server_mc_blocks = server.mc_size();
    r.tsdf_mean_bps = static_cast<double>(r.tsdf_bytes) / r.run_s;
    const std::vector<BlockKey> ref = server.mc_keys();
    const std::set<BlockKey> ref_set(ref.begin(), ref.end());
    double mc_sum = 0, active_sum = 0;
    bool all_match = true;
    for (std::size_t i = 0; i < ecs.size(); ++i) {
      ExplorationClient& ec = *ecs[i];
      EcOutcome o;
      o.stats = ec.stats();
      o.completeness = coverage[i];
      mc_sum += static_cast<double>(o.stats.batch_bytes) / r.run_s;
      const double window = std::max(o.stats.last_block_s - o.stats.first_block_s, 1.0 / spec.ec_rate_hz);
      o.active_mean_bps = o.stats.first_block_s < 0 ? 0.0 : static_cast<double>(o.stats.batch_bytes) / window;
      active_sum += o.active_mean_bps;
      if (!spec.ec_discard) {
        const std::vector<BlockKey> local = ec.local().keys();
        o.local_blocks = local.size();
        const std::set<BlockKey> local_set(local.begin(), local.end());
        for (const auto& k : ref)
          if (!local_set.contains(k)) ++o.missing;
        for (const auto& k : local)
          if (!ref_set.contains(k)) ++o.extra;
        for (const auto& k : local) {
          if (ref_set.contains(k) && ec.local().block(k) != server.mc_block(k)) ++o.differing;
        }
        o.matches_server = o.missing == 0 && o.extra == 0 && o.differing == 0;
        o.completeness.push_back(completeness(local, ref));
        if (!o.matches_server) {
          all_match = false;
          r.diagnostics += "ec" + std::to_string(i) + ": " + std::to_string(o.missing) + " missing, " +
                           std::to_string(o.extra) + " extra, " + std::to_string(o.differing) + " differing blocks; ";
        }
      }
      r.ecs.push_back(std::move(o));
    }
    if (!ecs.empty()) {
      r.mc_mean_bps = mc_sum / static_cast<double>(ecs.size());
      r.mc_active_mean_bps = active_sum / static_cast<double>(ecs.size());
    }
    if (!reset_route.empty()) r.diagnostics += "reset requested via " + reset_route + "; ";

    for (auto& ec : ecs) ec->stop();
    rc.stop();
    server.stop();
    net.shutdown();
    r.ok = all_match;
  } catch (const std::exception& e) {
    r.ok = false;
    r.diagnostics += std::string("failed: ") + e.what();
  }
  return r;
}

void print_summary(std::ostream& out, const ScenarioSpec& spec, const ScenarioResult& r) {
  const auto mb = [](double bps) { return bps * 8.0 / 1e6; };
  out << std::fixed << std::setprecision(3);
  out << "scenario " << spec.name << ": " << (r.ok ? "ok" : "FAILED") << "\n";
  out << "  frames                 " << r.frames << "\n";
  out << "  run / rc time (s)      " << r.run_s << " / " << r.rc_s << "\n";
  out << "  server blocks tsdf/mc  " << r.server_tsdf_blocks << " / " << r.server_mc_blocks << "\n";
  out << "  TSDF " << std::setw(4) << spec.package_size << " mean/max Mbit/s   " << mb(r.tsdf_mean_bps) << " / "
      << mb(r.tsdf_max_bps) << "\n";
  out << "  MC   " << std::setw(4) << spec.ec_max_blocks << " mean/max Mbit/s   " << mb(r.mc_mean_bps) << " / "
      << mb(r.mc_max_bps) << "  (active mean " << mb(r.mc_active_mean_bps) << ")\n";
  out << "  bandwidth ratio MC/TSDF " << r.bandwidth_ratio() << "\n";
  for (std::size_t i = 0; i < r.ecs.size(); ++i) {
    const EcOutcome& o = r.ecs[i];
    out << "  ec" << i << ": blocks " << o.stats.blocks_received << ", bytes " << o.stats.batch_bytes << ", connects "
        << o.stats.connects;
    if (!spec.ec_discard) {
      out << ", local " << o.local_blocks << ", " << (o.matches_server ? "matches server" : "DIFFERS from server");
    }
    out << "\n";
  }
  std::string notes = r.diagnostics;
  while (!notes.empty() && (notes.back() == ' ' || notes.back() == ';')) notes.pop_back();
  if (!notes.empty()) out << "  notes: " << notes << "\n";
}

}  // namespace voxstream
