#include <atomic>
#include <chrono>
#include <csignal>
#include <cstdint>
#include <iostream>
#include <memory>
#include <string>
#include <thread>

#include <CLI11.hpp>

#include "voxstream/client/exploration_client.hpp"
#include "voxstream/client/reconstruction_client.hpp"
#include "voxstream/client/scenario.hpp"
#include "voxstream/net/io.hpp"
#include "voxstream/server/server.hpp"
#include "voxstream/voxel/synthetic.hpp"

using namespace voxstream;
using namespace std::chrono_literals;

namespace {

std::atomic<bool> g_interrupted{false};

void on_signal(int) { g_interrupted = true; }

/// Sleeps until SIGINT/SIGTERM, `done` returns true, or `seconds` passed (0 waits forever).
template <class F>
void wait_until(double seconds, F done) {
  const auto end = Clock::now() + std::chrono::duration_cast<Clock::duration>(std::chrono::duration<double>(seconds));
  while (!g_interrupted && !done() && (seconds <= 0 || Clock::now() < end)) std::this_thread::sleep_for(50ms);
}

/// Accepts a plain integer or "2^N".
std::uint32_t parse_size(const std::string& s) {
  if (const auto caret = s.find('^'); caret != std::string::npos) {
    if (s.substr(0, caret) != "2") throw CLI::ValidationError("size", "only powers of two may use ^: " + s);
    const int e = std::stoi(s.substr(caret + 1));
    if (e < 0 || e > 30) throw CLI::ValidationError("size", "exponent out of range: " + s);
    return 1u << e;
  }
  const unsigned long v = std::stoul(s);
  if (v == 0 || v > 0x7fffffffUL) throw CLI::ValidationError("size", "size out of range: " + s);
  return static_cast<std::uint32_t>(v);
}

struct ServerArgs {
  std::string listen = "0.0.0.0:7801";
  std::string ws_listen = "0.0.0.0:7802";
  std::string buckets = "2^20";
  std::string excess = "2^20";
  std::string codec = "2";
  double retention_s = 3600;
  std::string metrics;
  float voxel = 0.005f;
  std::uint32_t max_request = 4096;
  unsigned workers = 1;
  bool texture_broadcast = false;
  double duration_s = 0;
};

int run_server(const ServerArgs& a) {
  ServerConfig cfg;
  cfg.voxel_size = a.voxel;
  cfg.hash = {parse_size(a.buckets), parse_size(a.excess)};
  cfg.codec = parse_codec(a.codec);
  cfg.retention = std::chrono::seconds(static_cast<std::int64_t>(a.retention_s));
  cfg.max_request = a.max_request;
  cfg.workers = a.workers;
  cfg.texture_broadcast = a.texture_broadcast;
  Server server(cfg);
  NetService net(1);
  auto accept = [&server](auto ch) { return server.accept(ch); };
  const Endpoint tcp = parse_endpoint(a.listen);
  std::cout << "listening tcp " << tcp.host << ':' << net.listen(Transport::kTcp, tcp, accept) << std::endl;
  if (!a.ws_listen.empty() && a.ws_listen != "off") {
    const Endpoint ws = parse_endpoint(a.ws_listen);
    std::cout << "listening ws " << ws.host << ':' << net.listen(Transport::kWebSocket, ws, accept) << kWebSocketPath
              << std::endl;
  }
  server.start(a.metrics);
  wait_until(a.duration_s, [] { return false; });
  server.stop();
  net.shutdown();
  std::cout << "model: " << server.tsdf_size() << " tsdf blocks, " << server.mc_size() << " mc blocks" << std::endl;
  return 0;
}

struct RcArgs {
  std::string server = "127.0.0.1:7801";
  bool ws = false;
  std::string dataset;
  std::string synthetic;
  std::uint32_t frames = 90;
  std::uint32_t width = 160;
  std::uint32_t height = 120;
  float sweep = 1.f;
  float voxel = 0.005f;
  std::uint32_t package = 512;
  double rate = 100;
  std::string codec = "2";
  double speed = 1;
  double ema_tau = 5;
  double prefetch_threshold = 64;
  double prefetch_cooldown = 5;
  std::string buckets = "2^20";
  std::string metrics;
  bool stay = false;
};

int run_rc(const RcArgs& a) {
  SensorInfo sensor;
  FrameSource source;
  if (!a.dataset.empty()) {
    auto reader = std::make_shared<SequenceReader>(a.dataset);
    sensor = reader->sensor();
    source = [reader] { return reader->next(); };
  } else {
    SyntheticConfig sc;
    sc.scene = parse_scene_kind(a.synthetic);
    sc.frames = a.frames;
    sc.width = a.width;
    sc.height = a.height;
    sc.sweep = a.sweep;
    sensor = synthetic_sensor(sc);
    auto i = std::make_shared<std::uint32_t>(0);
    source = [sc, i]() -> std::optional<Frame> {
      if (*i >= sc.frames) return std::nullopt;
      return render_synthetic(sc, (*i)++);
    };
  }
  RcConfig cfg;
  cfg.server = parse_endpoint(a.server);
  cfg.transport = a.ws ? Transport::kWebSocket : Transport::kTcp;
  cfg.fusion.voxel_size = a.voxel;
  const std::uint32_t buckets = parse_size(a.buckets);
  cfg.hash = {buckets, buckets};
  cfg.package_size = a.package;
  cfg.send_rate_hz = a.rate;
  cfg.codec = parse_codec(a.codec);
  cfg.speed = a.speed;
  cfg.ema_tau_s = a.ema_tau;
  cfg.prefetch_threshold = a.prefetch_threshold;
  cfg.prefetch_cooldown_s = a.prefetch_cooldown;
  ReconstructionClient rc(cfg, sensor.intrinsics, sensor.near_m, sensor.far_m);
  rc.start(a.metrics);
  const FrameSource interruptible = [&]() -> std::optional<Frame> {
    if (g_interrupted || rc.rejected()) return std::nullopt;
    return source();
  };
  const std::size_t frames = rc.run(interruptible);
  std::cout << "fused " << frames << " frames, " << rc.model().size() << " blocks" << std::endl;
  wait_until(0, [&] { return rc.quiescent() || rc.rejected(); });
  if (a.stay && !rc.rejected()) {
    std::cout << "model streamed; serving reset and texture requests until interrupted" << std::endl;
    wait_until(0, [] { return false; });
  }
  const RcStats st = rc.stats();
  std::cout << "sent " << st.batches_sent << " batches, " << st.blocks_sent << " blocks, " << st.tsdf_bytes_sent
            << " TSDF_BATCH bytes; resets " << st.resets << ", prefetches " << st.prefetches << ", reconnects "
            << st.reconnects << std::endl;
  const bool rejected = rc.rejected();
  rc.stop();
  return rejected ? 2 : 0;
}

struct EcArgs {
  std::string server = "127.0.0.1:7801";
  bool ws = false;
  double rate = 100;
  std::uint32_t max = 512;
  std::string strategy = "random";
  std::string pose_script;
  std::string metrics;
  bool discard = false;
  float voxel = 0.005f;
  double idle_stop = 0;
  double duration = 0;
  std::size_t rebuild_budget = 8;
  unsigned threads = 1;
  std::string buckets = "2^20";
};

int run_ec(const EcArgs& a) {
  EcConfig cfg;
  cfg.server = parse_endpoint(a.server);
  cfg.transport = a.ws ? Transport::kWebSocket : Transport::kTcp;
  cfg.voxel_size = a.voxel;
  cfg.request_rate_hz = a.rate;
  cfg.max_blocks = a.max;
  cfg.strategy = parse_strategy(a.strategy);
  if (!a.pose_script.empty()) cfg.poses = PoseScript::load(a.pose_script);
  cfg.discard = a.discard;
  cfg.idle_stop_s = a.idle_stop;
  cfg.rebuild_budget = a.rebuild_budget;
  cfg.threads = a.threads;
  const std::uint32_t buckets = parse_size(a.buckets);
  cfg.hash = {buckets, buckets};
  ExplorationClient ec(cfg);
  ec.start(a.metrics);
  wait_until(a.duration, [&] { return ec.finished() || ec.rejected(); });
  const EcStats st = ec.stats();
  std::cout << "requests " << st.requests << ", responses " << st.responses << " (" << st.empty_responses
            << " empty), blocks " << st.blocks_received << ", MC_BATCH bytes " << st.batch_bytes << ", deleted "
            << st.blocks_deleted << ", connects " << st.connects << ", local blocks " << ec.local().size()
            << ", mesh blocks " << ec.local().mesh_block_count() << std::endl;
  if (st.last_block_s > st.first_block_s && st.first_block_s >= 0) {
    std::cout << "active mean " << 8.0 * st.batch_bytes / (st.last_block_s - st.first_block_s) / 1e6 << " Mbit/s"
              << std::endl;
  }
  const bool rejected = ec.rejected();
  ec.stop();
  return rejected ? 2 : 0;
}

int run_scenario_file(const std::string& path, const std::string& metrics_dir) {
  ScenarioSpec spec = load_scenario(path);
  if (!metrics_dir.empty()) spec.metrics_dir = metrics_dir;
  const ScenarioResult r = run_scenario(spec);
  print_summary(std::cout, spec, r);
  return r.ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Live voxel-block scene streaming: server, reconstruction and exploration clients"};
  app.require_subcommand(1);

  ServerArgs sa;
  auto* server = app.add_subcommand("server", "Run the streaming server");
  server->add_option("--listen", sa.listen, "TCP endpoint host:port")->capture_default_str();
  server->add_option("--ws-listen", sa.ws_listen, "WebSocket endpoint host:port, or off")->capture_default_str();
  server->add_option("--buckets", sa.buckets, "Hash buckets (integer or 2^N)")->capture_default_str();
  server->add_option("--excess", sa.excess, "Hash excess entries (integer or 2^N)")->capture_default_str();
  server->add_option("--codec", sa.codec, "0 identity, 1 deflate, 2 zstd")->capture_default_str();
  server->add_option("--retention", sa.retention_s, "Seconds a disconnected session is kept")->capture_default_str();
  server->add_option("--metrics", sa.metrics, "Per-second CSV log");
  server->add_option("--voxel", sa.voxel, "Voxel size in meters")->capture_default_str();
  server->add_option("--max-request", sa.max_request, "Cap on BLOCK_REQUEST max_blocks")->capture_default_str();
  server->add_option("--workers", sa.workers, "MC recomputation threads")->capture_default_str();
  server->add_flag("--texture-broadcast", sa.texture_broadcast, "Relay textures to every exploration client");
  server->add_option("--duration", sa.duration_s, "Stop after this many seconds (0 runs until interrupted)");

  RcArgs ra;
  auto* rc = app.add_subcommand("rc", "Fuse a sequence and stream it to the server");
  rc->add_option("--server", ra.server, "Server host:port")->capture_default_str();
  rc->add_flag("--ws", ra.ws, "Connect over WebSocket");
  auto* dataset = rc->add_option("--dataset", ra.dataset, "VCSEQ1 replay file")->check(CLI::ExistingFile);
  auto* synthetic = rc->add_option("--synthetic", ra.synthetic, "Synthetic scene: room or sphere");
  dataset->excludes(synthetic);
  synthetic->excludes(dataset);
  rc->add_option("--frames", ra.frames, "Synthetic frame count")->capture_default_str();
  rc->add_option("--width", ra.width, "Synthetic image width")->capture_default_str();
  rc->add_option("--height", ra.height, "Synthetic image height")->capture_default_str();
  rc->add_option("--sweep", ra.sweep, "Fraction of a turn covered by the synthetic camera")->capture_default_str();
  rc->add_option("--voxel", ra.voxel, "Voxel size in meters")->capture_default_str();
  rc->add_option("--package", ra.package, "Blocks per TSDF_BATCH")->capture_default_str();
  rc->add_option("--rate", ra.rate, "TSDF_BATCH sends per second")->capture_default_str();
  rc->add_option("--codec", ra.codec, "0 identity, 1 deflate, 2 zstd")->capture_default_str();
  rc->add_option("--speed", ra.speed, "Replay speed multiplier (0 unpaced)")->capture_default_str();
  rc->add_option("--ema-tau", ra.ema_tau, "EMA time constant in seconds")->capture_default_str();
  rc->add_option("--prefetch-threshold", ra.prefetch_threshold, "EMA level below which visible blocks are queued")
      ->capture_default_str();
  rc->add_option("--prefetch-cooldown", ra.prefetch_cooldown, "Seconds between prefetches")->capture_default_str();
  rc->add_option("--buckets", ra.buckets, "Hash buckets and excess entries")->capture_default_str();
  rc->add_option("--metrics", ra.metrics, "Per-second CSV log");
  rc->add_flag("--stay", ra.stay, "Stay connected after streaming to serve reset and texture requests");

  EcArgs ea;
  auto* ec = app.add_subcommand("ec", "Exploration and benchmark client");
  ec->add_option("--server", ea.server, "Server host:port")->capture_default_str();
  ec->add_flag("--ws", ea.ws, "Connect over WebSocket");
  ec->add_option("--rate", ea.rate, "BLOCK_REQUESTs per second")->capture_default_str();
  ec->add_option("--max", ea.max, "Blocks per request")->capture_default_str();
  ec->add_option("--strategy", ea.strategy, "random, visible or order")->capture_default_str();
  ec->add_option("--pose-script", ea.pose_script, "Waypoint file: t ex ey ez tx ty tz per line")
      ->check(CLI::ExistingFile);
  ec->add_option("--metrics", ea.metrics, "Per-second CSV log");
  ec->add_flag("--discard", ea.discard, "Count received blocks and keep nothing");
  ec->add_option("--voxel", ea.voxel, "Voxel size in meters")->capture_default_str();
  ec->add_option("--idle-stop", ea.idle_stop, "Stop after this many seconds of empty responses (0 never)");
  ec->add_option("--duration", ea.duration, "Stop after this many seconds (0 runs until interrupted)");
  ec->add_option("--rebuild-budget", ea.rebuild_budget, "Mesh regions rebuilt per tick")->capture_default_str();
  ec->add_option("--threads", ea.threads, "Mesh rebuild threads")->capture_default_str();
  ec->add_option("--buckets", ea.buckets, "Hash buckets and excess entries")->capture_default_str();

  std::string scenario_path, scenario_metrics;
  auto* scenario = app.add_subcommand("scenario", "Scripted end-to-end experiments");
  scenario->require_subcommand(1);
  auto* scenario_run = scenario->add_subcommand("run", "Run one scenario file and print the summary");
  scenario_run->add_option("spec", scenario_path, "Scenario INI file")->required()->check(CLI::ExistingFile);
  scenario_run->add_option("--metrics-dir", scenario_metrics, "Directory for the CSV logs");

  SyntheticConfig gen;
  std::string gen_scene = "room", gen_out;
  auto* gen_dataset = app.add_subcommand("gen-dataset", "Write a synthetic VCSEQ1 sequence");
  gen_dataset->add_option("--synthetic", gen_scene, "room or sphere")->capture_default_str();
  gen_dataset->add_option("--frames", gen.frames, "Frame count")->capture_default_str();
  gen_dataset->add_option("--width", gen.width, "Image width")->capture_default_str();
  gen_dataset->add_option("--height", gen.height, "Image height")->capture_default_str();
  gen_dataset->add_option("--sweep", gen.sweep, "Fraction of a turn covered")->capture_default_str();
  gen_dataset->add_option("--out", gen_out, "Output path")->required();

  CLI11_PARSE(app, argc, argv);
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);

  try {
    if (*server) return run_server(sa);
    if (*rc) {
      if (ra.dataset.empty() && ra.synthetic.empty()) throw std::invalid_argument("rc: give --dataset or --synthetic");
      return run_rc(ra);
    }
    if (*ec) return run_ec(ea);
    if (*scenario_run) return run_scenario_file(scenario_path, scenario_metrics);
    if (*gen_dataset) {
      gen.scene = parse_scene_kind(gen_scene);
      std::cout << "wrote " << write_synthetic_sequence(gen, gen_out) << " frames to " << gen_out << std::endl;
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return 1;
  }
  return 0;
}
