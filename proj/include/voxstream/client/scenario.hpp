#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "voxstream/client/exploration_client.hpp"
#include "voxstream/client/reconstruction_client.hpp"
#include "voxstream/voxel/synthetic.hpp"

namespace voxstream {

/// End-to-end experiment run in one process over loopback: a server, one
/// reconstruction client replaying a scene and N exploration clients.
///
/// File format (INI, every key optional):
///
///   [scene]   kind = room | sphere | file, frames, width, height, sweep,
///             dataset (VCSEQ1 path for kind = file)
///   [server]  voxel_size, codec, transport = tcp | ws, max_request, workers
///   [rc]      package_size, send_rate_hz, codec, speed, ema_tau_s,
///             prefetch_threshold, prefetch_cooldown_s
///   [ec]      count, rate_hz, max_blocks, strategy, discard,
///             join = start | after_rc, rebuild_budget
///   [faults]  ec_outage_at_s, ec_outage_s, rc_outage_at_s, rc_outage_s,
///             reset_at_frame (negative disables)
///   [run]     timeout_s, hash_buckets, metrics_dir
struct ScenarioSpec {
  std::string name = "scenario";

  std::string scene = "room";
  std::uint32_t frames = 90;
  std::uint32_t width = 160;
  std::uint32_t height = 120;
  float sweep = 1.f;
  std::filesystem::path dataset;

  float voxel_size = 0.005f;
  Codec server_codec = Codec::kZstd;
  Transport transport = Transport::kTcp;
  std::uint32_t max_request = 4096;
  unsigned server_workers = 1;

  std::uint32_t package_size = 512;
  double rc_send_rate_hz = 1000.0;
  Codec rc_codec = Codec::kZstd;
  double speed = 0.0;
  double ema_tau_s = 5.0;
  double prefetch_threshold = 64.0;
  double prefetch_cooldown_s = 5.0;

  unsigned ec_count = 1;
  double ec_rate_hz = 100.0;
  std::uint32_t ec_max_blocks = 512;
  RequestStrategy ec_strategy = RequestStrategy::kRandom;
  bool ec_discard = false;
  /// Exploration clients connect only after the reconstruction client is done.
  bool ec_join_after_rc = false;
  std::size_t ec_rebuild_budget = 8;

  double ec_outage_at_s = -1.0;
  double ec_outage_s = 5.0;
  double rc_outage_at_s = -1.0;
  double rc_outage_s = 1.0;
  std::int64_t reset_at_frame = -1;

  double timeout_s = 280.0;
  std::uint32_t hash_buckets = 1u << 18;
  std::filesystem::path metrics_dir;

  void validate() const;
};

/// Throws std::invalid_argument on unknown sections or keys and bad values.
ScenarioSpec parse_scenario(std::istream& in);
ScenarioSpec load_scenario(const std::filesystem::path& path);

struct EcOutcome {
  EcStats stats;
  std::size_t local_blocks = 0;
  /// Key set and block bytes equal the server's (full clients only).
  bool matches_server = false;
  std::size_t missing = 0;
  std::size_t extra = 0;
  std::size_t differing = 0;
  /// Bytes per second between the first and last non-empty MC_BATCH.
  double active_mean_bps = 0.0;
  /// Completeness sampled once per second.
  std::vector<double> completeness;
};

struct ScenarioResult {
  bool ok = false;
  std::string diagnostics;
  /// From the first frame until every client converged.
  double run_s = 0.0;
  /// From the first frame until the reconstruction client went quiescent.
  double rc_s = 0.0;
  std::uint64_t frames = 0;
  std::uint64_t tsdf_bytes = 0;
  std::uint64_t mc_bytes = 0;
  /// TSDF_BATCH bytes per second over the run and per one-second bin.
  double tsdf_mean_bps = 0.0;
  double tsdf_max_bps = 0.0;
  /// MC_BATCH bytes per second per exploration client over the run, and the
  /// largest one-second bin of any client.
  double mc_mean_bps = 0.0;
  double mc_max_bps = 0.0;
  /// Mean over clients of EcOutcome::active_mean_bps.
  double mc_active_mean_bps = 0.0;
  std::size_t server_tsdf_blocks = 0;
  std::size_t server_mc_blocks = 0;
  std::vector<EcOutcome> ecs;

  /// mc_mean_bps / tsdf_mean_bps.
  double bandwidth_ratio() const { return tsdf_mean_bps > 0 ? mc_mean_bps / tsdf_mean_bps : 0.0; }
};

/// Runs the scenario to convergence or timeout. Never throws for component
/// failures; they end up in `diagnostics` with ok = false.
ScenarioResult run_scenario(const ScenarioSpec& spec);

/// Human-readable summary table.
void print_summary(std::ostream& out, const ScenarioSpec& spec, const ScenarioResult& r);

/// Coefficient of determination of the least-squares line through the
/// origin, y = b x, against the mean of y. Needs at least two points.
double r_squared_through_origin(const std::vector<double>& x, const std::vector<double>& y);

}  // namespace voxstream
