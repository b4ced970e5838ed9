#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "vaultor/provider_client.hpp"
#include "vaultor/stats.hpp"
#include "vaultor/transport.hpp"

namespace vaultor {

struct BenchPlan {
  std::vector<std::int64_t> page_sizes_bytes{512, 51200, 5120000};
  int loads_per_page = 250;
  int fixed_circuits = 3;
  std::vector<transport::RelayMode> modes{transport::RelayMode::kRandomRelays, transport::RelayMode::kFixedRelays,
                                          transport::RelayMode::kLocal};
  std::uint64_t seed = 1;
  /// Hop count and per-hop latency range of the simulated Tor paths.
  transport::CircuitProfile::Params latency{6, 20, 80, 0, transport::RelayMode::kRandomRelays};
  /// Provider update sessions interleaved between cells.
  int updates = 2;
  /// Simulated latency costs no wall time when true.
  bool virtual_time = true;

  /// Throws Error(kConfigInvalid).
  void validate() const;
  std::string to_json() const;
  /// Missing keys keep their defaults. Throws Error(kConfigInvalid).
  static BenchPlan from_json(const std::string& text);
};

enum class Variant { kVanilla, kEnclave };
std::string_view to_string(Variant variant);

struct LoadSample {
  int iteration = 0;
  int circuit = 0;
  double ttfb_ms = 0;
  double ttlb_ms = 0;
  /// Simulated one-way path latency of the circuit that carried the load.
  double path_one_way_ms = 0;
};

struct CellResult {
  transport::RelayMode mode = transport::RelayMode::kLocal;
  std::int64_t page_size = 0;
  Variant variant = Variant::kVanilla;
  std::vector<LoadSample> samples;
  SampleSummary ttfb;
  SampleSummary ttlb;
  bool valid = true;
  std::string error;
  /// Hex SHA-256 of the body every load returned.
  std::string body_sha256;
};

struct CellComparison {
  transport::RelayMode mode = transport::RelayMode::kLocal;
  std::int64_t page_size = 0;
  /// (enclave - vanilla) / vanilla * 100; absent when the vanilla mean is 0
  /// or a cell is invalid.
  std::optional<double> ttfb_overhead_percent;
  std::optional<double> ttlb_overhead_percent;
  /// True when the two 99% intervals overlap.
  bool ttfb_intervals_overlap = false;
  bool ttlb_intervals_overlap = false;
  bool bodies_identical = false;
};

struct UptimeSummary {
  std::size_t intervals = 0;
  std::size_t expected_intervals = 0;
  double provider_online_ms = 0;
  double experiment_ms = 0;
  double online_fraction = 0;
  std::size_t client_fetches = 0;
  std::size_t fetches_overlapping_provider = 0;

  bool interval_count_matches() const { return intervals == expected_intervals; }
};

/// A client fetch [start, end] on the network clock.
struct FetchWindow {
  double start_ms = 0;
  double end_ms = 0;
};

UptimeSummary uptime_exposure(const std::vector<UptimeInterval>& provider_log,
                              const std::vector<FetchWindow>& fetches, double experiment_ms,
                              std::size_t expected_intervals);

struct BenchReport {
  BenchPlan plan;
  std::vector<CellResult> cells;
  std::vector<CellComparison> comparisons;
  UptimeSummary uptime;
  std::vector<UptimeInterval> provider_intervals;
  std::string channel_policy;
  double wall_seconds = 0;
  /// SHA-256 over every simulated path latency drawn, in load order.
  std::string latency_draws_sha256;

  const CellResult* find(transport::RelayMode mode, std::int64_t size, Variant variant) const;
  const CellComparison* comparison(transport::RelayMode mode, std::int64_t size) const;

  std::string to_json() const;
  /// mode,size,variant,iteration,ttfb_ms,ttlb_ms
  void write_csv(std::ostream& out) const;
  std::string summary_table() const;
  /// raw.csv, report.json, summary.txt
  void write(const std::filesystem::path& dir) const;
};

using BenchProgress = std::function<void(const std::string&)>;

/// Runs the vanilla-vs-enclave grid on one simulated vault.
BenchReport run_pair(const BenchPlan& plan, const BenchProgress& progress = {});

}  // namespace vaultor
