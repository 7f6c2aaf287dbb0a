#pragma once

// Virtual-clock simulation: strategy runs against an in-process server, the
// readahead comparator, waste and round-trip metrics and synthetic traces.

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "execstream/latency.hpp"
#include "execstream/model.hpp"
#include "execstream/provider.hpp"
#include "execstream/runtime.hpp"
#include "execstream/server.hpp"

namespace execstream {

struct RunMetrics {
  std::string strategy;
  std::uint32_t T = 0;  // blocks in the image
  std::size_t N = 0;    // distinct blocks faulted
  std::size_t P = 0;    // distinct blocks delivered or made resident ahead of need
  std::uint64_t io_count = 0;
  std::uint64_t delivered_blocks = 0;
  std::uint64_t backing_reads = 0;
  std::uint64_t events = 0;
  double b_per_io = 0.0;
  double hit_rate = 0.0;
  double n_t = 0.0;
  double n_p = 0.0;
  double p_t = 0.0;
  std::vector<double> latencies_us;  // one per fault
  double mean_us = 0.0;
  double p50_us = 0.0;
  double p99_us = 0.0;
};

/// Nearest-rank percentile, p in (0, 100].
double percentile(std::vector<double> samples, double p);

/// Fills the aggregates (mean/p50/p99, ratios) from the raw fields.
void finish_metrics(RunMetrics& m);

/// Metrics of a completed replay. `preloaded` holds blocks made resident on
/// the server ahead of need; they count towards P.
RunMetrics replay_metrics(const RunReport& report, const ExecutableImage& image,
                          std::span<const BlockIndex> preloaded = {});

struct SimOptions {
  /// Image size; 0 means one past the largest block in the trace.
  std::uint32_t total_blocks = 0;
  /// Replay once to construct the action, then measure a second replay.
  bool train = true;
  std::uint64_t training_token_seed = 0x7261696e;
  std::uint64_t measured_token_seed = 0x6d656173;
};

struct SimulationResult {
  RunMetrics metrics;
  RunReport training;
  RunReport measured;
  PreloadReport preload;
  ActionStore store;
};

/// Runs `trace` against a fresh in-process server. With training enabled the
/// sequence is: construction replay (ending with an end-of-run notice), drop
/// the server memcache, startup preload for the strategy, measured replay with
/// a fresh client and token. Prefetch jobs are applied before each response
/// returns, so results depend only on the inputs.
SimulationResult simulate(const Trace& trace, const ClientConfig& client, const ServerConfig& server,
                          const LatencyModel& model, const SimOptions& options = {});

RunMetrics simulate_run(const Trace& trace, const ClientConfig& client, const ServerConfig& server,
                        const LatencyModel& model, const SimOptions& options = {});

/// Sequential-window readahead client against a server without prediction:
/// a miss at b fetches [b, min(b + w, T)); w starts at 4, doubles up to
/// window_max when the miss lands where the previous window ended, and drops
/// back to 4 on any other miss.
RunMetrics baseline_readahead(const Trace& trace, const LatencyModel& model, std::uint32_t total_blocks,
                              std::size_t window_max = 32, std::size_t cache_pages = 65536);

enum class JumpModel { sequential, strided, clustered_jumps };

struct SyntheticTraceSpec {
  std::string executable = "app";
  std::uint32_t total_blocks = 0;
  double needed_fraction = 1.0;
  JumpModel jump_model = JumpModel::sequential;
  std::uint32_t stride = 2;      // strided(k)
  double jump_probability = 0.2;  // clustered_jumps(p)
  /// Probability that a fault re-touches one of the last few distinct blocks.
  double revisit_rate = 0.0;
  Micros think_time = 0;
  std::uint64_t seed = 1;

  std::size_t needed_blocks() const;
};

/// Sizes of five measured executables: jvm, python, perl, gcc, openssl.
std::optional<SyntheticTraceSpec> named_shape(std::string_view name);

/// Parses a named shape or `key=value` lines (total_blocks, needed_fraction,
/// needed, jump_model, seed, revisit_rate, think_time, executable, shape).
/// jump_model is `sequential`, `strided(k)` or `clustered_jumps(p)`.
SyntheticTraceSpec parse_trace_spec(std::string_view text);

/// Deterministic for a given spec. Throws ValidationError on an infeasible spec.
Trace generate_trace(const SyntheticTraceSpec& spec);

struct CompareOptions {
  ServerConfig server;
  ClientConfig client;
  SimOptions sim;
  std::size_t readahead_window_max = 32;
};

/// none, full, norm_var, nv_async and the readahead baseline on one trace.
std::vector<RunMetrics> compare_strategies(const Trace& trace, const LatencyModel& model,
                                           const CompareOptions& options = {});

/// `strategy,T,N,P,io_count,b_per_io,n_t,n_p,p_t,mean_us,p50_us,p99_us`
std::string metrics_csv(std::span<const RunMetrics> rows);

/// Mean per-fault latency of `report` with losses re-drawn at `loss_rate`
/// from `seed`, one draw per round trip in event order.
double mean_with_loss(const RunReport& report, const LatencyModel& model, double loss_rate,
                      std::uint64_t seed);

struct LossPoint {
  double loss_rate = 0.0;
  double mean_us = 0.0;
  double degradation = 0.0;  // relative to loss-free
};

/// Averages mean_with_loss over `replications` seeds derived from model.seed.
std::vector<LossPoint> loss_sweep(const RunReport& report, const LatencyModel& model,
                                  std::span<const double> rates, std::size_t replications);

std::string loss_csv(std::span<const LossPoint> points);

}  // namespace execstream
