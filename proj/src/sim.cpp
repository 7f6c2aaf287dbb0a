#include "execstream/sim.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <random>
#include <set>
#include <stdexcept>
#include <unordered_set>

#include "execstream/errors.hpp"

namespace execstream {

namespace {

// Portable draws: the standard distributions differ between library vendors.
double uniform01(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }
std::uint64_t below(std::mt19937_64& rng, std::uint64_t n) { return n == 0 ? 0 : rng() % n; }

std::uint64_t mix_seed(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

template <typename T>
T parse_number(std::string_view key, std::string_view text) {
  T value{};
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc{} || ptr != text.data() + text.size()) {
    throw ValidationError("bad value for '" + std::string(key) + "': '" + std::string(text) + "'");
  }
  return value;
}

// from_chars for double is missing in older libstdc++ builds.
double parse_real(std::string_view key, std::string_view text) {
  std::string s(text);
  char* end = nullptr;
  double v = std::strtod(s.c_str(), &end);
  if (s.empty() || end != s.c_str() + s.size() || !std::isfinite(v)) {
    throw ValidationError("bad value for '" + std::string(key) + "': '" + s + "'");
  }
  return v;
}

}  // namespace

double percentile(std::vector<double> samples, double p) {
  if (samples.empty()) return 0.0;
  std::sort(samples.begin(), samples.end());
  auto rank = static_cast<std::size_t>(std::ceil(p / 100.0 * static_cast<double>(samples.size())));
  rank = std::clamp<std::size_t>(rank, 1, samples.size());
  return samples[rank - 1];
}

void finish_metrics(RunMetrics& m) {
  const auto& lat = m.latencies_us;
  m.mean_us = lat.empty() ? 0.0 : std::accumulate(lat.begin(), lat.end(), 0.0) / static_cast<double>(lat.size());
  m.p50_us = percentile(lat, 50);
  m.p99_us = percentile(lat, 99);
  m.b_per_io = m.io_count ? static_cast<double>(m.delivered_blocks) / static_cast<double>(m.io_count) : 0.0;
  m.n_t = m.T ? static_cast<double>(m.N) / m.T : 0.0;
  m.n_p = m.P ? static_cast<double>(m.N) / static_cast<double>(m.P) : 0.0;
  m.p_t = m.T ? static_cast<double>(m.P) / m.T : 0.0;
}

RunMetrics replay_metrics(const RunReport& report, const ExecutableImage& image,
                          std::span<const BlockIndex> preloaded) {
  RunMetrics m;
  m.T = image.total_blocks();
  std::unordered_set<BlockIndex> needed;
  for (const auto& e : report.events) {
    needed.insert(e.block);
    m.latencies_us.push_back(e.latency_us);
  }
  m.N = needed.size();
  std::set<BlockIndex> pre(report.delivered.begin(), report.delivered.end());
  pre.insert(preloaded.begin(), preloaded.end());
  // Locally served blocks were read by the client itself.
  for (const auto& e : report.events) {
    if (e.local) pre.insert(e.block);
  }
  m.P = pre.size();
  m.io_count = report.round_trips;
  m.delivered_blocks = report.delivered_blocks;
  m.backing_reads = report.backing_reads;
  m.events = report.events.size();
  m.hit_rate = m.events ? static_cast<double>(report.hits) / static_cast<double>(m.events) : 0.0;
  if (m.io_count == 0 && report.local_reads == 0 && m.N > 0 && report.hits < m.events) {
    throw std::logic_error("faults reached the server but no round trip was recorded");
  }
  finish_metrics(m);
  return m;
}

SimulationResult simulate(const Trace& trace, const ClientConfig& client, const ServerConfig& server,
                          const LatencyModel& model, const SimOptions& options) {
  if (client.block_size != server.block_size) {
    throw ConfigError("client block_size " + std::to_string(client.block_size) + " differs from server block_size " +
                      std::to_string(server.block_size));
  }
  model.validate();
  if (trace.events.empty()) throw ValidationError("empty trace");
  BlockIndex max_block = 0;
  for (const auto& e : trace.events) max_block = std::max(max_block, e.block);
  std::uint32_t total = options.total_blocks ? options.total_blocks : max_block + 1;
  if (max_block >= total) {
    throw ValidationError("trace touches block " + std::to_string(max_block) + " beyond image of " +
                          std::to_string(total) + " blocks");
  }

  ServerConfig sconf = server;
  sconf.drain_after_response = true;
  sconf.provider.background_prefetch = false;
  BlockServer srv(sconf);
  auto image = ExecutableImage::synthetic(trace.executable, total, sconf.block_size);
  srv.add_image(image);
  auto factory = loopback_factory(srv);

  ClientConfig cconf = client;
  cconf.latency = model;
  cconf.clock = ClockMode::virtual_clock;

  SimulationResult out;
  Micros start = client.start_time;
  if (options.train) {
    ClientConfig train = cconf;
    train.token_seed = options.training_token_seed;
    train.send_end_marker = true;
    train.latency.loss_rate = 0.0;
    out.training = run_trace(trace, train, factory);
    if (!out.training.complete) throw TransportError("training replay failed: " + out.training.error);
    start = out.training.end_time + sconf.predictor.session_idle_timeout;
    srv.expire(start);
  }
  srv.drop_memcache();
  out.preload = srv.initialize();

  cconf.token_seed = options.measured_token_seed;
  cconf.start_time = start;
  out.measured = run_trace(trace, cconf, factory);
  if (!out.measured.complete) throw TransportError("measured replay failed: " + out.measured.error);

  auto preloaded = image->preloaded_blocks();
  out.metrics = replay_metrics(out.measured, *image, preloaded);
  out.metrics.strategy = std::string(to_string(sconf.provider.strategy));
  out.store = srv.store();
  return out;
}

RunMetrics simulate_run(const Trace& trace, const ClientConfig& client, const ServerConfig& server,
                        const LatencyModel& model, const SimOptions& options) {
  return simulate(trace, client, server, model, options).metrics;
}

RunMetrics baseline_readahead(const Trace& trace, const LatencyModel& model, std::uint32_t total_blocks,
                              std::size_t window_max, std::size_t cache_pages) {
  model.validate();
  if (window_max < 4) throw ValidationError("readahead window_max must be at least 4");
  RunMetrics m;
  m.strategy = "readahead";
  m.T = total_blocks;
  PageCache cache(cache_pages);
  LossDraws loss(model.loss_rate, model.seed);
  std::vector<std::uint8_t> server_seen(total_blocks, 0);
  std::set<BlockIndex> delivered;
  std::unordered_set<BlockIndex> needed;
  std::size_t window = 4;
  std::optional<BlockIndex> window_end;
  std::uint64_t hits = 0;

  for (const auto& ev : trace.events) {
    if (ev.block >= total_blocks) throw BlockOutOfRange("trace block beyond image end");
    needed.insert(ev.block);
    if (cache.lookup(trace.executable, ev.block)) {
      ++hits;
      m.latencies_us.push_back(model.mem_read_us);
      continue;
    }
    window = (window_end && *window_end == ev.block) ? std::min(window * 2, window_max) : 4;
    auto end = static_cast<BlockIndex>(std::min<std::uint64_t>(std::uint64_t{ev.block} + window, total_blocks));
    std::size_t mem = 0, disk = 0;
    for (BlockIndex b = ev.block; b < end; ++b) {
      if (server_seen[b]) {
        ++mem;
      } else {
        server_seen[b] = 1;
        ++disk;
      }
      delivered.insert(b);
      cache.insert(trace.executable, b, Page{});
    }
    std::size_t n = end - ev.block;
    window_end = end;
    ++m.io_count;
    m.delivered_blocks += n;
    m.backing_reads += disk;
    double lat = model.round_trip_us(n, mem, disk);
    if (loss.next()) lat += model.retransmit_penalty_us;
    m.latencies_us.push_back(lat);
  }
  m.N = needed.size();
  m.P = delivered.size();
  m.events = trace.events.size();
  m.hit_rate = m.events ? static_cast<double>(hits) / static_cast<double>(m.events) : 0.0;
  finish_metrics(m);
  return m;
}

std::size_t SyntheticTraceSpec::needed_blocks() const {
  return static_cast<std::size_t>(std::llround(static_cast<double>(total_blocks) * needed_fraction));
}

std::optional<SyntheticTraceSpec> named_shape(std::string_view name) {
  struct Shape {
    std::string_view name;
    std::uint32_t total;
    std::uint32_t needed;
  };
  static constexpr Shape kShapes[] = {
      {"jvm", 2803, 1651}, {"python", 1149, 519}, {"perl", 782, 408}, {"gcc", 269, 97}, {"openssl", 131, 63},
  };
  for (const auto& s : kShapes) {
    if (s.name != name) continue;
    SyntheticTraceSpec spec;
    spec.executable = std::string(s.name);
    spec.total_blocks = s.total;
    spec.needed_fraction = static_cast<double>(s.needed) / s.total;
    spec.jump_model = JumpModel::clustered_jumps;
    spec.jump_probability = 0.2;
    spec.revisit_rate = 0.1;
    spec.think_time = 20;
    spec.seed = 7;
    return spec;
  }
  return std::nullopt;
}

SyntheticTraceSpec parse_trace_spec(std::string_view text) {
  auto whole = trim(text);
  if (!whole.empty() && whole.find('=') == std::string_view::npos && whole.find('\n') == std::string_view::npos) {
    if (auto s = named_shape(whole)) return *s;
    throw ValidationError("unknown trace shape '" + std::string(whole) + "'");
  }
  SyntheticTraceSpec spec;
  std::optional<std::size_t> needed;
  std::size_t line_no = 0;
  while (!text.empty()) {
    auto nl = text.find('\n');
    auto line = trim(text.substr(0, nl));
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++line_no;
    if (line.empty() || line.front() == '#') continue;
    auto eq = line.find('=');
    if (eq == std::string_view::npos) throw ParseError(line_no, "expected key=value");
    auto key = trim(line.substr(0, eq));
    auto value = trim(line.substr(eq + 1));
    if (key == "shape") {
      auto s = named_shape(value);
      if (!s) throw ValidationError("unknown trace shape '" + std::string(value) + "'");
      spec = *s;
    } else if (key == "executable") {
      spec.executable = std::string(value);
    } else if (key == "total_blocks") {
      spec.total_blocks = parse_number<std::uint32_t>(key, value);
    } else if (key == "needed_fraction") {
      spec.needed_fraction = parse_real(key, value);
    } else if (key == "needed") {
      needed = parse_number<std::size_t>(key, value);
    } else if (key == "seed") {
      spec.seed = parse_number<std::uint64_t>(key, value);
    } else if (key == "revisit_rate") {
      spec.revisit_rate = parse_real(key, value);
    } else if (key == "think_time") {
      spec.think_time = parse_number<Micros>(key, value);
    } else if (key == "jump_model") {
      auto open = value.find('(');
      auto name = value.substr(0, open);
      std::string_view arg;
      if (open != std::string_view::npos) {
        if (value.back() != ')') throw ValidationError("bad jump_model '" + std::string(value) + "'");
        arg = value.substr(open + 1, value.size() - open - 2);
      }
      if (name == "sequential" && arg.empty()) {
        spec.jump_model = JumpModel::sequential;
      } else if (name == "strided" && !arg.empty()) {
        spec.jump_model = JumpModel::strided;
        spec.stride = parse_number<std::uint32_t>(key, arg);
      } else if (name == "clustered_jumps" && !arg.empty()) {
        spec.jump_model = JumpModel::clustered_jumps;
        spec.jump_probability = parse_real(key, arg);
      } else {
        throw ValidationError("bad jump_model '" + std::string(value) + "'");
      }
    } else {
      throw ValidationError("unknown trace spec key '" + std::string(key) + "'");
    }
  }
  if (needed) {
    if (spec.total_blocks == 0) throw ValidationError("'needed' requires total_blocks");
    spec.needed_fraction = static_cast<double>(*needed) / spec.total_blocks;
  }
  return spec;
}

Trace generate_trace(const SyntheticTraceSpec& spec) {
  if (spec.executable.empty()) throw ValidationError("trace spec needs an executable name");
  if (spec.total_blocks == 0) throw ValidationError("total_blocks must be positive");
  if (!(spec.needed_fraction > 0.0 && spec.needed_fraction <= 1.0)) {
    throw ValidationError("needed_fraction must be in (0, 1]");
  }
  if (spec.revisit_rate < 0.0 || spec.revisit_rate >= 1.0) throw ValidationError("revisit_rate must be in [0, 1)");
  if (spec.think_time < 0) throw ValidationError("think_time must be non-negative");
  if (spec.jump_model == JumpModel::strided && spec.stride == 0) throw ValidationError("stride must be positive");
  if (spec.jump_model == JumpModel::clustered_jumps && !(spec.jump_probability >= 0.0 && spec.jump_probability <= 1.0)) {
    throw ValidationError("jump probability must be in [0, 1]");
  }
  const std::uint32_t T = spec.total_blocks;
  const std::size_t n = spec.needed_blocks();
  if (n == 0) throw ValidationError("spec selects no blocks");

  std::mt19937_64 rng(spec.seed);
  std::vector<std::uint8_t> used(T, 0);
  std::vector<BlockIndex> order;
  order.reserve(n);
  auto next_unused = [&](std::uint64_t from) {
    auto pos = static_cast<BlockIndex>(from % T);
    while (used[pos]) pos = (pos + 1) % T;
    return pos;
  };
  auto take = [&](BlockIndex b) {
    used[b] = 1;
    order.push_back(b);
  };

  switch (spec.jump_model) {
    case JumpModel::sequential: {
      auto start = static_cast<BlockIndex>(below(rng, T - n + 1));
      for (std::size_t i = 0; i < n; ++i) take(start + static_cast<BlockIndex>(i));
      break;
    }
    case JumpModel::strided: {
      std::uint64_t pos = n < T ? below(rng, T) : 0;
      while (order.size() < n) {
        auto b = next_unused(pos);
        take(b);
        pos = std::uint64_t{b} + spec.stride;
      }
      break;
    }
    case JumpModel::clustered_jumps: {
      std::uint64_t pos = below(rng, T);
      while (order.size() < n) {
        auto b = next_unused(pos);
        take(b);
        pos = uniform01(rng) < spec.jump_probability ? below(rng, T) : std::uint64_t{b} + 1;
      }
      break;
    }
  }

  Trace trace;
  trace.executable = spec.executable;
  constexpr std::size_t kRecent = 8;
  for (std::size_t i = 0; i < order.size(); ++i) {
    trace.events.push_back({order[i], spec.think_time});
    if (i > 0 && spec.revisit_rate > 0.0 && uniform01(rng) < spec.revisit_rate) {
      std::size_t span = std::min(kRecent, i);
      trace.events.push_back({order[i - below(rng, span)], spec.think_time});
    }
  }
  return trace;
}

std::vector<RunMetrics> compare_strategies(const Trace& trace, const LatencyModel& model,
                                           const CompareOptions& options) {
  std::vector<RunMetrics> rows;
  std::uint32_t total = 0;
  for (auto s : {Strategy::none, Strategy::full, Strategy::norm_var, Strategy::nv_async}) {
    ServerConfig sc = options.server;
    sc.provider.strategy = s;
    rows.push_back(simulate_run(trace, options.client, sc, model, options.sim));
    total = rows.back().T;
  }
  rows.push_back(baseline_readahead(trace, model, total, options.readahead_window_max, options.client.cache_pages));
  return rows;
}

std::string metrics_csv(std::span<const RunMetrics> rows) {
  std::string out = "strategy,T,N,P,io_count,b_per_io,n_t,n_p,p_t,mean_us,p50_us,p99_us\n";
  char line[256];
  for (const auto& m : rows) {
    std::snprintf(line, sizeof line, "%s,%u,%zu,%zu,%llu,%.4f,%.4f,%.4f,%.4f,%.3f,%.3f,%.3f\n", m.strategy.c_str(), m.T,
                  m.N, m.P, static_cast<unsigned long long>(m.io_count), m.b_per_io, m.n_t, m.n_p, m.p_t, m.mean_us,
                  m.p50_us, m.p99_us);
    out += line;
  }
  return out;
}

double mean_with_loss(const RunReport& report, const LatencyModel& model, double loss_rate, std::uint64_t seed) {
  if (report.events.empty()) return 0.0;
  LossDraws loss(loss_rate, seed);
  double sum = 0.0;
  for (const auto& e : report.events) {
    double base = e.latency_us - (e.lost ? model.retransmit_penalty_us : 0.0);
    if (e.round_trip && loss.next()) base += model.retransmit_penalty_us;
    sum += base;
  }
  return sum / static_cast<double>(report.events.size());
}

std::vector<LossPoint> loss_sweep(const RunReport& report, const LatencyModel& model, std::span<const double> rates,
                                  std::size_t replications) {
  if (replications == 0) throw ValidationError("loss sweep needs at least one replication");
  double base = mean_with_loss(report, model, 0.0, model.seed);
  std::vector<LossPoint> out;
  for (double rate : rates) {
    if (rate < 0.0 || rate > 1.0) throw ValidationError("loss rate must be within [0, 1]");
    LossPoint p;
    p.loss_rate = rate;
    if (rate == 0.0) {
      p.mean_us = base;  // every replication is the same
    } else {
      double acc = 0.0;
      for (std::size_t r = 0; r < replications; ++r) acc += mean_with_loss(report, model, rate, mix_seed(model.seed + r));
      p.mean_us = acc / static_cast<double>(replications);
    }
    p.degradation = base > 0.0 ? p.mean_us / base - 1.0 : 0.0;
    out.push_back(p);
  }
  return out;
}

std::string loss_csv(std::span<const LossPoint> points) {
  std::string out = "loss_rate,mean_us,degradation\n";
  char line[128];
  for (const auto& p : points) {
    std::snprintf(line, sizeof line, "%.6g,%.3f,%.4f\n", p.loss_rate, p.mean_us, p.degradation);
    out += line;
  }
  return out;
}

}  // namespace execstream
