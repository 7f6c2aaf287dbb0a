// execstream: block server daemon, trace replay client, benchmark and
// action store inspection.

#include <pthread.h>
#include <signal.h>

#include <CLI11.hpp>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "execstream/action_store.hpp"
#include "execstream/config.hpp"
#include "execstream/errors.hpp"
#include "execstream/log.hpp"
#include "execstream/net.hpp"
#include "execstream/sim.hpp"
#include "execstream/trace.hpp"

namespace fs = std::filesystem;
using namespace execstream;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitFailure = 1;
constexpr int kExitUsage = 2;
constexpr int kExitTransport = 3;

struct CommonOptions {
  std::string config_path;
  std::vector<std::string> overrides;
};

void add_common(CLI::App* cmd, CommonOptions& opts) {
  cmd->add_option("--config", opts.config_path, "key=value configuration file");
  cmd->add_option("--set", opts.overrides, "override one key (key=value); repeatable");
}

Settings load_settings(const CommonOptions& opts) {
  Settings s;
  if (!opts.config_path.empty()) apply_config_file(s, opts.config_path);
  for (const auto& o : opts.overrides) apply_override(s, o);
  log::set_level(s.log_level);
  return s;
}

void write_output(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text << std::flush;
    return;
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write '" + path + "'");
  out << text;
  if (!out.flush()) throw std::runtime_error("write failed for '" + path + "'");
}

std::string fmt_double(double v, int places) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", places, v);
  return buf;
}

// serve -----------------------------------------------------------------

struct ServeArgs {
  CommonOptions common;
  std::string images;
  std::string store_path;
  std::string listen;
};

int run_serve(const ServeArgs& a) {
  Settings s;
  Endpoint endpoint;
  try {
    s = load_settings(a.common);
    if (!a.listen.empty()) apply_setting(s, "listen_addr", a.listen);
    endpoint = parse_endpoint(s.listen_addr);
  } catch (const std::exception& e) {
    log::error("serve", "bad_config", {{"error", e.what()}});
    return kExitUsage;
  }

  ActionStore store;
  store.seg_max = s.server.predictor.seg_max;
  try {
    if (fs::exists(a.store_path)) store = load_actions_file(a.store_path);
  } catch (const std::exception& e) {
    log::error("serve", "bad_store", {{"path", a.store_path}, {"error", e.what()}});
    return kExitUsage;
  }
  if (store.action_count() > 0 && store.seg_max != s.server.predictor.seg_max) {
    log::warn("serve", "seg_max_from_store",
              {{"store", std::to_string(store.seg_max)}, {"config", std::to_string(s.server.predictor.seg_max)}});
    s.server.predictor.seg_max = store.seg_max;
  }

  // Signals are collected by sigwait below; every thread inherits the mask.
  sigset_t sigs;
  sigemptyset(&sigs);
  sigaddset(&sigs, SIGINT);
  sigaddset(&sigs, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &sigs, nullptr);

  std::unique_ptr<BlockServer> server;
  try {
    server = std::make_unique<BlockServer>(s.server, store);
    auto n = server->load_image_dir(a.images);
    if (n == 0) log::warn("serve", "no_images", {{"dir", a.images}});
    auto report = server->initialize();
    log::info("serve", "ready", {{"images", std::to_string(n)},
                                 {"actions", std::to_string(store.action_count())},
                                 {"strategy", std::string(to_string(s.server.provider.strategy))},
                                 {"preloaded_blocks", std::to_string(report.blocks_loaded)}});
  } catch (const std::exception& e) {
    log::error("serve", "startup_failed", {{"error", e.what()}});
    return kExitUsage;
  }

  server->set_observer([](const wire::RequestFrame& req, const ServedResponse& resp) {
    if (req.type == wire::RequestType::end_run) {
      log::info("server", "end_run", {{"token", req.token.hex()}, {"exe", req.executable}});
      return;
    }
    log::info("server", "request",
              {{"token", req.token.hex()},
               {"exe", req.executable},
               {"block", std::to_string(req.block)},
               {"status", wire::to_string(resp.frame.status)},
               {"blocks", std::to_string(resp.frame.blocks.size())},
               {"backing", std::to_string(resp.backing_reads)},
               {"state", resp.state_change}});
  });

  std::unique_ptr<TcpServer> tcp;
  try {
    tcp = std::make_unique<TcpServer>(*server, endpoint);
  } catch (const std::exception& e) {
    log::error("serve", "bind_failed", {{"addr", endpoint.str()}, {"error", e.what()}});
    return kExitTransport;
  }
  std::cout << "listening on " << endpoint.host << ":" << tcp->port() << std::endl;
  log::info("serve", "listening", {{"addr", endpoint.host + ":" + std::to_string(tcp->port())}});

  int sig = 0;
  sigwait(&sigs, &sig);
  log::info("serve", "shutdown", {{"signal", std::to_string(sig)}});
  tcp->stop();
  auto created = server->finalize_all();
  auto final_store = server->store();
  try {
    save_actions_file_atomic(final_store, a.store_path);
  } catch (const std::exception& e) {
    log::error("serve", "persist_failed", {{"path", a.store_path}, {"error", e.what()}});
    return kExitFailure;
  }
  log::info("serve", "persisted", {{"path", a.store_path},
                                   {"actions", std::to_string(final_store.action_count())},
                                   {"finalized_at_shutdown", std::to_string(created.size())}});
  return kExitOk;
}

// replay ----------------------------------------------------------------

struct ReplayArgs {
  CommonOptions common;
  std::string trace_path;
  std::string server;
  std::string out;
};

int run_replay(const ReplayArgs& a) {
  Settings s;
  Endpoint endpoint;
  Trace trace;
  try {
    s = load_settings(a.common);
    if (!a.server.empty()) apply_setting(s, "server_addr", a.server);
    endpoint = parse_endpoint(s.server_addr);
    trace = load_trace_file(a.trace_path);
  } catch (const std::exception& e) {
    log::error("replay", "bad_input", {{"error", e.what()}});
    return kExitUsage;
  }

  RunReport report;
  try {
    report = run_trace(trace, s.client, tcp_factory(endpoint, s.client.block_size));
  } catch (const TransportError& e) {
    log::error("replay", "unreachable", {{"addr", endpoint.str()}, {"error", e.what()}});
    return kExitTransport;
  } catch (const std::exception& e) {
    log::error("replay", "failed", {{"error", e.what()}});
    return kExitUsage;
  }

  try {
    write_output(a.out, report.to_csv());
  } catch (const std::exception& e) {
    log::error("replay", "output_failed", {{"error", e.what()}});
    return kExitFailure;
  }

  RunMetrics m;
  for (const auto& e : report.events) m.latencies_us.push_back(e.latency_us);
  m.N = trace.distinct_blocks();
  m.io_count = report.round_trips;
  m.delivered_blocks = report.delivered_blocks;
  m.events = report.events.size();
  finish_metrics(m);
  double hit_rate = m.events ? static_cast<double>(report.hits) / static_cast<double>(m.events) : 0.0;
  log::info("replay", "summary",
            {{"exe", trace.executable},
             {"events", std::to_string(m.events)},
             {"N", std::to_string(m.N)},
             {"round_trips", std::to_string(report.round_trips)},
             {"hits", std::to_string(report.hits)},
             {"hit_rate", fmt_double(hit_rate, 4)},
             {"delivered", std::to_string(report.delivered_blocks)},
             {"b_per_io", fmt_double(m.b_per_io, 4)},
             {"mean_us", fmt_double(m.mean_us, 3)},
             {"p50_us", fmt_double(m.p50_us, 3)},
             {"p99_us", fmt_double(m.p99_us, 3)},
             {"complete", report.complete ? "true" : "false"}});
  if (!report.complete) {
    log::error("replay", "incomplete", {{"error", report.error}});
    return kExitTransport;
  }
  return kExitOk;
}

// bench -----------------------------------------------------------------

struct BenchArgs {
  CommonOptions common;
  std::string spec;
  std::string trace_path;
  std::uint32_t total_blocks = 0;
  std::string out;
  std::string loss_out;
  std::vector<double> loss_rates{0.0, 0.00001, 0.0001, 0.001, 0.01};
};

SyntheticTraceSpec load_spec(const std::string& arg) {
  std::error_code ec;
  if (fs::is_regular_file(arg, ec)) {
    std::ifstream in(arg);
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_trace_spec(ss.str());
  }
  return parse_trace_spec(arg);
}

int run_bench(const BenchArgs& a) {
  Settings s;
  Trace trace;
  std::uint32_t total = a.total_blocks;
  try {
    s = load_settings(a.common);
    if (a.spec.empty() == a.trace_path.empty()) throw ConfigError("give exactly one of --spec or --trace");
    if (!a.spec.empty()) {
      auto spec = load_spec(a.spec);
      trace = generate_trace(spec);
      if (total == 0) total = spec.total_blocks;
    } else {
      trace = load_trace_file(a.trace_path);
    }
  } catch (const std::exception& e) {
    log::error("bench", "bad_input", {{"error", e.what()}});
    return kExitUsage;
  }

  try {
    CompareOptions opts;
    opts.server = s.server;
    opts.client = s.client;
    opts.sim.total_blocks = total;
    opts.readahead_window_max = s.readahead_window_max;
    auto rows = compare_strategies(trace, s.latency, opts);
    write_output(a.out, metrics_csv(rows));

    if (!a.loss_out.empty()) {
      ServerConfig sc = s.server;
      sc.provider.strategy = Strategy::nv_async;
      auto model = s.latency;
      model.loss_rate = 0.0;
      auto sim = simulate(trace, s.client, sc, model, opts.sim);
      auto points = loss_sweep(sim.measured, model, a.loss_rates, s.loss_replications);
      write_output(a.loss_out, loss_csv(points));
    }
  } catch (const ValidationError& e) {
    log::error("bench", "bad_input", {{"error", e.what()}});
    return kExitUsage;
  } catch (const ConfigError& e) {
    log::error("bench", "bad_config", {{"error", e.what()}});
    return kExitUsage;
  } catch (const std::exception& e) {
    log::error("bench", "failed", {{"error", e.what()}});
    return kExitFailure;
  }
  return kExitOk;
}

// actions ---------------------------------------------------------------

int run_actions(const std::string& path, const std::string& estimator) {
  try {
    auto store = load_actions_file(path);
    auto est = estimator == "sum" ? VarianceEstimator::sum : VarianceEstimator::mean;
    std::cout << describe_actions(store, est) << std::flush;
    return kExitOk;
  } catch (const std::exception& e) {
    std::cerr << "error: " << path << ": " << e.what() << "\n";
    return kExitUsage;
  }
}

// helpers ---------------------------------------------------------------

int run_mkimage(const std::string& name, std::uint32_t blocks, std::uint32_t block_size, const std::string& dir) {
  try {
    if (name.empty() || name.find('/') != std::string::npos) throw ConfigError("invalid image name '" + name + "'");
    fs::create_directories(dir);
    auto path = (fs::path(dir) / (name + ".img")).string();
    auto bytes = synthetic_image_bytes(name, blocks, block_size);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out.flush()) throw std::runtime_error("write failed for '" + path + "'");
    std::cout << path << "\n";
    return kExitOk;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  }
}

int run_gentrace(const std::string& spec, const std::string& out) {
  try {
    write_output(out, format_trace(generate_trace(load_spec(spec))));
    return kExitOk;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"executable block streaming server, client replay and benchmarks"};
  app.require_subcommand(1);

  ServeArgs serve;
  auto* serve_cmd = app.add_subcommand("serve", "run the block server until SIGINT/SIGTERM");
  serve_cmd->add_option("--images", serve.images, "directory of <name>.img files")->required();
  serve_cmd->add_option("--store", serve.store_path, "action store file (created on shutdown)")->required();
  serve_cmd->add_option("--listen", serve.listen, "host:port (overrides listen_addr)");
  add_common(serve_cmd, serve.common);

  ReplayArgs replay;
  auto* replay_cmd = app.add_subcommand("replay", "replay a trace against a server; CSV on stdout");
  replay_cmd->add_option("trace", replay.trace_path, "trace file")->required();
  replay_cmd->add_option("--server", replay.server, "host:port (overrides server_addr)");
  replay_cmd->add_option("--out", replay.out, "write the CSV here instead of stdout");
  add_common(replay_cmd, replay.common);

  BenchArgs bench;
  auto* bench_cmd = app.add_subcommand("bench", "compare prefetch strategies in simulation");
  bench_cmd->add_option("--spec", bench.spec, "named shape, spec file or inline key=value spec");
  bench_cmd->add_option("--trace", bench.trace_path, "trace file");
  bench_cmd->add_option("--total-blocks", bench.total_blocks, "image size for --trace (default: max block + 1)");
  bench_cmd->add_option("--out", bench.out, "strategy CSV path (default stdout)");
  bench_cmd->add_option("--loss-out", bench.loss_out, "also write an nv_async packet-loss sweep here");
  bench_cmd->add_option("--loss-rates", bench.loss_rates, "loss rates for the sweep")->delimiter(',');
  add_common(bench_cmd, bench.common);

  std::string store_path, estimator = "mean";
  auto* actions_cmd = app.add_subcommand("actions", "print the actions in a store");
  actions_cmd->add_option("store", store_path, "action store file")->required();
  actions_cmd->add_option("--estimator", estimator, "variance estimator")->check(CLI::IsMember({"mean", "sum"}));

  std::string image_name, image_dir;
  std::uint32_t image_blocks = 0, image_block_size = kDefaultBlockSize;
  auto* mkimage_cmd = app.add_subcommand("mkimage", "write a deterministic synthetic image");
  mkimage_cmd->add_option("--name", image_name, "executable name")->required();
  mkimage_cmd->add_option("--blocks", image_blocks, "block count")->required()->check(CLI::PositiveNumber);
  mkimage_cmd->add_option("--block-size", image_block_size, "bytes per block")->check(CLI::PositiveNumber);
  mkimage_cmd->add_option("--dir", image_dir, "output directory")->required();

  std::string gen_spec, gen_out;
  auto* gentrace_cmd = app.add_subcommand("gentrace", "write a synthetic trace");
  gentrace_cmd->add_option("--spec", gen_spec, "named shape, spec file or inline spec")->required();
  gentrace_cmd->add_option("--out", gen_out, "trace path (default stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    app.exit(e);
    return kExitUsage;
  }

  if (*serve_cmd) return run_serve(serve);
  if (*replay_cmd) return run_replay(replay);
  if (*bench_cmd) return run_bench(bench);
  if (*actions_cmd) return run_actions(store_path, estimator);
  if (*mkimage_cmd) return run_mkimage(image_name, image_blocks, image_block_size, image_dir);
  if (*gentrace_cmd) return run_gentrace(gen_spec, gen_out);
  return kExitUsage;
}
