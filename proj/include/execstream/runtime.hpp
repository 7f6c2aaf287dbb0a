#pragma once

// Trace replay through the client pipeline:
//
//   fault -> page cache lookup -> redirect -> metadata ring -> networker worker
//         -> persistent connection -> response -> page pool -> page cache
//
// Time is virtual by default: each fault advances the clock by its simulated
// latency plus the trace's think time, so replays are fast and reproducible.

#include <atomic>
#include <functional>
#include <future>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include "execstream/client.hpp"
#include "execstream/latency.hpp"
#include "execstream/model.hpp"
#include "execstream/wire.hpp"

namespace execstream {

class BlockServer;

struct SourceCounts {
  std::size_t memcache = 0;
  std::size_t backing = 0;
};

struct Exchange {
  wire::ResponseFrame response;
  /// Where the server read each block; only known for in-process servers.
  std::optional<SourceCounts> source;
  double wall_us = 0.0;
};

/// A persistent connection to a block server.
class Connection {
 public:
  virtual ~Connection() = default;

  /// One request/response exchange. Fetches count as round trips; end-of-run
  /// notices do not.
  Exchange round_trip(const wire::RequestFrame& request, Micros now);
  virtual void reconnect() = 0;

  std::uint64_t round_trips() const { return round_trips_.load(); }
  std::uint64_t reconnects() const { return reconnects_.load(); }

 protected:
  virtual Exchange exchange(const wire::RequestFrame& request, Micros now) = 0;
  std::atomic<std::uint64_t> reconnects_{0};

 private:
  std::atomic<std::uint64_t> round_trips_{0};
};

/// Talks to a BlockServer in the same process. Frames still go through the
/// wire codec in both directions.
class LoopbackConnection final : public Connection {
 public:
  explicit LoopbackConnection(BlockServer& server) : server_(server) {}
  void reconnect() override { ++reconnects_; }

 protected:
  Exchange exchange(const wire::RequestFrame& request, Micros now) override;

 private:
  BlockServer& server_;
};

using ConnectionFactory = std::function<std::unique_ptr<Connection>()>;

ConnectionFactory loopback_factory(BlockServer& server);

class RemoteError : public std::runtime_error {
 public:
  explicit RemoteError(wire::Status status)
      : std::runtime_error(std::string("server returned ") + wire::to_string(status)), status_(status) {}
  wire::Status status() const { return status_; }

 private:
  wire::Status status_;
};

/// Sends `request`, reconnecting once on a transport failure. Throws
/// TransportError if the retry also fails and RemoteError on a non-ok status.
Exchange fetch_remote(Connection& connection, const wire::RequestFrame& request, Micros now);

/// Per-core workers, each owning one persistent connection and one ring.
class Networker {
 public:
  struct Completion {
    Exchange exchange;
    std::vector<Page> pages;  // one filled page per returned block
  };

  Networker(const ConnectionFactory& factory, std::size_t workers, PagePool& pool,
            std::size_t ring_capacity = 64);
  ~Networker();
  Networker(const Networker&) = delete;
  Networker& operator=(const Networker&) = delete;

  std::future<Completion> submit(std::size_t worker, wire::RequestFrame request, Micros now);

  std::size_t workers() const { return workers_.size(); }
  std::size_t connections_opened() const { return connections_opened_; }
  std::uint64_t round_trips() const;
  Connection& connection(std::size_t worker) { return *workers_.at(worker)->connection; }

 private:
  struct Job {
    wire::RequestFrame request;
    Micros now;
    std::promise<Completion> done;
  };
  struct Worker {
    std::unique_ptr<Connection> connection;
    MetadataRing<Job> ring;
    std::thread thread;
    explicit Worker(std::size_t ring_capacity) : ring(ring_capacity) {}
  };

  void run(Worker& worker);

  PagePool& pool_;
  std::vector<std::unique_ptr<Worker>> workers_;
  std::size_t connections_opened_ = 0;
};

enum class ClockMode { virtual_clock, wall };

struct ClientConfig {
  std::uint32_t block_size = kDefaultBlockSize;
  std::size_t pool_capacity = PagePool::kDefaultCapacity;
  std::size_t cache_pages = 65536;
  std::size_t workers = 1;
  std::size_t ring_capacity = 64;
  /// Empty means "redirect the trace's own executable".
  std::vector<std::string> redirect_names;
  LatencyModel latency;
  ClockMode clock = ClockMode::virtual_clock;
  /// Derive the session token from a seed instead of the system RNG.
  std::optional<std::uint64_t> token_seed;
  bool send_end_marker = true;
  Micros start_time = 0;
};

struct EventRecord {
  std::size_t seq = 0;
  BlockIndex block = 0;
  bool hit = false;
  bool round_trip = false;
  bool local = false;
  bool lost = false;
  double latency_us = 0.0;
  std::size_t delivered = 0;
  std::size_t backing_reads = 0;
};

struct RunReport {
  std::string executable;
  std::vector<EventRecord> events;
  bool complete = true;
  std::string error;

  std::uint64_t round_trips = 0;
  std::uint64_t delivered_blocks = 0;
  std::uint64_t hits = 0;
  std::uint64_t local_reads = 0;
  std::uint64_t memcache_reads = 0;
  std::uint64_t backing_reads = 0;
  std::uint64_t losses = 0;
  std::set<BlockIndex> delivered;  // distinct blocks received from the server
  std::size_t connections = 0;
  Token token;
  Micros end_time = 0;

  /// `seq,block,hit,round_trip,latency_us` with a header row.
  std::string to_csv() const;
};

/// Replays `trace`. Transport or server errors stop the replay and return the
/// partial report with complete == false.
RunReport run_trace(const Trace& trace, const ClientConfig& config, const ConnectionFactory& factory);

}  // namespace execstream
