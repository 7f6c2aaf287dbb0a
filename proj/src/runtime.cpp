#include "execstream/runtime.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <random>

#include "execstream/server.hpp"

namespace execstream {

Exchange Connection::round_trip(const wire::RequestFrame& request, Micros now) {
  auto ex = exchange(request, now);
  if (request.type == wire::RequestType::fetch) ++round_trips_;
  return ex;
}

Exchange LoopbackConnection::exchange(const wire::RequestFrame& request, Micros now) {
  auto started = std::chrono::steady_clock::now();
  const auto block_size = server_.config().block_size;
  auto decoded = wire::decode_request(wire::encode_request(request));
  auto served = server_.handle(decoded, now);
  Exchange ex;
  ex.response = wire::decode_response(wire::encode_response(served.frame, block_size), block_size);
  ex.source = SourceCounts{served.memcache_reads, served.backing_reads};
  ex.wall_us = std::chrono::duration<double, std::micro>(std::chrono::steady_clock::now() - started).count();
  return ex;
}

ConnectionFactory loopback_factory(BlockServer& server) {
  return [&server] { return std::make_unique<LoopbackConnection>(server); };
}

Exchange fetch_remote(Connection& connection, const wire::RequestFrame& request, Micros now) {
  Exchange ex;
  try {
    ex = connection.round_trip(request, now);
  } catch (const TransportError&) {
    connection.reconnect();
    ex = connection.round_trip(request, now);
  }
  if (ex.response.status != wire::Status::ok) throw RemoteError(ex.response.status);
  return ex;
}

Networker::Networker(const ConnectionFactory& factory, std::size_t workers, PagePool& pool,
                     std::size_t ring_capacity)
    : pool_(pool) {
  if (workers == 0) throw ValidationError("at least one networker worker is required");
  for (std::size_t i = 0; i < workers; ++i) {
    auto w = std::make_unique<Worker>(ring_capacity);
    w->connection = factory();
    ++connections_opened_;
    workers_.push_back(std::move(w));
  }
  for (auto& w : workers_) {
    Worker* raw = w.get();
    raw->thread = std::thread([this, raw] { run(*raw); });
  }
}

Networker::~Networker() {
  for (auto& w : workers_) w->ring.close();
  for (auto& w : workers_) {
    if (w->thread.joinable()) w->thread.join();
  }
}

std::future<Networker::Completion> Networker::submit(std::size_t worker, wire::RequestFrame request,
                                                     Micros now) {
  Job job{std::move(request), now, {}};
  auto fut = job.done.get_future();
  workers_.at(worker)->ring.push(std::move(job));
  return fut;
}

std::uint64_t Networker::round_trips() const {
  std::uint64_t n = 0;
  for (const auto& w : workers_) n += w->connection->round_trips();
  return n;
}

void Networker::run(Worker& worker) {
  while (auto job = worker.ring.pop()) {
    try {
      Completion c;
      c.exchange = fetch_remote(*worker.connection, job->request, job->now);
      auto& blocks = c.exchange.response.blocks;
      c.pages.reserve(blocks.size());
      std::size_t filled = 0;
      while (filled < blocks.size()) {
        auto batch = pool_.acquire(std::min(blocks.size() - filled, pool_.capacity()));
        for (auto& page : batch) {
          auto& payload = blocks[filled++].data;
          page.resize(payload.size());
          std::memcpy(page.data(), payload.data(), payload.size());
          payload = Bytes{};
          c.pages.push_back(std::move(page));
        }
      }
      job->done.set_value(std::move(c));
    } catch (...) {
      job->done.set_exception(std::current_exception());
    }
  }
}

std::string RunReport::to_csv() const {
  std::string out = "seq,block,hit,round_trip,latency_us\n";
  char line[128];
  for (const auto& e : events) {
    std::snprintf(line, sizeof line, "%zu,%u,%d,%d,%.3f\n", e.seq, e.block, e.hit ? 1 : 0,
                  e.round_trip ? 1 : 0, e.latency_us);
    out += line;
  }
  return out;
}

namespace {

Token random_token() {
  std::random_device rd;
  std::uint64_t seed = (static_cast<std::uint64_t>(rd()) << 32) ^ rd();
  return Token::from_seed(seed);
}

}  // namespace

RunReport run_trace(const Trace& trace, const ClientConfig& config, const ConnectionFactory& factory) {
  config.latency.validate();
  RunReport report;
  report.executable = trace.executable;
  report.token = config.token_seed ? Token::from_seed(*config.token_seed) : random_token();

  RedirectSet redirect_set = config.redirect_names.empty() ? RedirectSet({trace.executable})
                                                           : RedirectSet(config.redirect_names);
  PagePool pool(config.pool_capacity, config.block_size);
  PageCache cache(config.cache_pages);
  Networker net(factory, config.workers, pool, config.ring_capacity);
  report.connections = net.connections_opened();
  LossDraws loss(config.latency.loss_rate, config.latency.seed);
  const auto& model = config.latency;

  auto insert = [&](BlockIndex block, Page page) {
    if (auto evicted = cache.insert(trace.executable, block, std::move(page))) pool.release(std::move(*evicted));
  };

  Micros now = config.start_time;
  bool used_remote = false;
  for (std::size_t seq = 0; seq < trace.events.size(); ++seq) {
    const auto& ev = trace.events[seq];
    EventRecord rec;
    rec.seq = seq;
    rec.block = ev.block;

    if (cache.lookup(trace.executable, ev.block) != nullptr) {
      rec.hit = true;
      rec.latency_us = model.mem_read_us;
      ++report.hits;
    } else if (redirect(trace.executable, ev.block, redirect_set) == Route::local) {
      rec.local = true;
      rec.latency_us = model.disk_read_us;
      ++report.local_reads;
      auto pages = pool.acquire(1);
      insert(ev.block, std::move(pages.front()));
    } else {
      used_remote = true;
      wire::RequestFrame req{report.token, trace.executable, ev.block, wire::RequestType::fetch};
      Networker::Completion done;
      try {
        done = net.submit(seq % net.workers(), std::move(req), now).get();
      } catch (const std::exception& e) {
        report.complete = false;
        report.error = e.what();
        break;
      }
      const auto& blocks = done.exchange.response.blocks;
      bool got_requested = false;
      for (std::size_t i = 0; i < blocks.size(); ++i) {
        got_requested = got_requested || blocks[i].index == ev.block;
        report.delivered.insert(blocks[i].index);
        insert(blocks[i].index, std::move(done.pages[i]));
      }
      if (!got_requested) {
        report.complete = false;
        report.error = "server response did not include block " + std::to_string(ev.block);
        break;
      }
      rec.round_trip = true;
      rec.delivered = blocks.size();
      ++report.round_trips;
      report.delivered_blocks += blocks.size();

      if (config.clock == ClockMode::wall) {
        rec.latency_us = done.exchange.wall_us;
      } else {
        SourceCounts src = done.exchange.source.value_or(SourceCounts{blocks.size(), 0});
        rec.backing_reads = src.backing;
        report.memcache_reads += src.memcache;
        report.backing_reads += src.backing;
        rec.latency_us = model.round_trip_us(blocks.size(), src.memcache, src.backing);
      }
      if (loss.next()) {
        rec.lost = true;
        rec.latency_us += model.retransmit_penalty_us;
        ++report.losses;
      }
    }
    now += static_cast<Micros>(std::llround(rec.latency_us)) + ev.think_time;
    report.events.push_back(rec);
  }

  if (used_remote && config.send_end_marker && report.complete) {
    wire::RequestFrame end{report.token, trace.executable, 0, wire::RequestType::end_run};
    try {
      net.submit(0, std::move(end), now).get();
    } catch (const std::exception& e) {
      report.complete = false;
      report.error = std::string("end-of-run notice failed: ") + e.what();
    }
  }
  report.end_time = now;
  return report;
}

}  // namespace execstream
