#pragma once

// TCP transport: a persistent client connection and a thread-per-connection
// server in front of a BlockServer.

#include <atomic>
#include <cstdint>
#include <list>
#include <mutex>
#include <string>
#include <string_view>
#include <thread>

#include "execstream/errors.hpp"
#include "execstream/runtime.hpp"

namespace execstream {

class BlockServer;

struct Endpoint {
  std::string host;
  std::uint16_t port = 0;

  std::string str() const { return host + ":" + std::to_string(port); }
};

/// Parses "host:port". Throws ConfigError on anything else.
Endpoint parse_endpoint(std::string_view text);

class BindError : public TransportError {
 public:
  using TransportError::TransportError;
};

/// One socket kept open for the whole run; reconnect() replaces it.
class TcpConnection final : public Connection {
 public:
  TcpConnection(Endpoint endpoint, std::uint32_t block_size);
  ~TcpConnection() override;
  TcpConnection(const TcpConnection&) = delete;
  TcpConnection& operator=(const TcpConnection&) = delete;

  void reconnect() override;

 protected:
  Exchange exchange(const wire::RequestFrame& request, Micros now) override;

 private:
  void open();
  void close_socket();

  Endpoint endpoint_;
  std::uint32_t block_size_;
  int fd_ = -1;
  Bytes buf_;
};

ConnectionFactory tcp_factory(Endpoint endpoint, std::uint32_t block_size);

/// Serves wire frames for `server`. Request timestamps come from a monotonic
/// clock that starts at construction; a housekeeping thread runs session
/// expiry on the same clock.
class TcpServer {
 public:
  TcpServer(BlockServer& server, const Endpoint& endpoint);
  ~TcpServer();
  TcpServer(const TcpServer&) = delete;
  TcpServer& operator=(const TcpServer&) = delete;

  std::uint16_t port() const { return port_; }
  /// Stops accepting, closes every connection and joins all threads.
  void stop();
  std::uint64_t connections_accepted() const { return accepted_.load(); }
  Micros now() const;

 private:
  struct Peer {
    int fd;
    std::thread thread;
    std::atomic<bool> done{false};
  };

  void accept_loop();
  void serve_peer(Peer& peer);
  void housekeeping_loop();
  void reap_locked();

  BlockServer& server_;
  int listen_fd_ = -1;
  std::uint16_t port_ = 0;
  std::int64_t epoch_ns_ = 0;
  std::atomic<bool> stopping_{false};
  std::atomic<std::uint64_t> accepted_{0};
  std::mutex peers_mu_;
  std::list<Peer> peers_;
  std::thread acceptor_;
  std::thread housekeeper_;
};

}  // namespace execstream
