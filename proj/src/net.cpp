#include "execstream/net.hpp"

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <charconv>
#include <chrono>
#include <cstring>

#include "execstream/server.hpp"

namespace execstream {

namespace {

std::int64_t monotonic_ns() {
  return std::chrono::duration_cast<std::chrono::nanoseconds>(
             std::chrono::steady_clock::now().time_since_epoch())
      .count();
}

std::string errno_text() { return std::strerror(errno); }

struct AddrInfo {
  addrinfo* head = nullptr;
  ~AddrInfo() {
    if (head) freeaddrinfo(head);
  }
};

void resolve(const Endpoint& ep, bool passive, AddrInfo& out) {
  addrinfo hints{};
  hints.ai_family = AF_UNSPEC;
  hints.ai_socktype = SOCK_STREAM;
  if (passive) hints.ai_flags = AI_PASSIVE;
  auto port = std::to_string(ep.port);
  int rc = getaddrinfo(ep.host.c_str(), port.c_str(), &hints, &out.head);
  if (rc != 0) throw TransportError("cannot resolve '" + ep.host + "': " + gai_strerror(rc));
}

void write_all(int fd, const std::uint8_t* data, std::size_t n) {
  while (n > 0) {
    ssize_t w = ::send(fd, data, n, MSG_NOSIGNAL);
    if (w < 0) {
      if (errno == EINTR) continue;
      throw TransportError("send failed: " + errno_text());
    }
    data += w;
    n -= static_cast<std::size_t>(w);
  }
}

// Appends whatever is available (at least one byte). Returns false on EOF.
bool read_some(int fd, Bytes& buf) {
  std::uint8_t chunk[64 * 1024];
  while (true) {
    ssize_t r = ::recv(fd, chunk, sizeof chunk, 0);
    if (r < 0) {
      if (errno == EINTR) continue;
      throw TransportError("recv failed: " + errno_text());
    }
    if (r == 0) return false;
    buf.insert(buf.end(), chunk, chunk + r);
    return true;
  }
}

}  // namespace

Endpoint parse_endpoint(std::string_view text) {
  auto colon = text.rfind(':');
  if (colon == std::string_view::npos || colon == 0 || colon + 1 == text.size()) {
    throw ConfigError("address must be host:port, got '" + std::string(text) + "'");
  }
  Endpoint ep;
  ep.host = std::string(text.substr(0, colon));
  if (ep.host.size() > 2 && ep.host.front() == '[' && ep.host.back() == ']') {
    ep.host = ep.host.substr(1, ep.host.size() - 2);
  }
  auto port_text = text.substr(colon + 1);
  unsigned value = 0;
  auto [ptr, ec] = std::from_chars(port_text.data(), port_text.data() + port_text.size(), value);
  if (ec != std::errc{} || ptr != port_text.data() + port_text.size() || value > 65535) {
    throw ConfigError("invalid port '" + std::string(port_text) + "'");
  }
  ep.port = static_cast<std::uint16_t>(value);
  return ep;
}

TcpConnection::TcpConnection(Endpoint endpoint, std::uint32_t block_size)
    : endpoint_(std::move(endpoint)), block_size_(block_size) {
  open();
}

TcpConnection::~TcpConnection() { close_socket(); }

void TcpConnection::open() {
  AddrInfo ai;
  resolve(endpoint_, false, ai);
  std::string last = "no addresses";
  for (auto* p = ai.head; p; p = p->ai_next) {
    int fd = ::socket(p->ai_family, p->ai_socktype, p->ai_protocol);
    if (fd < 0) {
      last = errno_text();
      continue;
    }
    if (::connect(fd, p->ai_addr, p->ai_addrlen) == 0) {
      int one = 1;
      ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
      fd_ = fd;
      buf_.clear();
      return;
    }
    last = errno_text();
    ::close(fd);
  }
  throw TransportError("cannot connect to " + endpoint_.str() + ": " + last);
}

void TcpConnection::close_socket() {
  if (fd_ >= 0) ::close(fd_);
  fd_ = -1;
}

void TcpConnection::reconnect() {
  close_socket();
  ++reconnects_;
  open();
}

Exchange TcpConnection::exchange(const wire::RequestFrame& request, Micros /*now*/) {
  if (fd_ < 0) throw TransportError("connection closed");
  auto started = std::chrono::steady_clock::now();
  auto bytes = wire::encode_request(request);
  write_all(fd_, bytes.data(), bytes.size());
  while (true) {
    if (auto decoded = wire::try_decode_response(buf_, block_size_)) {
      buf_.erase(buf_.begin(), buf_.begin() + static_cast<std::ptrdiff_t>(decoded->consumed));
      Exchange ex;
      ex.response = std::move(decoded->frame);
      ex.wall_us = std::chrono::duration<double, std::micro>(std::chrono::steady_clock::now() - started).count();
      return ex;
    }
    if (!read_some(fd_, buf_)) {
      close_socket();
      throw TransportError("server closed the connection");
    }
  }
}

ConnectionFactory tcp_factory(Endpoint endpoint, std::uint32_t block_size) {
  return [endpoint, block_size] { return std::make_unique<TcpConnection>(endpoint, block_size); };
}

TcpServer::TcpServer(BlockServer& server, const Endpoint& endpoint) : server_(server), epoch_ns_(monotonic_ns()) {
  AddrInfo ai;
  try {
    resolve(endpoint, true, ai);
  } catch (const TransportError& e) {
    throw BindError(e.what());
  }
  std::string last = "no addresses";
  for (auto* p = ai.head; p; p = p->ai_next) {
    int fd = ::socket(p->ai_family, p->ai_socktype, p->ai_protocol);
    if (fd < 0) {
      last = errno_text();
      continue;
    }
    int one = 1;
    ::setsockopt(fd, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
    if (::bind(fd, p->ai_addr, p->ai_addrlen) == 0 && ::listen(fd, 64) == 0) {
      listen_fd_ = fd;
      break;
    }
    last = errno_text();
    ::close(fd);
  }
  if (listen_fd_ < 0) throw BindError("cannot listen on " + endpoint.str() + ": " + last);

  sockaddr_storage addr{};
  socklen_t len = sizeof addr;
  ::getsockname(listen_fd_, reinterpret_cast<sockaddr*>(&addr), &len);
  port_ = addr.ss_family == AF_INET6 ? ntohs(reinterpret_cast<sockaddr_in6*>(&addr)->sin6_port)
                                     : ntohs(reinterpret_cast<sockaddr_in*>(&addr)->sin_port);

  acceptor_ = std::thread([this] { accept_loop(); });
  housekeeper_ = std::thread([this] { housekeeping_loop(); });
}

TcpServer::~TcpServer() { stop(); }

Micros TcpServer::now() const { return (monotonic_ns() - epoch_ns_) / 1000; }

void TcpServer::stop() {
  if (stopping_.exchange(true)) return;
  if (listen_fd_ >= 0) ::shutdown(listen_fd_, SHUT_RDWR);
  if (acceptor_.joinable()) acceptor_.join();
  if (housekeeper_.joinable()) housekeeper_.join();
  if (listen_fd_ >= 0) ::close(listen_fd_);
  listen_fd_ = -1;
  std::lock_guard lock(peers_mu_);
  for (auto& p : peers_) ::shutdown(p.fd, SHUT_RDWR);
  for (auto& p : peers_) {
    if (p.thread.joinable()) p.thread.join();
    ::close(p.fd);
  }
  peers_.clear();
}

void TcpServer::reap_locked() {
  for (auto it = peers_.begin(); it != peers_.end();) {
    if (it->done.load()) {
      it->thread.join();
      ::close(it->fd);
      it = peers_.erase(it);
    } else {
      ++it;
    }
  }
}

void TcpServer::accept_loop() {
  while (!stopping_.load()) {
    pollfd pfd{listen_fd_, POLLIN, 0};
    int rc = ::poll(&pfd, 1, 200);
    if (rc <= 0) continue;
    int fd = ::accept(listen_fd_, nullptr, nullptr);
    if (fd < 0) continue;
    int one = 1;
    ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
    ++accepted_;
    std::lock_guard lock(peers_mu_);
    reap_locked();
    auto& peer = peers_.emplace_back();
    peer.fd = fd;
    peer.thread = std::thread([this, &peer] { serve_peer(peer); });
  }
}

void TcpServer::serve_peer(Peer& peer) {
  Bytes in;
  Bytes out;
  const auto block_size = server_.config().block_size;
  try {
    while (!stopping_.load()) {
      auto decoded = wire::try_decode_request(in);
      if (!decoded) {
        if (!read_some(peer.fd, in)) break;
        continue;
      }
      in.erase(in.begin(), in.begin() + static_cast<std::ptrdiff_t>(decoded->consumed));
      auto served = server_.handle(decoded->frame, now());
      out.clear();
      wire::encode_response(served.frame, block_size, out);
      write_all(peer.fd, out.data(), out.size());
    }
  } catch (const std::exception&) {
    // Corrupt frame or dead socket: drop this connection only.
  }
  ::shutdown(peer.fd, SHUT_RDWR);
  peer.done.store(true);
}

void TcpServer::housekeeping_loop() {
  while (!stopping_.load()) {
    std::this_thread::sleep_for(std::chrono::milliseconds(100));
    server_.expire(now());
  }
}

}  // namespace execstream
