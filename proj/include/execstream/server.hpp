#pragma once

#include <atomic>
#include <functional>
#include <string>

#include "execstream/predictor.hpp"
#include "execstream/provider.hpp"
#include "execstream/wire.hpp"

namespace execstream {

struct ServerConfig {
  PredictorConfig predictor;
  ProviderConfig provider;
  std::uint32_t block_size = kDefaultBlockSize;
  /// Apply queued prefetch work before returning each response. Models the
  /// prefetch worker finishing while the client consumes the response; used by
  /// the simulator for determinism.
  bool drain_after_response = false;
};

struct ServedResponse {
  wire::ResponseFrame frame;
  std::size_t memcache_reads = 0;
  std::size_t backing_reads = 0;
  std::optional<SegmentRef> served;
  std::vector<std::size_t> prefetch_scheduled;
  std::string state_change;
};

/// Request handling shared by the TCP daemon and the in-process transport.
class BlockServer {
 public:
  explicit BlockServer(ServerConfig config, ActionStore store = {});

  void add_image(ImagePtr image);
  /// Loads every `<name>.img` under `dir`. Returns the number of images.
  std::size_t load_image_dir(const std::string& dir);

  /// Startup residency per the configured strategy, over the current store.
  PreloadReport initialize();

  ServedResponse handle(const wire::RequestFrame& request, Micros now);

  std::vector<ActionPtr> expire(Micros now);
  std::vector<ActionPtr> finalize_all();
  /// Drops the memory cache, e.g. to start a measurement from a cold server.
  void drop_memcache();

  ActionStore store() const { return predictor_.store(); }
  Predictor& predictor() { return predictor_; }
  Provider& provider() { return provider_; }
  const ServerConfig& config() const { return config_; }
  std::uint64_t requests_handled() const { return requests_.load(); }

  using Observer = std::function<void(const wire::RequestFrame&, const ServedResponse&)>;
  void set_observer(Observer observer) { observer_ = std::move(observer); }

 private:
  void adopt(const std::vector<ActionPtr>& created);

  ServerConfig config_;
  Predictor predictor_;
  Provider provider_;
  std::atomic<std::uint64_t> requests_{0};
  Observer observer_;
};

}  // namespace execstream
