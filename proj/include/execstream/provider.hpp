#pragma once

// Server-side block supply: executable images, a per-image memory cache, and
// the policies that decide which blocks are made resident before they are
// requested.

#include <condition_variable>
#include <cstdint>
#include <deque>
#include <map>
#include <memory>
#include <mutex>
#include <span>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include "execstream/bytes.hpp"
#include "execstream/model.hpp"
#include "execstream/predictor.hpp"

namespace execstream {

enum class Strategy { none, full, norm_var, nv_async };
enum class VarianceEstimator { mean, sum };
enum class ReadSource : std::uint8_t { memcache, backing };

std::string_view to_string(Strategy s);
Strategy parse_strategy(std::string_view text);

/// (b - min) / (max - min) for each block; all zeros when max == min.
std::vector<double> normalize_segment(std::span<const BlockIndex> blocks);
/// Population variance of the normalized values (or the plain sum of squared
/// deviations with VarianceEstimator::sum).
double segment_variance(std::span<const BlockIndex> blocks, VarianceEstimator estimator = VarianceEstimator::mean);

/// One line per action: `app workload id=0 segs=[4,4] var=[0.1748,0.1563]`,
/// variances rounded half-up to four places; "0 actions" for an empty store.
std::string describe_actions(const ActionStore& store, VarianceEstimator estimator = VarianceEstimator::mean);

class BlockBacking {
 public:
  virtual ~BlockBacking() = default;
  virtual std::uint32_t total_blocks() const = 0;
  virtual void read(BlockIndex index, std::span<std::uint8_t> out) const = 0;
};

/// Deterministic pseudo-random image contents seeded by the executable name.
Bytes synthetic_image_bytes(std::string_view name, std::uint32_t total_blocks, std::uint32_t block_size);

class ExecutableImage {
 public:
  struct Counters {
    std::uint64_t memcache_reads = 0;
    std::uint64_t backing_reads = 0;
    std::uint64_t prefetch_reads = 0;
  };

  ExecutableImage(std::string name, std::uint32_t block_size, std::unique_ptr<BlockBacking> backing);

  /// `<path>` is a flat file of total_blocks x block_size bytes.
  static std::shared_ptr<ExecutableImage> open_file(const std::string& path, std::string name,
                                                    std::uint32_t block_size);
  static std::shared_ptr<ExecutableImage> in_memory(std::string name, Bytes bytes, std::uint32_t block_size);
  static std::shared_ptr<ExecutableImage> synthetic(std::string name, std::uint32_t total_blocks,
                                                    std::uint32_t block_size);

  const std::string& name() const { return name_; }
  std::uint32_t block_size() const { return block_size_; }
  std::uint32_t total_blocks() const { return total_blocks_; }

  /// Response-path read. A backing read promotes the block into the memcache.
  ReadSource read(BlockIndex index, std::span<std::uint8_t> out);
  /// Background or preload residency. Returns false if already resident.
  bool make_resident(BlockIndex index);
  bool resident(BlockIndex index) const;
  std::size_t resident_count() const;
  /// Blocks made resident by preload or prefetch since the last drop.
  std::vector<BlockIndex> preloaded_blocks() const;
  void drop_memcache();
  /// 0 means unbounded; otherwise the oldest resident block is evicted first.
  void set_memcache_capacity(std::size_t blocks);
  Counters counters() const;

 private:
  void check(BlockIndex index) const;
  void insert_locked(BlockIndex index, Bytes data, bool ahead_of_need);

  std::string name_;
  std::uint32_t block_size_;
  std::unique_ptr<BlockBacking> backing_;
  std::uint32_t total_blocks_;

  mutable std::mutex mu_;
  std::vector<Bytes> memcache_;
  std::vector<std::uint8_t> resident_;
  std::vector<std::uint8_t> preloaded_;
  std::deque<BlockIndex> fifo_;
  std::size_t capacity_ = 0;
  Counters counters_;
};

using ImagePtr = std::shared_ptr<ExecutableImage>;

struct ProviderConfig {
  Strategy strategy = Strategy::nv_async;
  double variance_threshold = 0.1;
  std::size_t prefetch_window = 3;
  VarianceEstimator estimator = VarianceEstimator::mean;
  /// false: prefetch jobs run only when drain() is called (deterministic simulation).
  bool background_prefetch = true;
  std::size_t memcache_capacity = 0;
};

struct PreloadEntry {
  std::string executable;
  ActionId action = 0;
  std::size_t segment = 0;
  double variance = 0.0;
  bool above_threshold = false;
  bool preloaded = false;
};

struct PreloadReport {
  std::vector<PreloadEntry> entries;
  std::size_t blocks_loaded = 0;
};

/// Which segments the variance rule and the first-segment warm-up select.
/// Pure; touches no image.
PreloadReport plan_preload(std::span<const Action> actions, double threshold, VarianceEstimator estimator);

struct BlockRead {
  BlockIndex index = 0;
  Bytes data;
  ReadSource source = ReadSource::backing;
};

struct BlockReadout {
  std::vector<BlockRead> blocks;
  std::size_t memcache_reads = 0;
  std::size_t backing_reads = 0;
};

class Provider {
 public:
  explicit Provider(ProviderConfig config = {});
  ~Provider();
  Provider(const Provider&) = delete;
  Provider& operator=(const Provider&) = delete;

  void add_image(ImagePtr image);
  ImagePtr image(std::string_view name) const;
  std::vector<ImagePtr> images() const;

  /// Applies the configured strategy at startup: `full` loads every block of
  /// every image, `norm_var` and `nv_async` load high-variance segments plus
  /// the first segment of every action, `none` does nothing. Throws
  /// UnknownExecutable if an action names an image that is not loaded.
  PreloadReport init_preload(const ActionStore& store);
  /// Same policy for one action constructed at runtime.
  PreloadReport preload_action(const Action& action);

  /// Queues segments after `just_served` (up to the configured window) for
  /// background residency when the strategy is nv_async. Returns the queued
  /// segment indices; fully resident segments are skipped.
  std::vector<std::size_t> runtime_prefetch(const ActionPtr& action, std::size_t just_served);
  /// Strategy-independent form used by runtime_prefetch.
  std::vector<std::size_t> schedule_prefetch(const ActionPtr& action, std::size_t just_served,
                                             std::size_t window);

  /// Throws UnknownExecutable or BlockOutOfRange.
  BlockReadout read_blocks(std::string_view executable, std::span<const BlockIndex> indices);

  /// Blocks until every queued prefetch job has been applied.
  void drain();
  void drop_memcache();
  const ProviderConfig& config() const { return config_; }

 private:
  struct Job {
    ImagePtr image;
    std::vector<BlockIndex> blocks;
  };

  void worker_loop();
  void run_job(const Job& job);
  PreloadReport preload_actions(std::span<const Action> actions);

  ProviderConfig config_;
  mutable std::mutex images_mu_;
  std::map<std::string, ImagePtr, std::less<>> images_;

  std::mutex queue_mu_;
  std::condition_variable queue_cv_;
  std::condition_variable idle_cv_;
  std::deque<Job> queue_;
  bool busy_ = false;
  bool stopping_ = false;
  std::thread worker_;
};

}  // namespace execstream
