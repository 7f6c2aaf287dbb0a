#include "execstream/provider.hpp"

#include <fcntl.h>
#include <sys/stat.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <numeric>

#include "execstream/errors.hpp"

namespace execstream {
namespace {

class MemoryBacking final : public BlockBacking {
 public:
  MemoryBacking(Bytes bytes, std::uint32_t block_size) : bytes_(std::move(bytes)), block_size_(block_size) {
    if (bytes_.size() % block_size_ != 0) {
      throw ValidationError("image size is not a multiple of the block size");
    }
  }
  std::uint32_t total_blocks() const override {
    return static_cast<std::uint32_t>(bytes_.size() / block_size_);
  }
  void read(BlockIndex index, std::span<std::uint8_t> out) const override {
    std::memcpy(out.data(), bytes_.data() + static_cast<std::size_t>(index) * block_size_, block_size_);
  }

 private:
  Bytes bytes_;
  std::uint32_t block_size_;
};

class FileBacking final : public BlockBacking {
 public:
  FileBacking(const std::string& path, std::uint32_t block_size) : block_size_(block_size) {
    fd_ = ::open(path.c_str(), O_RDONLY | O_CLOEXEC);
    if (fd_ < 0) throw std::runtime_error("cannot open image '" + path + "': " + std::strerror(errno));
    struct stat st {};
    if (::fstat(fd_, &st) != 0) {
      ::close(fd_);
      throw std::runtime_error("cannot stat image '" + path + "'");
    }
    if (static_cast<std::uint64_t>(st.st_size) % block_size_ != 0) {
      ::close(fd_);
      throw ValidationError("image '" + path + "' size is not a multiple of the block size");
    }
    total_ = static_cast<std::uint32_t>(static_cast<std::uint64_t>(st.st_size) / block_size_);
  }
  ~FileBacking() override { ::close(fd_); }
  FileBacking(const FileBacking&) = delete;
  FileBacking& operator=(const FileBacking&) = delete;

  std::uint32_t total_blocks() const override { return total_; }
  void read(BlockIndex index, std::span<std::uint8_t> out) const override {
    std::size_t done = 0;
    auto offset = static_cast<off_t>(index) * block_size_;
    while (done < block_size_) {
      auto n = ::pread(fd_, out.data() + done, block_size_ - done, offset + static_cast<off_t>(done));
      if (n < 0 && errno == EINTR) continue;
      if (n <= 0) throw std::runtime_error("short read from image backing");
      done += static_cast<std::size_t>(n);
    }
  }

 private:
  int fd_ = -1;
  std::uint32_t block_size_;
  std::uint32_t total_ = 0;
};

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace

std::string_view to_string(Strategy s) {
  switch (s) {
    case Strategy::none:
      return "none";
    case Strategy::full:
      return "full";
    case Strategy::norm_var:
      return "norm_var";
    case Strategy::nv_async:
      return "nv_async";
  }
  return "unknown";
}

Strategy parse_strategy(std::string_view text) {
  if (text == "none") return Strategy::none;
  if (text == "full") return Strategy::full;
  if (text == "norm_var") return Strategy::norm_var;
  if (text == "nv_async") return Strategy::nv_async;
  throw ConfigError("unknown prefetch strategy '" + std::string(text) + "'");
}

std::vector<double> normalize_segment(std::span<const BlockIndex> blocks) {
  if (blocks.empty()) throw ValidationError("empty segment");
  auto [lo, hi] = std::minmax_element(blocks.begin(), blocks.end());
  const double min = *lo;
  const double range = static_cast<double>(*hi) - min;
  std::vector<double> out;
  out.reserve(blocks.size());
  for (auto b : blocks) out.push_back(range == 0.0 ? 0.0 : (static_cast<double>(b) - min) / range);
  return out;
}

double segment_variance(std::span<const BlockIndex> blocks, VarianceEstimator estimator) {
  auto values = normalize_segment(blocks);
  const double avg = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
  double sum = 0.0;
  for (double v : values) sum += (avg - v) * (avg - v);
  return estimator == VarianceEstimator::mean ? sum / static_cast<double>(values.size()) : sum;
}

Bytes synthetic_image_bytes(std::string_view name, std::uint32_t total_blocks, std::uint32_t block_size) {
  Bytes out(static_cast<std::size_t>(total_blocks) * block_size);
  std::uint64_t state = fnv1a(name);
  std::size_t i = 0;
  while (i < out.size()) {
    state += 0x9e3779b97f4a7c15ULL;
    std::uint64_t z = state;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    z ^= z >> 31;
    for (int k = 0; k < 8 && i < out.size(); ++k, ++i) out[i] = static_cast<std::uint8_t>(z >> (8 * k));
  }
  return out;
}

ExecutableImage::ExecutableImage(std::string name, std::uint32_t block_size,
                                 std::unique_ptr<BlockBacking> backing)
    : name_(std::move(name)),
      block_size_(block_size),
      backing_(std::move(backing)),
      total_blocks_(backing_->total_blocks()),
      memcache_(total_blocks_),
      resident_(total_blocks_, 0),
      preloaded_(total_blocks_, 0) {
  if (block_size_ == 0) throw ValidationError("block size must be positive");
}

std::shared_ptr<ExecutableImage> ExecutableImage::open_file(const std::string& path, std::string name,
                                                            std::uint32_t block_size) {
  return std::make_shared<ExecutableImage>(std::move(name), block_size,
                                           std::make_unique<FileBacking>(path, block_size));
}

std::shared_ptr<ExecutableImage> ExecutableImage::in_memory(std::string name, Bytes bytes,
                                                            std::uint32_t block_size) {
  return std::make_shared<ExecutableImage>(std::move(name), block_size,
                                           std::make_unique<MemoryBacking>(std::move(bytes), block_size));
}

std::shared_ptr<ExecutableImage> ExecutableImage::synthetic(std::string name, std::uint32_t total_blocks,
                                                            std::uint32_t block_size) {
  auto bytes = synthetic_image_bytes(name, total_blocks, block_size);
  return in_memory(std::move(name), std::move(bytes), block_size);
}

void ExecutableImage::check(BlockIndex index) const {
  if (index >= total_blocks_) {
    throw BlockOutOfRange("block " + std::to_string(index) + " beyond end of '" + name_ + "' (" +
                          std::to_string(total_blocks_) + " blocks)");
  }
}

void ExecutableImage::insert_locked(BlockIndex index, Bytes data, bool ahead_of_need) {
  if (resident_[index]) return;
  if (capacity_ > 0) {
    while (fifo_.size() >= capacity_) {
      auto victim = fifo_.front();
      fifo_.pop_front();
      resident_[victim] = 0;
      memcache_[victim] = Bytes{};
    }
    fifo_.push_back(index);
  }
  memcache_[index] = std::move(data);
  resident_[index] = 1;
  if (ahead_of_need) preloaded_[index] = 1;
}

ReadSource ExecutableImage::read(BlockIndex index, std::span<std::uint8_t> out) {
  check(index);
  if (out.size() != block_size_) throw ValidationError("output buffer does not match block size");
  {
    std::lock_guard lock(mu_);
    if (resident_[index]) {
      std::memcpy(out.data(), memcache_[index].data(), block_size_);
      ++counters_.memcache_reads;
      return ReadSource::memcache;
    }
  }
  backing_->read(index, out);
  std::lock_guard lock(mu_);
  ++counters_.backing_reads;
  insert_locked(index, Bytes(out.begin(), out.end()), false);
  return ReadSource::backing;
}

bool ExecutableImage::make_resident(BlockIndex index) {
  check(index);
  {
    std::lock_guard lock(mu_);
    if (resident_[index]) return false;
  }
  Bytes data(block_size_);
  backing_->read(index, data);
  std::lock_guard lock(mu_);
  if (resident_[index]) return false;
  ++counters_.prefetch_reads;
  insert_locked(index, std::move(data), true);
  return true;
}

bool ExecutableImage::resident(BlockIndex index) const {
  check(index);
  std::lock_guard lock(mu_);
  return resident_[index] != 0;
}

std::size_t ExecutableImage::resident_count() const {
  std::lock_guard lock(mu_);
  return static_cast<std::size_t>(std::count(resident_.begin(), resident_.end(), 1));
}

std::vector<BlockIndex> ExecutableImage::preloaded_blocks() const {
  std::lock_guard lock(mu_);
  std::vector<BlockIndex> out;
  for (BlockIndex i = 0; i < total_blocks_; ++i) {
    if (preloaded_[i]) out.push_back(i);
  }
  return out;
}

void ExecutableImage::drop_memcache() {
  std::lock_guard lock(mu_);
  std::fill(resident_.begin(), resident_.end(), 0);
  std::fill(preloaded_.begin(), preloaded_.end(), 0);
  for (auto& slot : memcache_) slot = Bytes{};
  fifo_.clear();
}

void ExecutableImage::set_memcache_capacity(std::size_t blocks) {
  std::lock_guard lock(mu_);
  capacity_ = blocks;
  fifo_.clear();
  if (capacity_ == 0) return;
  for (BlockIndex i = 0; i < total_blocks_; ++i) {
    if (!resident_[i]) continue;
    if (fifo_.size() < capacity_) {
      fifo_.push_back(i);
    } else {
      resident_[i] = 0;
      memcache_[i] = Bytes{};
    }
  }
}

ExecutableImage::Counters ExecutableImage::counters() const {
  std::lock_guard lock(mu_);
  return counters_;
}

PreloadReport plan_preload(std::span<const Action> actions, double threshold, VarianceEstimator estimator) {
  PreloadReport report;
  for (const auto& action : actions) {
    for (std::size_t s = 0; s < action.segments.size(); ++s) {
      PreloadEntry e;
      e.executable = action.executable;
      e.action = action.id;
      e.segment = s;
      e.variance = segment_variance(action.segments[s].blocks, estimator);
      e.above_threshold = e.variance > threshold;
      e.preloaded = e.above_threshold || s == 0;
      report.entries.push_back(std::move(e));
    }
  }
  return report;
}

Provider::Provider(ProviderConfig config) : config_(config) {
  if (config_.variance_threshold < 0.0) throw ValidationError("variance threshold must be non-negative");
  if (config_.background_prefetch) worker_ = std::thread([this] { worker_loop(); });
}

Provider::~Provider() {
  {
    std::lock_guard lock(queue_mu_);
    stopping_ = true;
  }
  queue_cv_.notify_all();
  if (worker_.joinable()) worker_.join();
}

void Provider::add_image(ImagePtr image) {
  if (config_.memcache_capacity > 0) image->set_memcache_capacity(config_.memcache_capacity);
  std::lock_guard lock(images_mu_);
  images_[image->name()] = std::move(image);
}

ImagePtr Provider::image(std::string_view name) const {
  std::lock_guard lock(images_mu_);
  auto it = images_.find(name);
  return it == images_.end() ? nullptr : it->second;
}

std::vector<ImagePtr> Provider::images() const {
  std::lock_guard lock(images_mu_);
  std::vector<ImagePtr> out;
  for (const auto& [_, img] : images_) out.push_back(img);
  return out;
}

PreloadReport Provider::preload_actions(std::span<const Action> actions) {
  for (const auto& a : actions) {
    if (!image(a.executable)) throw UnknownExecutable("no image for executable '" + a.executable + "'");
  }
  auto report = plan_preload(actions, config_.variance_threshold, config_.estimator);
  switch (config_.strategy) {
    case Strategy::none:
      for (auto& e : report.entries) e.preloaded = false;
      break;
    case Strategy::full:
      for (auto& e : report.entries) e.preloaded = true;
      break;
    case Strategy::norm_var:
    case Strategy::nv_async: {
      std::size_t i = 0;
      for (const auto& a : actions) {
        auto img = image(a.executable);
        for (const auto& seg : a.segments) {
          if (report.entries[i++].preloaded) {
            for (auto b : seg.blocks) {
              if (b < img->total_blocks() && img->make_resident(b)) ++report.blocks_loaded;
            }
          }
        }
      }
      break;
    }
  }
  return report;
}

PreloadReport Provider::init_preload(const ActionStore& store) {
  std::vector<Action> all;
  for (const auto& [_, list] : store.actions) all.insert(all.end(), list.begin(), list.end());
  auto report = preload_actions(all);
  if (config_.strategy == Strategy::full) {
    for (const auto& img : images()) {
      for (BlockIndex b = 0; b < img->total_blocks(); ++b) {
        if (img->make_resident(b)) ++report.blocks_loaded;
      }
    }
  }
  return report;
}

PreloadReport Provider::preload_action(const Action& action) {
  if (config_.strategy == Strategy::full) {
    // Every block of the image is already resident.
    PreloadReport report = plan_preload(std::span(&action, 1), config_.variance_threshold, config_.estimator);
    for (auto& e : report.entries) e.preloaded = true;
    return report;
  }
  return preload_actions(std::span(&action, 1));
}

std::vector<std::size_t> Provider::schedule_prefetch(const ActionPtr& action, std::size_t just_served,
                                                     std::size_t window) {
  std::vector<std::size_t> scheduled;
  auto img = image(action->executable);
  if (!img) return scheduled;
  const auto last = std::min(action->segments.size(), just_served + 1 + window);
  for (auto s = just_served + 1; s < last; ++s) {
    Job job{img, {}};
    for (auto b : action->segments[s].blocks) {
      if (b < img->total_blocks() && !img->resident(b)) job.blocks.push_back(b);
    }
    if (job.blocks.empty()) continue;
    scheduled.push_back(s);
    {
      std::lock_guard lock(queue_mu_);
      queue_.push_back(std::move(job));
    }
    queue_cv_.notify_one();
  }
  return scheduled;
}

std::vector<std::size_t> Provider::runtime_prefetch(const ActionPtr& action, std::size_t just_served) {
  if (config_.strategy != Strategy::nv_async || config_.prefetch_window == 0) return {};
  return schedule_prefetch(action, just_served, config_.prefetch_window);
}

BlockReadout Provider::read_blocks(std::string_view executable, std::span<const BlockIndex> indices) {
  auto img = image(executable);
  if (!img) throw UnknownExecutable("no image for executable '" + std::string(executable) + "'");
  BlockReadout out;
  out.blocks.reserve(indices.size());
  for (auto index : indices) {
    BlockRead r;
    r.index = index;
    r.data.resize(img->block_size());
    r.source = img->read(index, r.data);
    if (r.source == ReadSource::memcache) {
      ++out.memcache_reads;
    } else {
      ++out.backing_reads;
    }
    out.blocks.push_back(std::move(r));
  }
  return out;
}

void Provider::run_job(const Job& job) {
  for (auto b : job.blocks) job.image->make_resident(b);
}

void Provider::worker_loop() {
  std::unique_lock lock(queue_mu_);
  while (true) {
    queue_cv_.wait(lock, [&] { return stopping_ || !queue_.empty(); });
    if (queue_.empty()) return;
    auto job = std::move(queue_.front());
    queue_.pop_front();
    busy_ = true;
    lock.unlock();
    run_job(job);
    lock.lock();
    busy_ = false;
    if (queue_.empty()) idle_cv_.notify_all();
  }
}

void Provider::drain() {
  if (config_.background_prefetch) {
    std::unique_lock lock(queue_mu_);
    idle_cv_.wait(lock, [&] { return queue_.empty() && !busy_; });
    return;
  }
  while (true) {
    Job job;
    {
      std::lock_guard lock(queue_mu_);
      if (queue_.empty()) return;
      job = std::move(queue_.front());
      queue_.pop_front();
    }
    run_job(job);
  }
}

void Provider::drop_memcache() {
  drain();
  for (const auto& img : images()) img->drop_memcache();
}

std::string describe_actions(const ActionStore& store, VarianceEstimator estimator) {
  if (store.action_count() == 0) return "0 actions\n";
  std::string out;
  char num[32];
  for (const auto& [exe, list] : store.actions) {
    for (const auto& a : list) {
      std::string segs, vars;
      for (std::size_t i = 0; i < a.segments.size(); ++i) {
        const auto& blocks = a.segments[i].blocks;
        if (i) {
          segs += ',';
          vars += ',';
        }
        segs += std::to_string(blocks.size());
        double v = std::floor(segment_variance(blocks, estimator) * 1e4 + 0.5) / 1e4;
        std::snprintf(num, sizeof num, "%.4f", v);
        vars += num;
      }
      out += exe + " " + std::string(to_string(a.kind)) + " id=" + std::to_string(a.id) + " segs=[" + segs + "] var=[" +
             vars + "]\n";
    }
  }
  return out;
}

}  // namespace execstream
