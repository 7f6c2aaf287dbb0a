#pragma once

// Client-side building blocks: the redirect name set, the page pool with its
// allocator thread, the LRU page cache and the metadata ring shared with the
// networker workers.

#include <condition_variable>
#include <cstdint>
#include <deque>
#include <list>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <thread>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "execstream/bytes.hpp"
#include "execstream/errors.hpp"
#include "execstream/model.hpp"

namespace execstream {

struct StringHash {
  using is_transparent = void;
  std::size_t operator()(std::string_view s) const { return std::hash<std::string_view>{}(s); }
};

class RedirectSet {
 public:
  RedirectSet() = default;
  explicit RedirectSet(const std::vector<std::string>& names);

  void add(std::string name) { names_.insert(std::move(name)); }
  bool contains(std::string_view name) const { return names_.find(name) != names_.end(); }
  std::size_t size() const { return names_.size(); }

 private:
  std::unordered_set<std::string, StringHash, std::equal_to<>> names_;
};

enum class Route { local, remote };

Route redirect(std::string_view executable, BlockIndex block, const RedirectSet& set);

using Page = Bytes;

/// Free-page pool. In background mode an allocator thread tops the pool back
/// up to capacity after every acquire; in manual mode refill() does it.
class PagePool {
 public:
  enum class Refill { background, manual };
  static constexpr std::size_t kDefaultCapacity = 256;

  explicit PagePool(std::size_t capacity = kDefaultCapacity, std::size_t page_size = kDefaultBlockSize,
                    Refill mode = Refill::background);
  ~PagePool();
  PagePool(const PagePool&) = delete;
  PagePool& operator=(const PagePool&) = delete;

  /// Returns exactly n pages. Throws ValidationError when n is 0 or exceeds
  /// the pool capacity.
  std::vector<Page> acquire(std::size_t n);
  void refill();
  /// Hands a page back to the system (evicted pages are not recycled).
  void release(Page page);

  std::size_t capacity() const { return capacity_; }
  std::size_t page_size() const { return page_size_; }
  std::size_t free_count() const;
  std::uint64_t allocated_total() const;
  std::uint64_t released_total() const;

 private:
  void allocator_loop();
  void fill_locked();

  std::size_t capacity_;
  std::size_t page_size_;
  Refill mode_;
  mutable std::mutex mu_;
  std::condition_variable need_cv_;
  std::condition_variable ready_cv_;
  std::vector<Page> free_;
  std::uint64_t allocated_ = 0;
  std::uint64_t released_ = 0;
  bool stopping_ = false;
  std::thread allocator_;
};

/// LRU page cache keyed by (executable, block).
class PageCache {
 public:
  explicit PageCache(std::size_t capacity_pages);

  /// Refreshes recency on a hit.
  const Page* lookup(std::string_view executable, BlockIndex block);
  bool contains(std::string_view executable, BlockIndex block) const;
  /// Inserts (or replaces and refreshes). Returns the evicted page, if any.
  std::optional<Page> insert(std::string_view executable, BlockIndex block, Page page);

  std::size_t size() const { return entries_.size(); }
  std::size_t capacity() const { return capacity_; }
  std::uint64_t evictions() const { return evictions_; }

 private:
  struct Key {
    std::string executable;
    BlockIndex block;
    bool operator==(const Key&) const = default;
  };
  struct KeyHash {
    std::size_t operator()(const Key& k) const {
      return std::hash<std::string>{}(k.executable) * 31 + std::hash<BlockIndex>{}(k.block);
    }
  };
  struct Entry {
    Key key;
    Page page;
  };

  std::size_t capacity_;
  std::list<Entry> lru_;  // front = most recent
  std::unordered_map<Key, std::list<Entry>::iterator, KeyHash> entries_;
  std::uint64_t evictions_ = 0;
};

class RingFull : public std::runtime_error {
 public:
  RingFull() : std::runtime_error("metadata ring full") {}
};

/// Bounded FIFO handing request metadata from the fault path to a worker.
template <typename T>
class MetadataRing {
 public:
  enum class Overflow { block, error };

  explicit MetadataRing(std::size_t capacity, Overflow policy = Overflow::block)
      : capacity_(capacity), policy_(policy) {
    if (capacity_ == 0) throw ValidationError("ring capacity must be positive");
  }

  void push(T item) {
    std::unique_lock lock(mu_);
    if (slots_.size() >= capacity_) {
      if (policy_ == Overflow::error) throw RingFull();
      not_full_.wait(lock, [&] { return closed_ || slots_.size() < capacity_; });
    }
    if (closed_) throw TransportError("metadata ring closed");
    slots_.push_back(std::move(item));
    not_empty_.notify_one();
  }

  /// Blocks until an item arrives; nullopt once closed and drained.
  std::optional<T> pop() {
    std::unique_lock lock(mu_);
    not_empty_.wait(lock, [&] { return closed_ || !slots_.empty(); });
    if (slots_.empty()) return std::nullopt;
    T item = std::move(slots_.front());
    slots_.pop_front();
    not_full_.notify_one();
    return item;
  }

  void close() {
    std::lock_guard lock(mu_);
    closed_ = true;
    not_empty_.notify_all();
    not_full_.notify_all();
  }

  std::size_t size() const {
    std::lock_guard lock(mu_);
    return slots_.size();
  }
  std::size_t capacity() const { return capacity_; }

 private:
  std::size_t capacity_;
  Overflow policy_;
  mutable std::mutex mu_;
  std::condition_variable not_empty_;
  std::condition_variable not_full_;
  std::deque<T> slots_;
  bool closed_ = false;
};

}  // namespace execstream
