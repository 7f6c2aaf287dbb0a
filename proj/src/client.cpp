#include "execstream/client.hpp"

namespace execstream {

RedirectSet::RedirectSet(const std::vector<std::string>& names) {
  for (const auto& n : names) names_.insert(n);
}

Route redirect(std::string_view executable, BlockIndex /*block*/, const RedirectSet& set) {
  return set.contains(executable) ? Route::remote : Route::local;
}

PagePool::PagePool(std::size_t capacity, std::size_t page_size, Refill mode)
    : capacity_(capacity), page_size_(page_size), mode_(mode) {
  if (capacity_ == 0) throw ValidationError("page pool capacity must be positive");
  {
    std::lock_guard lock(mu_);
    fill_locked();
  }
  if (mode_ == Refill::background) allocator_ = std::thread([this] { allocator_loop(); });
}

PagePool::~PagePool() {
  {
    std::lock_guard lock(mu_);
    stopping_ = true;
  }
  need_cv_.notify_all();
  if (allocator_.joinable()) allocator_.join();
}

void PagePool::fill_locked() {
  while (free_.size() < capacity_) {
    free_.emplace_back(page_size_);
    ++allocated_;
  }
}

void PagePool::allocator_loop() {
  std::unique_lock lock(mu_);
  while (true) {
    need_cv_.wait(lock, [&] { return stopping_ || free_.size() < capacity_; });
    if (stopping_) return;
    auto missing = capacity_ - free_.size();
    lock.unlock();
    std::vector<Page> fresh;
    fresh.reserve(missing);
    for (std::size_t i = 0; i < missing; ++i) fresh.emplace_back(page_size_);
    lock.lock();
    for (auto& p : fresh) {
      if (free_.size() >= capacity_) break;
      free_.push_back(std::move(p));
      ++allocated_;
    }
    ready_cv_.notify_all();
  }
}

std::vector<Page> PagePool::acquire(std::size_t n) {
  if (n == 0) throw ValidationError("page burst must be at least 1");
  if (n > capacity_) throw ValidationError("burst exceeds pool capacity");
  std::unique_lock lock(mu_);
  if (free_.size() < n) {
    if (mode_ == Refill::manual) {
      fill_locked();
    } else {
      need_cv_.notify_one();
      ready_cv_.wait(lock, [&] { return free_.size() >= n; });
    }
  }
  std::vector<Page> out(std::make_move_iterator(free_.end() - static_cast<std::ptrdiff_t>(n)),
                        std::make_move_iterator(free_.end()));
  free_.resize(free_.size() - n);
  if (mode_ == Refill::background) need_cv_.notify_one();
  return out;
}

void PagePool::refill() {
  std::lock_guard lock(mu_);
  fill_locked();
  ready_cv_.notify_all();
}

void PagePool::release(Page page) {
  std::lock_guard lock(mu_);
  ++released_;
  (void)page;
}

std::size_t PagePool::free_count() const {
  std::lock_guard lock(mu_);
  return free_.size();
}

std::uint64_t PagePool::allocated_total() const {
  std::lock_guard lock(mu_);
  return allocated_;
}

std::uint64_t PagePool::released_total() const {
  std::lock_guard lock(mu_);
  return released_;
}

PageCache::PageCache(std::size_t capacity_pages) : capacity_(capacity_pages) {
  if (capacity_ == 0) throw ValidationError("page cache capacity must be positive");
}

const Page* PageCache::lookup(std::string_view executable, BlockIndex block) {
  auto it = entries_.find(Key{std::string(executable), block});
  if (it == entries_.end()) return nullptr;
  lru_.splice(lru_.begin(), lru_, it->second);
  return &it->second->page;
}

bool PageCache::contains(std::string_view executable, BlockIndex block) const {
  return entries_.find(Key{std::string(executable), block}) != entries_.end();
}

std::optional<Page> PageCache::insert(std::string_view executable, BlockIndex block, Page page) {
  Key key{std::string(executable), block};
  if (auto it = entries_.find(key); it != entries_.end()) {
    it->second->page = std::move(page);
    lru_.splice(lru_.begin(), lru_, it->second);
    return std::nullopt;
  }
  std::optional<Page> evicted;
  if (entries_.size() >= capacity_) {
    auto& victim = lru_.back();
    entries_.erase(victim.key);
    evicted = std::move(victim.page);
    lru_.pop_back();
    ++evictions_;
  }
  lru_.push_front(Entry{key, std::move(page)});
  entries_.emplace(std::move(key), lru_.begin());
  return evicted;
}

}  // namespace execstream
