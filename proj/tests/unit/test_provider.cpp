#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>

#include "execstream/errors.hpp"
#include "execstream/provider.hpp"
#include "fixtures.hpp"

using namespace execstream;

namespace {

// Independent evaluation of the normalized variance in extended precision.
long double oracle_variance(const std::vector<BlockIndex>& b) {
  auto [lo, hi] = std::minmax_element(b.begin(), b.end());
  long double range = static_cast<long double>(*hi) - *lo;
  std::vector<long double> n;
  for (auto x : b) n.push_back(range == 0 ? 0.0L : (static_cast<long double>(x) - *lo) / range);
  long double avg = 0;
  for (auto v : n) avg += v;
  avg /= n.size();
  long double acc = 0;
  for (auto v : n) acc += (avg - v) * (avg - v);
  return acc / n.size();
}

std::vector<BlockIndex> blocks_of(std::initializer_list<BlockIndex> l) { return l; }

}  // namespace

TEST_SUITE("provider") {
  TEST_CASE("normalize_segment examples") {
    auto n = normalize_segment(blocks_of({1, 3, 8, 9}));
    REQUIRE(n.size() == 4);
    CHECK(n[0] == 0.0);
    CHECK(n[1] == 0.25);
    CHECK(n[2] == 0.875);
    CHECK(n[3] == 1.0);
    CHECK(normalize_segment(blocks_of({5, 5, 5})) == std::vector<double>{0, 0, 0});
    CHECK(normalize_segment(blocks_of({0, 31})) == std::vector<double>{0, 1});
  }

  TEST_CASE("segment_variance examples") {
    // avg = (0 + 0.25 + 0.875 + 1) / 4 = 0.53125; hand-summed squares / 4.
    CHECK(segment_variance(blocks_of({1, 3, 8, 9})) == doctest::Approx(0.1748046875).epsilon(1e-12));
    CHECK(std::fabs(segment_variance(blocks_of({1, 3, 8, 9})) - 0.174805) <= 1e-6);
    CHECK(segment_variance(blocks_of({11, 12, 14, 15})) == doctest::Approx(0.15625).epsilon(1e-12));
    CHECK(segment_variance(blocks_of({4, 5, 6, 7})) == doctest::Approx(5.0 / 36.0).epsilon(1e-12));
    CHECK(segment_variance(blocks_of({9, 9, 9, 9})) == 0.0);
    CHECK(segment_variance(blocks_of({7})) == 0.0);

    std::vector<BlockIndex> seq(32);
    std::iota(seq.begin(), seq.end(), 100);
    CHECK(std::fabs(segment_variance(seq) - 33.0 / 372.0) <= 1e-9);
  }

  TEST_CASE("sum estimator is n times the mean estimator") {
    auto b = blocks_of({1, 3, 8, 9});
    CHECK(segment_variance(b, VarianceEstimator::sum) == doctest::Approx(4 * 0.1748046875));
  }

  TEST_CASE("variance agrees with an extended-precision oracle and stays in [0, 1]") {
    std::mt19937_64 rng(8);
    for (int i = 0; i < 2000; ++i) {
      std::vector<BlockIndex> b(1 + rng() % 64);
      for (auto& x : b) x = static_cast<BlockIndex>(rng() % 5000);
      double v = segment_variance(b);
      REQUIRE(v >= 0.0);
      REQUIRE(v <= 1.0);
      REQUIRE(std::fabs(v - static_cast<double>(oracle_variance(b))) < 1e-12);
      for (double x : normalize_segment(b)) REQUIRE((x >= 0.0 && x <= 1.0));
    }
  }

  TEST_CASE("plan_preload on the worked example") {
    auto a = fixtures::fig4_action();
    std::vector<Action> actions{a};

    auto r = plan_preload(actions, 0.15, VarianceEstimator::mean);
    REQUIRE(r.entries.size() == 2);
    CHECK(r.entries[0].variance == doctest::Approx(0.1748046875));
    CHECK(r.entries[0].above_threshold);
    CHECK(r.entries[0].preloaded);
    CHECK(r.entries[1].variance == doctest::Approx(0.15625));
    CHECK(r.entries[1].above_threshold);
    CHECK(r.entries[1].preloaded);

    auto zero = plan_preload(actions, 0.0, VarianceEstimator::mean);
    CHECK(zero.entries[0].preloaded);
    CHECK(zero.entries[1].preloaded);

    auto one = plan_preload(actions, 1.0, VarianceEstimator::mean);
    CHECK(one.entries[0].preloaded);  // first-segment warm-up
    CHECK_FALSE(one.entries[0].above_threshold);
    CHECK_FALSE(one.entries[1].preloaded);

    auto mid = plan_preload(actions, 0.16, VarianceEstimator::mean);
    CHECK(mid.entries[0].above_threshold);
    CHECK_FALSE(mid.entries[1].preloaded);
  }

  TEST_CASE("init_preload makes selected segments resident") {
    ProviderConfig cfg;
    cfg.strategy = Strategy::norm_var;
    cfg.variance_threshold = 1.0;
    Provider p(cfg);
    auto img = ExecutableImage::synthetic("app", 16, 64);
    p.add_image(img);
    auto report = p.init_preload(fixtures::fig4_store());
    CHECK(report.blocks_loaded == 4);
    for (BlockIndex b : {1u, 3u, 8u, 9u}) CHECK(img->resident(b));
    for (BlockIndex b : {11u, 12u, 14u, 15u}) CHECK_FALSE(img->resident(b));

    auto out = p.read_blocks("app", std::vector<BlockIndex>{1, 3, 8, 9});
    CHECK(out.memcache_reads == 4);
    CHECK(out.backing_reads == 0);
  }

  TEST_CASE("every segment above the threshold reads from the memcache") {
    std::mt19937_64 rng(21);
    for (int iter = 0; iter < 30; ++iter) {
      ActionStore store;
      store.seg_max = 8;
      std::vector<BlockIndex> flat(1 + rng() % 60);
      for (auto& b : flat) b = static_cast<BlockIndex>(rng() % 200);
      store.put(Action{"x", ActionKind::workload, 0, segment_split(flat, 8)});
      ProviderConfig cfg;
      cfg.strategy = Strategy::norm_var;
      cfg.variance_threshold = static_cast<double>(rng() % 100) / 200.0;
      Provider p(cfg);
      p.add_image(ExecutableImage::synthetic("x", 200, 16));
      p.init_preload(store);
      for (const auto& seg : store.find("x")->front().segments) {
        if (segment_variance(seg.blocks) <= cfg.variance_threshold) continue;
        auto out = p.read_blocks("x", seg.blocks);
        REQUIRE(out.backing_reads == 0);
      }
    }
  }

  TEST_CASE("init_preload names a missing image") {
    Provider p;
    CHECK_THROWS_WITH_AS(p.init_preload(fixtures::fig4_store()), doctest::Contains("app"), UnknownExecutable);
  }

  TEST_CASE("strategies none and full") {
    {
      ProviderConfig cfg;
      cfg.strategy = Strategy::none;
      Provider p(cfg);
      auto img = ExecutableImage::synthetic("app", 16, 64);
      p.add_image(img);
      CHECK(p.init_preload(fixtures::fig4_store()).blocks_loaded == 0);
      CHECK(img->resident_count() == 0);
    }
    {
      ProviderConfig cfg;
      cfg.strategy = Strategy::full;
      Provider p(cfg);
      auto img = ExecutableImage::synthetic("app", 16, 64);
      p.add_image(img);
      p.init_preload(ActionStore{});
      CHECK(img->resident_count() == 16);
    }
  }

  TEST_CASE("runtime_prefetch schedules the next window") {
    ProviderConfig cfg;
    cfg.background_prefetch = false;
    Provider p(cfg);
    auto img = ExecutableImage::synthetic("app", 400, 16);
    p.add_image(img);
    std::vector<BlockIndex> flat(160);
    std::iota(flat.begin(), flat.end(), 0);
    auto action = std::make_shared<const Action>(Action{"app", ActionKind::workload, 0, segment_split(flat, 32)});
    REQUIRE(action->segments.size() == 5);

    CHECK(p.runtime_prefetch(action, 0) == std::vector<std::size_t>{1, 2, 3});
    CHECK(p.runtime_prefetch(action, 4).empty());
    CHECK(p.runtime_prefetch(action, 3) == std::vector<std::size_t>{4});

    // Nothing is resident until the queue is drained.
    CHECK_FALSE(img->resident(32));
    p.drain();
    auto out = p.read_blocks("app", action->segments[1].blocks);
    CHECK(out.backing_reads == 0);
    CHECK(out.memcache_reads == 32);

    // Fully resident segments are skipped.
    CHECK(p.runtime_prefetch(action, 0).empty());
  }

  TEST_CASE("runtime_prefetch only runs under nv_async") {
    ProviderConfig cfg;
    cfg.strategy = Strategy::norm_var;
    cfg.background_prefetch = false;
    Provider p(cfg);
    p.add_image(ExecutableImage::synthetic("app", 16, 16));
    auto action = std::make_shared<const Action>(fixtures::fig4_action());
    CHECK(p.runtime_prefetch(action, 0).empty());
  }

  TEST_CASE("background prefetch worker reaches the same state") {
    Provider p;  // background worker
    auto img = ExecutableImage::synthetic("app", 16, 16);
    p.add_image(img);
    auto action = std::make_shared<const Action>(fixtures::fig4_action());
    CHECK(p.runtime_prefetch(action, 0) == std::vector<std::size_t>{1});
    p.drain();
    for (BlockIndex b : {11u, 12u, 14u, 15u}) CHECK(img->resident(b));
  }

  TEST_CASE("read_blocks tags and promotes") {
    Provider p;
    auto img = ExecutableImage::synthetic("app", 8, 16);
    p.add_image(img);
    std::vector<BlockIndex> one{5};
    auto first = p.read_blocks("app", one);
    CHECK(first.blocks[0].source == ReadSource::backing);
    auto second = p.read_blocks("app", one);
    CHECK(second.blocks[0].source == ReadSource::memcache);
    CHECK(img->counters().backing_reads == 1);
    CHECK(img->counters().memcache_reads == 1);
    std::vector<BlockIndex> beyond{8};
    CHECK_THROWS_AS(p.read_blocks("app", beyond), BlockOutOfRange);
    CHECK_THROWS_AS(p.read_blocks("nope", one), UnknownExecutable);
  }

  TEST_CASE("payloads equal the backing bytes for random images") {
    namespace fs = std::filesystem;
    std::mt19937_64 rng(99);
    auto dir = fs::temp_directory_path() / "execstream_provider_test";
    fs::create_directories(dir);
    for (int iter = 0; iter < 10; ++iter) {
      std::uint32_t bs = 1 + static_cast<std::uint32_t>(rng() % 300);
      std::uint32_t total = 1 + static_cast<std::uint32_t>(rng() % 50);
      Bytes bytes(std::size_t{bs} * total);
      for (auto& b : bytes) b = static_cast<std::uint8_t>(rng());
      auto path = (dir / "img.img").string();
      {
        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
      }
      Provider p;
      p.add_image(ExecutableImage::open_file(path, "img", bs));
      for (int r = 0; r < 40; ++r) {
        BlockIndex i = static_cast<BlockIndex>(rng() % total);
        std::vector<BlockIndex> one{i};
        auto out = p.read_blocks("img", one);
        REQUIRE(out.blocks[0].data == Bytes(bytes.begin() + std::size_t{i} * bs, bytes.begin() + std::size_t{i + 1} * bs));
      }
    }
    fs::remove_all(dir);
  }

  TEST_CASE("image file size must be a whole number of blocks") {
    namespace fs = std::filesystem;
    auto path = (fs::temp_directory_path() / "execstream_odd.img").string();
    {
      std::ofstream out(path, std::ios::binary | std::ios::trunc);
      out << "12345";
    }
    CHECK_THROWS(ExecutableImage::open_file(path, "odd", 4));
    fs::remove(path);
  }

  TEST_CASE("synthetic images are deterministic per name") {
    CHECK(synthetic_image_bytes("a", 4, 32) == synthetic_image_bytes("a", 4, 32));
    CHECK(synthetic_image_bytes("a", 4, 32) != synthetic_image_bytes("b", 4, 32));
  }

  TEST_CASE("memcache capacity evicts oldest first") {
    auto img = ExecutableImage::synthetic("app", 8, 16);
    img->set_memcache_capacity(2);
    img->make_resident(1);
    img->make_resident(2);
    img->make_resident(3);
    CHECK_FALSE(img->resident(1));
    CHECK(img->resident(2));
    CHECK(img->resident(3));
    CHECK(img->resident_count() == 2);
  }

  TEST_CASE("describe_actions formats the worked example") {
    CHECK(describe_actions(fixtures::fig4_store()) == "app workload id=0 segs=[4,4] var=[0.1748,0.1563]\n");
    CHECK(describe_actions(ActionStore{}) == "0 actions\n");
  }

  TEST_CASE("parse_strategy") {
    CHECK(parse_strategy("nv_async") == Strategy::nv_async);
    CHECK(parse_strategy("none") == Strategy::none);
    CHECK_THROWS(parse_strategy("madvise"));
  }
}
