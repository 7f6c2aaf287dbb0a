#include <doctest.h>

#include <numeric>
#include <random>
#include <thread>

#include "execstream/errors.hpp"
#include "execstream/predictor.hpp"
#include "fixtures.hpp"
#include "random_streams.hpp"
#include "reference_predictor.hpp"

using namespace execstream;

namespace {

using Blocks = std::vector<BlockIndex>;

PredictorConfig cfg4() {
  PredictorConfig c;
  c.seg_max = 4;
  return c;
}

const Token kT1 = Token::from_seed(1);
const Token kT2 = Token::from_seed(2);

}  // namespace

TEST_SUITE("predictor") {
  TEST_CASE("first-ever request starts a construction") {
    Predictor p(cfg4());
    auto d = p.handle_request(kT1, "app", 1, 0);
    CHECK(d.respond_blocks == Blocks{1});
    auto sessions = p.sessions();
    REQUIRE(sessions.size() == 1);
    CHECK(sessions[0].stage == Stage::constructing);
    CHECK(sessions[0].construction_buffer == Blocks{1});
  }

  TEST_CASE("two-checkpoint match on the worked example") {
    Predictor p(cfg4(), fixtures::fig4_store());
    auto d1 = p.handle_request(kT1, "app", 1, 0);
    CHECK(d1.respond_blocks == Blocks{1, 3});
    auto s = p.sessions();
    REQUIRE(s.size() == 1);
    CHECK(s[0].stage == Stage::matching);

    auto d2 = p.handle_request(kT1, "app", 8, 10);
    CHECK(d2.respond_blocks == Blocks{8, 9});
    CHECK(p.sessions()[0].stage == Stage::generating);
    CHECK(p.sessions()[0].next_segment == 1);

    auto d3 = p.handle_request(kT1, "app", 11, 20);
    CHECK(d3.respond_blocks == Blocks{11, 12, 14, 15});
    CHECK(d3.session_completed);
    CHECK(p.sessions().empty());
  }

  TEST_CASE("the expired token starts a new match") {
    Predictor p(cfg4(), fixtures::fig4_store());
    for (BlockIndex b : {1u, 8u, 11u}) p.handle_request(kT1, "app", b, 0);
    auto again = p.handle_request(kT1, "app", 1, 5);
    CHECK(again.respond_blocks == Blocks{1, 3});
  }

  TEST_CASE("SEG_MAX 32: the checkpoint returns the other 30 blocks") {
    PredictorConfig c;
    std::vector<BlockIndex> flat(64);
    std::iota(flat.begin(), flat.end(), 100);
    ActionStore s;
    s.put(Action{"x", ActionKind::workload, 0, segment_split(flat, 32)});
    Predictor p(c, s);
    CHECK(p.handle_request(kT1, "x", 100, 0).respond_blocks.size() == 2);
    auto d = p.handle_request(kT1, "x", 102, 1);
    CHECK(d.respond_blocks.size() == 30);
    CHECK(d.respond_blocks.front() == 102);
    CHECK(d.respond_blocks.back() == 131);
  }

  TEST_CASE("unknown block in matching starts a construction") {
    Predictor p(cfg4(), fixtures::fig4_store());
    p.handle_request(kT1, "app", 1, 0);
    auto d = p.handle_request(kT1, "app", 7, 1);
    CHECK(d.respond_blocks == Blocks{7});
    CHECK(p.sessions()[0].stage == Stage::constructing);
  }

  TEST_CASE("divergence in generation re-matches by scan") {
    // Two actions; the second contains B12 in its own segment.
    ActionStore s = fixtures::fig4_store();
    s.put(Action{"app", ActionKind::workload, 1, {Segment{{4, 5, 6, 7}}, Segment{{20, 21, 22, 23}}}});
    s.put(Action{"app", ActionKind::workload, 2, {Segment{{30, 31, 32, 33}}, Segment{{40, 11, 41, 42}}}});
    Predictor p(cfg4(), s);
    p.handle_request(kT1, "app", 4, 0);   // (4,5)
    p.handle_request(kT1, "app", 6, 1);   // (6,7), generating, expects 20
    auto d = p.handle_request(kT1, "app", 11, 2);
    // Action 0 holds 11 in segment 1 at position 0.
    CHECK(d.respond_blocks == Blocks{11, 12, 14, 15});
    REQUIRE(d.served.has_value());
    CHECK(d.served->action == 0);
    CHECK(d.served->segment == 1);
  }

  TEST_CASE("scan hit in the middle returns the rest of that segment and continues") {
    ActionStore s;
    s.seg_max = 4;
    s.put(Action{"app", ActionKind::workload, 0, {Segment{{1, 2, 3, 4}}, Segment{{5, 6, 7, 8}}, Segment{{9, 10}}}});
    Predictor p(cfg4(), s);
    auto d = p.handle_request(kT1, "app", 6, 0);
    CHECK(d.respond_blocks == Blocks{6, 7, 8});
    auto next = p.handle_request(kT1, "app", 9, 1);
    CHECK(next.respond_blocks == Blocks{9, 10});
    CHECK(next.session_completed);
  }

  TEST_CASE("fallback_scan ordering") {
    auto a0 = std::make_shared<const Action>(fixtures::fig4_action());
    auto a1 = std::make_shared<const Action>(Action{"app", ActionKind::workload, 1, {Segment{{12, 99}}}});
    std::vector<ActionPtr> list{a0, a1};
    auto r = fallback_scan(list, 12);
    REQUIRE(r.has_value());
    CHECK(*r == SegmentRef{0, 1});
    CHECK(fallback_scan(list, 99) == SegmentRef{1, 0});
    CHECK_FALSE(fallback_scan(list, 1000).has_value());
  }

  TEST_CASE("construction splits on SEG_MAX and finalizes on the timer") {
    auto c = cfg4();
    Predictor p(c);
    Micros t = 0;
    for (BlockIndex b : {1u, 3u, 8u, 9u, 11u}) p.handle_request(kT1, "app", b, t += 1000);
    CHECK(p.actions("app").empty());
    auto d = p.handle_request(kT1, "app", 12, 1000 + c.construction_window);
    CHECK(d.respond_blocks == Blocks{12});
    REQUIRE(d.new_actions.size() == 1);
    const auto& a = *d.new_actions[0];
    REQUIRE(a.segments.size() == 2);
    CHECK(a.segments[0].blocks == Blocks{1, 3, 8, 9});
    CHECK(a.segments[1].blocks == Blocks{11, 12});
    CHECK(a.id == 0);
    CHECK(a.kind == ActionKind::workload);
    CHECK(p.sessions().empty());
  }

  TEST_CASE("timer expiry with one block makes a one-block action") {
    Predictor p(cfg4());
    p.handle_request(kT1, "app", 5, 0);
    auto created = p.expire(3'000'000);
    REQUIRE(created.size() == 1);
    CHECK(created[0]->segments.size() == 1);
    CHECK(created[0]->segments[0].blocks == Blocks{5});
  }

  TEST_CASE("130-block construction yields segments 32,32,32,32,2") {
    Predictor p;
    for (BlockIndex b = 0; b < 130; ++b) p.handle_request(kT1, "big", b, b);
    auto a = p.finish_session(kT1, "big", 200);
    REQUIRE(a.has_value());
    std::vector<std::size_t> lens;
    for (const auto& s : (*a)->segments) lens.push_back(s.size());
    CHECK(lens == std::vector<std::size_t>{32, 32, 32, 32, 2});
  }

  TEST_CASE("new actions take the next id") {
    Predictor q(cfg4());
    for (BlockIndex b : {5u, 6u}) q.handle_request(kT1, "app", b, 0);
    REQUIRE(q.finish_session(kT1, "app", 1).has_value());
    q.handle_request(kT2, "app", 9, 2);
    auto second = q.finish_session(kT2, "app", 3);
    REQUIRE(second.has_value());
    CHECK((*second)->id == 1);
    CHECK(q.actions("app").size() == 2);
  }

  TEST_CASE("duplicate constructions are discarded") {
    // Two runs record the same stream before either is stored.
    Predictor r(cfg4());
    r.handle_request(kT1, "app", 7, 0);
    r.handle_request(kT2, "app", 7, 0);
    CHECK(r.finish_session(kT1, "app", 1).has_value());
    CHECK_FALSE(r.finish_session(kT2, "app", 1).has_value());
    CHECK(r.actions("app").size() == 1);
  }

  TEST_CASE("idle sessions expire") {
    Predictor p(cfg4(), fixtures::fig4_store());
    p.handle_request(kT1, "app", 1, 0);
    CHECK(p.expire(10'000'000).empty());
    CHECK(p.sessions().size() == 1);
    p.expire(10'000'001);
    CHECK(p.sessions().empty());
    // Handling a request also sweeps other idle sessions.
    p.handle_request(kT1, "app", 1, 20'000'000);
    p.handle_request(kT2, "app", 1, 40'000'000);
    CHECK(p.sessions().size() == 1);
  }

  TEST_CASE("sessions with different tokens never share state") {
    Predictor p(cfg4(), fixtures::fig4_store());
    CHECK(p.handle_request(kT1, "app", 1, 0).respond_blocks == Blocks{1, 3});
    CHECK(p.handle_request(kT2, "app", 1, 1).respond_blocks == Blocks{1, 3});
    CHECK(p.handle_request(kT1, "app", 8, 2).respond_blocks == Blocks{8, 9});
    // T2 still waits at its checkpoint.
    CHECK(p.handle_request(kT2, "app", 8, 3).respond_blocks == Blocks{8, 9});
    CHECK(p.handle_request(kT2, "app", 11, 4).respond_blocks == Blocks{11, 12, 14, 15});
    CHECK(p.handle_request(kT1, "app", 11, 5).respond_blocks == Blocks{11, 12, 14, 15});
  }

  TEST_CASE("same token, different executables are separate sessions") {
    ActionStore s = fixtures::fig4_store();
    s.put(Action{"other", ActionKind::startup, 0, {Segment{{1, 2, 3, 4}}}});
    Predictor p(cfg4(), s);
    CHECK(p.handle_request(kT1, "app", 1, 0).respond_blocks == Blocks{1, 3});
    CHECK(p.handle_request(kT1, "other", 1, 0).respond_blocks == Blocks{1, 2});
    CHECK(p.handle_request(kT1, "app", 8, 1).respond_blocks == Blocks{8, 9});
    CHECK(p.handle_request(kT1, "other", 3, 1).respond_blocks == Blocks{3, 4});
  }

  TEST_CASE("respond_blocks starts with the request and is a slice of one segment") {
    std::mt19937_64 rng(4);
    for (int iter = 0; iter < 300; ++iter) {
      auto c = streams::random_case(rng);
      PredictorConfig pc;
      pc.seg_max = static_cast<std::uint16_t>(c.seg_max);
      pc.checkpoints = c.prose ? CheckpointMode::prose : CheckpointMode::figure;
      pc.first_segment_matches = c.three ? 3 : 2;
      Predictor p(pc, streams::to_store(c, "x"));
      for (const auto& r : c.requests) {
        if (r.end_run) {
          p.finish_session(r.token, "x", r.now);
          continue;
        }
        auto d = p.handle_request(r.token, "x", r.block, r.now);
        REQUIRE(!d.respond_blocks.empty());
        REQUIRE(d.respond_blocks.front() == r.block);
        if (d.served) {
          auto a = p.action("x", d.served->action);
          REQUIRE(a);
          const auto& seg = a->segments[d.served->segment].blocks;
          auto it = std::search(seg.begin(), seg.end(), d.respond_blocks.begin(), d.respond_blocks.end());
          REQUIRE(it != seg.end());
        } else {
          REQUIRE(d.respond_blocks.size() == 1);
        }
        for (const auto& s : p.sessions()) {
          if (s.stage != Stage::constructing) REQUIRE(s.construction_buffer.empty());
          if (s.stage == Stage::generating) REQUIRE(s.action_id.has_value());
        }
      }
    }
  }

  TEST_CASE("matches an independent reference on random streams") {
    std::mt19937_64 rng(1234);
    for (int iter = 0; iter < 300; ++iter) {
      auto c = streams::random_case(rng);
      PredictorConfig pc;
      pc.seg_max = static_cast<std::uint16_t>(c.seg_max);
      pc.checkpoints = c.prose ? CheckpointMode::prose : CheckpointMode::figure;
      pc.first_segment_matches = c.three ? 3 : 2;
      Predictor p(pc, streams::to_store(c, "x"));
      reference::Options ro;
      ro.seg_max = c.seg_max;
      ro.prose = c.prose;
      ro.three_matches = c.three;
      reference::ReferencePredictor ref(ro, c.actions);
      for (std::size_t i = 0; i < c.requests.size(); ++i) {
        const auto& r = c.requests[i];
        if (r.end_run) {
          p.finish_session(r.token, "x", r.now);
          ref.end_run(r.token);
          continue;
        }
        auto got = p.handle_request(r.token, "x", r.block, r.now).respond_blocks;
        auto want = ref.request(r.token, r.block, r.now);
        REQUIRE_MESSAGE(got == want, "case " << iter << " request " << i);
      }
    }
  }

  TEST_CASE("determinism: same inputs give the same decisions") {
    std::mt19937_64 rng(55);
    auto c = streams::random_case(rng);
    auto run = [&] {
      PredictorConfig pc;
      pc.seg_max = static_cast<std::uint16_t>(c.seg_max);
      Predictor p(pc, streams::to_store(c, "x"));
      std::vector<std::pair<Blocks, std::string>> out;
      for (const auto& r : c.requests) {
        if (r.end_run) continue;
        auto d = p.handle_request(r.token, "x", r.block, r.now);
        out.emplace_back(d.respond_blocks, d.state_change);
      }
      return out;
    };
    CHECK(run() == run());
  }

  TEST_CASE("checkpoint cut variants") {
    PredictorConfig c;
    CHECK(first_segment_cuts(32, c) == std::vector<std::size_t>{0, 2});
    c.checkpoints = CheckpointMode::prose;
    CHECK(first_segment_cuts(32, c) == std::vector<std::size_t>{0, 1, 29});
    c.checkpoints = CheckpointMode::figure;
    c.first_segment_matches = 3;
    CHECK(first_segment_cuts(32, c) == std::vector<std::size_t>{0, 2, 15});
    c.seg_max = 64;
    CHECK(first_segment_cuts(64, c) == std::vector<std::size_t>{0, 2, 31});
    CHECK(first_segment_cuts(10, c) == std::vector<std::size_t>{0, 2});
    c.first_segment_matches = 2;
    CHECK(first_segment_cuts(2, c) == std::vector<std::size_t>{0});
  }

  TEST_CASE("prose checkpoints deliver 1, then up to SEG_MAX-3, then the rest") {
    PredictorConfig c;
    c.checkpoints = CheckpointMode::prose;
    std::vector<BlockIndex> flat(32);
    std::iota(flat.begin(), flat.end(), 0);
    ActionStore s;
    s.put(Action{"x", ActionKind::startup, 0, segment_split(flat, 32)});
    Predictor p(c, s);
    CHECK(p.handle_request(kT1, "x", 0, 0).respond_blocks == Blocks{0});
    CHECK(p.handle_request(kT1, "x", 1, 1).respond_blocks.size() == 28);
    auto last = p.handle_request(kT1, "x", 29, 2);
    CHECK(last.respond_blocks == Blocks{29, 30, 31});
    CHECK(last.session_completed);
  }

  TEST_CASE("store seg_max must agree with the predictor") {
    ActionStore s = fixtures::fig4_store();
    CHECK_THROWS_AS((Predictor{PredictorConfig{}, s}), ValidationError);
    PredictorConfig bad;
    bad.seg_max = 1;
    CHECK_THROWS_AS(Predictor{bad}, ValidationError);
  }

  TEST_CASE("concurrent handlers on distinct tokens") {
    Predictor p(cfg4(), fixtures::fig4_store());
    std::vector<std::thread> threads;
    std::atomic<int> bad{0};
    for (int t = 0; t < 8; ++t) {
      threads.emplace_back([&, t] {
        for (int rep = 0; rep < 200; ++rep) {
          auto tok = Token::from_seed(static_cast<std::uint64_t>(t * 1000 + rep));
          if (p.handle_request(tok, "app", 1, rep).respond_blocks != Blocks{1, 3}) ++bad;
          if (p.handle_request(tok, "app", 8, rep).respond_blocks != Blocks{8, 9}) ++bad;
          if (p.handle_request(tok, "app", 11, rep).respond_blocks != Blocks{11, 12, 14, 15}) ++bad;
        }
      });
    }
    for (auto& t : threads) t.join();
    CHECK(bad.load() == 0);
    CHECK(p.sessions().empty());
  }

  TEST_CASE("finalize_all stores open constructions") {
    Predictor p(cfg4());
    p.handle_request(kT1, "a", 1, 0);
    p.handle_request(kT2, "b", 2, 0);
    auto created = p.finalize_all();
    CHECK(created.size() == 2);
    CHECK(p.sessions().empty());
    CHECK(p.store().action_count() == 2);
  }
}
