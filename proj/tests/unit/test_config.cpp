#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "execstream/config.hpp"
#include "execstream/errors.hpp"
#include "execstream/log.hpp"

using namespace execstream;

TEST_SUITE("config") {
  TEST_CASE("defaults") {
    Settings s;
    CHECK(s.server_addr == "127.0.0.1:7411");
    CHECK(s.server.predictor.seg_max == 32);
    CHECK(s.server.provider.strategy == Strategy::nv_async);
    CHECK(s.client.pool_capacity == 256);
    CHECK(s.latency.net_rtt_us == 200.0);
  }

  TEST_CASE("every documented key is accepted") {
    const std::vector<std::pair<std::string_view, std::string_view>> samples = {
        {"server_addr", "10.0.0.2:9000"}, {"listen_addr", "0.0.0.0:9000"}, {"block_size", "512"},
        {"pool_capacity", "64"}, {"cache_pages", "100"}, {"workers", "2"}, {"ring_capacity", "8"},
        {"redirect_names", "python3, java"}, {"clock", "wall"}, {"token_seed", "42"},
        {"send_end_marker", "false"}, {"prefetch_strategy", "norm_var"}, {"variance_threshold", "0.2"},
        {"prefetch_window", "3"}, {"variance_estimator", "sum"}, {"memcache_capacity", "1000"},
        {"seg_max", "16"}, {"match_checkpoints", "prose"}, {"first_segment_matches", "3"},
        {"construction_window", "5000000"}, {"session_idle_timeout", "20000000"}, {"lat.preset", "wifi"},
        {"lat.net_rtt", "300"}, {"lat.net_per_block", "40"}, {"lat.disk_read", "800"}, {"lat.mem_read", "2"},
        {"lat.loss_rate", "0.001"}, {"lat.retransmit_penalty", "1000"}, {"lat.seed", "9"},
        {"readahead_window_max", "64"}, {"loss_replications", "10"}, {"log_level", "warn"},
    };
    CHECK(samples.size() == config_keys().size());
    Settings s;
    for (const auto& [k, v] : samples) {
      CAPTURE(k);
      CHECK_NOTHROW(apply_setting(s, k, v));
    }
    CHECK(s.server_addr == "10.0.0.2:9000");
    CHECK(s.server.block_size == 512);
    CHECK(s.client.block_size == 512);
    CHECK(s.client.redirect_names == std::vector<std::string>{"python3", "java"});
    CHECK(s.client.clock == ClockMode::wall);
    CHECK(s.client.token_seed == 42u);
    CHECK_FALSE(s.client.send_end_marker);
    CHECK(s.server.provider.strategy == Strategy::norm_var);
    CHECK(s.server.provider.estimator == VarianceEstimator::sum);
    CHECK(s.server.predictor.seg_max == 16);
    CHECK(s.server.predictor.checkpoints == CheckpointMode::prose);
    CHECK(s.server.predictor.first_segment_matches == 3);
    CHECK(s.latency.net_rtt_us == 300.0);
    CHECK(s.latency.loss_rate == 0.001);
    CHECK(s.client.latency.net_rtt_us == 300.0);
    CHECK(s.log_level == log::Level::warn);
  }

  TEST_CASE("unknown keys and bad values are rejected") {
    Settings s;
    CHECK_THROWS_AS(apply_setting(s, "colour", "red"), ConfigError);
    CHECK_THROWS_AS(apply_setting(s, "workers", "0"), ConfigError);
    CHECK_THROWS_AS(apply_setting(s, "workers", "two"), ConfigError);
    CHECK_THROWS_AS(apply_setting(s, "seg_max", "1"), ConfigError);
    CHECK_THROWS_AS(apply_setting(s, "first_segment_matches", "4"), ConfigError);
    CHECK_THROWS_AS(apply_setting(s, "lat.loss_rate", "1.5"), ConfigError);
    CHECK_THROWS_AS(apply_setting(s, "lat.net_rtt", "-3"), ConfigError);
    CHECK_THROWS_AS(apply_setting(s, "server_addr", "nohost"), ConfigError);
    CHECK_THROWS_AS(apply_setting(s, "clock", "sundial"), ConfigError);
    CHECK_THROWS_AS(apply_setting(s, "prefetch_strategy", "psychic"), std::exception);
  }

  TEST_CASE("preset keeps the loss settings") {
    Settings s;
    apply_setting(s, "lat.loss_rate", "0.01");
    apply_setting(s, "lat.seed", "77");
    apply_setting(s, "lat.preset", "wifi");
    CHECK(s.latency.net_rtt_us == LatencyModel::wifi().net_rtt_us);
    CHECK(s.latency.loss_rate == 0.01);
    CHECK(s.latency.seed == 77u);
  }

  TEST_CASE("files, comments and override order") {
    auto path = std::filesystem::temp_directory_path() / "execstream_config_test.conf";
    {
      std::ofstream out(path);
      out << "# client\nworkers = 3\n\nseg_max=8\n  lat.net_rtt=250  \n";
    }
    Settings s;
    apply_config_file(s, path.string());
    apply_override(s, "seg_max=12");
    CHECK(s.client.workers == 3);
    CHECK(s.server.predictor.seg_max == 12);
    CHECK(s.latency.net_rtt_us == 250.0);
    std::filesystem::remove(path);

    CHECK_THROWS_AS(apply_config_file(s, "/nonexistent/execstream.conf"), ConfigError);
    CHECK_THROWS_AS(apply_override(s, "workers"), ConfigError);
    try {
      apply_config_text(s, "workers=1\nbogus line\n", "test.conf");
      FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
      CHECK(std::string(e.what()).find("test.conf:2") != std::string::npos);
    }
  }
}

TEST_SUITE("log") {
  TEST_CASE("fields render as key=value with quoting when needed") {
    CHECK(log::format_fields("server", "request", {{"block", "7"}, {"exe", "python3"}}) ==
          "server request block=7 exe=python3");
    CHECK(log::format_fields("cli", "error", {{"what", "bad thing"}}) == "cli error what=\"bad thing\"");
    CHECK(log::format_fields("cli", "x", {{"v", ""}}) == "cli x v=\"\"");
    CHECK(log::format_fields("cli", "x", {{"v", "a=b"}}) == "cli x v=\"a=b\"");
    CHECK(log::format_fields("cli", "x", {{"v", "say \"hi\""}}) == "cli x v=\"say \\\"hi\\\"\"");
    CHECK(log::format_fields("cli", "x", {{"v", "two\nlines"}}) == "cli x v=\"two lines\"");
  }

  TEST_CASE("levels") {
    CHECK(log::parse_level("debug") == log::Level::debug);
    CHECK(log::parse_level("info") == log::Level::info);
    CHECK(log::parse_level("warn") == log::Level::warn);
    CHECK(log::parse_level("error") == log::Level::error);
    CHECK(log::parse_level("off") == log::Level::off);
    CHECK_THROWS_AS(log::parse_level("loud"), ConfigError);
  }
}
