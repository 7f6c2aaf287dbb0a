#pragma once

#include <cstdint>
#include <random>

namespace execstream {

/// Deterministic cost model, all values in microseconds.
///
/// A round trip costs net_rtt + blocks * net_per_block plus, per delivered
/// block, mem_read or disk_read depending on where the server found it. With
/// probability loss_rate a round trip also pays retransmit_penalty.
struct LatencyModel {
  double net_rtt_us = 200.0;
  double net_per_block_us = 35.0;
  double disk_read_us = 500.0;
  double mem_read_us = 5.0;
  double loss_rate = 0.0;
  double retransmit_penalty_us = 200'000.0;
  std::uint64_t seed = 1;

  /// Throws ValidationError on negative values or loss_rate > 1.
  void validate() const;

  double round_trip_us(std::size_t blocks, std::size_t memcache_reads, std::size_t backing_reads) const {
    return net_rtt_us + static_cast<double>(blocks) * net_per_block_us +
           static_cast<double>(memcache_reads) * mem_read_us + static_cast<double>(backing_reads) * disk_read_us;
  }

  /// Household 802.11ac link: ~2 ms round trip, ~150 us per 4 KiB block.
  static LatencyModel wifi();
};

/// One Bernoulli(loss_rate) draw per round trip, reproducible from the seed.
class LossDraws {
 public:
  LossDraws(double loss_rate, std::uint64_t seed) : rate_(loss_rate), rng_(seed) {}

  bool next() {
    // 53-bit uniform in [0, 1); independent of the standard library's distributions.
    double u = static_cast<double>(rng_() >> 11) * 0x1.0p-53;
    return u < rate_;
  }

 private:
  double rate_;
  std::mt19937_64 rng_;
};

}  // namespace execstream
