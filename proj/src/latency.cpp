#include "execstream/latency.hpp"

#include "execstream/errors.hpp"

namespace execstream {

void LatencyModel::validate() const {
  if (net_rtt_us < 0 || net_per_block_us < 0 || disk_read_us < 0 || mem_read_us < 0 ||
      retransmit_penalty_us < 0) {
    throw ValidationError("latency model values must be non-negative");
  }
  if (loss_rate < 0 || loss_rate > 1) throw ValidationError("loss rate must be within [0, 1]");
}

LatencyModel LatencyModel::wifi() {
  LatencyModel m;
  m.net_rtt_us = 2000.0;
  m.net_per_block_us = 150.0;
  return m;
}

}  // namespace execstream
