#pragma once

#include <cstdint>
#include <memory>
#include <mutex>
#include <vector>

#include "vaultor/clock.hpp"

namespace vaultor {

/// Byte-rate shaper shared by every session of one hosted service. A request
/// larger than the available tokens borrows against the future and is
/// delayed until the debt would have been refilled, so sustained throughput
/// never exceeds `rate` while transfers up to `burst` pass immediately.
class TokenBucket {
 public:
  /// Throws Error(kInvalidLimits) unless rate > 0 and burst > 0.
  TokenBucket(double rate_bytes_per_sec, std::int64_t burst_bytes, std::shared_ptr<Clock> clock);

  /// Charges `bytes` and returns the instant at which they may be released.
  Clock::Duration reserve(std::int64_t bytes);
  /// reserve() then sleep on the bucket's clock until release.
  void consume(std::int64_t bytes);

  /// Release instants for sending `total` bytes in `chunk`-sized pieces
  /// starting now; does not block.
  std::vector<Clock::Duration> schedule(std::int64_t total, std::int64_t chunk);

  double rate() const { return rate_; }
  std::int64_t burst() const { return burst_; }
  Clock& clock() { return *clock_; }

 private:
  double rate_;
  std::int64_t burst_;
  std::shared_ptr<Clock> clock_;
  std::mutex mu_;
  double tokens_;
  Clock::Duration last_;
};

}  // namespace vaultor
