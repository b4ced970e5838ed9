#include "vaultor/token_bucket.hpp"

#include <algorithm>

#include "vaultor/error.hpp"

namespace vaultor {

TokenBucket::TokenBucket(double rate_bytes_per_sec, std::int64_t burst_bytes, std::shared_ptr<Clock> clock)
    : rate_(rate_bytes_per_sec), burst_(burst_bytes), clock_(std::move(clock)) {
  if (!(rate_ > 0) || burst_ <= 0) fail(ErrorCode::kInvalidLimits, "token bucket needs positive rate and burst");
  if (!clock_) clock_ = std::make_shared<RealClock>();
  tokens_ = static_cast<double>(burst_);
  last_ = clock_->now();
}

Clock::Duration TokenBucket::reserve(std::int64_t bytes) {
  std::lock_guard lock(mu_);
  auto now = clock_->now();
  if (now > last_) {
    double elapsed_s = std::chrono::duration<double>(now - last_).count();
    tokens_ = std::min(static_cast<double>(burst_), tokens_ + elapsed_s * rate_);
    last_ = now;
  }
  tokens_ -= static_cast<double>(bytes);
  if (tokens_ >= 0) return now;
  // Debt is repaid at `rate`; the release point is when the balance is zero.
  return now + from_ms(-tokens_ / rate_ * 1000.0);
}

void TokenBucket::consume(std::int64_t bytes) {
  auto release = reserve(bytes);
  if (release > clock_->now()) clock_->sleep_until(release);
}

std::vector<Clock::Duration> TokenBucket::schedule(std::int64_t total, std::int64_t chunk) {
  std::vector<Clock::Duration> out;
  if (chunk <= 0) chunk = total;
  for (std::int64_t sent = 0; sent < total; sent += chunk) {
    out.push_back(reserve(std::min(chunk, total - sent)));
  }
  return out;
}

}  // namespace vaultor
