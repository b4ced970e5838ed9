#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <memory>
#include <mutex>

namespace vaultor {

/// Monotone time source used for network delivery, throttling and all
/// TTFB/TTLB measurement.
class Clock {
 public:
  using Duration = std::chrono::nanoseconds;

  virtual ~Clock() = default;
  virtual Duration now() const = 0;
  virtual void sleep_until(Duration t) = 0;

  void sleep_for(Duration d) { sleep_until(now() + d); }
  double now_ms() const { return std::chrono::duration<double, std::milli>(now()).count(); }
};

/// steady_clock; sleeping blocks the calling thread.
class RealClock final : public Clock {
 public:
  RealClock() : epoch_(std::chrono::steady_clock::now()) {}
  Duration now() const override;
  void sleep_until(Duration t) override;

 private:
  std::chrono::steady_clock::time_point epoch_;
};

/// Real elapsed time plus a per-thread offset. Sleeping advances the calling
/// thread's offset instead of blocking, so simulated network latency costs no
/// wall time while computation is still measured for real. Threads only
/// synchronize through message arrival stamps: a receiver sleeps until the
/// stamp, which keeps virtual time causal without one thread's wait shifting
/// another thread's timestamps.
class VirtualClock final : public Clock {
 public:
  VirtualClock();
  Duration now() const override;
  void sleep_until(Duration t) override;

 private:
  Duration real_elapsed() const;

  std::chrono::steady_clock::time_point epoch_;
  std::uint64_t id_;
};

/// Purely manual time for deterministic unit tests: only sleeps and advance()
/// move it.
class ManualClock final : public Clock {
 public:
  Duration now() const override { return Duration(now_.load()); }
  void sleep_until(Duration t) override;
  void advance(Duration d) { now_.fetch_add(d.count()); }

 private:
  std::atomic<Duration::rep> now_{0};
};

std::shared_ptr<Clock> make_clock(bool virtual_time);

inline Clock::Duration from_ms(double ms) {
  return std::chrono::duration_cast<Clock::Duration>(std::chrono::duration<double, std::milli>(ms));
}

inline double to_ms(Clock::Duration d) { return std::chrono::duration<double, std::milli>(d).count(); }

}  // namespace vaultor
