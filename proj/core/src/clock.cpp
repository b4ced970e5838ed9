#include "vaultor/clock.hpp"

#include <thread>
#include <unordered_map>

namespace vaultor {

Clock::Duration RealClock::now() const {
  return std::chrono::duration_cast<Duration>(std::chrono::steady_clock::now() - epoch_);
}

void RealClock::sleep_until(Duration t) {
  auto delta = t - now();
  if (delta > Duration::zero()) std::this_thread::sleep_for(delta);
}

namespace {

std::atomic<std::uint64_t> next_virtual_clock{1};
thread_local std::unordered_map<std::uint64_t, Clock::Duration::rep> thread_offsets;

}  // namespace

VirtualClock::VirtualClock() : epoch_(std::chrono::steady_clock::now()), id_(next_virtual_clock++) {}

Clock::Duration VirtualClock::real_elapsed() const {
  return std::chrono::duration_cast<Duration>(std::chrono::steady_clock::now() - epoch_);
}

Clock::Duration VirtualClock::now() const {
  auto it = thread_offsets.find(id_);
  return real_elapsed() + Duration(it == thread_offsets.end() ? 0 : it->second);
}

void VirtualClock::sleep_until(Duration t) {
  auto needed = (t - real_elapsed()).count();
  auto& offset = thread_offsets[id_];
  if (needed > offset) offset = needed;
}

void ManualClock::sleep_until(Duration t) {
  auto current = now_.load();
  while (t.count() > current && !now_.compare_exchange_weak(current, t.count())) {
  }
}

std::shared_ptr<Clock> make_clock(bool virtual_time) {
  if (virtual_time) return std::make_shared<VirtualClock>();
  return std::make_shared<RealClock>();
}

}  // namespace vaultor
