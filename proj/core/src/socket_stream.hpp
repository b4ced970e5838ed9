#pragma once

#include <atomic>
#include <cstdint>
#include <memory>
#include <string>

#include "vaultor/transport.hpp"

namespace vaultor::transport::detail {

struct CloserBase {
  virtual ~CloserBase() = default;
  virtual void close() = 0;
};

struct SocketState final : CloserBase {
  explicit SocketState(int f) : fd(f) {}
  ~SocketState() override;
  void close() override;

  int fd;
  std::atomic<bool> closed{false};
};

/// Length-prefixed frames over a connected socket. Latency from `circuit` is
/// applied on this side only: one-way before each send and after each
/// receive.
class SocketStream final : public FrameStream {
 public:
  SocketStream(std::shared_ptr<SocketState> state, std::shared_ptr<Clock> clock, Circuit circuit);
  ~SocketStream() override;

  void send(Bytes frame) override;
  std::optional<Bytes> receive() override;
  void close() override { state_->close(); }
  Clock& clock() override { return *clock_; }

  const std::shared_ptr<SocketState>& state() const { return state_; }

 private:
  std::shared_ptr<SocketState> state_;
  std::shared_ptr<Clock> clock_;
  Circuit circuit_;
};

/// Throws Error(kConnectFailed).
int tcp_dial(const std::string& host, std::uint16_t port);
bool write_all(int fd, const std::uint8_t* data, std::size_t len);
/// False on EOF or error before `len` bytes arrive.
bool read_exact(int fd, std::uint8_t* data, std::size_t len);

}  // namespace vaultor::transport::detail
