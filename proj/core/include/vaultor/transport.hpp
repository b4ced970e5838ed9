#pragma once

#include <atomic>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <functional>
#include <list>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include "vaultor/bytes.hpp"
#include "vaultor/clock.hpp"

namespace vaultor::transport {

namespace detail {
struct CloserBase;
}

enum class OriginTag { kViaTorClient, kDirect };
std::string_view to_string(OriginTag tag);

enum class RelayMode { kRandomRelays, kFixedRelays, kLocal };
std::string_view to_string(RelayMode mode);
RelayMode parse_relay_mode(std::string_view s);

enum class Backend { kLoopback, kTcp, kSocks5 };
Backend parse_backend(std::string_view s);

/// One sampled path: per-hop one-way latencies plus per-frame jitter bound.
struct Circuit {
  std::vector<double> hop_ms;
  double jitter_ms = 0;
  std::uint64_t jitter_seed = 0;

  double base_one_way_ms() const;
  int hops() const { return static_cast<int>(hop_ms.size()); }
};

/// Latency model for a path through the anonymity network. RandomRelays draws
/// fresh hop latencies on every sample(); FixedRelays draws once and reuses
/// the circuit; Local adds nothing.
class CircuitProfile {
 public:
  struct Params {
    int hops = 6;
    double min_ms = 20;
    double max_ms = 80;
    double jitter_ms = 0;
    RelayMode mode = RelayMode::kRandomRelays;
  };

  CircuitProfile(Params params, std::uint64_t seed);
  CircuitProfile(const CircuitProfile& other);
  CircuitProfile& operator=(const CircuitProfile& other);
  static CircuitProfile local();

  /// {"hops","min_ms","max_ms","jitter_ms","mode"}; throws kConfigInvalid.
  static CircuitProfile from_json(const std::string& json, std::uint64_t seed);
  std::string to_json() const;

  const Params& params() const { return params_; }
  Circuit sample();

 private:
  Circuit draw();

  Params params_;
  std::mt19937_64 engine_;
  std::optional<Circuit> fixed_;
  mutable std::mutex mu_;
};

/// Message-oriented duplex stream.
class FrameStream {
 public:
  virtual ~FrameStream() = default;
  /// Throws Error(kTransportClosed) once either side has closed.
  virtual void send(Bytes frame) = 0;
  /// nullopt once the peer has closed and all frames are drained.
  virtual std::optional<Bytes> receive() = 0;
  virtual void close() = 0;
  virtual Clock& clock() = 0;
};

/// One end of an established session. Exposes a session id and origin tag but
/// never the peer's network address.
class Connection final : public FrameStream {
 public:
  Connection(std::unique_ptr<FrameStream> inner, std::uint64_t session_id, OriginTag origin,
             Circuit circuit);

  void send(Bytes frame) override;
  std::optional<Bytes> receive() override;
  void close() override { inner_->close(); }
  Clock& clock() override { return inner_->clock(); }

  std::uint64_t session_id() const { return session_id_; }
  OriginTag origin() const { return origin_; }
  const Circuit& circuit() const { return circuit_; }
  std::uint64_t bytes_sent() const { return bytes_sent_; }
  std::uint64_t bytes_received() const { return bytes_received_; }
  std::uint64_t frames_sent() const { return frames_sent_; }
  std::uint64_t frames_received() const { return frames_received_; }

 private:
  std::unique_ptr<FrameStream> inner_;
  std::uint64_t session_id_;
  OriginTag origin_;
  Circuit circuit_;
  std::atomic<std::uint64_t> bytes_sent_{0};
  std::atomic<std::uint64_t> bytes_received_{0};
  std::atomic<std::uint64_t> frames_sent_{0};
  std::atomic<std::uint64_t> frames_received_{0};
};

using ConnectionHandle = std::unique_ptr<Connection>;
/// Runs on its own thread per accepted session.
using Acceptor = std::function<void(ConnectionHandle)>;

struct EndpointDescriptor {
  enum class Kind { kLoopback, kTcp };
  Kind kind = Kind::kLoopback;
  std::uint64_t loopback_id = 0;
  std::string host;
  std::uint16_t port = 0;
  std::int64_t registered_at = 0;

  friend bool operator==(const EndpointDescriptor&, const EndpointDescriptor&) = default;
};

/// Onion address -> endpoint directory. In-memory by default; with a file
/// path every operation reads and rewrites the JSON file under an exclusive
/// lock so separate processes share one directory.
class OnionRegistry {
 public:
  OnionRegistry() = default;
  explicit OnionRegistry(std::optional<std::filesystem::path> file) : file_(std::move(file)) {}

  /// Throws Error(kCollision) if the name has a live endpoint.
  void register_endpoint(const std::string& onion, EndpointDescriptor endpoint);
  void deregister(const std::string& onion);
  /// Throws Error(kNotFound) for unregistered names.
  EndpointDescriptor resolve(const std::string& onion) const;
  bool contains(const std::string& onion) const;

 private:
  template <typename Fn>
  auto with_entries(bool write, Fn&& fn) const;

  std::optional<std::filesystem::path> file_;
  mutable std::mutex mu_;
  mutable std::map<std::string, EndpointDescriptor> entries_;
};

/// Random v3-style onion address (56 base32 chars + ".onion").
std::string make_onion_address();
bool is_valid_onion_address(std::string_view name);

struct TransportConfig {
  Backend backend = Backend::kLoopback;
  std::optional<std::filesystem::path> registry_file;
  std::string listen_host = "127.0.0.1";
  std::string socks_proxy_host = "127.0.0.1";
  std::uint16_t socks_proxy_port = 9050;
  std::uint16_t onion_virtual_port = 80;
};

/// The anonymity network stand-in: registry, listeners and dialers for the
/// configured backend. Owns every session thread it starts; destruction
/// closes live sessions and joins them.
class Network {
 public:
  explicit Network(TransportConfig config = {}, std::shared_ptr<Clock> clock = nullptr);
  ~Network();
  Network(const Network&) = delete;
  Network& operator=(const Network&) = delete;

  OnionRegistry& registry() { return registry_; }
  Clock& clock() { return *clock_; }
  std::shared_ptr<Clock> clock_ptr() const { return clock_; }
  const TransportConfig& config() const { return config_; }

  /// Publishes an onion service; sessions arrive tagged kViaTorClient.
  void listen_onion(const std::string& onion, Acceptor acceptor);
  void stop_onion(const std::string& onion);

  /// Raw listener on host:port; sessions arrive tagged kDirect.
  void listen_direct(const std::string& host, std::uint16_t port, Acceptor acceptor);
  void stop_direct(const std::string& host, std::uint16_t port);

  /// Throws kNotFound for unknown names and kConnectFailed when dialing fails.
  ConnectionHandle connect(const std::string& onion, CircuitProfile& profile);
  ConnectionHandle connect_direct(const std::string& host, std::uint16_t port);

  /// Stops listeners, closes live sessions and joins their threads.
  void shutdown();

 private:
  struct LoopbackListener;
  struct TcpListener;
  struct Worker {
    std::thread thread;
    std::shared_ptr<std::atomic<bool>> done;
  };

  ConnectionHandle dial_loopback(std::shared_ptr<LoopbackListener> listener, OriginTag origin,
                                 Circuit circuit);
  ConnectionHandle dial_tcp(const std::string& host, std::uint16_t port, OriginTag origin,
                            Circuit circuit);
  void spawn(std::function<void()> fn);
  void track(std::weak_ptr<detail::CloserBase> closer);
  void reap_locked();
  std::shared_ptr<TcpListener> start_tcp_listener(const std::string& host, std::uint16_t port,
                                                  Acceptor acceptor, OriginTag origin);

  TransportConfig config_;
  std::shared_ptr<Clock> clock_;
  OnionRegistry registry_;

  std::mutex mu_;
  std::atomic<std::uint64_t> next_id_{1};
  std::map<std::uint64_t, std::shared_ptr<LoopbackListener>> loopback_by_id_;
  std::map<std::string, std::uint64_t> loopback_onions_;
  std::map<std::pair<std::string, std::uint16_t>, std::shared_ptr<LoopbackListener>> loopback_direct_;
  std::map<std::string, std::shared_ptr<TcpListener>> tcp_onions_;
  std::map<std::pair<std::string, std::uint16_t>, std::shared_ptr<TcpListener>> tcp_direct_;
  std::vector<std::weak_ptr<detail::CloserBase>> live_streams_;
  std::list<Worker> workers_;
  bool stopping_ = false;
};

/// 4-byte big-endian length prefix framing used on byte-stream backends.
inline constexpr std::size_t kMaxFrameSize = 64u << 20;
Bytes encode_length_prefixed(ByteView frame);

}  // namespace vaultor::transport
