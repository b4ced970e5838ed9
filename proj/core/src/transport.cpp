#include "vaultor/transport.hpp"

#include <arpa/inet.h>
#include <fcntl.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/file.h>
#include <sys/socket.h>
#include <unistd.h>

#include <chrono>
#include <cstring>
#include <fstream>
#include <iostream>
#include <json.hpp>

#include "socket_stream.hpp"
#include "vaultor/crypto.hpp"
#include "vaultor/error.hpp"
#include "vaultor/socks5.hpp"

namespace vaultor::transport {

using detail::CloserBase;
using detail::SocketState;
using detail::SocketStream;

std::string_view to_string(OriginTag tag) {
  return tag == OriginTag::kViaTorClient ? "via_tor_client" : "direct";
}

std::string_view to_string(RelayMode mode) {
  switch (mode) {
    case RelayMode::kRandomRelays: return "RandomRelays";
    case RelayMode::kFixedRelays: return "FixedRelays";
    case RelayMode::kLocal: return "Local";
  }
  return "?";
}

RelayMode parse_relay_mode(std::string_view s) {
  if (s == "RandomRelays" || s == "random") return RelayMode::kRandomRelays;
  if (s == "FixedRelays" || s == "fixed") return RelayMode::kFixedRelays;
  if (s == "Local" || s == "local") return RelayMode::kLocal;
  fail(ErrorCode::kConfigInvalid, "unknown relay mode: " + std::string(s));
}

Backend parse_backend(std::string_view s) {
  if (s == "loopback") return Backend::kLoopback;
  if (s == "tcp") return Backend::kTcp;
  if (s == "socks5") return Backend::kSocks5;
  fail(ErrorCode::kConfigInvalid, "unknown transport backend: " + std::string(s));
}

// ---------------------------------------------------------------------------
// Circuits

double Circuit::base_one_way_ms() const {
  double total = 0;
  for (double h : hop_ms) total += h;
  return total;
}

namespace {

void validate(const CircuitProfile::Params& p) {
  if (p.mode == RelayMode::kLocal) {
    if (p.hops != 0) fail(ErrorCode::kConfigInvalid, "Local profiles have zero hops");
    return;
  }
  if (p.hops != 0 && p.hops != 3 && p.hops != 6) {
    fail(ErrorCode::kConfigInvalid, "hops must be 0, 3 or 6");
  }
  if (p.min_ms < 0 || p.max_ms < p.min_ms || p.jitter_ms < 0) {
    fail(ErrorCode::kConfigInvalid, "latency range must satisfy 0 <= min_ms <= max_ms");
  }
}

}  // namespace

CircuitProfile::CircuitProfile(Params params, std::uint64_t seed)
    : params_(params), engine_(seed) {
  validate(params_);
  if (params_.mode == RelayMode::kLocal) {
    params_.min_ms = params_.max_ms = params_.jitter_ms = 0;
  }
}

CircuitProfile::CircuitProfile(const CircuitProfile& other) {
  std::lock_guard lock(other.mu_);
  params_ = other.params_;
  engine_ = other.engine_;
  fixed_ = other.fixed_;
}

CircuitProfile& CircuitProfile::operator=(const CircuitProfile& other) {
  if (this == &other) return *this;
  std::scoped_lock lock(mu_, other.mu_);
  params_ = other.params_;
  engine_ = other.engine_;
  fixed_ = other.fixed_;
  return *this;
}

CircuitProfile CircuitProfile::local() {
  return CircuitProfile(Params{0, 0, 0, 0, RelayMode::kLocal}, 0);
}

CircuitProfile CircuitProfile::from_json(const std::string& json, std::uint64_t seed) {
  auto j = nlohmann::json::parse(json, nullptr, false);
  if (!j.is_object()) fail(ErrorCode::kConfigInvalid, "latency profile must be a JSON object");
  Params p;
  try {
    p.mode = parse_relay_mode(j.value("mode", std::string("RandomRelays")));
    p.hops = j.value("hops", p.mode == RelayMode::kLocal ? 0 : 6);
    p.min_ms = j.value("min_ms", p.min_ms);
    p.max_ms = j.value("max_ms", p.max_ms);
    p.jitter_ms = j.value("jitter_ms", 0.0);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kConfigInvalid, e.what());
  }
  return CircuitProfile(p, seed);
}

std::string CircuitProfile::to_json() const {
  nlohmann::json j{{"hops", params_.hops},
                   {"min_ms", params_.min_ms},
                   {"max_ms", params_.max_ms},
                   {"jitter_ms", params_.jitter_ms},
                   {"mode", std::string(transport::to_string(params_.mode))}};
  return j.dump();
}

Circuit CircuitProfile::draw() {
  Circuit c;
  c.jitter_ms = params_.jitter_ms;
  std::uniform_real_distribution<double> hop(params_.min_ms, params_.max_ms);
  for (int i = 0; i < params_.hops; ++i) {
    c.hop_ms.push_back(params_.min_ms == params_.max_ms ? params_.min_ms : hop(engine_));
  }
  c.jitter_seed = engine_();
  return c;
}

Circuit CircuitProfile::sample() {
  std::lock_guard lock(mu_);
  switch (params_.mode) {
    case RelayMode::kLocal: return Circuit{};
    case RelayMode::kFixedRelays:
      if (!fixed_) fixed_ = draw();
      return *fixed_;
    case RelayMode::kRandomRelays: return draw();
  }
  return Circuit{};
}

// ---------------------------------------------------------------------------
// Connection

Connection::Connection(std::unique_ptr<FrameStream> inner, std::uint64_t session_id,
                       OriginTag origin, Circuit circuit)
    : inner_(std::move(inner)), session_id_(session_id), origin_(origin), circuit_(std::move(circuit)) {}

void Connection::send(Bytes frame) {
  auto n = frame.size();
  inner_->send(std::move(frame));
  bytes_sent_ += n;
  ++frames_sent_;
}

std::optional<Bytes> Connection::receive() {
  auto frame = inner_->receive();
  if (frame) {
    bytes_received_ += frame->size();
    ++frames_received_;
  }
  return frame;
}

// ---------------------------------------------------------------------------
// Loopback pipes

namespace {

struct TimedFrame {
  Bytes data;
  Clock::Duration arrival;
};

class Direction {
 public:
  Direction(const Circuit& circuit, std::uint64_t seed)
      : base_ms_(circuit.base_one_way_ms()),
        jitter_ms_(circuit.jitter_ms),
        hops_(circuit.hops()),
        jitter_(seed) {}

  void push(Bytes data, Clock& clock) {
    std::lock_guard lock(mu_);
    if (closed_) fail(ErrorCode::kTransportClosed, "stream closed");
    double delay = base_ms_;
    if (jitter_ms_ > 0) {
      std::uniform_real_distribution<double> j(0.0, jitter_ms_);
      for (int i = 0; i < hops_; ++i) delay += j(jitter_);
    }
    auto arrival = std::max(clock.now() + from_ms(delay), last_arrival_);
    last_arrival_ = arrival;
    frames_.push_back({std::move(data), arrival});
    cv_.notify_one();
  }

  std::optional<TimedFrame> pop() {
    std::unique_lock lock(mu_);
    cv_.wait(lock, [&] { return closed_ || !frames_.empty(); });
    if (frames_.empty()) return std::nullopt;
    auto f = std::move(frames_.front());
    frames_.pop_front();
    return f;
  }

  void close() {
    std::lock_guard lock(mu_);
    closed_ = true;
    cv_.notify_all();
  }

 private:
  double base_ms_;
  double jitter_ms_;
  int hops_;
  std::mt19937_64 jitter_;
  std::mutex mu_;
  std::condition_variable cv_;
  std::deque<TimedFrame> frames_;
  Clock::Duration last_arrival_{0};
  bool closed_ = false;
};

struct PipeState final : CloserBase {
  PipeState(std::shared_ptr<Clock> c, const Circuit& circuit)
      : clock(std::move(c)),
        forward(circuit, circuit.jitter_seed),
        backward(circuit, circuit.jitter_seed ^ 0x9e3779b97f4a7c15ULL) {}

  void close() override {
    forward.close();
    backward.close();
  }

  std::shared_ptr<Clock> clock;
  Direction forward;   // dialer -> listener
  Direction backward;  // listener -> dialer
};

class LoopbackEnd final : public FrameStream {
 public:
  LoopbackEnd(std::shared_ptr<PipeState> pipe, bool dialer) : pipe_(std::move(pipe)), dialer_(dialer) {}
  ~LoopbackEnd() override { pipe_->close(); }

  void send(Bytes frame) override {
    (dialer_ ? pipe_->forward : pipe_->backward).push(std::move(frame), *pipe_->clock);
  }

  std::optional<Bytes> receive() override {
    auto f = (dialer_ ? pipe_->backward : pipe_->forward).pop();
    if (!f) return std::nullopt;
    pipe_->clock->sleep_until(f->arrival);
    return std::move(f->data);
  }

  void close() override { pipe_->close(); }
  Clock& clock() override { return *pipe_->clock; }

 private:
  std::shared_ptr<PipeState> pipe_;
  bool dialer_;
};

}  // namespace

// ---------------------------------------------------------------------------
// Sockets

namespace detail {

SocketState::~SocketState() {
  close();
  ::close(fd);
}

void SocketState::close() {
  if (!closed.exchange(true)) ::shutdown(fd, SHUT_RDWR);
}

bool write_all(int fd, const std::uint8_t* data, std::size_t len) {
  while (len > 0) {
    auto n = ::send(fd, data, len, MSG_NOSIGNAL);
    if (n < 0 && errno == EINTR) continue;
    if (n <= 0) return false;
    data += n;
    len -= static_cast<std::size_t>(n);
  }
  return true;
}

bool read_exact(int fd, std::uint8_t* data, std::size_t len) {
  while (len > 0) {
    auto n = ::recv(fd, data, len, 0);
    if (n < 0 && errno == EINTR) continue;
    if (n <= 0) return false;
    data += n;
    len -= static_cast<std::size_t>(n);
  }
  return true;
}

int tcp_dial(const std::string& host, std::uint16_t port) {
  addrinfo hints{};
  hints.ai_family = AF_UNSPEC;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo* res = nullptr;
  auto port_s = std::to_string(port);
  if (::getaddrinfo(host.c_str(), port_s.c_str(), &hints, &res) != 0) {
    fail(ErrorCode::kConnectFailed, "cannot resolve " + host);
  }
  int fd = -1;
  for (auto* ai = res; ai; ai = ai->ai_next) {
    fd = ::socket(ai->ai_family, ai->ai_socktype, ai->ai_protocol);
    if (fd < 0) continue;
    if (::connect(fd, ai->ai_addr, ai->ai_addrlen) == 0) break;
    ::close(fd);
    fd = -1;
  }
  ::freeaddrinfo(res);
  if (fd < 0) fail(ErrorCode::kConnectFailed, "cannot connect to " + host + ":" + port_s);
  int one = 1;
  ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
  return fd;
}

SocketStream::SocketStream(std::shared_ptr<SocketState> state, std::shared_ptr<Clock> clock,
                           Circuit circuit)
    : state_(std::move(state)), clock_(std::move(clock)), circuit_(std::move(circuit)) {}

SocketStream::~SocketStream() { state_->close(); }

void SocketStream::send(Bytes frame) {
  if (state_->closed) fail(ErrorCode::kTransportClosed, "socket closed");
  if (circuit_.hops() > 0) clock_->sleep_for(from_ms(circuit_.base_one_way_ms()));
  auto wire = encode_length_prefixed(frame);
  if (!write_all(state_->fd, wire.data(), wire.size())) {
    fail(ErrorCode::kTransportClosed, "socket write failed");
  }
}

std::optional<Bytes> SocketStream::receive() {
  std::uint8_t header[4];
  if (!read_exact(state_->fd, header, 4)) return std::nullopt;
  std::uint32_t len = (std::uint32_t(header[0]) << 24) | (std::uint32_t(header[1]) << 16) |
                      (std::uint32_t(header[2]) << 8) | header[3];
  if (len > kMaxFrameSize) {
    state_->close();
    fail(ErrorCode::kMalformedMessage, "frame exceeds maximum size");
  }
  Bytes frame(len);
  if (len > 0 && !read_exact(state_->fd, frame.data(), len)) return std::nullopt;
  if (circuit_.hops() > 0) clock_->sleep_for(from_ms(circuit_.base_one_way_ms()));
  return frame;
}

}  // namespace detail

Bytes encode_length_prefixed(ByteView frame) {
  if (frame.size() > kMaxFrameSize) fail(ErrorCode::kMalformedMessage, "frame exceeds maximum size");
  auto n = static_cast<std::uint32_t>(frame.size());
  Bytes out{static_cast<std::uint8_t>(n >> 24), static_cast<std::uint8_t>(n >> 16),
            static_cast<std::uint8_t>(n >> 8), static_cast<std::uint8_t>(n)};
  append(out, frame);
  return out;
}

// ---------------------------------------------------------------------------
// Registry

namespace {

class FileLock {
 public:
  explicit FileLock(const std::filesystem::path& path) {
    fd_ = ::open(path.c_str(), O_RDWR | O_CREAT, 0600);
    if (fd_ >= 0) ::flock(fd_, LOCK_EX);
  }
  ~FileLock() {
    if (fd_ >= 0) {
      ::flock(fd_, LOCK_UN);
      ::close(fd_);
    }
  }
  FileLock(const FileLock&) = delete;
  FileLock& operator=(const FileLock&) = delete;

 private:
  int fd_ = -1;
};

std::int64_t unix_now() {
  return std::chrono::duration_cast<std::chrono::seconds>(
             std::chrono::system_clock::now().time_since_epoch())
      .count();
}

nlohmann::json endpoint_to_json(const EndpointDescriptor& e) {
  return {{"kind", e.kind == EndpointDescriptor::Kind::kTcp ? "tcp" : "loopback"},
          {"loopback_id", e.loopback_id},
          {"host", e.host},
          {"port", e.port},
          {"registered_at", e.registered_at}};
}

EndpointDescriptor endpoint_from_json(const nlohmann::json& j) {
  EndpointDescriptor e;
  e.kind = j.at("kind").get<std::string>() == "tcp" ? EndpointDescriptor::Kind::kTcp
                                                    : EndpointDescriptor::Kind::kLoopback;
  e.loopback_id = j.value("loopback_id", std::uint64_t{0});
  e.host = j.value("host", std::string());
  e.port = j.value("port", std::uint16_t{0});
  e.registered_at = j.value("registered_at", std::int64_t{0});
  return e;
}

}  // namespace

template <typename Fn>
auto OnionRegistry::with_entries(bool write, Fn&& fn) const {
  std::lock_guard lock(mu_);
  if (!file_) return fn(entries_);
  auto lock_path = *file_;
  lock_path += ".lock";
  FileLock flock(lock_path);
  std::map<std::string, EndpointDescriptor> entries;
  {
    std::ifstream in(*file_);
    if (in) {
      auto j = nlohmann::json::parse(in, nullptr, false);
      if (j.is_object()) {
        for (auto& [name, value] : j.items()) entries[name] = endpoint_from_json(value);
      }
    }
  }
  auto finish = [&] {
    if (!write) return;
    nlohmann::json j = nlohmann::json::object();
    for (const auto& [name, e] : entries) j[name] = endpoint_to_json(e);
    auto tmp = *file_;
    tmp += ".tmp";
    {
      std::ofstream out(tmp, std::ios::trunc);
      out << j.dump(2) << "\n";
    }
    std::filesystem::rename(tmp, *file_);
  };
  if constexpr (std::is_void_v<decltype(fn(entries))>) {
    fn(entries);
    finish();
  } else {
    auto result = fn(entries);
    finish();
    return result;
  }
}

void OnionRegistry::register_endpoint(const std::string& onion, EndpointDescriptor endpoint) {
  if (endpoint.registered_at == 0) endpoint.registered_at = unix_now();
  with_entries(true, [&](std::map<std::string, EndpointDescriptor>& entries) {
    if (entries.count(onion)) fail(ErrorCode::kCollision, "onion address already registered: " + onion);
    entries[onion] = endpoint;
  });
}

void OnionRegistry::deregister(const std::string& onion) {
  with_entries(true, [&](std::map<std::string, EndpointDescriptor>& entries) { entries.erase(onion); });
}

EndpointDescriptor OnionRegistry::resolve(const std::string& onion) const {
  return with_entries(false, [&](std::map<std::string, EndpointDescriptor>& entries) {
    auto it = entries.find(onion);
    if (it == entries.end()) fail(ErrorCode::kNotFound, "no descriptor for " + onion);
    return it->second;
  });
}

bool OnionRegistry::contains(const std::string& onion) const {
  return with_entries(false, [&](std::map<std::string, EndpointDescriptor>& entries) {
    return entries.count(onion) > 0;
  });
}

std::string make_onion_address() {
  return base32_encode(crypto::random_bytes(35)) + ".onion";
}

bool is_valid_onion_address(std::string_view name) {
  constexpr std::string_view suffix = ".onion";
  if (name.size() <= suffix.size() || name.substr(name.size() - suffix.size()) != suffix) return false;
  auto label = name.substr(0, name.size() - suffix.size());
  for (char c : label) {
    bool ok = (c >= 'a' && c <= 'z') || (c >= '2' && c <= '7') || c == '-' || (c >= '0' && c <= '9');
    if (!ok) return false;
  }
  return true;
}

// ---------------------------------------------------------------------------
// Network

struct Network::LoopbackListener {
  Acceptor acceptor;
  OriginTag origin;
  std::atomic<bool> open{true};
};

struct Network::TcpListener {
  int fd = -1;
  std::uint16_t port = 0;
  std::atomic<bool> stop{false};
  std::thread accept_thread;

  ~TcpListener() {
    stop = true;
    if (fd >= 0) ::shutdown(fd, SHUT_RDWR);
    if (accept_thread.joinable()) accept_thread.join();
    if (fd >= 0) ::close(fd);
  }
};

Network::Network(TransportConfig config, std::shared_ptr<Clock> clock)
    : config_(std::move(config)),
      clock_(clock ? std::move(clock) : std::make_shared<RealClock>()),
      registry_(config_.registry_file) {}

Network::~Network() { shutdown(); }

void Network::shutdown() {
  std::map<std::string, std::shared_ptr<TcpListener>> tcp_onions;
  std::map<std::pair<std::string, std::uint16_t>, std::shared_ptr<TcpListener>> tcp_direct;
  std::vector<std::weak_ptr<CloserBase>> live;
  std::list<Worker> workers;
  std::vector<std::string> onions;
  {
    std::lock_guard lock(mu_);
    stopping_ = true;
    for (auto& [id, l] : loopback_by_id_) l->open = false;
    for (auto& [name, id] : loopback_onions_) onions.push_back(name);
    for (auto& [name, l] : tcp_onions_) onions.push_back(name);
    loopback_by_id_.clear();
    loopback_onions_.clear();
    loopback_direct_.clear();
    tcp_onions.swap(tcp_onions_);
    tcp_direct.swap(tcp_direct_);
    live.swap(live_streams_);
  }
  for (auto& name : onions) {
    try {
      registry_.deregister(name);
    } catch (...) {
    }
  }
  tcp_onions.clear();
  tcp_direct.clear();
  for (auto& w : live) {
    if (auto c = w.lock()) c->close();
  }
  {
    std::lock_guard lock(mu_);
    workers.swap(workers_);
  }
  for (auto& w : workers) {
    if (w.thread.joinable()) w.thread.join();
  }
}

void Network::reap_locked() {
  for (auto it = workers_.begin(); it != workers_.end();) {
    if (it->done->load()) {
      it->thread.join();
      it = workers_.erase(it);
    } else {
      ++it;
    }
  }
  live_streams_.erase(std::remove_if(live_streams_.begin(), live_streams_.end(),
                                     [](const auto& w) { return w.expired(); }),
                      live_streams_.end());
}

void Network::spawn(std::function<void()> fn) {
  std::lock_guard lock(mu_);
  if (stopping_) return;
  reap_locked();
  auto done = std::make_shared<std::atomic<bool>>(false);
  Worker w;
  w.done = done;
  w.thread = std::thread([fn = std::move(fn), done] {
    try {
      fn();
    } catch (const std::exception& e) {
      std::cerr << "vaultor: session ended with error: " << e.what() << "\n";
    } catch (...) {
    }
    done->store(true);
  });
  workers_.push_back(std::move(w));
}

void Network::track(std::weak_ptr<CloserBase> closer) {
  std::lock_guard lock(mu_);
  live_streams_.push_back(std::move(closer));
}

std::shared_ptr<Network::TcpListener> Network::start_tcp_listener(const std::string& host,
                                                                  std::uint16_t port,
                                                                  Acceptor acceptor,
                                                                  OriginTag origin) {
  int fd = ::socket(AF_INET, SOCK_STREAM, 0);
  if (fd < 0) fail(ErrorCode::kConnectFailed, "socket() failed");
  int one = 1;
  ::setsockopt(fd, SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(port);
  if (::inet_pton(AF_INET, host == "localhost" ? "127.0.0.1" : host.c_str(), &addr.sin_addr) != 1) {
    ::close(fd);
    fail(ErrorCode::kConnectFailed, "bad listen host " + host);
  }
  if (::bind(fd, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0 || ::listen(fd, 64) != 0) {
    ::close(fd);
    fail(ErrorCode::kCollision, "cannot listen on " + host + ":" + std::to_string(port));
  }
  socklen_t len = sizeof(addr);
  ::getsockname(fd, reinterpret_cast<sockaddr*>(&addr), &len);

  auto listener = std::make_shared<TcpListener>();
  listener->fd = fd;
  listener->port = ntohs(addr.sin_port);
  TcpListener* raw = listener.get();
  listener->accept_thread = std::thread([this, raw, acceptor = std::move(acceptor), origin] {
    while (!raw->stop) {
      pollfd p{raw->fd, POLLIN, 0};
      int r = ::poll(&p, 1, 100);
      if (r <= 0) continue;
      int cfd = ::accept(raw->fd, nullptr, nullptr);
      if (cfd < 0) continue;
      int one = 1;
      ::setsockopt(cfd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
      auto state = std::make_shared<SocketState>(cfd);
      track(state);
      auto id = next_id_.fetch_add(1);
      auto stream = std::make_unique<SocketStream>(state, clock_, Circuit{});
      auto conn = std::make_shared<ConnectionHandle>(
          std::make_unique<Connection>(std::move(stream), id, origin, Circuit{}));
      spawn([acceptor, conn] { acceptor(std::move(*conn)); });
    }
  });
  return listener;
}

void Network::listen_onion(const std::string& onion, Acceptor acceptor) {
  if (config_.backend == Backend::kLoopback) {
    auto listener = std::make_shared<LoopbackListener>();
    listener->acceptor = std::move(acceptor);
    listener->origin = OriginTag::kViaTorClient;
    auto id = next_id_.fetch_add(1);
    EndpointDescriptor e;
    e.kind = EndpointDescriptor::Kind::kLoopback;
    e.loopback_id = id;
    registry_.register_endpoint(onion, e);
    std::lock_guard lock(mu_);
    loopback_by_id_[id] = listener;
    loopback_onions_[onion] = id;
    return;
  }
  if (registry_.contains(onion)) fail(ErrorCode::kCollision, "onion address already registered: " + onion);
  auto listener = start_tcp_listener(config_.listen_host, 0, std::move(acceptor), OriginTag::kViaTorClient);
  EndpointDescriptor e;
  e.kind = EndpointDescriptor::Kind::kTcp;
  e.host = config_.listen_host;
  e.port = listener->port;
  registry_.register_endpoint(onion, e);
  std::lock_guard lock(mu_);
  tcp_onions_[onion] = listener;
}

void Network::stop_onion(const std::string& onion) {
  std::shared_ptr<TcpListener> tcp;
  {
    std::lock_guard lock(mu_);
    if (auto it = loopback_onions_.find(onion); it != loopback_onions_.end()) {
      if (auto l = loopback_by_id_.find(it->second); l != loopback_by_id_.end()) {
        l->second->open = false;
        loopback_by_id_.erase(l);
      }
      loopback_onions_.erase(it);
    }
    if (auto it = tcp_onions_.find(onion); it != tcp_onions_.end()) {
      tcp = it->second;
      tcp_onions_.erase(it);
    }
  }
  registry_.deregister(onion);
}

void Network::listen_direct(const std::string& host, std::uint16_t port, Acceptor acceptor) {
  auto key = std::make_pair(host, port);
  if (config_.backend == Backend::kLoopback) {
    std::lock_guard lock(mu_);
    if (loopback_direct_.count(key)) {
      fail(ErrorCode::kCollision, "address in use: " + host + ":" + std::to_string(port));
    }
    auto listener = std::make_shared<LoopbackListener>();
    listener->acceptor = std::move(acceptor);
    listener->origin = OriginTag::kDirect;
    loopback_direct_[key] = listener;
    return;
  }
  auto listener = start_tcp_listener(host, port, std::move(acceptor), OriginTag::kDirect);
  std::lock_guard lock(mu_);
  tcp_direct_[key] = listener;
}

void Network::stop_direct(const std::string& host, std::uint16_t port) {
  std::shared_ptr<TcpListener> tcp;
  std::lock_guard lock(mu_);
  auto key = std::make_pair(host, port);
  if (auto it = loopback_direct_.find(key); it != loopback_direct_.end()) {
    it->second->open = false;
    loopback_direct_.erase(it);
  }
  if (auto it = tcp_direct_.find(key); it != tcp_direct_.end()) {
    tcp = it->second;
    tcp_direct_.erase(it);
  }
}

ConnectionHandle Network::dial_loopback(std::shared_ptr<LoopbackListener> listener, OriginTag origin,
                                        Circuit circuit) {
  if (!listener || !listener->open) fail(ErrorCode::kConnectFailed, "connection refused");
  auto pipe = std::make_shared<PipeState>(clock_, circuit);
  auto id = next_id_.fetch_add(1);
  auto client = std::make_unique<Connection>(std::make_unique<LoopbackEnd>(pipe, true), id, origin, circuit);
  auto server = std::make_shared<ConnectionHandle>(
      std::make_unique<Connection>(std::make_unique<LoopbackEnd>(pipe, false), id, origin, Circuit{}));
  {
    std::lock_guard lock(mu_);
    if (stopping_) fail(ErrorCode::kConnectFailed, "network shut down");
  }
  track(pipe);
  spawn([listener, server] { listener->acceptor(std::move(*server)); });
  return client;
}

ConnectionHandle Network::dial_tcp(const std::string& host, std::uint16_t port, OriginTag origin,
                                   Circuit circuit) {
  int fd = detail::tcp_dial(host, port);
  auto state = std::make_shared<SocketState>(fd);
  track(state);
  auto id = next_id_.fetch_add(1);
  return std::make_unique<Connection>(std::make_unique<SocketStream>(state, clock_, circuit), id, origin,
                                      circuit);
}

ConnectionHandle Network::connect(const std::string& onion, CircuitProfile& profile) {
  auto circuit = profile.sample();
  if (config_.backend == Backend::kSocks5) {
    return socks5_connect(*this, config_.socks_proxy_host, config_.socks_proxy_port, onion,
                          config_.onion_virtual_port, std::move(circuit));
  }
  auto endpoint = registry_.resolve(onion);
  if (endpoint.kind == EndpointDescriptor::Kind::kTcp) {
    return dial_tcp(endpoint.host, endpoint.port, OriginTag::kViaTorClient, std::move(circuit));
  }
  std::shared_ptr<LoopbackListener> listener;
  {
    std::lock_guard lock(mu_);
    if (auto it = loopback_by_id_.find(endpoint.loopback_id); it != loopback_by_id_.end()) {
      listener = it->second;
    }
  }
  return dial_loopback(std::move(listener), OriginTag::kViaTorClient, std::move(circuit));
}

ConnectionHandle Network::connect_direct(const std::string& host, std::uint16_t port) {
  if (config_.backend == Backend::kLoopback) {
    std::shared_ptr<LoopbackListener> listener;
    {
      std::lock_guard lock(mu_);
      if (auto it = loopback_direct_.find({host, port}); it != loopback_direct_.end()) {
        listener = it->second;
      }
    }
    return dial_loopback(std::move(listener), OriginTag::kDirect, Circuit{});
  }
  return dial_tcp(host, port, OriginTag::kDirect, Circuit{});
}

}  // namespace vaultor::transport
