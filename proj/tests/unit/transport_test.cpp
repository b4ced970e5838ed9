#include <gtest/gtest.h>

#include <arpa/inet.h>
#include <netinet/in.h>
#include <sys/socket.h>
#include <unistd.h>

#include <atomic>
#include <future>
#include <thread>

#include "../support/harness.hpp"
#include "vaultor/socks5.hpp"
#include "vaultor/token_bucket.hpp"

namespace vaultor::transport {
namespace {

using vaultor::testing::TempDir;

template <typename Fn>
ErrorCode code_of(Fn&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "expected an Error";
  return ErrorCode::kCryptoFailure;
}

template <typename T>
concept ExposesPeerAddress = requires(T t) { t.peer_address(); } || requires(T t) { t.remote_endpoint(); } ||
                             requires(T t) { t.remote_address(); };
static_assert(!ExposesPeerAddress<Connection>);

void echo(ConnectionHandle c) {
  while (auto f = c->receive()) c->send(std::move(*f));
}

CircuitProfile fixed_hops(int hops, double ms, RelayMode mode = RelayMode::kFixedRelays, std::uint64_t seed = 1) {
  return CircuitProfile({hops, ms, ms, 0, mode}, seed);
}

TEST(Registry, RegisterResolveDeregister) {
  OnionRegistry r;
  auto name = make_onion_address();
  EXPECT_TRUE(is_valid_onion_address(name));
  EXPECT_EQ(name.size(), 62u);
  EndpointDescriptor e{EndpointDescriptor::Kind::kLoopback, 7, {}, 0, 0};
  r.register_endpoint(name, e);
  EXPECT_EQ(r.resolve(name).loopback_id, 7u);
  EXPECT_EQ(code_of([&] { r.register_endpoint(name, e); }), ErrorCode::kCollision);
  r.deregister(name);
  EXPECT_EQ(code_of([&] { r.resolve(name); }), ErrorCode::kNotFound);
  r.register_endpoint(name, e);
  EXPECT_TRUE(r.contains(name));
  EXPECT_FALSE(is_valid_onion_address("ABC.onion"));
  EXPECT_FALSE(is_valid_onion_address("abc"));
  EXPECT_FALSE(is_valid_onion_address(".onion"));
}

TEST(Registry, FileBackedIsSharedAcrossInstances) {
  TempDir dir;
  OnionRegistry a(dir / "reg.json"), b(dir / "reg.json");
  auto name = make_onion_address();
  a.register_endpoint(name, {EndpointDescriptor::Kind::kTcp, 0, "127.0.0.1", 4242, 0});
  EXPECT_EQ(b.resolve(name).port, 4242);
  EXPECT_EQ(code_of([&] { b.register_endpoint(name, {}); }), ErrorCode::kCollision);
  b.deregister(name);
  EXPECT_FALSE(a.contains(name));
}

TEST(Registry, ConcurrentUseNeverResolvesDeregisteredEndpoint) {
  OnionRegistry r;
  auto name = make_onion_address();
  std::atomic<std::uint64_t> live{0};  // 0 = none
  std::atomic<bool> stop{false};
  std::atomic<int> stale{0};
  std::thread writer([&] {
    for (std::uint64_t i = 1; i <= 2000; ++i) {
      r.register_endpoint(name, {EndpointDescriptor::Kind::kLoopback, i, {}, 0, 0});
      live = i;
      live = 0;
      r.deregister(name);
    }
    stop = true;
  });
  std::uint64_t last = 0;
  while (!stop) {
    try {
      auto id = r.resolve(name).loopback_id;
      if (id < last) ++stale;
      last = id;
    } catch (const Error&) {
    }
  }
  writer.join();
  EXPECT_EQ(stale.load(), 0);
  EXPECT_FALSE(r.contains(name));
}

TEST(Circuit, ProfileValidation) {
  EXPECT_EQ(code_of([] { CircuitProfile({4, 1, 2, 0, RelayMode::kRandomRelays}, 1); }), ErrorCode::kConfigInvalid);
  EXPECT_EQ(code_of([] { CircuitProfile({6, 1, 2, 0, RelayMode::kLocal}, 1); }), ErrorCode::kConfigInvalid);
  EXPECT_EQ(code_of([] { CircuitProfile({6, 5, 2, 0, RelayMode::kRandomRelays}, 1); }), ErrorCode::kConfigInvalid);
  auto p = CircuitProfile::from_json(R"({"hops":3,"min_ms":1,"max_ms":2,"jitter_ms":0,"mode":"FixedRelays"})", 4);
  EXPECT_EQ(p.params().hops, 3);
  EXPECT_EQ(p.params().mode, RelayMode::kFixedRelays);
  EXPECT_EQ(CircuitProfile::from_json(p.to_json(), 4).params().max_ms, 2);
  EXPECT_EQ(CircuitProfile::local().sample().hops(), 0);
  EXPECT_EQ(CircuitProfile::local().sample().base_one_way_ms(), 0);
}

TEST(Circuit, FixedReusesRandomResamples) {
  CircuitProfile fixed({6, 20, 80, 0, RelayMode::kFixedRelays}, 9);
  auto a = fixed.sample();
  auto b = fixed.sample();
  EXPECT_EQ(a.hop_ms, b.hop_ms);
  CircuitProfile random({6, 20, 80, 0, RelayMode::kRandomRelays}, 9);
  EXPECT_NE(random.sample().hop_ms, random.sample().hop_ms);
  for (int i = 0; i < 100; ++i) {
    auto c = random.sample();
    EXPECT_EQ(c.hops(), 6);
    for (double h : c.hop_ms) {
      EXPECT_GE(h, 20);
      EXPECT_LE(h, 80);
    }
  }
}

TEST(Network, LocalLoopbackEchoAddsNoLatency) {
  Network net(TransportConfig{}, std::make_shared<VirtualClock>());
  auto onion = make_onion_address();
  net.listen_onion(onion, echo);
  auto profile = CircuitProfile::local();
  auto c = net.connect(onion, profile);
  EXPECT_EQ(c->origin(), OriginTag::kViaTorClient);
  auto t0 = net.clock().now_ms();
  c->send(to_bytes("ping"));
  EXPECT_EQ(*c->receive(), to_bytes("ping"));
  EXPECT_LT(net.clock().now_ms() - t0, 5.0);
  EXPECT_EQ(code_of([&] { net.connect(make_onion_address(), profile); }), ErrorCode::kNotFound);
  EXPECT_EQ(code_of([&] { net.listen_onion(onion, echo); }), ErrorCode::kCollision);
}

TEST(Network, SixHopsAtTenMsMeasuredOnRealClock) {
  Network net;
  auto onion = make_onion_address();
  net.listen_onion(onion, echo);
  auto profile = fixed_hops(6, 10);
  auto c = net.connect(onion, profile);
  for (int i = 0; i < 5; ++i) {
    auto t0 = net.clock().now_ms();
    c->send(to_bytes("x"));
    c->receive();
    double one_way = (net.clock().now_ms() - t0) / 2;
    EXPECT_NEAR(one_way, 60.0, 6.0);
  }
}

TEST(Network, FixedRelaysGiveEqualLatencyAcrossConnects) {
  Network net(TransportConfig{}, std::make_shared<VirtualClock>());
  auto onion = make_onion_address();
  net.listen_onion(onion, echo);
  CircuitProfile profile({6, 20, 80, 0, RelayMode::kFixedRelays}, 3);
  auto a = net.connect(onion, profile);
  auto b = net.connect(onion, profile);
  EXPECT_EQ(a->circuit().hop_ms, b->circuit().hop_ms);
  EXPECT_DOUBLE_EQ(a->circuit().base_one_way_ms(), b->circuit().base_one_way_ms());
}

TEST(Network, LatencyAdditivity) {
  Network net(TransportConfig{}, std::make_shared<VirtualClock>());
  auto onion = make_onion_address();
  net.listen_onion(onion, echo);
  for (auto mode : {RelayMode::kRandomRelays, RelayMode::kFixedRelays}) {
    for (int hops : {3, 6}) {
      CircuitProfile profile({hops, 20, 80, 5, mode}, 42);
      for (int i = 0; i < 100; ++i) {
        auto c = net.connect(onion, profile);
        auto t0 = net.clock().now_ms();
        c->send(to_bytes("x"));
        c->receive();
        EXPECT_GE(net.clock().now_ms() - t0, 2.0 * hops * 20);
      }
    }
  }
}

TEST(Network, DirectConnectionsAreTaggedDirect) {
  Network net;
  std::promise<OriginTag> seen;
  net.listen_direct("127.0.0.1", 8080, [&](ConnectionHandle c) {
    seen.set_value(c->origin());
    echo(std::move(c));
  });
  auto c = net.connect_direct("127.0.0.1", 8080);
  EXPECT_EQ(c->origin(), OriginTag::kDirect);
  c->send(to_bytes("hi"));
  EXPECT_EQ(*c->receive(), to_bytes("hi"));
  EXPECT_EQ(seen.get_future().get(), OriginTag::kDirect);
  EXPECT_EQ(code_of([&] { net.connect_direct("127.0.0.1", 8081); }), ErrorCode::kConnectFailed);
  EXPECT_EQ(code_of([&] { net.listen_direct("127.0.0.1", 8080, echo); }), ErrorCode::kCollision);
}

TEST(Network, TcpBackendThroughSharedRegistry) {
  TempDir dir;
  TransportConfig cfg;
  cfg.backend = Backend::kTcp;
  cfg.registry_file = dir / "registry.json";
  Network server(cfg), client(cfg);
  auto onion = make_onion_address();
  std::promise<OriginTag> seen;
  server.listen_onion(onion, [&](ConnectionHandle c) {
    seen.set_value(c->origin());
    echo(std::move(c));
  });
  auto profile = CircuitProfile::local();
  auto c = client.connect(onion, profile);
  Bytes big = crypto::random_bytes(1 << 20);
  c->send(big);
  EXPECT_EQ(*c->receive(), big);
  EXPECT_EQ(seen.get_future().get(), OriginTag::kViaTorClient);
  c->close();
  server.stop_onion(onion);
  EXPECT_EQ(code_of([&] { client.connect(onion, profile); }), ErrorCode::kNotFound);
}

TEST(Framing, LengthPrefixIsBigEndian) {
  auto f = encode_length_prefixed(to_bytes("abc"));
  EXPECT_EQ(f, (Bytes{0, 0, 0, 3, 'a', 'b', 'c'}));
}

// Minimal SOCKS5 server: records the greeting and CONNECT request, then
// echoes bytes.
struct StubSocks {
  StubSocks() {
    fd = ::socket(AF_INET, SOCK_STREAM, 0);
    sockaddr_in a{};
    a.sin_family = AF_INET;
    a.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
    EXPECT_EQ(::bind(fd, reinterpret_cast<sockaddr*>(&a), sizeof a), 0);
    ::listen(fd, 1);
    socklen_t len = sizeof a;
    ::getsockname(fd, reinterpret_cast<sockaddr*>(&a), &len);
    port = ntohs(a.sin_port);
    worker = std::thread([this] { run(); });
  }
  ~StubSocks() {
    worker.join();
    ::close(fd);
  }
  static bool read_n(int s, std::uint8_t* p, std::size_t n) {
    while (n) {
      auto r = ::read(s, p, n);
      if (r <= 0) return false;
      p += r;
      n -= static_cast<std::size_t>(r);
    }
    return true;
  }
  void run() {
    int s = ::accept(fd, nullptr, nullptr);
    greeting.resize(3);
    read_n(s, greeting.data(), 3);
    std::uint8_t choice[2] = {5, 0};
    ::write(s, choice, 2);
    request.resize(5);
    read_n(s, request.data(), 5);
    request.resize(5 + request[4] + 2);
    read_n(s, request.data() + 5, request[4] + 2u);
    std::uint8_t reply[10] = {5, 0, 0, 1, 0, 0, 0, 0, 0, 0};
    ::write(s, reply, sizeof reply);
    std::uint8_t buf[4096];
    for (ssize_t n; (n = ::read(s, buf, sizeof buf)) > 0;) ::write(s, buf, static_cast<std::size_t>(n));
    ::close(s);
  }
  int fd;
  std::uint16_t port;
  std::thread worker;
  Bytes greeting, request;
};

TEST(Socks5, ConnectRequestBytes) {
  auto req = socks5_connect_request("abc.onion", 80);
  Bytes expected{0x05, 0x01, 0x00, 0x03, 9};
  append(expected, as_bytes("abc.onion"));
  expected.push_back(0);
  expected.push_back(80);
  EXPECT_EQ(req, expected);
  EXPECT_EQ(code_of([] { socks5_connect_request(std::string(256, 'a'), 80); }), ErrorCode::kProxyError);
  EXPECT_EQ(socks5_connect_request(std::string(255, 'a'), 80).size(), 5u + 255 + 2);
}

TEST(Socks5, HandshakeAgainstStubProxy) {
  Network net;
  std::string onion = make_onion_address();
  {
    StubSocks stub;
    auto c = socks5_connect(net, "127.0.0.1", stub.port, onion, 80);
    EXPECT_EQ(stub.greeting, (Bytes{0x05, 0x01, 0x00}));
    EXPECT_EQ(stub.request, socks5_connect_request(onion, 80));
    c->send(to_bytes("through the proxy"));
    EXPECT_EQ(*c->receive(), to_bytes("through the proxy"));
    c->close();
  }
  EXPECT_EQ(code_of([&] { socks5_connect(net, "127.0.0.1", 1, onion, 80); }), ErrorCode::kProxyError);
  try {
    socks5_connect(net, "127.0.0.1", 1, std::string(300, 'a'), 80);
    ADD_FAILURE();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kProxyError);
    EXPECT_NE(std::string(e.what()).find("255"), std::string::npos) << e.what();
  }
}

TEST(Bucket, MebibyteAtHundredKibPerSecond) {
  auto clock = std::make_shared<ManualClock>();
  TokenBucket b(100 * 1024, 64 * 1024, clock);
  auto release = b.schedule(1 << 20, 16 * 1024);
  ASSERT_EQ(release.size(), 64u);
  EXPECT_NEAR(to_ms(release.back()) / 1000.0, (1024.0 - 64.0) / 100.0, 1e-6);
  EXPECT_EQ(release.front().count(), 0);
  EXPECT_EQ(code_of([&] { TokenBucket(0, 1, clock); }), ErrorCode::kInvalidLimits);
  EXPECT_EQ(code_of([&] { TokenBucket(1, 0, clock); }), ErrorCode::kInvalidLimits);
}

TEST(Clocks, VirtualSleepsAreThreadLocalAndCausal) {
  auto clock = std::make_shared<VirtualClock>();
  auto t0 = clock->now();
  std::thread other([&] {
    clock->sleep_for(std::chrono::seconds(100));
    EXPECT_GE(clock->now() - t0, std::chrono::seconds(100));
  });
  other.join();
  EXPECT_LT(clock->now() - t0, std::chrono::seconds(1));
  clock->sleep_until(t0 + std::chrono::seconds(5));
  EXPECT_GE(clock->now() - t0, std::chrono::seconds(5));

  ManualClock m;
  m.sleep_for(std::chrono::milliseconds(3));
  m.advance(std::chrono::milliseconds(2));
  EXPECT_EQ(m.now(), std::chrono::milliseconds(5));
}

}  // namespace
}  // namespace vaultor::transport
