#include "vaultor/socks5.hpp"

#include "socket_stream.hpp"
#include "vaultor/error.hpp"

namespace vaultor::transport {

namespace {

constexpr std::uint8_t kVersion = 0x05;
constexpr std::uint8_t kNoAuth = 0x00;
constexpr std::uint8_t kCmdConnect = 0x01;
constexpr std::uint8_t kAtypIpv4 = 0x01;
constexpr std::uint8_t kAtypDomain = 0x03;
constexpr std::uint8_t kAtypIpv6 = 0x04;

void expect(bool ok, const std::string& what) {
  if (!ok) fail(ErrorCode::kProxyError, what);
}

}  // namespace

Bytes socks5_connect_request(const std::string& host, std::uint16_t port) {
  if (host.empty() || host.size() > 255) {
    fail(ErrorCode::kProxyError, "SOCKS5 domain names must be 1..255 bytes");
  }
  Bytes req{kVersion, kCmdConnect, 0x00, kAtypDomain, static_cast<std::uint8_t>(host.size())};
  append(req, as_bytes(host));
  req.push_back(static_cast<std::uint8_t>(port >> 8));
  req.push_back(static_cast<std::uint8_t>(port & 0xff));
  return req;
}

ConnectionHandle socks5_connect(Network& network, const std::string& proxy_host,
                                std::uint16_t proxy_port, const std::string& onion,
                                std::uint16_t port, Circuit circuit) {
  auto request = socks5_connect_request(onion, port);
  int fd = -1;
  try {
    fd = detail::tcp_dial(proxy_host, proxy_port);
  } catch (const Error& e) {
    fail(ErrorCode::kProxyError, std::string("proxy unreachable: ") + e.what());
  }
  auto state = std::make_shared<detail::SocketState>(fd);

  const std::uint8_t greeting[] = {kVersion, 0x01, kNoAuth};
  expect(detail::write_all(fd, greeting, sizeof(greeting)), "greeting write failed");
  std::uint8_t choice[2];
  expect(detail::read_exact(fd, choice, 2), "no method selection reply");
  expect(choice[0] == kVersion && choice[1] == kNoAuth, "proxy refused no-auth method");

  expect(detail::write_all(fd, request.data(), request.size()), "connect request write failed");
  std::uint8_t reply[4];
  expect(detail::read_exact(fd, reply, 4), "no connect reply");
  expect(reply[0] == kVersion, "bad reply version");
  expect(reply[1] == 0x00, "proxy CONNECT failed with code " + std::to_string(reply[1]));
  std::size_t addr_len = 0;
  switch (reply[3]) {
    case kAtypIpv4: addr_len = 4; break;
    case kAtypIpv6: addr_len = 16; break;
    case kAtypDomain: {
      std::uint8_t n = 0;
      expect(detail::read_exact(fd, &n, 1), "truncated bound address");
      addr_len = n;
      break;
    }
    default: fail(ErrorCode::kProxyError, "unknown bound address type");
  }
  Bytes bound(addr_len + 2);
  expect(detail::read_exact(fd, bound.data(), bound.size()), "truncated bound address");

  static std::atomic<std::uint64_t> next_session{1ull << 40};
  auto stream = std::make_unique<detail::SocketStream>(state, network.clock_ptr(), circuit);
  return std::make_unique<Connection>(std::move(stream), next_session.fetch_add(1),
                                      OriginTag::kViaTorClient, std::move(circuit));
}

}  // namespace vaultor::transport
