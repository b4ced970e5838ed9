#pragma once

#include <cstdint>
#include <string>

#include "vaultor/transport.hpp"

namespace vaultor::transport {

/// RFC 1928 CONNECT request with a domain-name address (ATYP 0x03).
/// Throws Error(kProxyError) for names longer than 255 bytes.
Bytes socks5_connect_request(const std::string& host, std::uint16_t port);

/// Opens a session through a SOCKS5 proxy (no authentication). The returned
/// connection speaks length-prefixed frames to the far end. Throws
/// Error(kProxyError) for handshake failures or an unreachable proxy.
ConnectionHandle socks5_connect(Network& network, const std::string& proxy_host,
                                std::uint16_t proxy_port, const std::string& onion,
                                std::uint16_t port, Circuit circuit = {});

}  // namespace vaultor::transport
