#pragma once

#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>
#include <string>

#include "vaultor/bytes.hpp"
#include "vaultor/error.hpp"
#include "vaultor/transport.hpp"

namespace vaultor::tools {

inline Bytes read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::kConfigInvalid, "cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  auto s = ss.str();
  return Bytes(s.begin(), s.end());
}

inline std::string read_text(const std::filesystem::path& path) { return to_string(read_file(path)); }

inline void write_file(const std::filesystem::path& path, ByteView data) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size()));
  if (!out) fail(ErrorCode::kConfigInvalid, "cannot write " + path.string());
}

inline void write_text(const std::filesystem::path& path, const std::string& text) { write_file(path, as_bytes(text)); }

/// Transport flags shared by the provider and client tools.
struct TransportFlags {
  std::filesystem::path registry;
  std::string backend = "tcp";
  std::string socks_host = "127.0.0.1";
  std::uint16_t socks_port = 9050;
  std::filesystem::path latency;

  void add(CLI::App& app) {
    app.add_option("--registry", registry, "Shared onion registry file")->required();
    app.add_option("--backend", backend, "tcp or socks5")->check(CLI::IsMember({"tcp", "socks5"}));
    app.add_option("--socks-host", socks_host);
    app.add_option("--socks-port", socks_port);
    app.add_option("--latency", latency, "Latency profile JSON {hops, min_ms, max_ms, jitter_ms, mode}");
  }

  std::shared_ptr<transport::Network> network() const {
    transport::TransportConfig c;
    c.backend = transport::parse_backend(backend);
    c.registry_file = registry;
    c.socks_proxy_host = socks_host;
    c.socks_proxy_port = socks_port;
    return std::make_shared<transport::Network>(c);
  }

  transport::CircuitProfile circuit() const {
    if (latency.empty()) return transport::CircuitProfile::local();
    return transport::CircuitProfile::from_json(read_text(latency), std::random_device{}());
  }
};

/// Runs a subcommand body, mapping errors to a message and exit status 2.
template <typename Fn>
int guarded(Fn&& fn) {
  try {
    return fn();
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
  }
  return 2;
}

}  // namespace vaultor::tools
