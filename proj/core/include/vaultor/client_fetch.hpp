#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <shared_mutex>
#include <string>

#include "vaultor/provider_client.hpp"
#include "vaultor/secure_channel.hpp"
#include "vaultor/transport.hpp"
#include "vaultor/wire.hpp"

namespace vaultor {

/// onion URL -> expected certificate hash, learned from advertisements.
class PinStore {
 public:
  PinStore() = default;
  PinStore(const PinStore& other);
  PinStore& operator=(const PinStore& other);

  /// Throws kRejected for malformed advertisements and kPinConflict when a
  /// different pin exists and `replace` is false. Re-importing the same pin
  /// is a no-op.
  void import_advertisement(const Advertisement& ad, bool replace = false);
  std::optional<crypto::Digest> find(const std::string& onion) const;
  std::size_t size() const;

  /// JSON object {onion: hex}; also accepts a list of advertisements.
  static PinStore load(const std::filesystem::path& file);
  void save(const std::filesystem::path& file) const;

 private:
  mutable std::shared_mutex mu_;
  std::map<std::string, crypto::Digest> pins_;
};

struct FetchResult {
  ResponseStatus status = ResponseStatus::kFailure;
  Bytes body;
  crypto::Digest served_cert_hash{};
  crypto::Digest body_sha256{};
  /// From queueing the request on the established channel.
  double ttfb_ms = 0;
  double ttlb_ms = 0;
  /// Connect plus handshake, reported separately.
  double establish_ms = 0;
  bool stale = false;
  std::string detail;

  /// {status, ttfb_ms, ttlb_ms, stale, body_sha256}.
  std::string to_json() const;
};

/// An established, pin-checked channel to one onion service that can carry
/// any number of client_get requests.
class ClientSession {
 public:
  /// Throws kNotFound when no pin is known, kPinMismatch when the served
  /// certificate differs from the pin (before any request is sent), plus
  /// transport errors.
  static ClientSession open(transport::Network& network, const std::string& onion, const PinStore& pins,
                            transport::CircuitProfile& profile);
  ClientSession(ClientSession&&) = default;
  ~ClientSession();

  /// Throws kNotFound when the service does not have `path`.
  FetchResult get(const std::string& path);

  double establish_ms() const { return establish_ms_; }
  const crypto::Digest& served_cert_hash() const { return served_cert_hash_; }
  std::uint64_t requests_sent() const { return requests_sent_; }
  const transport::Circuit& circuit() const { return connection_->circuit(); }
  void close();

 private:
  ClientSession() = default;

  transport::ConnectionHandle connection_;
  std::optional<SecureChannel> channel_;
  crypto::Digest served_cert_hash_{};
  double establish_ms_ = 0;
  std::uint64_t requests_sent_ = 0;
};

/// Connect, verify the pin, fetch one path, disconnect.
FetchResult fetch(transport::Network& network, const std::string& onion, const std::string& path,
                  const PinStore& pins, transport::CircuitProfile& profile);

}  // namespace vaultor
