#pragma once

#include <cstdint>
#include <string>

#include "vaultor/bytes.hpp"
#include "vaultor/crypto.hpp"

namespace vaultor {

/// Self-signed credential for a hosted service's P_srv. Its SHA-256 over the
/// canonical JSON serialization is what clients pin.
struct ServiceCertificate {
  crypto::PublicKey public_key{};
  std::string service_name;
  std::int64_t not_before = 0;
  std::int64_t not_after = 0;
  crypto::Signature self_signature{};

  static ServiceCertificate issue(const crypto::SigningKey& key, std::string service_name,
                                  std::int64_t not_before, std::int64_t not_after);

  /// Canonical JSON with sorted keys and no whitespace.
  Bytes serialize() const;
  /// Throws Error(kMalformedMessage) when not a canonical certificate.
  static ServiceCertificate parse(ByteView bytes);

  bool verify_self_signature() const;
  crypto::Digest hash() const { return crypto::sha256(serialize()); }

  friend bool operator==(const ServiceCertificate&, const ServiceCertificate&) = default;

 private:
  Bytes to_be_signed() const;
};

}  // namespace vaultor
