#pragma once

#include <cstdint>
#include <optional>
#include <set>
#include <string>

#include "vaultor/bytes.hpp"
#include "vaultor/crypto.hpp"

namespace vaultor {

/// Capability flags a host program declares for vault inspection.
namespace capability {
inline constexpr const char* kListen = "listen";
inline constexpr const char* kSeal = "seal";
inline constexpr const char* kQuote = "quote";
inline constexpr const char* kImportKeys = "import_keys";
inline constexpr const char* kRawEgress = "raw_egress";
}  // namespace capability

inline constexpr std::int64_t kDefaultMaxStalenessSeconds = 7 * 24 * 3600;
inline constexpr std::int64_t kDefaultBackupIntervalSeconds = 60;

/// Configuration compiled into a host program. Every field is part of the
/// measured bytes.
struct HostProgramConfig {
  crypto::Digest password_hash{};
  std::optional<crypto::PublicKey> provider_public_key;
  std::uint16_t bind_port = 8080;
  std::int64_t max_staleness_seconds = kDefaultMaxStalenessSeconds;
  std::int64_t backup_interval_seconds = kDefaultBackupIntervalSeconds;
  /// Absent when the program does not declare capabilities at all.
  std::optional<std::set<std::string>> capabilities;

  bool has_capability(const std::string& flag) const {
    return capabilities && capabilities->count(flag) > 0;
  }
};

/// Deterministic program image: "HPv1\n" followed by sorted-key compact JSON.
Bytes serialize_program_image(const HostProgramConfig& config);

/// Throws Error(kInvalidProgram) when the bytes are not a host program image.
HostProgramConfig parse_program_image(ByteView program_bytes);

}  // namespace vaultor
