#pragma once

#include <atomic>
#include <cstdint>
#include <memory>

#include "vaultor/bytes.hpp"
#include "vaultor/crypto.hpp"
#include "vaultor/program_image.hpp"

namespace vaultor::tee {

inline constexpr std::size_t kDeviceIdSize = 16;
inline constexpr std::size_t kReportDataSize = 64;
inline constexpr std::size_t kQuoteSize = crypto::kDigestSize + kReportDataSize + crypto::kSignatureSize;

using DeviceId = FixedBytes<kDeviceIdSize>;
using ReportData = FixedBytes<kReportDataSize>;

/// SHA-256 identity of a program byte string.
struct Measurement {
  crypto::Digest digest{};

  std::string hex() const { return hex_encode(digest); }
  friend bool operator==(const Measurement&, const Measurement&) = default;
};

/// Throws Error(kInvalidProgram) for empty input.
Measurement measure(ByteView program_bytes);

struct Quote;
class EnclaveHandle;

/// Values burnt into the simulated CPU.
struct DeviceFuses {
  DeviceId device_id{};
  FixedBytes<32> root_secret{};
  FixedBytes<crypto::kSeedSize> attestation_seed{};
};

/// A simulated TEE-capable CPU. The root secret and the attestation signing
/// key never leave this object; only the id and the verification key are
/// exported.
class DeviceIdentity {
 public:
  static std::shared_ptr<const DeviceIdentity> create();
  static std::shared_ptr<const DeviceIdentity> from_fuses(const DeviceFuses& fuses);

  const DeviceId& device_id() const { return device_id_; }
  const crypto::PublicKey& attestation_public_key() const { return attestation_key_.public_key(); }

 private:
  explicit DeviceIdentity(const DeviceFuses& fuses);

  friend crypto::AeadKey derive_sealing_key(const DeviceIdentity&, const Measurement&);
  friend Quote get_quote(const EnclaveHandle&, ByteView);

  DeviceId device_id_;
  FixedBytes<32> root_secret_;
  crypto::SigningKey attestation_key_;
};

struct ResourceLimits {
  std::int64_t ram_bytes = 0;
  std::int64_t disk_bytes = 0;
};

/// Accounted RAM/disk usage of one enclave.
class ResourceMeter {
 public:
  explicit ResourceMeter(ResourceLimits limits) : limits_(limits) {}

  const ResourceLimits& limits() const { return limits_; }

  /// False (and nothing reserved) when the reservation would exceed the cap.
  bool try_reserve_ram(std::int64_t bytes);
  void release_ram(std::int64_t bytes);
  std::int64_t ram_used() const { return ram_used_.load(); }
  std::int64_t ram_high_water() const { return ram_high_water_.load(); }

  bool try_set_disk(std::int64_t old_bytes, std::int64_t new_bytes);
  std::int64_t disk_used() const { return disk_used_.load(); }
  /// Re-baselines disk usage, e.g. after scanning an existing partition.
  void reset_disk(std::int64_t bytes) { disk_used_.store(bytes); }

 private:
  ResourceLimits limits_;
  std::atomic<std::int64_t> ram_used_{0};
  std::atomic<std::int64_t> ram_high_water_{0};
  std::atomic<std::int64_t> disk_used_{0};
};

/// Signed statement binding a measurement to 64 bytes of report data.
struct Quote {
  Measurement measurement;
  ReportData report_data{};
  crypto::Signature signature{};

  /// digest(32) || report_data(64) || signature(64).
  Bytes serialize() const;
  /// Throws Error(kMalformedQuote) unless exactly kQuoteSize bytes.
  static Quote deserialize(ByteView bytes);
};

/// Enclave-bound ciphertext.
struct SealedBlob {
  crypto::AeadNonce nonce{};
  Measurement bound_measurement;
  Bytes ciphertext;

  /// nonce(12) || measurement(32) || ciphertext.
  Bytes serialize() const;
  /// Throws Error(kSealIntegrityFailure) when too short to be a blob.
  static SealedBlob deserialize(ByteView bytes);
};

/// A launched enclave instance. Host code sees its measurement and resource
/// accounting; the program's own state is owned by whatever runs inside.
class EnclaveHandle {
 public:
  const Measurement& measurement() const { return measurement_; }
  const DeviceIdentity& device() const { return *device_; }
  std::shared_ptr<const DeviceIdentity> device_ptr() const { return device_; }
  const HostProgramConfig& config() const { return config_; }
  ResourceMeter& meter() { return meter_; }
  const ResourceMeter& meter() const { return meter_; }
  /// Distinct for every launch, including relaunches of identical bytes.
  std::uint64_t private_region_id() const { return region_id_; }
  std::size_t private_region_size() const { return private_memory_.size(); }
  bool private_region_zeroed() const;

 private:
  EnclaveHandle(std::shared_ptr<const DeviceIdentity> device, Measurement m,
                HostProgramConfig config, ResourceLimits limits);

  friend std::shared_ptr<EnclaveHandle> launch(std::shared_ptr<const DeviceIdentity>, ByteView,
                                               ResourceLimits);
  friend Quote get_quote(const EnclaveHandle&, ByteView);

  std::shared_ptr<const DeviceIdentity> device_;
  Measurement measurement_;
  HostProgramConfig config_;
  ResourceMeter meter_;
  std::uint64_t region_id_;
  Bytes private_memory_;
};

/// Throws kInvalidProgram when the bytes are not a host program image and
/// kInvalidLimits when a limit is not strictly positive.
std::shared_ptr<EnclaveHandle> launch(std::shared_ptr<const DeviceIdentity> device,
                                      ByteView program_bytes, ResourceLimits limits);

/// Throws Error(kInvalidReportData) unless report_data is 64 bytes.
Quote get_quote(const EnclaveHandle& handle, ByteView report_data);

bool verify_quote(const Quote& quote, const Measurement& expected_measurement,
                  const crypto::PublicKey& attestation_public_key, ByteView expected_report_data);
/// Deserializing overload; throws Error(kMalformedQuote) on bad length.
bool verify_quote(ByteView serialized_quote, const Measurement& expected_measurement,
                  const crypto::PublicKey& attestation_public_key, ByteView expected_report_data);

/// Process-wide count of verify_quote invocations, for operation traces.
std::uint64_t verify_quote_calls();

/// HKDF-SHA-256(root secret, fixed salt, measurement digest). Models the
/// key-request instruction an enclave issues for its own measurement.
crypto::AeadKey derive_sealing_key(const DeviceIdentity& device, const Measurement& measurement);

SealedBlob seal(const EnclaveHandle& handle, ByteView plaintext);
/// Throws Error(kSealIntegrityFailure) on foreign measurement, foreign device
/// or any tampering.
Bytes unseal(const EnclaveHandle& handle, const SealedBlob& blob);

}  // namespace vaultor::tee
