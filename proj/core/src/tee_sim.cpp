#include "vaultor/tee_sim.hpp"

#include <algorithm>
#include <atomic>

#include "vaultor/error.hpp"

namespace vaultor::tee {

namespace {

constexpr std::string_view kSealingSalt = "vaultor-tee-sim-sealing-salt-v01";
static_assert(kSealingSalt.size() == 32);

constexpr std::size_t kPrivateRegionBytes = 4096;

std::atomic<std::uint64_t> g_next_region{1};

Bytes quote_body(const Measurement& m, const ReportData& rd) {
  Bytes body(m.digest.begin(), m.digest.end());
  append(body, rd);
  return body;
}

}  // namespace

Measurement measure(ByteView program_bytes) {
  if (program_bytes.empty()) fail(ErrorCode::kInvalidProgram, "empty program");
  return Measurement{crypto::sha256(program_bytes)};
}

DeviceIdentity::DeviceIdentity(const DeviceFuses& fuses)
    : device_id_(fuses.device_id),
      root_secret_(fuses.root_secret),
      attestation_key_(crypto::SigningKey::from_seed(fuses.attestation_seed)) {}

std::shared_ptr<const DeviceIdentity> DeviceIdentity::create() {
  DeviceFuses fuses;
  fuses.device_id = crypto::random_array<kDeviceIdSize>();
  fuses.root_secret = crypto::random_array<32>();
  fuses.attestation_seed = crypto::random_array<crypto::kSeedSize>();
  auto device = from_fuses(fuses);
  secure_wipe(fuses.root_secret);
  secure_wipe(fuses.attestation_seed);
  return device;
}

std::shared_ptr<const DeviceIdentity> DeviceIdentity::from_fuses(const DeviceFuses& fuses) {
  return std::shared_ptr<const DeviceIdentity>(new DeviceIdentity(fuses));
}

bool ResourceMeter::try_reserve_ram(std::int64_t bytes) {
  auto current = ram_used_.load();
  do {
    if (current + bytes > limits_.ram_bytes) return false;
  } while (!ram_used_.compare_exchange_weak(current, current + bytes));
  auto used = current + bytes;
  auto high = ram_high_water_.load();
  while (used > high && !ram_high_water_.compare_exchange_weak(high, used)) {
  }
  return true;
}

void ResourceMeter::release_ram(std::int64_t bytes) { ram_used_.fetch_sub(bytes); }

bool ResourceMeter::try_set_disk(std::int64_t old_bytes, std::int64_t new_bytes) {
  auto current = disk_used_.load();
  do {
    if (current - old_bytes + new_bytes > limits_.disk_bytes) return false;
  } while (!disk_used_.compare_exchange_weak(current, current - old_bytes + new_bytes));
  return true;
}

Bytes Quote::serialize() const {
  Bytes out = quote_body(measurement, report_data);
  append(out, signature);
  return out;
}

Quote Quote::deserialize(ByteView bytes) {
  if (bytes.size() != kQuoteSize) {
    fail(ErrorCode::kMalformedQuote, "quote must be " + std::to_string(kQuoteSize) + " bytes");
  }
  Quote q;
  std::copy_n(bytes.begin(), crypto::kDigestSize, q.measurement.digest.begin());
  std::copy_n(bytes.begin() + crypto::kDigestSize, kReportDataSize, q.report_data.begin());
  std::copy_n(bytes.begin() + crypto::kDigestSize + kReportDataSize, crypto::kSignatureSize,
              q.signature.begin());
  return q;
}

Bytes SealedBlob::serialize() const {
  Bytes out(nonce.begin(), nonce.end());
  append(out, bound_measurement.digest);
  append(out, ciphertext);
  return out;
}

SealedBlob SealedBlob::deserialize(ByteView bytes) {
  constexpr std::size_t header = crypto::kAeadNonceSize + crypto::kDigestSize;
  if (bytes.size() < header + crypto::kAeadTagSize) {
    fail(ErrorCode::kSealIntegrityFailure, "sealed blob truncated");
  }
  SealedBlob blob;
  std::copy_n(bytes.begin(), crypto::kAeadNonceSize, blob.nonce.begin());
  std::copy_n(bytes.begin() + crypto::kAeadNonceSize, crypto::kDigestSize,
              blob.bound_measurement.digest.begin());
  blob.ciphertext.assign(bytes.begin() + header, bytes.end());
  return blob;
}

EnclaveHandle::EnclaveHandle(std::shared_ptr<const DeviceIdentity> device, Measurement m,
                             HostProgramConfig config, ResourceLimits limits)
    : device_(std::move(device)),
      measurement_(m),
      config_(std::move(config)),
      meter_(limits),
      region_id_(g_next_region.fetch_add(1)),
      private_memory_(kPrivateRegionBytes, 0) {}

bool EnclaveHandle::private_region_zeroed() const {
  return std::all_of(private_memory_.begin(), private_memory_.end(),
                     [](std::uint8_t b) { return b == 0; });
}

std::shared_ptr<EnclaveHandle> launch(std::shared_ptr<const DeviceIdentity> device,
                                      ByteView program_bytes, ResourceLimits limits) {
  if (!device) fail(ErrorCode::kInvalidProgram, "no device");
  auto m = measure(program_bytes);
  auto config = parse_program_image(program_bytes);
  if (limits.ram_bytes <= 0 || limits.disk_bytes <= 0) {
    fail(ErrorCode::kInvalidLimits, "resource limits must be positive");
  }
  return std::shared_ptr<EnclaveHandle>(
      new EnclaveHandle(std::move(device), m, std::move(config), limits));
}

Quote get_quote(const EnclaveHandle& handle, ByteView report_data) {
  if (report_data.size() != kReportDataSize) {
    fail(ErrorCode::kInvalidReportData, "report data must be 64 bytes");
  }
  Quote q;
  q.measurement = handle.measurement();
  std::copy(report_data.begin(), report_data.end(), q.report_data.begin());
  q.signature = handle.device_->attestation_key_.sign(quote_body(q.measurement, q.report_data));
  return q;
}

namespace {
std::atomic<std::uint64_t> g_verify_calls{0};
}

std::uint64_t verify_quote_calls() { return g_verify_calls.load(); }

bool verify_quote(const Quote& quote, const Measurement& expected_measurement,
                  const crypto::PublicKey& attestation_public_key, ByteView expected_report_data) {
  g_verify_calls.fetch_add(1);
  if (expected_report_data.size() != kReportDataSize) return false;
  if (!(quote.measurement == expected_measurement)) return false;
  if (!std::equal(quote.report_data.begin(), quote.report_data.end(), expected_report_data.begin())) {
    return false;
  }
  return crypto::verify_signature(attestation_public_key,
                                  quote_body(quote.measurement, quote.report_data), quote.signature);
}

bool verify_quote(ByteView serialized_quote, const Measurement& expected_measurement,
                  const crypto::PublicKey& attestation_public_key, ByteView expected_report_data) {
  return verify_quote(Quote::deserialize(serialized_quote), expected_measurement,
                      attestation_public_key, expected_report_data);
}

crypto::AeadKey derive_sealing_key(const DeviceIdentity& device, const Measurement& measurement) {
  auto okm = crypto::hkdf_sha256(device.root_secret_, as_bytes(kSealingSalt), measurement.digest,
                                 crypto::kAeadKeySize);
  auto key = to_fixed<crypto::kAeadKeySize>(okm);
  secure_wipe(okm);
  return key;
}

SealedBlob seal(const EnclaveHandle& handle, ByteView plaintext) {
  SealedBlob blob;
  blob.nonce = crypto::random_array<crypto::kAeadNonceSize>();
  blob.bound_measurement = handle.measurement();
  auto key = derive_sealing_key(handle.device(), handle.measurement());
  blob.ciphertext = crypto::aead_seal(key, blob.nonce, blob.bound_measurement.digest, plaintext);
  secure_wipe(key);
  return blob;
}

Bytes unseal(const EnclaveHandle& handle, const SealedBlob& blob) {
  if (!(blob.bound_measurement == handle.measurement())) {
    fail(ErrorCode::kSealIntegrityFailure, "blob sealed to a different program");
  }
  auto key = derive_sealing_key(handle.device(), handle.measurement());
  try {
    auto plain = crypto::aead_open(key, blob.nonce, blob.bound_measurement.digest, blob.ciphertext);
    secure_wipe(key);
    return plain;
  } catch (const Error&) {
    secure_wipe(key);
    fail(ErrorCode::kSealIntegrityFailure, "sealed blob failed authentication");
  }
}

}  // namespace vaultor::tee
