#pragma once

#include <atomic>
#include <condition_variable>
#include <cstdint>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <thread>

#include "vaultor/certificate.hpp"
#include "vaultor/content_store.hpp"
#include "vaultor/partition.hpp"
#include "vaultor/program_image.hpp"
#include "vaultor/secure_channel.hpp"
#include "vaultor/tee_sim.hpp"
#include "vaultor/transport.hpp"
#include "vaultor/wire.hpp"

namespace vaultor {

/// Reserved request paths.
namespace hp_path {
inline constexpr const char* kQuote = "/quote";
inline constexpr const char* kCertificate = "/certificate";
inline constexpr const char* kSecretKey = "Spath";
inline constexpr const char* kPublicKey = "Ppath";
}  // namespace hp_path

/// Sealed partition file names.
namespace hp_file {
inline constexpr const char* kSecretKey = "s_srv.sealed";
inline constexpr const char* kPublicKey = "p_srv.sealed";
inline constexpr const char* kCertificate = "certificate.sealed";
inline constexpr const char* kSnapshot = "content.sealed";
}  // namespace hp_file

/// What a host program can ask of the place it runs: persistence protection,
/// attestation and resource accounting.
class HostRuntime {
 public:
  virtual ~HostRuntime() = default;
  virtual bool attested() const = 0;
  virtual Bytes protect(ByteView plaintext) const = 0;
  /// Throws Error(kSealIntegrityFailure).
  virtual Bytes unprotect(ByteView stored) const = 0;
  virtual std::optional<tee::Quote> quote(ByteView report_data) const = 0;
  virtual const HostProgramConfig& config() const = 0;
  virtual tee::ResourceMeter& meter() = 0;
};

/// Runs inside a simulated enclave: sealing and quotes come from tee_sim.
class EnclaveRuntime final : public HostRuntime {
 public:
  explicit EnclaveRuntime(std::shared_ptr<tee::EnclaveHandle> enclave) : enclave_(std::move(enclave)) {}

  bool attested() const override { return true; }
  Bytes protect(ByteView plaintext) const override;
  Bytes unprotect(ByteView stored) const override;
  std::optional<tee::Quote> quote(ByteView report_data) const override;
  const HostProgramConfig& config() const override { return enclave_->config(); }
  tee::ResourceMeter& meter() override { return enclave_->meter(); }

  const tee::EnclaveHandle& enclave() const { return *enclave_; }

 private:
  std::shared_ptr<tee::EnclaveHandle> enclave_;
};

/// Ordinary process: no sealing, no quotes. Used as the benchmark baseline.
class VanillaRuntime final : public HostRuntime {
 public:
  VanillaRuntime(HostProgramConfig config, tee::ResourceLimits limits)
      : config_(std::move(config)), meter_(limits) {}

  bool attested() const override { return false; }
  Bytes protect(ByteView plaintext) const override { return {plaintext.begin(), plaintext.end()}; }
  Bytes unprotect(ByteView stored) const override { return {stored.begin(), stored.end()}; }
  std::optional<tee::Quote> quote(ByteView) const override { return std::nullopt; }
  const HostProgramConfig& config() const override { return config_; }
  tee::ResourceMeter& meter() override { return meter_; }

 private:
  HostProgramConfig config_;
  tee::ResourceMeter meter_;
};

/// The service key pair generated inside the enclave.
struct ServiceKeyPair {
  crypto::SigningKey secret;
  const crypto::PublicKey& public_key() const { return secret.public_key(); }
};

/// Per-session facts a request is judged against.
struct SessionContext {
  bool secure = false;
  crypto::Digest channel_binding{};
};

/// Exported keys for moving a service identity to another vault.
struct KeyMaterial {
  Bytes secret_seed;
  Bytes certificate;

  /// Canonical JSON {"certificate","s_srv"} with base64 values.
  Bytes serialize() const;
  static KeyMaterial parse(ByteView bytes);
};

/// Message signed in provider-key auth mode.
Bytes provider_auth_message(const crypto::Digest& channel_binding, const HpRequest& request);

struct HostProgramOptions {
  std::string service_name;
  /// Unix seconds; injectable for staleness tests.
  std::function<std::int64_t()> now_seconds;
  bool periodic_backup = true;
  std::int64_t certificate_lifetime_seconds = 365 * 24 * 3600;
};

/// The request handler that runs inside the vault's enclave: key lifecycle,
/// quote service, authenticated content mutation, client serving and sealed
/// backups. One writer and many readers may run concurrently.
class HostProgram {
 public:
  HostProgram(std::shared_ptr<HostRuntime> runtime, std::shared_ptr<Partition> storage,
              HostProgramOptions options);
  ~HostProgram();
  HostProgram(const HostProgram&) = delete;
  HostProgram& operator=(const HostProgram&) = delete;

  /// Loads or generates keys, refreshes sealed key files and the certificate,
  /// restores the last snapshot and starts the backup timer. Throws
  /// Error(kStartupRefused) when sealed key material exists but cannot be
  /// unsealed.
  void start();
  void stop();

  HpResponse handle_request(const HpRequest& request, std::int64_t now, const SessionContext& session);
  /// Convenience for callers that stand inside an established secure session.
  HpResponse handle_request(const HpRequest& request, std::int64_t now);

  /// Serves one session until the peer closes. A first frame that is a client
  /// hello upgrades the session to a secure channel; anything else is treated
  /// as plaintext framing which only allows unauthenticated client_get.
  void serve(transport::FrameStream& stream);

  /// Seals the current store and atomically replaces the previous snapshot.
  /// Throws Error(kBackupFailed) and keeps the old snapshot if it cannot.
  void backup();

  const ServiceCertificate& certificate() const;
  Bytes certificate_bytes() const;
  crypto::Digest cert_hash() const;
  crypto::PublicKey service_public_key() const;
  /// cert_hash || 32 zero bytes.
  tee::ReportData report_data() const;

  /// Set when the last snapshot could not be restored at start().
  std::optional<std::string> restore_error() const;
  std::size_t content_count() const;
  ContentStore snapshot_store() const;

 private:
  HpResponse handle_authenticated(const HpRequest& request, std::int64_t now);
  HpResponse handle_client(const HpRequest& request, std::int64_t now);
  HpResponse upload(const std::string& path, const Bytes& data, std::int64_t now);
  HpResponse import_keys(const Bytes& data);
  HpResponse quote_response() const;
  bool authenticate(const HpRequest& request, const SessionContext& session) const;
  void init_keys();
  void restore();
  void persist_keys();
  void backup_loop();
  std::int64_t now() const;

  std::shared_ptr<HostRuntime> runtime_;
  std::shared_ptr<Partition> storage_;
  HostProgramOptions options_;

  mutable std::shared_mutex keys_mu_;
  std::optional<ServiceKeyPair> keys_;
  ServiceCertificate certificate_;
  Bytes certificate_bytes_;

  mutable std::shared_mutex store_mu_;
  ContentStore store_;
  std::uint64_t generation_ = 0;

  std::mutex backup_mu_;
  std::uint64_t written_generation_ = 0;
  std::optional<std::string> restore_error_;

  std::mutex timer_mu_;
  std::condition_variable timer_cv_;
  bool stopping_ = false;
  std::thread timer_;
  bool started_ = false;
};

}  // namespace vaultor
