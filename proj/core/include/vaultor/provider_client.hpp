#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "vaultor/host_program.hpp"
#include "vaultor/secure_channel.hpp"
#include "vaultor/tee_sim.hpp"
#include "vaultor/transport.hpp"
#include "vaultor/wire.hpp"

namespace vaultor {

struct HpBuildOptions {
  std::uint16_t bind_port = 8080;
  std::int64_t max_staleness_seconds = kDefaultMaxStalenessSeconds;
  std::int64_t backup_interval_seconds = kDefaultBackupIntervalSeconds;
  std::set<std::string> capabilities{capability::kListen, capability::kSeal, capability::kQuote,
                                     capability::kImportKeys};
  std::optional<crypto::PublicKey> provider_public_key;
};

struct BuiltHp {
  Bytes bytes;
  tee::Measurement measurement;
};

/// Deterministic: equal inputs give byte-identical programs. Throws
/// Error(kConfigInvalid) for an empty secret.
BuiltHp build_hp(ByteView auth_secret, const HpBuildOptions& options = {});

struct Advertisement {
  std::string onion_url;
  /// 64 lower-case hex chars.
  std::string cert_hash;

  std::string to_json() const;
  /// Throws Error(kRejected) on malformed input.
  static Advertisement from_json(const std::string& text);
};

/// One provider connection interval, on the network clock and in Unix time.
struct UptimeInterval {
  double connect_ms = 0;
  double disconnect_ms = 0;
  std::int64_t connect_unix = 0;
  std::int64_t disconnect_unix = 0;
  std::string purpose;

  double duration_ms() const { return disconnect_ms - connect_ms; }
  std::string to_json() const;
};

struct ProviderProfile {
  Bytes auth_secret;
  tee::Measurement expected_measurement;
  std::optional<crypto::Digest> pinned_cert_hash;
  std::string vault_vchs;
  std::string service_onion;
  crypto::PublicKey vault_attestation_key{};
  std::vector<UptimeInterval> uptime_log;
  /// Set when the program was built for signature-based auth.
  std::optional<Bytes> provider_key_seed;

  std::string to_json() const;
  /// Throws Error(kConfigInvalid).
  static ProviderProfile from_json(const std::string& text);
};

enum class ProviderEventKind {
  kSessionOpen,
  kHpSubmitted,
  kChannelEstablished,
  kQuoteReceived,
  kQuoteVerified,
  kQuoteRejected,
  kAttestationSkipped,
  kSensitiveFrameSent,
  kSessionClose,
};
std::string_view to_string(ProviderEventKind kind);

struct ProviderEvent {
  std::uint64_t session = 0;
  ProviderEventKind kind;
  std::string detail;
};

struct ContentChange {
  enum class Op { kUpload, kRemove };
  Op op = Op::kUpload;
  std::string path;
  Bytes data;

  static ContentChange upload(std::string path, Bytes data) { return {Op::kUpload, std::move(path), std::move(data)}; }
  static ContentChange remove(std::string path) { return {Op::kRemove, std::move(path), {}}; }
};

struct UpdateReceipt {
  std::vector<std::string> applied;
  /// "path: detail" for every change the host program refused.
  std::vector<std::string> unapplied;

  bool partial_failure() const { return !unapplied.empty(); }
  /// Throws Error(kPartialFailure) naming the unapplied changes.
  void throw_if_partial() const;
};

/// One provider connection to its host program. Authenticated requests are
/// refused locally unless the session runs over the secure channel.
class ProviderSession {
 public:
  /// Secure channel; with a pin the handshake fails with kChannelAuthFailure
  /// on any other certificate.
  static ProviderSession open(transport::Network& network, const std::string& onion,
                              transport::CircuitProfile& circuit, const std::optional<crypto::Digest>& pin);
  static ProviderSession open_plaintext(transport::Network& network, const std::string& onion,
                                        transport::CircuitProfile& circuit);

  ProviderSession(ProviderSession&&) = default;
  ~ProviderSession();

  bool secure() const { return channel_.has_value(); }
  /// Throws Error(kInsecureChannel) before sending when `request.auth` is
  /// set on a plaintext session.
  HpResponse request(const HpRequest& request);
  const Bytes& certificate() const;
  crypto::Digest channel_binding() const;
  void close();

 private:
  explicit ProviderSession(transport::ConnectionHandle connection) : connection_(std::move(connection)) {}

  transport::ConnectionHandle connection_;
  std::optional<SecureChannel> channel_;
};

struct ProviderOptions {
  /// Off only for the unattested benchmark baseline: the certificate
  /// then is trusted on first use.
  bool verify_attestation = true;
  /// Bootstrap retries while the new service onion is not resolvable yet.
  int bootstrap_attempts = 20;
};

/// The provider's tooling: submit the program, attest it, then upload and
/// update content in short authenticated sessions.
class ProviderClient {
 public:
  ProviderClient(transport::Network& network, ProviderProfile profile,
                 transport::CircuitProfile circuit = transport::CircuitProfile::local(), ProviderOptions options = {});

  /// Throws kQuoteMismatch, kChannelAuthFailure or kAuthRejected; on any of
  /// them no secret or content has left the provider.
  Advertisement bootstrap(ByteView hp_bytes, const std::map<std::string, Bytes>& content);
  /// Fresh attestation each session. Throws kAuthRejected.
  UpdateReceipt update_content(const std::vector<ContentChange>& changes);
  KeyMaterial export_keys();
  /// Refuses with kInsecureChannel unless `session` is secure.
  KeyMaterial export_keys(ProviderSession& session);
  /// Throws kImportRejected or kAuthRejected. Re-pins to the imported
  /// certificate on success.
  void import_keys(const KeyMaterial& material);

  const ProviderProfile& profile() const { return profile_; }
  ProviderProfile& mutable_profile() { return profile_; }
  const std::vector<ProviderEvent>& events() const { return events_; }
  Advertisement advertisement() const;

 private:
  ProviderSession open_attested(const std::string& purpose);
  void close_session(ProviderSession& session);
  UpdateReceipt apply_changes(const std::vector<ContentChange>& changes);
  /// Runs `fn` as one provider connection interval.
  template <typename Fn>
  auto online(const std::string& purpose, Fn&& fn);
  HpResponse send_authenticated(ProviderSession& session, HpRequest request, bool carries_content);
  void log(ProviderEventKind kind, std::string detail = {});

  transport::Network& network_;
  ProviderProfile profile_;
  transport::CircuitProfile circuit_;
  ProviderOptions options_;
  std::vector<ProviderEvent> events_;
  std::uint64_t session_seq_ = 0;
};

}  // namespace vaultor
