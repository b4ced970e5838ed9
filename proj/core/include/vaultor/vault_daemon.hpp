#pragma once

#include <atomic>
#include <condition_variable>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "vaultor/host_program.hpp"
#include "vaultor/tee_sim.hpp"
#include "vaultor/token_bucket.hpp"
#include "vaultor/transport.hpp"

namespace vaultor {

std::set<std::string> default_inspection_policy();

struct VaultConfig {
  /// Empty means a fresh random address at advertise time.
  std::string vchs_onion;
  std::int64_t ram_limit_bytes = 256ll << 20;
  std::int64_t disk_limit_bytes = 1ll << 30;
  double bandwidth_bytes_per_sec = 10.0 * (1 << 20);
  std::int64_t bandwidth_burst_bytes = 64 * 1024;
  int tor_proxy_port = 9050;
  std::set<std::string> hp_inspection_policy = default_inspection_policy();
  std::int64_t max_submission_bytes = 1 << 20;
  /// Address the raw HP listeners bind to (the host's side of bind_port).
  std::string bind_host = "127.0.0.1";
  /// Per-service partitions live below this directory.
  std::filesystem::path storage_dir;
  std::optional<std::filesystem::path> decision_log;

  /// Throws Error(kConfigInvalid).
  void validate() const;
};

/// Everything `vault serve` reads from its config file.
struct VaultServeConfig {
  VaultConfig vault;
  transport::TransportConfig transport;
  /// Simulated CPU fuses; created on first run.
  std::filesystem::path fuse_file;
};

/// Accepts JSON objects or flat key=value lines. Transport keys use a
/// "transport." prefix. Throws Error(kConfigInvalid).
VaultServeConfig load_vault_config(const std::filesystem::path& path);
VaultServeConfig parse_vault_config(const std::string& text);

/// Loads the fuse file or creates it with fresh secrets.
std::shared_ptr<const tee::DeviceIdentity> load_or_create_device(const std::filesystem::path& fuse_file);

enum class ServiceState { kReceived, kInspected, kRunning, kStopped };
std::string_view to_string(ServiceState state);

enum class Verdict { kAllow, kDeny };
std::string_view to_string(Verdict verdict);

struct EgressDecision {
  std::string host;
  int port = 0;
  Verdict verdict = Verdict::kDeny;
  std::string reason;
};

/// One line of the decision log.
struct DecisionRecord {
  std::int64_t ts = 0;
  std::string service;
  std::string direction;
  std::string dest;
  Verdict verdict = Verdict::kDeny;
  std::string reason;

  std::string to_json() const;
};

enum class TrafficDirection { kIn, kOut };

struct ServiceAccounting {
  std::uint64_t bytes_in = 0;
  std::uint64_t bytes_out = 0;
  std::int64_t ram_high_water = 0;
  std::int64_t disk_used = 0;
};

/// One hosted service and its lifecycle.
class HostedService {
 public:
  const std::string& id() const { return id_; }
  const std::string& onion_url() const { return onion_url_; }
  const tee::Measurement& hp_bytes_digest() const { return digest_; }
  const Bytes& hp_bytes() const { return hp_bytes_; }
  ServiceState state() const;
  bool attested() const { return attested_; }
  ServiceAccounting accounting() const;

  /// Null until Running.
  std::shared_ptr<HostProgram> program() const;
  std::shared_ptr<tee::EnclaveHandle> enclave() const;
  std::shared_ptr<Partition> partition() const;

 private:
  friend class VaultDaemon;
  HostedService(std::string id, Bytes hp_bytes);

  std::string id_;
  std::string onion_url_;
  Bytes hp_bytes_;
  tee::Measurement digest_;
  bool attested_ = true;
  std::optional<HostProgramConfig> config_;

  mutable std::mutex mu_;
  ServiceState state_ = ServiceState::kReceived;
  std::shared_ptr<tee::EnclaveHandle> enclave_;
  std::shared_ptr<HostRuntime> runtime_;
  std::shared_ptr<Partition> partition_;
  std::shared_ptr<HostProgram> program_;
  std::shared_ptr<TokenBucket> bucket_;
  std::atomic<std::uint64_t> bytes_in_{0};
  std::atomic<std::uint64_t> bytes_out_{0};
  std::optional<std::pair<std::string, std::uint16_t>> direct_endpoint_;
};

/// Observer for every frame crossing between the network and a hosted
/// service: this is exactly what the vault operator can see.
using TrafficTap = std::function<void(const HostedService&, TrafficDirection, ByteView)>;

/// Adversarial vault hook: may wrap or take over a session before the host
/// program sees it. Returning null means the hook consumed the session.
using SessionInterceptor = std::function<std::unique_ptr<transport::FrameStream>(
    std::unique_ptr<transport::FrameStream>, HostedService&)>;

struct VaultOptions {
  /// Unix-seconds source handed to host programs.
  std::function<std::int64_t()> now_seconds;
  bool periodic_backup = true;
  TrafficTap tap;
  SessionInterceptor interceptor;
  /// Adversarial hook: the bytes actually launched for a submitted program.
  std::function<Bytes(ByteView)> hp_tamper;
};

/// The vault: advertises its contact service, accepts host programs, runs
/// them in the simulated TEE and enforces the isolation rules (RAM cap, disk
/// quota, per-service bandwidth, proxy-only egress, Tor-client-only ingress).
class VaultDaemon {
 public:
  VaultDaemon(VaultConfig config, std::shared_ptr<transport::Network> network,
              std::shared_ptr<const tee::DeviceIdentity> device = nullptr, VaultOptions options = {});
  ~VaultDaemon();
  VaultDaemon(const VaultDaemon&) = delete;
  VaultDaemon& operator=(const VaultDaemon&) = delete;

  /// Throws Error(kAdvertiseFailed) when the name is taken.
  std::string advertise_vchs();
  const std::string& vchs_onion() const { return vchs_onion_; }
  const crypto::PublicKey& attestation_public_key() const { return device_->attestation_public_key(); }
  const tee::DeviceIdentity& device() const { return *device_; }

  /// Throws Error(kRejected) for empty or oversize submissions.
  std::shared_ptr<HostedService> receive_hp(ByteView submission);
  /// Throws Error(kRejected) on any capability outside the policy, or when
  /// capabilities are not declared.
  void inspect_hp(HostedService& service);
  /// Throws Error(kStartFailed).
  void start_service(HostedService& service);
  void stop_service(HostedService& service);

  /// receive, inspect, start.
  std::shared_ptr<HostedService> host(ByteView submission);
  /// Same lifecycle but runs the program outside the TEE: no sealing, no
  /// quotes. The benchmark baseline.
  std::shared_ptr<HostedService> host_vanilla(ByteView submission);

  EgressDecision enforce_egress(const HostedService& service, const std::string& host, int port);
  Verdict enforce_ingress(const HostedService& service, transport::OriginTag origin,
                          std::uint64_t session_id = 0);

  std::shared_ptr<HostedService> find_service(const std::string& onion) const;
  std::vector<std::shared_ptr<HostedService>> services() const;
  std::vector<DecisionRecord> decisions() const;
  const VaultConfig& config() const { return config_; }
  transport::Network& network() { return *network_; }
  std::shared_ptr<TokenBucket> bucket(const HostedService& service) const { return service.bucket_; }

  /// Relaunches every persisted service found under storage_dir on its
  /// previous onion address.
  std::size_t resume_services();

  void shutdown();

 private:
  std::shared_ptr<HostedService> receive(ByteView submission, bool attested);
  class SessionGuard {
   public:
    SessionGuard(VaultDaemon& vault, transport::FrameStream& stream);
    ~SessionGuard();
    bool admitted() const { return admitted_; }
    void retarget(transport::FrameStream& stream);

   private:
    VaultDaemon& vault_;
    transport::FrameStream* stream_;
    bool admitted_ = false;
  };

  Verdict check_ingress(const std::string& name, transport::OriginTag origin, std::uint64_t session_id);
  void serve_vchs(transport::ConnectionHandle connection);
  void serve_session(const std::shared_ptr<HostedService>& service, transport::ConnectionHandle connection);
  std::filesystem::path service_dir(const HostedService& service) const;
  void record(DecisionRecord record);

  VaultConfig config_;
  std::shared_ptr<transport::Network> network_;
  std::shared_ptr<const tee::DeviceIdentity> device_;
  VaultOptions options_;
  std::string vchs_onion_;
  bool owns_storage_ = false;

  mutable std::mutex mu_;
  std::map<std::string, std::shared_ptr<HostedService>> by_onion_;
  std::vector<std::shared_ptr<HostedService>> all_;
  std::atomic<std::uint64_t> next_service_{1};

  std::mutex sessions_mu_;
  std::condition_variable sessions_cv_;
  std::set<transport::FrameStream*> live_sessions_;
  bool closing_ = false;

  mutable std::mutex log_mu_;
  std::vector<DecisionRecord> decisions_;
  std::ofstream log_file_;
};

}  // namespace vaultor
