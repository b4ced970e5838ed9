#include "vaultor/vault_daemon.hpp"

#include <chrono>
#include <fstream>
#include <iostream>
#include <json.hpp>
#include <sstream>

#include "vaultor/error.hpp"

namespace vaultor {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::int64_t unix_seconds() {
  return std::chrono::duration_cast<std::chrono::seconds>(
             std::chrono::system_clock::now().time_since_epoch())
      .count();
}

const std::set<std::string> kLocalProxyHosts = {"127.0.0.1", "localhost", "::1"};

Bytes read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) fail(ErrorCode::kNotFound, p.string());
  return Bytes(std::istreambuf_iterator<char>(in), {});
}

void write_file(const fs::path& p, ByteView data) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size()));
  if (!out) fail(ErrorCode::kStartFailed, "cannot write " + p.string());
}

std::set<std::string> parse_policy(const json& v) {
  std::set<std::string> out;
  if (v.is_array()) {
    for (const auto& f : v) out.insert(f.get<std::string>());
    return out;
  }
  std::stringstream ss(v.get<std::string>());
  std::string item;
  while (std::getline(ss, item, ',')) {
    auto b = item.find_first_not_of(" \t");
    auto e = item.find_last_not_of(" \t");
    if (b != std::string::npos) out.insert(item.substr(b, e - b + 1));
  }
  return out;
}

std::int64_t as_int(const json& v) {
  if (v.is_number_integer()) return v.get<std::int64_t>();
  if (v.is_number()) return static_cast<std::int64_t>(v.get<double>());
  return std::stoll(v.get<std::string>());
}

double as_double(const json& v) { return v.is_number() ? v.get<double>() : std::stod(v.get<std::string>()); }

std::string as_string(const json& v) { return v.is_string() ? v.get<std::string>() : v.dump(); }

// Flattens {"transport": {"backend": ...}} into "transport.backend".
void flatten(const json& j, const std::string& prefix, std::map<std::string, json>& out) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    std::string key = prefix.empty() ? it.key() : prefix + "." + it.key();
    if (it->is_object()) {
      flatten(*it, key, out);
    } else {
      out[key] = *it;
    }
  }
}

/// Everything between the network and the host program passes through here:
/// shaping, accounting and the operator's view of the bytes.
class ServiceStream final : public transport::FrameStream {
 public:
  ServiceStream(transport::ConnectionHandle inner, std::shared_ptr<HostedService> service,
                std::shared_ptr<TokenBucket> bucket, TrafficTap tap, std::atomic<std::uint64_t>& in,
                std::atomic<std::uint64_t>& out)
      : inner_(std::move(inner)),
        service_(std::move(service)),
        bucket_(std::move(bucket)),
        tap_(std::move(tap)),
        in_(in),
        out_(out) {}

  void send(Bytes frame) override {
    bucket_->consume(static_cast<std::int64_t>(frame.size()));
    if (tap_) tap_(*service_, TrafficDirection::kOut, frame);
    out_ += frame.size();
    inner_->send(std::move(frame));
  }

  std::optional<Bytes> receive() override {
    auto frame = inner_->receive();
    if (!frame) return frame;
    bucket_->consume(static_cast<std::int64_t>(frame->size()));
    if (tap_) tap_(*service_, TrafficDirection::kIn, *frame);
    in_ += frame->size();
    return frame;
  }

  void close() override { inner_->close(); }
  Clock& clock() override { return inner_->clock(); }

 private:
  transport::ConnectionHandle inner_;
  std::shared_ptr<HostedService> service_;
  std::shared_ptr<TokenBucket> bucket_;
  TrafficTap tap_;
  std::atomic<std::uint64_t>& in_;
  std::atomic<std::uint64_t>& out_;
};

}  // namespace

std::set<std::string> default_inspection_policy() {
  return {capability::kListen, capability::kSeal, capability::kQuote, capability::kImportKeys};
}

void VaultConfig::validate() const {
  if (ram_limit_bytes <= 0) fail(ErrorCode::kConfigInvalid, "ram_limit_bytes must be positive");
  if (disk_limit_bytes <= 0) fail(ErrorCode::kConfigInvalid, "disk_limit_bytes must be positive");
  if (!(bandwidth_bytes_per_sec > 0)) fail(ErrorCode::kConfigInvalid, "bandwidth_bytes_per_sec must be positive");
  if (bandwidth_burst_bytes <= 0) fail(ErrorCode::kConfigInvalid, "bandwidth_burst_bytes must be positive");
  if (max_submission_bytes <= 0) fail(ErrorCode::kConfigInvalid, "max_submission_bytes must be positive");
  if (tor_proxy_port < 1 || tor_proxy_port > 65535) fail(ErrorCode::kConfigInvalid, "tor_proxy_port out of range");
  if (!vchs_onion.empty() && !transport::is_valid_onion_address(vchs_onion)) {
    fail(ErrorCode::kConfigInvalid, "vchs_onion is not an onion address");
  }
}

VaultServeConfig parse_vault_config(const std::string& text) {
  std::map<std::string, json> kv;
  auto first = text.find_first_not_of(" \t\r\n");
  if (first != std::string::npos && text[first] == '{') {
    auto j = json::parse(text, nullptr, false);
    if (!j.is_object()) fail(ErrorCode::kConfigInvalid, "config is not a JSON object");
    flatten(j, "", kv);
  } else {
    std::istringstream in(text);
    std::string line;
    int n = 0;
    while (std::getline(in, line)) {
      ++n;
      auto b = line.find_first_not_of(" \t\r");
      if (b == std::string::npos || line[b] == '#') continue;
      auto eq = line.find('=');
      if (eq == std::string::npos) fail(ErrorCode::kConfigInvalid, "line " + std::to_string(n) + ": expected key=value");
      auto trim = [](std::string s) {
        auto lb = s.find_first_not_of(" \t\r");
        auto le = s.find_last_not_of(" \t\r");
        return lb == std::string::npos ? std::string() : s.substr(lb, le - lb + 1);
      };
      kv[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
    }
  }

  VaultServeConfig out;
  auto& v = out.vault;
  try {
    for (const auto& [key, value] : kv) {
      if (key == "vchs_onion") v.vchs_onion = as_string(value);
      else if (key == "ram_limit_bytes") v.ram_limit_bytes = as_int(value);
      else if (key == "disk_limit_bytes") v.disk_limit_bytes = as_int(value);
      else if (key == "bandwidth_bytes_per_sec") v.bandwidth_bytes_per_sec = as_double(value);
      else if (key == "bandwidth_burst_bytes") v.bandwidth_burst_bytes = as_int(value);
      else if (key == "tor_proxy_port") v.tor_proxy_port = static_cast<int>(as_int(value));
      else if (key == "hp_inspection_policy") v.hp_inspection_policy = parse_policy(value);
      else if (key == "max_submission_bytes") v.max_submission_bytes = as_int(value);
      else if (key == "bind_host") v.bind_host = as_string(value);
      else if (key == "storage_dir") v.storage_dir = as_string(value);
      else if (key == "decision_log") v.decision_log = fs::path(as_string(value));
      else if (key == "fuse_file") out.fuse_file = as_string(value);
      else if (key == "transport.backend") out.transport.backend = transport::parse_backend(as_string(value));
      else if (key == "transport.registry_file") out.transport.registry_file = fs::path(as_string(value));
      else if (key == "transport.listen_host") out.transport.listen_host = as_string(value);
      else if (key == "transport.socks_proxy_host") out.transport.socks_proxy_host = as_string(value);
      else if (key == "transport.socks_proxy_port") out.transport.socks_proxy_port = static_cast<std::uint16_t>(as_int(value));
      else fail(ErrorCode::kConfigInvalid, "unknown key " + key);
    }
  } catch (const json::exception& e) {
    fail(ErrorCode::kConfigInvalid, e.what());
  } catch (const std::logic_error& e) {
    fail(ErrorCode::kConfigInvalid, e.what());
  }
  v.validate();
  if (v.storage_dir.empty()) v.storage_dir = "vault-data";
  if (out.fuse_file.empty()) out.fuse_file = v.storage_dir / "device.fuses";
  return out;
}

VaultServeConfig load_vault_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::kConfigInvalid, "cannot read " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_vault_config(ss.str());
}

std::shared_ptr<const tee::DeviceIdentity> load_or_create_device(const fs::path& fuse_file) {
  tee::DeviceFuses fuses;
  if (fs::exists(fuse_file)) {
    auto j = json::parse(to_string(read_file(fuse_file)), nullptr, false);
    try {
      fuses.device_id = to_fixed<tee::kDeviceIdSize>(hex_decode(j.at("device_id").get<std::string>()));
      fuses.root_secret = to_fixed<32>(hex_decode(j.at("root_secret").get<std::string>()));
      fuses.attestation_seed = to_fixed<crypto::kSeedSize>(hex_decode(j.at("attestation_seed").get<std::string>()));
    } catch (const json::exception& e) {
      fail(ErrorCode::kConfigInvalid, std::string("fuse file: ") + e.what());
    }
  } else {
    fuses.device_id = crypto::random_array<tee::kDeviceIdSize>();
    fuses.root_secret = crypto::random_array<32>();
    fuses.attestation_seed = crypto::random_array<crypto::kSeedSize>();
    if (fuse_file.has_parent_path()) fs::create_directories(fuse_file.parent_path());
    json j{{"device_id", hex_encode(fuses.device_id)},
           {"root_secret", hex_encode(fuses.root_secret)},
           {"attestation_seed", hex_encode(fuses.attestation_seed)}};
    write_file(fuse_file, as_bytes(j.dump(2) + "\n"));
    fs::permissions(fuse_file, fs::perms::owner_read | fs::perms::owner_write);
  }
  auto device = tee::DeviceIdentity::from_fuses(fuses);
  secure_wipe(fuses.root_secret);
  secure_wipe(fuses.attestation_seed);
  return device;
}

std::string_view to_string(ServiceState state) {
  switch (state) {
    case ServiceState::kReceived: return "Received";
    case ServiceState::kInspected: return "Inspected";
    case ServiceState::kRunning: return "Running";
    case ServiceState::kStopped: return "Stopped";
  }
  return "Unknown";
}

std::string_view to_string(Verdict verdict) { return verdict == Verdict::kAllow ? "Allow" : "Deny"; }

std::string DecisionRecord::to_json() const {
  return json{{"ts", ts}, {"service", service}, {"direction", direction},
              {"dest", dest}, {"verdict", std::string(vaultor::to_string(verdict))}, {"reason", reason}}
      .dump();
}

// ---------------------------------------------------------------------------

HostedService::HostedService(std::string id, Bytes hp_bytes)
    : id_(std::move(id)), hp_bytes_(std::move(hp_bytes)), digest_(tee::measure(hp_bytes_)) {}

ServiceState HostedService::state() const {
  std::lock_guard lock(mu_);
  return state_;
}

ServiceAccounting HostedService::accounting() const {
  std::lock_guard lock(mu_);
  ServiceAccounting a;
  a.bytes_in = bytes_in_;
  a.bytes_out = bytes_out_;
  if (runtime_) {
    a.ram_high_water = runtime_->meter().ram_high_water();
    a.disk_used = runtime_->meter().disk_used();
  }
  return a;
}

std::shared_ptr<HostProgram> HostedService::program() const {
  std::lock_guard lock(mu_);
  return program_;
}

std::shared_ptr<tee::EnclaveHandle> HostedService::enclave() const {
  std::lock_guard lock(mu_);
  return enclave_;
}

std::shared_ptr<Partition> HostedService::partition() const {
  std::lock_guard lock(mu_);
  return partition_;
}

// ---------------------------------------------------------------------------

VaultDaemon::VaultDaemon(VaultConfig config, std::shared_ptr<transport::Network> network,
                         std::shared_ptr<const tee::DeviceIdentity> device, VaultOptions options)
    : config_(std::move(config)),
      network_(std::move(network)),
      device_(device ? std::move(device) : tee::DeviceIdentity::create()),
      options_(std::move(options)) {
  config_.validate();
  if (!network_) network_ = std::make_shared<transport::Network>();
  if (config_.storage_dir.empty()) {
    config_.storage_dir = fs::temp_directory_path() / ("vaultor-vault-" + hex_encode(crypto::random_bytes(8)));
    owns_storage_ = true;
  }
  fs::create_directories(config_.storage_dir / "services");
  if (config_.decision_log) {
    log_file_.open(*config_.decision_log, std::ios::app);
    if (!log_file_) fail(ErrorCode::kConfigInvalid, "cannot open decision log");
  }
  if (!options_.now_seconds) options_.now_seconds = unix_seconds;
}

VaultDaemon::~VaultDaemon() {
  shutdown();
  if (owns_storage_) {
    std::error_code ec;
    fs::remove_all(config_.storage_dir, ec);
  }
}

void VaultDaemon::shutdown() {
  std::vector<std::shared_ptr<HostedService>> all;
  {
    std::lock_guard lock(mu_);
    all = all_;
  }
  if (!vchs_onion_.empty()) {
    network_->stop_onion(vchs_onion_);
    vchs_onion_.clear();
  }
  for (auto& s : all) stop_service(*s);
  std::unique_lock lock(sessions_mu_);
  closing_ = true;
  for (auto* stream : live_sessions_) stream->close();
  sessions_cv_.wait(lock, [this] { return live_sessions_.empty(); });
}

std::string VaultDaemon::advertise_vchs() {
  if (!vchs_onion_.empty()) fail(ErrorCode::kAdvertiseFailed, "contact service already advertised: " + vchs_onion_);
  std::string name = config_.vchs_onion.empty() ? transport::make_onion_address() : config_.vchs_onion;
  if (network_->registry().contains(name)) fail(ErrorCode::kAdvertiseFailed, "name already registered: " + name);
  try {
    network_->listen_onion(name, [this](transport::ConnectionHandle c) { serve_vchs(std::move(c)); });
  } catch (const Error& e) {
    fail(ErrorCode::kAdvertiseFailed, e.what());
  }
  vchs_onion_ = name;
  return name;
}

void VaultDaemon::serve_vchs(transport::ConnectionHandle connection) {
  if (check_ingress(vchs_onion_, connection->origin(), connection->session_id()) == Verdict::kDeny) {
    connection->close();
    return;
  }
  SessionGuard guard(*this, *connection);
  if (!guard.admitted()) return;
  while (auto frame = connection->receive()) {
    HpResponse response;
    try {
      auto request = decode_request(*frame);
      if (request.type != RequestType::kSubmitHp) {
        response = HpResponse::failure("Rejected: the contact service only accepts submit_hp");
      } else {
        auto service = host(request.data);
        response = HpResponse::success(to_bytes(service->onion_url()));
      }
    } catch (const Error& e) {
      response = HpResponse::failure(e.what());
    }
    connection->send(encode_response(response));
  }
}

std::shared_ptr<HostedService> VaultDaemon::receive(ByteView submission, bool attested) {
  if (submission.empty()) fail(ErrorCode::kRejected, "empty submission");
  if (static_cast<std::int64_t>(submission.size()) > config_.max_submission_bytes) {
    fail(ErrorCode::kRejected, "submission exceeds " + std::to_string(config_.max_submission_bytes) + " bytes");
  }
  auto id = "svc-" + std::to_string(next_service_++);
  auto service = std::shared_ptr<HostedService>(new HostedService(id, Bytes(submission.begin(), submission.end())));
  service->attested_ = attested;
  std::lock_guard lock(mu_);
  all_.push_back(service);
  return service;
}

std::shared_ptr<HostedService> VaultDaemon::receive_hp(ByteView submission) { return receive(submission, true); }

void VaultDaemon::inspect_hp(HostedService& service) {
  std::lock_guard lock(service.mu_);
  if (service.state_ != ServiceState::kReceived) {
    fail(ErrorCode::kRejected, "inspection requires state Received, not " + std::string(to_string(service.state_)));
  }
  HostProgramConfig config;
  try {
    config = parse_program_image(service.hp_bytes_);
  } catch (const Error& e) {
    fail(ErrorCode::kRejected, e.what());
  }
  if (!config.capabilities) fail(ErrorCode::kRejected, "program does not declare its capabilities");
  for (const auto& flag : *config.capabilities) {
    if (!config_.hp_inspection_policy.count(flag)) fail(ErrorCode::kRejected, "capability not allowed: " + flag);
  }
  service.config_ = config;
  service.state_ = ServiceState::kInspected;
}

void VaultDaemon::start_service(HostedService& service) {
  std::unique_lock lock(service.mu_);
  if (service.state_ != ServiceState::kInspected) {
    fail(ErrorCode::kStartFailed, "start requires state Inspected, not " + std::string(to_string(service.state_)));
  }
  std::shared_ptr<HostedService> self;
  {
    std::lock_guard g(mu_);
    for (auto& s : all_) {
      if (s.get() == &service) self = s;
    }
  }
  if (!self) fail(ErrorCode::kStartFailed, "service does not belong to this vault");

  tee::ResourceLimits limits{config_.ram_limit_bytes, config_.disk_limit_bytes};
  std::shared_ptr<HostRuntime> runtime;
  try {
    if (service.attested_) {
      Bytes launched = options_.hp_tamper ? options_.hp_tamper(service.hp_bytes_) : service.hp_bytes_;
      service.enclave_ = tee::launch(device_, launched, limits);
      runtime = std::make_shared<EnclaveRuntime>(service.enclave_);
    } else {
      runtime = std::make_shared<VanillaRuntime>(*service.config_, limits);
    }
  } catch (const Error& e) {
    fail(ErrorCode::kStartFailed, e.what());
  }

  if (service.onion_url_.empty()) service.onion_url_ = transport::make_onion_address();
  auto dir = service_dir(service);
  std::shared_ptr<HostProgram> program;
  try {
    fs::create_directories(dir / "partition");
    service.partition_ = std::make_shared<Partition>(dir / "partition", runtime->meter());
    HostProgramOptions hp_options;
    hp_options.service_name = service.onion_url_;
    hp_options.now_seconds = options_.now_seconds;
    hp_options.periodic_backup = options_.periodic_backup;
    program = std::make_shared<HostProgram>(runtime, service.partition_, hp_options);
    program->start();
    if (service.attested_) {
      write_file(dir / "hp.bin", service.hp_bytes_);
      write_file(dir / "onion", as_bytes(service.onion_url_));
    }
  } catch (const Error& e) {
    fail(ErrorCode::kStartFailed, e.what());
  }

  service.runtime_ = runtime;
  service.program_ = program;
  service.bucket_ = std::make_shared<TokenBucket>(config_.bandwidth_bytes_per_sec, config_.bandwidth_burst_bytes,
                                                  network_->clock_ptr());
  auto acceptor = [this, self](transport::ConnectionHandle c) { serve_session(self, std::move(c)); };
  try {
    network_->listen_onion(service.onion_url_, acceptor);
  } catch (const Error& e) {
    program->stop();
    fail(ErrorCode::kStartFailed, e.what());
  }
  auto port = runtime->config().bind_port;
  try {
    network_->listen_direct(config_.bind_host, port, acceptor);
    service.direct_endpoint_ = std::make_pair(config_.bind_host, port);
  } catch (const Error& e) {
    network_->stop_onion(service.onion_url_);
    program->stop();
    fail(ErrorCode::kStartFailed, e.what());
  }
  service.state_ = ServiceState::kRunning;
  lock.unlock();
  std::lock_guard g(mu_);
  by_onion_[service.onion_url_] = self;
}

void VaultDaemon::stop_service(HostedService& service) {
  std::shared_ptr<HostProgram> program;
  {
    std::lock_guard lock(service.mu_);
    if (service.state_ != ServiceState::kRunning) return;
    network_->stop_onion(service.onion_url_);
    if (service.direct_endpoint_) {
      network_->stop_direct(service.direct_endpoint_->first, service.direct_endpoint_->second);
    }
    service.state_ = ServiceState::kStopped;
    program = service.program_;
  }
  if (program) {
    program->stop();
    try {
      program->backup();
    } catch (const Error& e) {
      std::cerr << "vaultor vault: final backup of " << service.onion_url_ << " failed: " << e.what() << "\n";
    }
  }
  std::lock_guard g(mu_);
  by_onion_.erase(service.onion_url_);
}

std::shared_ptr<HostedService> VaultDaemon::host(ByteView submission) {
  auto service = receive_hp(submission);
  inspect_hp(*service);
  start_service(*service);
  return service;
}

std::shared_ptr<HostedService> VaultDaemon::host_vanilla(ByteView submission) {
  auto service = receive(submission, false);
  inspect_hp(*service);
  start_service(*service);
  return service;
}

void VaultDaemon::serve_session(const std::shared_ptr<HostedService>& service,
                                transport::ConnectionHandle connection) {
  if (enforce_ingress(*service, connection->origin(), connection->session_id()) == Verdict::kDeny) {
    connection->close();
    return;
  }
  auto program = service->program();
  if (!program) {
    connection->close();
    return;
  }
  std::unique_ptr<transport::FrameStream> stream = std::make_unique<ServiceStream>(
      std::move(connection), service, service->bucket_, options_.tap, service->bytes_in_, service->bytes_out_);
  SessionGuard guard(*this, *stream);
  if (!guard.admitted()) return;
  if (options_.interceptor) {
    auto original = stream.get();
    auto wrapped = options_.interceptor(std::move(stream), *service);
    if (!wrapped) return;
    stream = std::move(wrapped);
    if (stream.get() != original) guard.retarget(*stream);
  }
  try {
    program->serve(*stream);
  } catch (const Error&) {
  }
  stream->close();
}

VaultDaemon::SessionGuard::SessionGuard(VaultDaemon& vault, transport::FrameStream& stream)
    : vault_(vault), stream_(&stream) {
  std::lock_guard lock(vault_.sessions_mu_);
  admitted_ = !vault_.closing_;
  if (admitted_) vault_.live_sessions_.insert(stream_);
}

void VaultDaemon::SessionGuard::retarget(transport::FrameStream& stream) {
  std::lock_guard lock(vault_.sessions_mu_);
  vault_.live_sessions_.erase(stream_);
  stream_ = &stream;
  vault_.live_sessions_.insert(stream_);
}

VaultDaemon::SessionGuard::~SessionGuard() {
  if (!admitted_) return;
  std::lock_guard lock(vault_.sessions_mu_);
  vault_.live_sessions_.erase(stream_);
  vault_.sessions_cv_.notify_all();
}

EgressDecision VaultDaemon::enforce_egress(const HostedService& service, const std::string& host, int port) {
  EgressDecision d{host, port, Verdict::kDeny, {}};
  if (!kLocalProxyHosts.count(host)) {
    d.reason = "destination is not the local Tor proxy";
  } else if (port != config_.tor_proxy_port) {
    d.reason = "only the Tor proxy port " + std::to_string(config_.tor_proxy_port) + " is reachable";
  } else {
    d.verdict = Verdict::kAllow;
    d.reason = "local Tor proxy";
  }
  record({options_.now_seconds(), service.onion_url().empty() ? service.id() : service.onion_url(), "egress",
          host + ":" + std::to_string(port), d.verdict, d.reason});
  return d;
}

Verdict VaultDaemon::enforce_ingress(const HostedService& service, transport::OriginTag origin,
                                     std::uint64_t session_id) {
  return check_ingress(service.onion_url().empty() ? service.id() : service.onion_url(), origin, session_id);
}

Verdict VaultDaemon::check_ingress(const std::string& name, transport::OriginTag origin, std::uint64_t session_id) {
  bool via_tor = origin == transport::OriginTag::kViaTorClient;
  Verdict v = via_tor ? Verdict::kAllow : Verdict::kDeny;
  record({options_.now_seconds(), name, "ingress", "session:" + std::to_string(session_id), v,
          via_tor ? "via local Tor client" : "direct connection bypassing the Tor client"});
  return v;
}

void VaultDaemon::record(DecisionRecord rec) {
  std::lock_guard lock(log_mu_);
  if (log_file_.is_open()) log_file_ << rec.to_json() << "\n" << std::flush;
  decisions_.push_back(std::move(rec));
}

std::vector<DecisionRecord> VaultDaemon::decisions() const {
  std::lock_guard lock(log_mu_);
  return decisions_;
}

std::shared_ptr<HostedService> VaultDaemon::find_service(const std::string& onion) const {
  std::lock_guard lock(mu_);
  auto it = by_onion_.find(onion);
  return it == by_onion_.end() ? nullptr : it->second;
}

std::vector<std::shared_ptr<HostedService>> VaultDaemon::services() const {
  std::lock_guard lock(mu_);
  return all_;
}

fs::path VaultDaemon::service_dir(const HostedService& service) const {
  auto name = service.onion_url_.substr(0, service.onion_url_.find('.'));
  return config_.storage_dir / "services" / (service.attested_ ? name : "vanilla-" + name);
}

std::size_t VaultDaemon::resume_services() {
  std::size_t resumed = 0;
  if (!fs::is_directory(config_.storage_dir / "services")) return 0;
  for (const auto& entry : fs::directory_iterator(config_.storage_dir / "services")) {
    auto hp = entry.path() / "hp.bin";
    auto onion = entry.path() / "onion";
    if (!fs::exists(hp) || !fs::exists(onion)) continue;
    try {
      auto service = receive_hp(read_file(hp));
      service->onion_url_ = to_string(read_file(onion));
      inspect_hp(*service);
      start_service(*service);
      ++resumed;
    } catch (const Error& e) {
      std::cerr << "vaultor vault: could not resume " << entry.path() << ": " << e.what() << "\n";
    }
  }
  return resumed;
}

}  // namespace vaultor
