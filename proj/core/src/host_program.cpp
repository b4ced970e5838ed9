#include "vaultor/host_program.hpp"

#include <chrono>
#include <iostream>
#include <json.hpp>
#include <openssl/crypto.h>

#include "vaultor/error.hpp"

namespace vaultor {

namespace {

std::int64_t unix_seconds() {
  return std::chrono::duration_cast<std::chrono::seconds>(
             std::chrono::system_clock::now().time_since_epoch())
      .count();
}

std::string error_detail(const Error& e) { return e.what(); }

bool is_virtual_path(const std::string& normalized) {
  return normalized == hp_path::kQuote || normalized == hp_path::kCertificate;
}

}  // namespace

// ---------------------------------------------------------------------------

Bytes EnclaveRuntime::protect(ByteView plaintext) const {
  return tee::seal(*enclave_, plaintext).serialize();
}

Bytes EnclaveRuntime::unprotect(ByteView stored) const {
  return tee::unseal(*enclave_, tee::SealedBlob::deserialize(stored));
}

std::optional<tee::Quote> EnclaveRuntime::quote(ByteView report_data) const {
  return tee::get_quote(*enclave_, report_data);
}

Bytes KeyMaterial::serialize() const {
  nlohmann::json j{{"certificate", base64_encode(certificate)}, {"s_srv", base64_encode(secret_seed)}};
  return to_bytes(j.dump());
}

KeyMaterial KeyMaterial::parse(ByteView bytes) {
  auto j = nlohmann::json::parse(to_string(bytes), nullptr, false);
  if (!j.is_object()) fail(ErrorCode::kMalformedMessage, "key material is not a JSON object");
  KeyMaterial m;
  try {
    m.certificate = base64_decode(j.at("certificate").get<std::string>());
    m.secret_seed = base64_decode(j.at("s_srv").get<std::string>());
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kMalformedMessage, e.what());
  }
  return m;
}

Bytes provider_auth_message(const crypto::Digest& channel_binding, const HpRequest& request) {
  Bytes msg = to_bytes("vaultor-provider-auth-v1");
  append(msg, channel_binding);
  append(msg, as_bytes(to_string(request.type)));
  msg.push_back(0);
  append(msg, as_bytes(request.path));
  msg.push_back(0);
  append(msg, crypto::sha256(request.data));
  return msg;
}

// ---------------------------------------------------------------------------

HostProgram::HostProgram(std::shared_ptr<HostRuntime> runtime, std::shared_ptr<Partition> storage,
                         HostProgramOptions options)
    : runtime_(std::move(runtime)), storage_(std::move(storage)), options_(std::move(options)) {
  if (!options_.now_seconds) options_.now_seconds = unix_seconds;
}

HostProgram::~HostProgram() { stop(); }

std::int64_t HostProgram::now() const { return options_.now_seconds(); }

void HostProgram::start() {
  if (started_) return;
  init_keys();
  restore();
  started_ = true;
  auto interval = runtime_->config().backup_interval_seconds;
  if (options_.periodic_backup && interval > 0) {
    timer_ = std::thread([this] { backup_loop(); });
  }
}

void HostProgram::stop() {
  {
    std::lock_guard lock(timer_mu_);
    stopping_ = true;
  }
  timer_cv_.notify_all();
  if (timer_.joinable()) timer_.join();
}

void HostProgram::backup_loop() {
  const auto interval = std::chrono::seconds(runtime_->config().backup_interval_seconds);
  std::unique_lock lock(timer_mu_);
  while (!timer_cv_.wait_for(lock, interval, [this] { return stopping_; })) {
    lock.unlock();
    try {
      backup();
    } catch (const Error& e) {
      std::cerr << "vaultor hp: periodic backup failed: " << e.what() << "\n";
    }
    lock.lock();
  }
}

void HostProgram::init_keys() {
  std::unique_lock lock(keys_mu_);
  if (auto sealed = storage_->read(hp_file::kSecretKey)) {
    try {
      auto seed = runtime_->unprotect(*sealed);
      keys_.emplace(ServiceKeyPair{crypto::SigningKey::from_seed(seed)});
      secure_wipe(seed);
    } catch (const Error& e) {
      // A fresh key would silently change the pinned certificate hash.
      fail(ErrorCode::kStartupRefused, std::string("sealed S_srv unusable: ") + e.what());
    }
  } else {
    keys_.emplace(ServiceKeyPair{crypto::SigningKey::generate()});
  }

  std::optional<ServiceCertificate> cert;
  if (auto sealed = storage_->read(hp_file::kCertificate)) {
    try {
      auto bytes = runtime_->unprotect(*sealed);
      auto parsed = ServiceCertificate::parse(bytes);
      if (parsed.public_key == keys_->public_key() && parsed.verify_self_signature()) cert = parsed;
    } catch (const Error& e) {
      fail(ErrorCode::kStartupRefused, std::string("sealed certificate unusable: ") + e.what());
    }
  }
  if (!cert) {
    auto t = now();
    cert = ServiceCertificate::issue(keys_->secret, options_.service_name, t,
                                     t + options_.certificate_lifetime_seconds);
  }
  certificate_ = *cert;
  certificate_bytes_ = certificate_.serialize();
  lock.unlock();
  persist_keys();
}

void HostProgram::persist_keys() {
  std::shared_lock lock(keys_mu_);
  auto seed = keys_->secret.seed();
  storage_->write_atomic(hp_file::kSecretKey, runtime_->protect(seed));
  secure_wipe(seed);
  storage_->write_atomic(hp_file::kPublicKey, runtime_->protect(keys_->public_key()));
  storage_->write_atomic(hp_file::kCertificate, runtime_->protect(certificate_bytes_));
}

void HostProgram::restore() {
  auto sealed = storage_->read(hp_file::kSnapshot);
  if (!sealed) return;
  ContentStore restored;
  try {
    restored = ContentStore::deserialize(runtime_->unprotect(*sealed));
  } catch (const Error& e) {
    restore_error_ = e.what();
    std::cerr << "vaultor hp: ERROR content snapshot could not be restored (" << e.what()
              << "); serving an empty store\n";
    return;
  }
  if (!runtime_->meter().try_reserve_ram(restored.total_bytes())) {
    restore_error_ = "snapshot exceeds RAM limit";
    std::cerr << "vaultor hp: ERROR snapshot exceeds RAM limit; serving an empty store\n";
    return;
  }
  std::unique_lock lock(store_mu_);
  store_ = std::move(restored);
  ++generation_;
  written_generation_ = generation_;
}

void HostProgram::backup() {
  Bytes plain;
  std::uint64_t gen;
  {
    std::shared_lock lock(store_mu_);
    plain = store_.serialize();
    gen = generation_;
  }
  std::lock_guard lock(backup_mu_);
  if (gen <= written_generation_ && storage_->exists(hp_file::kSnapshot)) return;
  auto protected_bytes = runtime_->protect(plain);
  secure_wipe(plain);
  try {
    storage_->write_atomic(hp_file::kSnapshot, protected_bytes);
  } catch (const Error& e) {
    fail(ErrorCode::kBackupFailed, e.what());
  }
  written_generation_ = gen;
}

const ServiceCertificate& HostProgram::certificate() const {
  std::shared_lock lock(keys_mu_);
  return certificate_;
}

Bytes HostProgram::certificate_bytes() const {
  std::shared_lock lock(keys_mu_);
  return certificate_bytes_;
}

crypto::Digest HostProgram::cert_hash() const { return crypto::sha256(certificate_bytes()); }

crypto::PublicKey HostProgram::service_public_key() const {
  std::shared_lock lock(keys_mu_);
  return keys_->public_key();
}

tee::ReportData HostProgram::report_data() const {
  tee::ReportData rd{};
  auto h = cert_hash();
  std::copy(h.begin(), h.end(), rd.begin());
  return rd;
}

std::optional<std::string> HostProgram::restore_error() const { return restore_error_; }

std::size_t HostProgram::content_count() const {
  std::shared_lock lock(store_mu_);
  return store_.size();
}

ContentStore HostProgram::snapshot_store() const {
  std::shared_lock lock(store_mu_);
  return store_;
}

bool HostProgram::authenticate(const HpRequest& request, const SessionContext& session) const {
  if (!request.auth) return false;
  const auto& config = runtime_->config();
  auto h = crypto::sha256(*request.auth);
  if (CRYPTO_memcmp(h.data(), config.password_hash.data(), h.size()) == 0) return true;
  if (config.provider_public_key && session.secure) {
    return crypto::verify_signature(*config.provider_public_key,
                                    provider_auth_message(session.channel_binding, request), *request.auth);
  }
  return false;
}

HpResponse HostProgram::handle_request(const HpRequest& request, std::int64_t now_s) {
  return handle_request(request, now_s, SessionContext{true, {}});
}

HpResponse HostProgram::handle_request(const HpRequest& request, std::int64_t now_s,
                                       const SessionContext& session) {
  try {
    if (request.auth) {
      if (!session.secure) return HpResponse::failure("InsecureChannel: authenticated requests need the secure channel");
      if (!authenticate(request, session)) return HpResponse::failure("AuthRejected");
      return handle_authenticated(request, now_s);
    }
    return handle_client(request, now_s);
  } catch (const Error& e) {
    return HpResponse::failure(error_detail(e));
  }
}

HpResponse HostProgram::quote_response() const {
  auto q = runtime_->quote(report_data());
  if (!q) return HpResponse::failure("NotFound: this host program is not running in a TEE");
  return HpResponse::success(q->serialize());
}

HpResponse HostProgram::handle_authenticated(const HpRequest& request, std::int64_t now_s) {
  switch (request.type) {
    case RequestType::kQuote: return quote_response();
    case RequestType::kUpload:
      if (request.path == hp_path::kSecretKey) return import_keys(request.data);
      return upload(normalize_path(request.path), request.data, now_s);
    case RequestType::kRemove: {
      auto path = normalize_path(request.path);
      std::int64_t freed = 0;
      {
        std::unique_lock lock(store_mu_);
        auto* e = store_.find(path);
        if (!e) return HpResponse::failure("NotFound: " + path);
        freed = static_cast<std::int64_t>(e->content.size());
        store_.remove(path);
        ++generation_;
      }
      runtime_->meter().release_ram(freed);
      std::string detail;
      try {
        backup();
      } catch (const Error& e) {
        detail = e.what();
      }
      return HpResponse::success({}, detail);
    }
    case RequestType::kDownload: {
      if (request.path == hp_path::kSecretKey) {
        std::shared_lock lock(keys_mu_);
        const auto& seed = keys_->secret.seed();
        return HpResponse::success(Bytes(seed.begin(), seed.end()));
      }
      if (request.path == hp_path::kPublicKey) {
        auto pk = service_public_key();
        return HpResponse::success(Bytes(pk.begin(), pk.end()));
      }
      auto path = normalize_path(request.path);
      std::shared_lock lock(store_mu_);
      auto* e = store_.find(path);
      if (!e) return HpResponse::failure("NotFound: " + path);
      return HpResponse::success(e->content);
    }
    default: return HpResponse::failure("unsupported request type");
  }
}

HpResponse HostProgram::handle_client(const HpRequest& request, std::int64_t now_s) {
  if (request.type != RequestType::kClientGet) return HpResponse::failure("unsupported request type");
  auto path = normalize_path(request.path);
  if (path == hp_path::kQuote) return quote_response();
  if (path == hp_path::kCertificate) return HpResponse::success(certificate_bytes());
  std::shared_lock lock(store_mu_);
  auto* e = store_.find(path);
  if (!e) return HpResponse::failure("NotFound: " + path);
  HpResponse r = HpResponse::success(e->content);
  if (now_s - e->timestamp > runtime_->config().max_staleness_seconds) {
    r.status = ResponseStatus::kStaleWarning;
    r.detail = "content last updated at " + std::to_string(e->timestamp);
  }
  return r;
}

HpResponse HostProgram::upload(const std::string& path, const Bytes& data, std::int64_t now_s) {
  if (is_virtual_path(path)) return HpResponse::failure("InvalidPath: reserved path " + path);
  {
    std::unique_lock lock(store_mu_);
    auto new_total = store_.total_after_put(path, static_cast<std::int64_t>(data.size()));
    auto& meter = runtime_->meter();
    if (new_total > meter.limits().disk_bytes) {
      return HpResponse::failure("QuotaExceeded: content would exceed the disk limit");
    }
    auto delta = new_total - store_.total_bytes();
    if (delta > 0 && !meter.try_reserve_ram(delta)) {
      return HpResponse::failure("QuotaExceeded: content would exceed the RAM limit");
    }
    if (delta < 0) meter.release_ram(-delta);
    store_.put(path, data, now_s);
    ++generation_;
  }
  std::string detail;
  try {
    backup();
  } catch (const Error& e) {
    detail = e.what();
  }
  return HpResponse::success({}, detail);
}

HpResponse HostProgram::import_keys(const Bytes& data) {
  if (!runtime_->config().has_capability(capability::kImportKeys)) {
    return HpResponse::failure("ImportRejected: host program lacks the import_keys capability");
  }
  std::optional<ServiceCertificate> parsed;
  std::optional<crypto::SigningKey> parsed_key;
  try {
    auto material = KeyMaterial::parse(data);
    parsed = ServiceCertificate::parse(material.certificate);
    parsed_key = crypto::SigningKey::from_seed(material.secret_seed);
    secure_wipe(material.secret_seed);
  } catch (const Error& e) {
    return HpResponse::failure(std::string("ImportRejected: ") + e.what());
  }
  auto& cert = *parsed;
  auto& key = *parsed_key;
  if (!cert.verify_self_signature() || cert.public_key != key.public_key()) {
    return HpResponse::failure("ImportRejected: certificate does not match key");
  }
  {
    std::unique_lock lock(keys_mu_);
    keys_.emplace(ServiceKeyPair{std::move(key)});
    certificate_ = cert;
    certificate_bytes_ = cert.serialize();
  }
  persist_keys();
  return HpResponse::success();
}

void HostProgram::serve(transport::FrameStream& stream) {
  auto first = stream.receive();
  if (!first) return;
  auto& meter = runtime_->meter();

  auto handle_frame = [&](ByteView frame, const SessionContext& ctx) -> HpResponse {
    auto reserved = static_cast<std::int64_t>(frame.size());
    if (!meter.try_reserve_ram(reserved)) return HpResponse::failure("QuotaExceeded: session buffer");
    HpResponse response;
    try {
      response = handle_request(decode_request(frame), now(), ctx);
    } catch (const Error& e) {
      response = HpResponse::failure(e.what());
    }
    meter.release_ram(reserved);
    return response;
  };

  if (!SecureChannel::is_client_hello(*first)) {
    SessionContext ctx{false, {}};
    std::optional<Bytes> frame = std::move(first);
    while (frame) {
      stream.send(encode_response(handle_frame(*frame, ctx)));
      frame = stream.receive();
    }
    return;
  }

  std::optional<SecureChannel> channel;
  {
    std::shared_lock lock(keys_mu_);
    try {
      channel.emplace(SecureChannel::server(stream, *first, keys_->secret, certificate_bytes_));
    } catch (const Error&) {
      stream.close();
      return;
    }
  }
  SessionContext ctx{true, channel->transcript_hash()};
  try {
    while (auto message = channel->receive_message()) {
      channel->send_message(encode_response(handle_frame(*message, ctx)));
    }
  } catch (const Error&) {
    stream.close();
  }
}

}  // namespace vaultor
