#include "vaultor/provider_client.hpp"

#include <chrono>
#include <json.hpp>
#include <thread>

#include "vaultor/error.hpp"

namespace vaultor {

using nlohmann::json;

namespace {

std::int64_t unix_seconds() {
  return std::chrono::duration_cast<std::chrono::seconds>(
             std::chrono::system_clock::now().time_since_epoch())
      .count();
}

bool is_hex_digest(const std::string& s) {
  if (s.size() != 64) return false;
  for (char c : s) {
    if (!((c >= '0' && c <= '9') || (c >= 'a' && c <= 'f'))) return false;
  }
  return true;
}

[[noreturn]] void fail_from_response(const HpResponse& r, ErrorCode fallback) {
  auto code = error_code_of(r.detail).value_or(fallback);
  fail(code, r.detail);
}

}  // namespace

BuiltHp build_hp(ByteView auth_secret, const HpBuildOptions& options) {
  if (auth_secret.empty()) fail(ErrorCode::kConfigInvalid, "auth secret must not be empty");
  HostProgramConfig config;
  config.password_hash = crypto::sha256(auth_secret);
  config.provider_public_key = options.provider_public_key;
  config.bind_port = options.bind_port;
  config.max_staleness_seconds = options.max_staleness_seconds;
  config.backup_interval_seconds = options.backup_interval_seconds;
  config.capabilities = options.capabilities;
  BuiltHp out;
  out.bytes = serialize_program_image(config);
  out.measurement = tee::measure(out.bytes);
  return out;
}

std::string Advertisement::to_json() const { return json{{"cert_hash", cert_hash}, {"onion_url", onion_url}}.dump(); }

Advertisement Advertisement::from_json(const std::string& text) {
  auto j = json::parse(text, nullptr, false);
  if (!j.is_object()) fail(ErrorCode::kRejected, "advertisement is not a JSON object");
  Advertisement ad;
  try {
    ad.onion_url = j.at("onion_url").get<std::string>();
    ad.cert_hash = j.at("cert_hash").get<std::string>();
  } catch (const json::exception& e) {
    fail(ErrorCode::kRejected, e.what());
  }
  if (!transport::is_valid_onion_address(ad.onion_url)) fail(ErrorCode::kRejected, "malformed onion URL");
  if (!is_hex_digest(ad.cert_hash)) fail(ErrorCode::kRejected, "cert_hash must be 64 lower-case hex chars");
  return ad;
}

std::string UptimeInterval::to_json() const {
  return json{{"connect_ms", connect_ms},       {"disconnect_ms", disconnect_ms},
              {"connect_unix", connect_unix},   {"disconnect_unix", disconnect_unix},
              {"duration_ms", duration_ms()},   {"purpose", purpose}}
      .dump();
}

std::string ProviderProfile::to_json() const {
  json j;
  j["auth_secret"] = hex_encode(auth_secret);
  j["expected_measurement"] = expected_measurement.hex();
  j["pinned_cert_hash"] = pinned_cert_hash ? json(hex_encode(*pinned_cert_hash)) : json(nullptr);
  j["vault_vchs"] = vault_vchs;
  j["service_onion"] = service_onion;
  j["vault_attestation_key"] = hex_encode(vault_attestation_key);
  if (provider_key_seed) j["provider_key_seed"] = hex_encode(*provider_key_seed);
  json log = json::array();
  for (const auto& i : uptime_log) log.push_back(json::parse(i.to_json()));
  j["uptime_log"] = log;
  return j.dump(2);
}

ProviderProfile ProviderProfile::from_json(const std::string& text) {
  auto j = json::parse(text, nullptr, false);
  if (!j.is_object()) fail(ErrorCode::kConfigInvalid, "profile is not a JSON object");
  ProviderProfile p;
  try {
    p.auth_secret = hex_decode(j.at("auth_secret").get<std::string>());
    p.expected_measurement.digest = to_fixed<crypto::kDigestSize>(hex_decode(j.at("expected_measurement").get<std::string>()));
    if (j.contains("pinned_cert_hash") && !j["pinned_cert_hash"].is_null()) {
      p.pinned_cert_hash = to_fixed<crypto::kDigestSize>(hex_decode(j["pinned_cert_hash"].get<std::string>()));
    }
    p.vault_vchs = j.value("vault_vchs", std::string());
    p.service_onion = j.value("service_onion", std::string());
    auto key = j.value("vault_attestation_key", std::string());
    if (!key.empty()) p.vault_attestation_key = to_fixed<crypto::kPublicKeySize>(hex_decode(key));
    if (j.contains("provider_key_seed")) p.provider_key_seed = hex_decode(j["provider_key_seed"].get<std::string>());
    for (const auto& i : j.value("uptime_log", json::array())) {
      UptimeInterval u;
      u.connect_ms = i.at("connect_ms").get<double>();
      u.disconnect_ms = i.at("disconnect_ms").get<double>();
      u.connect_unix = i.value("connect_unix", std::int64_t{0});
      u.disconnect_unix = i.value("disconnect_unix", std::int64_t{0});
      u.purpose = i.value("purpose", std::string());
      p.uptime_log.push_back(u);
    }
  } catch (const json::exception& e) {
    fail(ErrorCode::kConfigInvalid, e.what());
  } catch (const Error& e) {
    fail(ErrorCode::kConfigInvalid, e.what());
  }
  return p;
}

std::string_view to_string(ProviderEventKind kind) {
  switch (kind) {
    case ProviderEventKind::kSessionOpen: return "session_open";
    case ProviderEventKind::kHpSubmitted: return "hp_submitted";
    case ProviderEventKind::kChannelEstablished: return "channel_established";
    case ProviderEventKind::kQuoteReceived: return "quote_received";
    case ProviderEventKind::kQuoteVerified: return "quote_verified";
    case ProviderEventKind::kQuoteRejected: return "quote_rejected";
    case ProviderEventKind::kAttestationSkipped: return "attestation_skipped";
    case ProviderEventKind::kSensitiveFrameSent: return "sensitive_frame_sent";
    case ProviderEventKind::kSessionClose: return "session_close";
  }
  return "unknown";
}

void UpdateReceipt::throw_if_partial() const {
  if (unapplied.empty()) return;
  std::string detail = "unapplied changes:";
  for (const auto& u : unapplied) detail += " [" + u + "]";
  fail(ErrorCode::kPartialFailure, detail);
}

// ---------------------------------------------------------------------------

ProviderSession ProviderSession::open(transport::Network& network, const std::string& onion,
                                      transport::CircuitProfile& circuit, const std::optional<crypto::Digest>& pin) {
  ProviderSession session(network.connect(onion, circuit));
  CertificateCheck check = pin ? pin_certificate(*pin) : CertificateCheck([](ByteView) {});
  session.channel_.emplace(SecureChannel::client(*session.connection_, check));
  return session;
}

ProviderSession ProviderSession::open_plaintext(transport::Network& network, const std::string& onion,
                                                transport::CircuitProfile& circuit) {
  return ProviderSession(network.connect(onion, circuit));
}

ProviderSession::~ProviderSession() { close(); }

HpResponse ProviderSession::request(const HpRequest& request) {
  if (request.auth && !channel_) {
    fail(ErrorCode::kInsecureChannel, "refusing to send credentials outside the secure channel");
  }
  if (!connection_) fail(ErrorCode::kTransportClosed, "session closed");
  auto body = encode_request(request);
  std::optional<Bytes> reply;
  if (channel_) {
    channel_->send_message(body);
    reply = channel_->receive_message();
  } else {
    connection_->send(std::move(body));
    reply = connection_->receive();
  }
  if (!reply) fail(ErrorCode::kTransportClosed, "host program closed the session");
  return decode_response(*reply);
}

const Bytes& ProviderSession::certificate() const {
  if (!channel_) fail(ErrorCode::kInsecureChannel, "plaintext session has no certificate");
  return channel_->server_certificate();
}

crypto::Digest ProviderSession::channel_binding() const {
  if (!channel_) fail(ErrorCode::kInsecureChannel, "plaintext session has no channel binding");
  return channel_->transcript_hash();
}

void ProviderSession::close() {
  channel_.reset();
  if (connection_) {
    connection_->close();
    connection_.reset();
  }
}

// ---------------------------------------------------------------------------

ProviderClient::ProviderClient(transport::Network& network, ProviderProfile profile,
                               transport::CircuitProfile circuit, ProviderOptions options)
    : network_(network), profile_(std::move(profile)), circuit_(std::move(circuit)), options_(options) {}

void ProviderClient::log(ProviderEventKind kind, std::string detail) {
  events_.push_back({session_seq_, kind, std::move(detail)});
}

Advertisement ProviderClient::advertisement() const {
  if (!profile_.pinned_cert_hash) fail(ErrorCode::kNotFound, "no certificate pinned yet");
  return {profile_.service_onion, hex_encode(*profile_.pinned_cert_hash)};
}

ProviderSession ProviderClient::open_attested(const std::string& purpose) {
  ++session_seq_;
  log(ProviderEventKind::kSessionOpen, purpose + " " + profile_.service_onion);
  auto session = ProviderSession::open(network_, profile_.service_onion, circuit_, profile_.pinned_cert_hash);
  log(ProviderEventKind::kChannelEstablished);
  if (!options_.verify_attestation) {
    log(ProviderEventKind::kAttestationSkipped);
    if (!profile_.pinned_cert_hash) profile_.pinned_cert_hash = crypto::sha256(session.certificate());
    return session;
  }

  HpRequest get_quote{RequestType::kClientGet, hp_path::kQuote, {}, std::nullopt};
  auto reply = session.request(get_quote);
  log(ProviderEventKind::kQuoteReceived, std::string(to_string(reply.status)));
  auto reject = [&](const std::string& why) {
    log(ProviderEventKind::kQuoteRejected, why);
    close_session(session);
    fail(ErrorCode::kQuoteMismatch, why);
  };
  if (!reply.ok()) reject("no quote: " + reply.detail);

  tee::ReportData expected{};
  auto cert_hash = crypto::sha256(session.certificate());
  std::copy(cert_hash.begin(), cert_hash.end(), expected.begin());
  bool valid = false;
  try {
    valid = tee::verify_quote(reply.data, profile_.expected_measurement, profile_.vault_attestation_key, expected);
  } catch (const Error& e) {
    reject(e.what());
  }
  if (!valid) reject("quote does not attest the expected program and certificate");
  log(ProviderEventKind::kQuoteVerified, hex_encode(cert_hash));
  return session;
}

void ProviderClient::close_session(ProviderSession& session) {
  session.close();
  log(ProviderEventKind::kSessionClose);
}

template <typename Fn>
auto ProviderClient::online(const std::string& purpose, Fn&& fn) {
  UptimeInterval interval{network_.clock().now_ms(), 0, unix_seconds(), 0, purpose};
  auto finish = [&] {
    interval.disconnect_ms = network_.clock().now_ms();
    interval.disconnect_unix = unix_seconds();
    profile_.uptime_log.push_back(interval);
  };
  try {
    if constexpr (std::is_void_v<decltype(fn())>) {
      fn();
      finish();
    } else {
      auto result = fn();
      finish();
      return result;
    }
  } catch (...) {
    finish();
    throw;
  }
}

HpResponse ProviderClient::send_authenticated(ProviderSession& session, HpRequest request, bool carries_content) {
  if (!session.secure()) fail(ErrorCode::kInsecureChannel, "authenticated request on a plaintext session");
  if (profile_.provider_key_seed) {
    auto key = crypto::SigningKey::from_seed(*profile_.provider_key_seed);
    auto sig = key.sign(provider_auth_message(session.channel_binding(), request));
    request.auth = Bytes(sig.begin(), sig.end());
  } else {
    request.auth = profile_.auth_secret;
  }
  log(ProviderEventKind::kSensitiveFrameSent,
      std::string(to_string(request.type)) + (carries_content ? " with content " : " ") + request.path);
  auto reply = session.request(request);
  if (!reply.ok() && error_code_of(reply.detail) == ErrorCode::kAuthRejected) {
    fail(ErrorCode::kAuthRejected, reply.detail);
  }
  return reply;
}

Advertisement ProviderClient::bootstrap(ByteView hp_bytes, const std::map<std::string, Bytes>& content) {
  if (tee::measure(hp_bytes) != profile_.expected_measurement) {
    fail(ErrorCode::kQuoteMismatch, "program bytes do not match the expected measurement");
  }
  online("bootstrap", [&] {
    ++session_seq_;
    log(ProviderEventKind::kSessionOpen, "submit " + profile_.vault_vchs);
    HpResponse submitted;
    {
      auto vchs = network_.connect(profile_.vault_vchs, circuit_);
      vchs->send(encode_request({RequestType::kSubmitHp, {}, Bytes(hp_bytes.begin(), hp_bytes.end()), std::nullopt}));
      auto reply = vchs->receive();
      vchs->close();
      log(ProviderEventKind::kSessionClose);
      if (!reply) fail(ErrorCode::kTransportClosed, "contact service closed the session");
      submitted = decode_response(*reply);
    }
    if (!submitted.ok()) fail_from_response(submitted, ErrorCode::kRejected);
    profile_.service_onion = to_string(submitted.data);
    log(ProviderEventKind::kHpSubmitted, profile_.service_onion);
    profile_.pinned_cert_hash.reset();

    std::optional<ProviderSession> session;
    for (int attempt = 1;; ++attempt) {
      try {
        session.emplace(open_attested("bootstrap"));
        break;
      } catch (const Error& e) {
        bool transient = e.code() == ErrorCode::kNotFound || e.code() == ErrorCode::kConnectFailed;
        if (!transient || attempt >= options_.bootstrap_attempts) throw;
        std::this_thread::sleep_for(std::chrono::milliseconds(50));
      }
    }
    auto cert_hash = crypto::sha256(session->certificate());
    try {
      for (const auto& [path, data] : content) {
        auto reply = send_authenticated(*session, {RequestType::kUpload, path, data, std::nullopt}, true);
        if (!reply.ok()) fail_from_response(reply, ErrorCode::kRejected);
      }
    } catch (...) {
      close_session(*session);
      throw;
    }
    profile_.pinned_cert_hash = cert_hash;
    close_session(*session);
  });
  return advertisement();
}

UpdateReceipt ProviderClient::update_content(const std::vector<ContentChange>& changes) {
  return online("update", [&] { return apply_changes(changes); });
}

UpdateReceipt ProviderClient::apply_changes(const std::vector<ContentChange>& changes) {
  auto session = open_attested("update");
  UpdateReceipt receipt;
  try {
    for (const auto& change : changes) {
      HpRequest req;
      req.path = change.path;
      if (change.op == ContentChange::Op::kUpload) {
        req.type = RequestType::kUpload;
        req.data = change.data;
      } else {
        req.type = RequestType::kRemove;
      }
      auto reply = send_authenticated(session, req, change.op == ContentChange::Op::kUpload);
      if (reply.ok()) {
        receipt.applied.push_back(change.path);
      } else {
        receipt.unapplied.push_back(change.path + ": " + reply.detail);
      }
    }
  } catch (...) {
    close_session(session);
    throw;
  }
  close_session(session);
  return receipt;
}

KeyMaterial ProviderClient::export_keys() {
  return online("export-keys", [&] {
    auto session = open_attested("export-keys");
    try {
      auto material = export_keys(session);
      close_session(session);
      return material;
    } catch (...) {
      close_session(session);
      throw;
    }
  });
}

KeyMaterial ProviderClient::export_keys(ProviderSession& session) {
  if (!session.secure()) fail(ErrorCode::kInsecureChannel, "key export requires the secure channel");
  auto reply = send_authenticated(session, {RequestType::kDownload, hp_path::kSecretKey, {}, std::nullopt}, false);
  if (!reply.ok()) fail_from_response(reply, ErrorCode::kRejected);
  KeyMaterial m;
  m.secret_seed = reply.data;
  m.certificate = session.certificate();
  return m;
}

void ProviderClient::import_keys(const KeyMaterial& material) {
  auto reply = online("import-keys", [&] {
    auto session = open_attested("import-keys");
    HpResponse r;
    try {
      r = send_authenticated(session, {RequestType::kUpload, hp_path::kSecretKey, material.serialize(), std::nullopt},
                             true);
    } catch (...) {
      close_session(session);
      throw;
    }
    close_session(session);
    return r;
  });
  if (!reply.ok()) fail_from_response(reply, ErrorCode::kImportRejected);
  profile_.pinned_cert_hash = crypto::sha256(material.certificate);
}

}  // namespace vaultor
