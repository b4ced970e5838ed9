#include "vaultor/client_fetch.hpp"

#include <fstream>
#include <json.hpp>
#include <mutex>
#include <sstream>

#include "vaultor/error.hpp"

namespace vaultor {

using nlohmann::json;

PinStore::PinStore(const PinStore& other) {
  std::shared_lock lock(other.mu_);
  pins_ = other.pins_;
}

PinStore& PinStore::operator=(const PinStore& other) {
  if (this == &other) return *this;
  std::map<std::string, crypto::Digest> copy;
  {
    std::shared_lock lock(other.mu_);
    copy = other.pins_;
  }
  std::unique_lock lock(mu_);
  pins_ = std::move(copy);
  return *this;
}

void PinStore::import_advertisement(const Advertisement& ad, bool replace) {
  auto checked = Advertisement::from_json(ad.to_json());
  auto hash = to_fixed<crypto::kDigestSize>(hex_decode(checked.cert_hash));
  std::unique_lock lock(mu_);
  auto it = pins_.find(checked.onion_url);
  if (it != pins_.end() && it->second != hash && !replace) {
    fail(ErrorCode::kPinConflict, checked.onion_url + " is already pinned to " + hex_encode(it->second));
  }
  pins_[checked.onion_url] = hash;
}

std::optional<crypto::Digest> PinStore::find(const std::string& onion) const {
  std::shared_lock lock(mu_);
  auto it = pins_.find(onion);
  if (it == pins_.end()) return std::nullopt;
  return it->second;
}

std::size_t PinStore::size() const {
  std::shared_lock lock(mu_);
  return pins_.size();
}

PinStore PinStore::load(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) fail(ErrorCode::kNotFound, "cannot read pin file " + file.string());
  std::stringstream ss;
  ss << in.rdbuf();
  auto j = json::parse(ss.str(), nullptr, false);
  PinStore store;
  if (j.is_array()) {
    for (const auto& ad : j) store.import_advertisement(Advertisement::from_json(ad.dump()));
  } else if (j.is_object() && j.contains("onion_url")) {
    store.import_advertisement(Advertisement::from_json(j.dump()));
  } else if (j.is_object()) {
    for (auto it = j.begin(); it != j.end(); ++it) {
      if (!it->is_string()) fail(ErrorCode::kRejected, "pin for " + it.key() + " is not a string");
      store.import_advertisement({it.key(), it->get<std::string>()});
    }
  } else {
    fail(ErrorCode::kRejected, "pin file is not JSON");
  }
  return store;
}

void PinStore::save(const std::filesystem::path& file) const {
  json j = json::object();
  {
    std::shared_lock lock(mu_);
    for (const auto& [onion, hash] : pins_) j[onion] = hex_encode(hash);
  }
  std::ofstream out(file, std::ios::trunc);
  out << j.dump(2) << "\n";
  if (!out) fail(ErrorCode::kConfigInvalid, "cannot write pin file " + file.string());
}

std::string FetchResult::to_json() const {
  return json{{"status", std::string(vaultor::to_string(status))},
              {"ttfb_ms", ttfb_ms},
              {"ttlb_ms", ttlb_ms},
              {"stale", stale},
              {"body_sha256", hex_encode(body_sha256)}}
      .dump();
}

ClientSession ClientSession::open(transport::Network& network, const std::string& onion, const PinStore& pins,
                                  transport::CircuitProfile& profile) {
  auto pin = pins.find(onion);
  if (!pin) fail(ErrorCode::kNotFound, "no pinned certificate for " + onion);
  ClientSession s;
  auto& clock = network.clock();
  auto t0 = clock.now();
  s.connection_ = network.connect(onion, profile);
  auto expected = *pin;
  crypto::Digest served{};
  s.channel_.emplace(SecureChannel::client(*s.connection_, [&](ByteView cert) {
    served = crypto::sha256(cert);
    if (served != expected) {
      fail(ErrorCode::kPinMismatch, "served certificate " + hex_encode(served) + " does not match the pin");
    }
  }));
  s.served_cert_hash_ = served;
  s.establish_ms_ = to_ms(clock.now() - t0);
  return s;
}

ClientSession::~ClientSession() { close(); }

void ClientSession::close() {
  channel_.reset();
  if (connection_) {
    connection_->close();
    connection_.reset();
  }
}

FetchResult ClientSession::get(const std::string& path) {
  if (!channel_) fail(ErrorCode::kTransportClosed, "session closed");
  auto& clock = connection_->clock();
  auto t0 = clock.now();
  channel_->send_message(encode_request({RequestType::kClientGet, path, {}, std::nullopt}));
  ++requests_sent_;
  MessageTiming timing;
  auto reply = channel_->receive_message(&timing);
  if (!reply) fail(ErrorCode::kTransportClosed, "service closed the session");
  auto response = decode_response(*reply);
  if (!response.ok()) {
    fail(error_code_of(response.detail).value_or(ErrorCode::kRejected), response.detail);
  }
  FetchResult r;
  r.status = response.status;
  r.detail = response.detail;
  r.stale = response.status == ResponseStatus::kStaleWarning;
  r.body = std::move(response.data);
  r.body_sha256 = crypto::sha256(r.body);
  r.served_cert_hash = served_cert_hash_;
  r.ttfb_ms = to_ms(timing.first_record - t0);
  r.ttlb_ms = to_ms(timing.last_record - t0);
  r.establish_ms = establish_ms_;
  return r;
}

FetchResult fetch(transport::Network& network, const std::string& onion, const std::string& path,
                  const PinStore& pins, transport::CircuitProfile& profile) {
  auto session = ClientSession::open(network, onion, pins, profile);
  auto result = session.get(path);
  session.close();
  return result;
}

}  // namespace vaultor
