#include "vaultor/certificate.hpp"

#include <json.hpp>

#include "vaultor/error.hpp"

namespace vaultor {

namespace {

constexpr int kCertificateVersion = 1;

nlohmann::json tbs_json(const ServiceCertificate& c) {
  return {{"version", kCertificateVersion},
          {"public_key", hex_encode(c.public_key)},
          {"service_name", c.service_name},
          {"not_before", c.not_before},
          {"not_after", c.not_after}};
}

}  // namespace

ServiceCertificate ServiceCertificate::issue(const crypto::SigningKey& key, std::string service_name,
                                             std::int64_t not_before, std::int64_t not_after) {
  ServiceCertificate c;
  c.public_key = key.public_key();
  c.service_name = std::move(service_name);
  c.not_before = not_before;
  c.not_after = not_after;
  c.self_signature = key.sign(c.to_be_signed());
  return c;
}

Bytes ServiceCertificate::to_be_signed() const {
  auto s = "vaultor-cert-tbs:" + tbs_json(*this).dump();
  return to_bytes(s);
}

Bytes ServiceCertificate::serialize() const {
  auto j = tbs_json(*this);
  j["signature"] = hex_encode(self_signature);
  return to_bytes(j.dump());
}

ServiceCertificate ServiceCertificate::parse(ByteView bytes) {
  auto j = nlohmann::json::parse(to_string(bytes), nullptr, false);
  if (!j.is_object()) fail(ErrorCode::kMalformedMessage, "certificate is not a JSON object");
  ServiceCertificate c;
  try {
    if (j.at("version").get<int>() != kCertificateVersion) {
      fail(ErrorCode::kMalformedMessage, "unsupported certificate version");
    }
    c.public_key = to_fixed<crypto::kPublicKeySize>(hex_decode(j.at("public_key").get<std::string>()));
    c.service_name = j.at("service_name").get<std::string>();
    c.not_before = j.at("not_before").get<std::int64_t>();
    c.not_after = j.at("not_after").get<std::int64_t>();
    c.self_signature = to_fixed<crypto::kSignatureSize>(hex_decode(j.at("signature").get<std::string>()));
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kMalformedMessage, e.what());
  }
  // Only the canonical encoding is a certificate; anything else would give the
  // same logical certificate two different pinning hashes.
  auto canonical = c.serialize();
  if (!std::equal(canonical.begin(), canonical.end(), bytes.begin(), bytes.end())) {
    fail(ErrorCode::kMalformedMessage, "certificate is not canonically encoded");
  }
  return c;
}

bool ServiceCertificate::verify_self_signature() const {
  return crypto::verify_signature(public_key, to_be_signed(), self_signature);
}

}  // namespace vaultor
