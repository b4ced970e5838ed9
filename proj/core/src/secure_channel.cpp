#include "vaultor/secure_channel.hpp"

#include <json.hpp>

#include "vaultor/certificate.hpp"
#include "vaultor/error.hpp"

namespace vaultor {

namespace {

constexpr std::string_view kTranscriptLabel = "vaultor-channel-v1";
constexpr std::uint8_t kMoreRecords = 0x00;
constexpr std::uint8_t kFinalRecord = 0x01;

void put_len(Bytes& out, std::size_t n) {
  for (int s = 24; s >= 0; s -= 8) out.push_back(static_cast<std::uint8_t>(n >> s));
}

crypto::Digest transcript(ByteView hello, ByteView cert) {
  Bytes t = to_bytes(kTranscriptLabel);
  put_len(t, hello.size());
  append(t, hello);
  put_len(t, cert.size());
  append(t, cert);
  return crypto::sha256(t);
}

Bytes signed_payload(const crypto::Digest& th, const crypto::PublicKey& server_eph) {
  return concat(th, server_eph);
}

struct DirectionKeys {
  crypto::AeadKey client_to_server;
  crypto::AeadKey server_to_client;
};

DirectionKeys derive_keys(ByteView shared, const crypto::Digest& th, const crypto::PublicKey& server_eph) {
  auto salt = crypto::sha256(signed_payload(th, server_eph));
  auto c2s = crypto::hkdf_sha256(shared, salt, as_bytes("vaultor c2s"), crypto::kAeadKeySize);
  auto s2c = crypto::hkdf_sha256(shared, salt, as_bytes("vaultor s2c"), crypto::kAeadKeySize);
  DirectionKeys k{to_fixed<crypto::kAeadKeySize>(c2s), to_fixed<crypto::kAeadKeySize>(s2c)};
  secure_wipe(c2s);
  secure_wipe(s2c);
  return k;
}

crypto::AeadNonce record_nonce(std::uint64_t seq) {
  crypto::AeadNonce n{};
  for (int i = 0; i < 8; ++i) n[4 + i] = static_cast<std::uint8_t>(seq >> (56 - 8 * i));
  return n;
}

[[noreturn]] void auth_failure(const std::string& what) { fail(ErrorCode::kChannelAuthFailure, what); }

}  // namespace

CertificateCheck pin_certificate(const crypto::Digest& pin) {
  return [pin](ByteView cert) {
    if (crypto::sha256(cert) != pin) auth_failure("server certificate does not match pinned hash");
  };
}

SecureChannel::SecureChannel(transport::FrameStream& stream, crypto::AeadKey send_key,
                             crypto::AeadKey recv_key, crypto::Digest th, Bytes server_certificate)
    : stream_(&stream),
      send_key_(send_key),
      recv_key_(recv_key),
      transcript_hash_(th),
      server_certificate_(std::move(server_certificate)) {}

bool SecureChannel::is_client_hello(ByteView frame) {
  auto j = nlohmann::json::parse(to_string(frame), nullptr, false);
  return j.is_object() && j.contains("type") && j["type"] == "hello";
}

SecureChannel SecureChannel::client(transport::FrameStream& stream, const CertificateCheck& check) {
  crypto::KeyAgreement eph;
  auto hello = to_bytes(nlohmann::json{{"type", "hello"}, {"eph", base64_encode(eph.public_key())}}.dump());
  stream.send(hello);

  auto frame = stream.receive();
  if (!frame) auth_failure("server closed during handshake");
  Bytes cert_bytes;
  crypto::PublicKey server_eph{};
  Bytes signature;
  try {
    auto j = nlohmann::json::parse(to_string(*frame));
    if (j.at("type").get<std::string>() != "server_hello") auth_failure("unexpected handshake message");
    cert_bytes = base64_decode(j.at("certificate").get<std::string>());
    server_eph = to_fixed<crypto::kPublicKeySize>(base64_decode(j.at("eph").get<std::string>()));
    signature = base64_decode(j.at("signature").get<std::string>());
    if (j.size() != 4) auth_failure("unexpected fields in server hello");
  } catch (const nlohmann::json::exception& e) {
    auth_failure(std::string("malformed server hello: ") + e.what());
  } catch (const Error& e) {
    if (e.code() == ErrorCode::kChannelAuthFailure) throw;
    auth_failure(std::string("malformed server hello: ") + e.what());
  }

  if (check) check(cert_bytes);

  ServiceCertificate cert;
  try {
    cert = ServiceCertificate::parse(cert_bytes);
  } catch (const Error& e) {
    auth_failure(std::string("bad certificate: ") + e.what());
  }
  if (!cert.verify_self_signature()) auth_failure("certificate self-signature invalid");

  auto th = transcript(hello, cert_bytes);
  if (!crypto::verify_signature(cert.public_key, signed_payload(th, server_eph), signature)) {
    auth_failure("handshake signature invalid");
  }
  Bytes shared;
  try {
    shared = eph.derive(server_eph);
  } catch (const Error&) {
    auth_failure("bad server key share");
  }
  auto keys = derive_keys(shared, th, server_eph);
  secure_wipe(shared);
  return SecureChannel(stream, keys.client_to_server, keys.server_to_client, th, std::move(cert_bytes));
}

SecureChannel SecureChannel::server(transport::FrameStream& stream, ByteView client_hello,
                                    const crypto::SigningKey& service_key, ByteView certificate_bytes) {
  crypto::PublicKey client_eph{};
  try {
    auto j = nlohmann::json::parse(to_string(client_hello));
    if (j.at("type").get<std::string>() != "hello" || j.size() != 2) auth_failure("bad client hello");
    client_eph = to_fixed<crypto::kPublicKeySize>(base64_decode(j.at("eph").get<std::string>()));
  } catch (const nlohmann::json::exception& e) {
    auth_failure(std::string("malformed client hello: ") + e.what());
  } catch (const Error& e) {
    if (e.code() == ErrorCode::kChannelAuthFailure) throw;
    auth_failure(std::string("malformed client hello: ") + e.what());
  }

  crypto::KeyAgreement eph;
  auto th = transcript(client_hello, certificate_bytes);
  auto sig = service_key.sign(signed_payload(th, eph.public_key()));
  nlohmann::json reply{{"type", "server_hello"},
                       {"certificate", base64_encode(certificate_bytes)},
                       {"eph", base64_encode(eph.public_key())},
                       {"signature", base64_encode(sig)}};
  Bytes shared;
  try {
    shared = eph.derive(client_eph);
  } catch (const Error&) {
    auth_failure("bad client key share");
  }
  stream.send(to_bytes(reply.dump()));
  auto keys = derive_keys(shared, th, eph.public_key());
  secure_wipe(shared);
  return SecureChannel(stream, keys.server_to_client, keys.client_to_server, th,
                       Bytes(certificate_bytes.begin(), certificate_bytes.end()));
}

void SecureChannel::send_message(ByteView plaintext) {
  if (plaintext.size() > kMaxMessage) fail(ErrorCode::kMalformedMessage, "message too large");
  std::size_t offset = 0;
  do {
    auto n = std::min(kRecordChunk, plaintext.size() - offset);
    bool last = offset + n == plaintext.size();
    Bytes record;
    record.reserve(n + 1);
    record.push_back(last ? kFinalRecord : kMoreRecords);
    append(record, plaintext.subspan(offset, n));
    stream_->send(crypto::aead_seal(send_key_, record_nonce(send_seq_++), {}, record));
    offset += n;
  } while (offset < plaintext.size());
}

std::optional<Bytes> SecureChannel::receive_message(MessageTiming* timing) {
  Bytes message;
  bool first = true;
  for (;;) {
    auto frame = stream_->receive();
    if (!frame) {
      if (first) return std::nullopt;
      auth_failure("stream closed mid-message");
    }
    if (timing) {
      auto t = stream_->clock().now();
      if (first) timing->first_record = t;
      timing->last_record = t;
    }
    first = false;
    Bytes record;
    try {
      record = crypto::aead_open(recv_key_, record_nonce(recv_seq_), {}, *frame);
    } catch (const Error&) {
      auth_failure("record failed authentication");
    }
    ++recv_seq_;
    if (record.empty()) auth_failure("empty record");
    append(message, ByteView(record).subspan(1));
    if (message.size() > kMaxMessage) auth_failure("message too large");
    if (record[0] == kFinalRecord) return message;
    if (record[0] != kMoreRecords) auth_failure("bad record flag");
  }
}

}  // namespace vaultor
