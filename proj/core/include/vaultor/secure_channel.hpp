#pragma once

#include <functional>
#include <optional>

#include "vaultor/bytes.hpp"
#include "vaultor/clock.hpp"
#include "vaultor/crypto.hpp"
#include "vaultor/transport.hpp"

namespace vaultor {

/// Arrival times of the first and last record of one message.
struct MessageTiming {
  Clock::Duration first_record{};
  Clock::Duration last_record{};
};

/// Called with the raw certificate bytes from the server hello before any
/// key material is derived; throw to abort the handshake.
using CertificateCheck = std::function<void(ByteView certificate_bytes)>;

/// Throws Error(kChannelAuthFailure) unless SHA-256(cert) equals `pin`.
CertificateCheck pin_certificate(const crypto::Digest& pin);

/// Authenticated record layer established by an ephemeral X25519 exchange in
/// which the server signs the transcript hash with S_srv.
///
///   client -> {"type":"hello","eph":b64}
///   server -> {"type":"server_hello","certificate":b64,"eph":b64,"signature":b64}
///
/// transcript_hash = SHA-256(label || len(hello) || hello || len(cert) || cert)
/// signature = Sign(S_srv, transcript_hash || server_eph)
///
/// Messages are split into AES-256-GCM records of at most kRecordChunk bytes
/// with per-direction keys and sequence-number nonces.
class SecureChannel {
 public:
  static constexpr std::size_t kRecordChunk = 16 * 1024;
  static constexpr std::size_t kMaxMessage = 48u << 20;

  /// Sends the hello and completes the handshake. Any signature, certificate,
  /// or framing failure throws Error(kChannelAuthFailure) unless `check`
  /// throws something else first.
  static SecureChannel client(transport::FrameStream& stream, const CertificateCheck& check);

  /// `client_hello` is the first frame already read from the stream.
  static SecureChannel server(transport::FrameStream& stream, ByteView client_hello,
                              const crypto::SigningKey& service_key, ByteView certificate_bytes);

  /// True when a first frame looks like a client hello.
  static bool is_client_hello(ByteView frame);

  void send_message(ByteView plaintext);
  /// nullopt on orderly close; throws Error(kChannelAuthFailure) on any
  /// record that fails authentication.
  std::optional<Bytes> receive_message(MessageTiming* timing = nullptr);

  /// Channel binding value, identical on both ends.
  const crypto::Digest& transcript_hash() const { return transcript_hash_; }
  const Bytes& server_certificate() const { return server_certificate_; }
  transport::FrameStream& stream() { return *stream_; }

 private:
  SecureChannel(transport::FrameStream& stream, crypto::AeadKey send_key, crypto::AeadKey recv_key,
                crypto::Digest transcript, Bytes server_certificate);

  transport::FrameStream* stream_;
  crypto::AeadKey send_key_;
  crypto::AeadKey recv_key_;
  std::uint64_t send_seq_ = 0;
  std::uint64_t recv_seq_ = 0;
  crypto::Digest transcript_hash_;
  Bytes server_certificate_;
};

}  // namespace vaultor
