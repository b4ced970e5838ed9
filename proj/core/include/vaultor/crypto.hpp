#pragma once

#include <cstddef>

#include "vaultor/bytes.hpp"

namespace vaultor::crypto {

inline constexpr std::size_t kDigestSize = 32;
inline constexpr std::size_t kPublicKeySize = 32;
inline constexpr std::size_t kSeedSize = 32;
inline constexpr std::size_t kSignatureSize = 64;
inline constexpr std::size_t kAeadKeySize = 32;
inline constexpr std::size_t kAeadNonceSize = 12;
inline constexpr std::size_t kAeadTagSize = 16;

using Digest = FixedBytes<kDigestSize>;
using PublicKey = FixedBytes<kPublicKeySize>;
using Signature = FixedBytes<kSignatureSize>;
using AeadKey = FixedBytes<kAeadKeySize>;
using AeadNonce = FixedBytes<kAeadNonceSize>;

Digest sha256(ByteView data);

/// Thread-safe CSPRNG.
Bytes random_bytes(std::size_t n);

template <std::size_t N>
FixedBytes<N> random_array() {
  auto b = random_bytes(N);
  return to_fixed<N>(b);
}

Bytes hkdf_sha256(ByteView ikm, ByteView salt, ByteView info, std::size_t length);

/// Ed25519 key pair held as its 32-byte seed. The seed is wiped on
/// destruction.
class SigningKey {
 public:
  static SigningKey generate();
  static SigningKey from_seed(ByteView seed);

  SigningKey(const SigningKey&) = default;
  SigningKey& operator=(const SigningKey&) = default;
  SigningKey(SigningKey&&) noexcept = default;
  SigningKey& operator=(SigningKey&&) noexcept = default;
  ~SigningKey();

  const PublicKey& public_key() const { return public_key_; }
  Signature sign(ByteView message) const;
  /// Raw seed; only for sealing or authenticated export.
  const FixedBytes<kSeedSize>& seed() const { return seed_; }

 private:
  SigningKey() = default;

  FixedBytes<kSeedSize> seed_{};
  PublicKey public_key_{};
};

bool verify_signature(const PublicKey& key, ByteView message, ByteView signature);

/// X25519 ephemeral key pair for one handshake.
class KeyAgreement {
 public:
  KeyAgreement();
  ~KeyAgreement();
  KeyAgreement(const KeyAgreement&) = delete;
  KeyAgreement& operator=(const KeyAgreement&) = delete;

  const PublicKey& public_key() const { return public_key_; }
  /// Throws Error(kCryptoFailure) for low-order or malformed peer keys.
  Bytes derive(const PublicKey& peer) const;

 private:
  FixedBytes<32> private_key_{};
  PublicKey public_key_{};
};

/// AES-256-GCM. Output of seal is ciphertext || tag.
Bytes aead_seal(const AeadKey& key, const AeadNonce& nonce, ByteView aad, ByteView plaintext);
/// Throws Error(kCryptoFailure) on authentication failure.
Bytes aead_open(const AeadKey& key, const AeadNonce& nonce, ByteView aad, ByteView ciphertext);

}  // namespace vaultor::crypto
