#include "vaultor/crypto.hpp"

#include <memory>
#include <openssl/evp.h>
#include <openssl/kdf.h>
#include <openssl/rand.h>

#include "vaultor/error.hpp"

namespace vaultor::crypto {

namespace {

struct PkeyDeleter {
  void operator()(EVP_PKEY* p) const { EVP_PKEY_free(p); }
};
struct PkeyCtxDeleter {
  void operator()(EVP_PKEY_CTX* p) const { EVP_PKEY_CTX_free(p); }
};
struct MdCtxDeleter {
  void operator()(EVP_MD_CTX* p) const { EVP_MD_CTX_free(p); }
};
struct CipherCtxDeleter {
  void operator()(EVP_CIPHER_CTX* p) const { EVP_CIPHER_CTX_free(p); }
};

using PkeyPtr = std::unique_ptr<EVP_PKEY, PkeyDeleter>;
using PkeyCtxPtr = std::unique_ptr<EVP_PKEY_CTX, PkeyCtxDeleter>;
using MdCtxPtr = std::unique_ptr<EVP_MD_CTX, MdCtxDeleter>;
using CipherCtxPtr = std::unique_ptr<EVP_CIPHER_CTX, CipherCtxDeleter>;

void check(int ok, const char* what) {
  if (ok != 1) fail(ErrorCode::kCryptoFailure, what);
}

PublicKey raw_public(EVP_PKEY* key) {
  PublicKey out{};
  std::size_t len = out.size();
  check(EVP_PKEY_get_raw_public_key(key, out.data(), &len), "get_raw_public_key");
  if (len != out.size()) fail(ErrorCode::kCryptoFailure, "unexpected public key size");
  return out;
}

PkeyPtr ed25519_private(const FixedBytes<kSeedSize>& seed) {
  PkeyPtr key(EVP_PKEY_new_raw_private_key(EVP_PKEY_ED25519, nullptr, seed.data(), seed.size()));
  if (!key) fail(ErrorCode::kCryptoFailure, "ed25519 private key");
  return key;
}

}  // namespace

Digest sha256(ByteView data) {
  Digest out{};
  unsigned int len = 0;
  check(EVP_Digest(data.data(), data.size(), out.data(), &len, EVP_sha256(), nullptr), "sha256");
  return out;
}

Bytes random_bytes(std::size_t n) {
  Bytes out(n);
  if (n > 0) check(RAND_bytes(out.data(), static_cast<int>(n)), "RAND_bytes");
  return out;
}

Bytes hkdf_sha256(ByteView ikm, ByteView salt, ByteView info, std::size_t length) {
  PkeyCtxPtr ctx(EVP_PKEY_CTX_new_id(EVP_PKEY_HKDF, nullptr));
  if (!ctx) fail(ErrorCode::kCryptoFailure, "hkdf ctx");
  check(EVP_PKEY_derive_init(ctx.get()), "hkdf init");
  check(EVP_PKEY_CTX_set_hkdf_md(ctx.get(), EVP_sha256()), "hkdf md");
  check(EVP_PKEY_CTX_set1_hkdf_salt(ctx.get(), salt.data(), static_cast<int>(salt.size())),
        "hkdf salt");
  check(EVP_PKEY_CTX_set1_hkdf_key(ctx.get(), ikm.data(), static_cast<int>(ikm.size())),
        "hkdf key");
  check(EVP_PKEY_CTX_add1_hkdf_info(ctx.get(), info.data(), static_cast<int>(info.size())),
        "hkdf info");
  Bytes out(length);
  std::size_t len = length;
  check(EVP_PKEY_derive(ctx.get(), out.data(), &len), "hkdf derive");
  return out;
}

SigningKey SigningKey::generate() {
  auto seed = random_bytes(kSeedSize);
  auto key = from_seed(seed);
  secure_wipe(seed);
  return key;
}

SigningKey SigningKey::from_seed(ByteView seed) {
  SigningKey key;
  key.seed_ = to_fixed<kSeedSize>(seed);
  auto pkey = ed25519_private(key.seed_);
  key.public_key_ = raw_public(pkey.get());
  return key;
}

SigningKey::~SigningKey() { secure_wipe(seed_); }

Signature SigningKey::sign(ByteView message) const {
  auto pkey = ed25519_private(seed_);
  MdCtxPtr ctx(EVP_MD_CTX_new());
  check(EVP_DigestSignInit(ctx.get(), nullptr, nullptr, nullptr, pkey.get()), "sign init");
  Signature sig{};
  std::size_t len = sig.size();
  check(EVP_DigestSign(ctx.get(), sig.data(), &len, message.data(), message.size()), "sign");
  return sig;
}

bool verify_signature(const PublicKey& key, ByteView message, ByteView signature) {
  if (signature.size() != kSignatureSize) return false;
  PkeyPtr pkey(EVP_PKEY_new_raw_public_key(EVP_PKEY_ED25519, nullptr, key.data(), key.size()));
  if (!pkey) return false;
  MdCtxPtr ctx(EVP_MD_CTX_new());
  if (EVP_DigestVerifyInit(ctx.get(), nullptr, nullptr, nullptr, pkey.get()) != 1) return false;
  return EVP_DigestVerify(ctx.get(), signature.data(), signature.size(), message.data(),
                          message.size()) == 1;
}

KeyAgreement::KeyAgreement() {
  auto raw = random_bytes(private_key_.size());
  std::copy(raw.begin(), raw.end(), private_key_.begin());
  secure_wipe(raw);
  PkeyPtr pkey(EVP_PKEY_new_raw_private_key(EVP_PKEY_X25519, nullptr, private_key_.data(),
                                            private_key_.size()));
  if (!pkey) fail(ErrorCode::kCryptoFailure, "x25519 key");
  public_key_ = raw_public(pkey.get());
}

KeyAgreement::~KeyAgreement() { secure_wipe(private_key_); }

Bytes KeyAgreement::derive(const PublicKey& peer) const {
  PkeyPtr mine(EVP_PKEY_new_raw_private_key(EVP_PKEY_X25519, nullptr, private_key_.data(),
                                            private_key_.size()));
  PkeyPtr theirs(EVP_PKEY_new_raw_public_key(EVP_PKEY_X25519, nullptr, peer.data(), peer.size()));
  if (!mine || !theirs) fail(ErrorCode::kCryptoFailure, "x25519 keys");
  PkeyCtxPtr ctx(EVP_PKEY_CTX_new(mine.get(), nullptr));
  check(EVP_PKEY_derive_init(ctx.get()), "x25519 init");
  check(EVP_PKEY_derive_set_peer(ctx.get(), theirs.get()), "x25519 peer");
  Bytes shared(32);
  std::size_t len = shared.size();
  check(EVP_PKEY_derive(ctx.get(), shared.data(), &len), "x25519 derive");
  return shared;
}

Bytes aead_seal(const AeadKey& key, const AeadNonce& nonce, ByteView aad, ByteView plaintext) {
  CipherCtxPtr ctx(EVP_CIPHER_CTX_new());
  check(EVP_EncryptInit_ex(ctx.get(), EVP_aes_256_gcm(), nullptr, key.data(), nonce.data()),
        "gcm init");
  int len = 0;
  if (!aad.empty()) {
    check(EVP_EncryptUpdate(ctx.get(), nullptr, &len, aad.data(), static_cast<int>(aad.size())),
          "gcm aad");
  }
  Bytes out(plaintext.size() + kAeadTagSize);
  int written = 0;
  if (!plaintext.empty()) {
    check(EVP_EncryptUpdate(ctx.get(), out.data(), &len, plaintext.data(),
                            static_cast<int>(plaintext.size())),
          "gcm update");
    written = len;
  }
  check(EVP_EncryptFinal_ex(ctx.get(), out.data() + written, &len), "gcm final");
  written += len;
  check(EVP_CIPHER_CTX_ctrl(ctx.get(), EVP_CTRL_GCM_GET_TAG, kAeadTagSize, out.data() + written),
        "gcm tag");
  out.resize(written + kAeadTagSize);
  return out;
}

Bytes aead_open(const AeadKey& key, const AeadNonce& nonce, ByteView aad, ByteView ciphertext) {
  if (ciphertext.size() < kAeadTagSize) fail(ErrorCode::kCryptoFailure, "ciphertext too short");
  const std::size_t body = ciphertext.size() - kAeadTagSize;
  CipherCtxPtr ctx(EVP_CIPHER_CTX_new());
  check(EVP_DecryptInit_ex(ctx.get(), EVP_aes_256_gcm(), nullptr, key.data(), nonce.data()),
        "gcm init");
  int len = 0;
  if (!aad.empty()) {
    check(EVP_DecryptUpdate(ctx.get(), nullptr, &len, aad.data(), static_cast<int>(aad.size())),
          "gcm aad");
  }
  Bytes out(body);
  int written = 0;
  if (body > 0) {
    check(EVP_DecryptUpdate(ctx.get(), out.data(), &len, ciphertext.data(), static_cast<int>(body)),
          "gcm update");
    written = len;
  }
  Bytes tag(ciphertext.begin() + body, ciphertext.end());
  check(EVP_CIPHER_CTX_ctrl(ctx.get(), EVP_CTRL_GCM_SET_TAG, kAeadTagSize, tag.data()), "gcm tag");
  if (EVP_DecryptFinal_ex(ctx.get(), out.data() + written, &len) != 1) {
    secure_wipe(out);
    fail(ErrorCode::kCryptoFailure, "aead authentication failed");
  }
  return out;
}

}  // namespace vaultor::crypto
