#include <gtest/gtest.h>

#include <random>
#include <thread>

#include "../support/harness.hpp"
#include "vaultor/certificate.hpp"
#include "vaultor/secure_channel.hpp"
#include "vaultor/wire.hpp"

namespace vaultor {
namespace {

template <typename Fn>
ErrorCode code_of(Fn&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "expected an Error";
  return ErrorCode::kCryptoFailure;
}

TEST(Bytes, HexRoundTripAndRejects) {
  Bytes b{0x00, 0xab, 0xff};
  EXPECT_EQ(hex_encode(b), "00abff");
  EXPECT_EQ(hex_decode("00ABff"), b);
  EXPECT_EQ(code_of([] { hex_decode("abc"); }), ErrorCode::kMalformedMessage);
  EXPECT_EQ(code_of([] { hex_decode("zz"); }), ErrorCode::kMalformedMessage);
}

TEST(Bytes, Base64IsStrict) {
  EXPECT_EQ(base64_encode(to_bytes("foobar")), "Zm9vYmFy");
  EXPECT_EQ(base64_encode(to_bytes("fo")), "Zm8=");
  EXPECT_EQ(base64_decode("Zm8="), to_bytes("fo"));
  EXPECT_EQ(base64_decode(""), Bytes{});
  EXPECT_EQ(code_of([] { base64_decode("Zm8"); }), ErrorCode::kMalformedMessage);
  EXPECT_EQ(code_of([] { base64_decode("Zm9="); }), ErrorCode::kMalformedMessage);
  EXPECT_EQ(code_of([] { base64_decode("Zm8=\n"); }), ErrorCode::kMalformedMessage);
  EXPECT_EQ(code_of([] { base64_decode("Z!8="); }), ErrorCode::kMalformedMessage);

  std::mt19937 rng(7);
  for (int i = 0; i < 200; ++i) {
    Bytes data(rng() % 100);
    for (auto& x : data) x = static_cast<std::uint8_t>(rng());
    EXPECT_EQ(base64_decode(base64_encode(data)), data);
  }
}

TEST(Bytes, Base32AndSubsequence) {
  EXPECT_EQ(base32_encode(to_bytes("foobar")), "mzxw6ytboi");
  Bytes hay = to_bytes("abcdefgh");
  EXPECT_TRUE(contains_subsequence(hay, as_bytes("cde")));
  EXPECT_FALSE(contains_subsequence(hay, as_bytes("ced")));
  EXPECT_TRUE(contains_subsequence(hay, Bytes{}));
}

TEST(Crypto, Sha256KnownAnswer) {
  EXPECT_EQ(hex_encode(crypto::sha256(as_bytes("HPv1"))),
            "f42da82520fa206b2cfb8138c9037732a20551e04e1348dc583d24a7b48a6277");
  EXPECT_EQ(hex_encode(crypto::sha256(Bytes{})),
            "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
}

TEST(Crypto, HkdfRfc5869Case1) {
  auto okm = crypto::hkdf_sha256(Bytes(22, 0x0b),
                                 hex_decode("000102030405060708090a0b0c"), hex_decode("f0f1f2f3f4f5f6f7f8f9"), 42);
  EXPECT_EQ(hex_encode(okm),
            "3cb25f25faacd57a90434f64d0362f2a2d2d0a90cf1a5a4c5db02d56ecc4c5bf34007208d5b887185865");
}

TEST(Crypto, Ed25519Rfc8032Test1) {
  auto key = crypto::SigningKey::from_seed(
      hex_decode("9d61b19deffd5a60ba844af492ec2cc44449c5697b326919703bac031cae7f60"));
  EXPECT_EQ(hex_encode(key.public_key()), "d75a980182b10ab7d54bfed3c964073a0ee172f3daa62325af021a68f707511a");
  auto sig = key.sign(Bytes{});
  EXPECT_EQ(hex_encode(sig),
            "e5564300c360ac729086e2cc806e828a84877f1eb8e5d974d873e065224901555fb8821590a33bacc61e39701cf9b46bd25bf5f0595bbe24655141438e7a100b");
  EXPECT_TRUE(crypto::verify_signature(key.public_key(), Bytes{}, sig));
  sig[10] ^= 1;
  EXPECT_FALSE(crypto::verify_signature(key.public_key(), Bytes{}, sig));
  EXPECT_FALSE(crypto::verify_signature(key.public_key(), Bytes{}, Bytes(10)));
}

TEST(Crypto, AesGcmKnownAnswer) {
  crypto::AeadKey key{};
  crypto::AeadNonce nonce{};
  EXPECT_EQ(hex_encode(crypto::aead_seal(key, nonce, {}, {})), "530f8afbc74536b9a963b4f1c4cb738b");
  EXPECT_EQ(hex_encode(crypto::aead_seal(key, nonce, {}, Bytes(16))),
            "cea7403d4d606b6e074ec5d3baf39d18d0d1c8a799996bf0265b98b5d48ab919");
}

TEST(Crypto, AeadRejectsEveryTamper) {
  auto key = crypto::random_array<crypto::kAeadKeySize>();
  auto nonce = crypto::random_array<crypto::kAeadNonceSize>();
  Bytes aad = to_bytes("aad");
  Bytes ct = crypto::aead_seal(key, nonce, aad, to_bytes("attack at dawn"));
  EXPECT_EQ(crypto::aead_open(key, nonce, aad, ct), to_bytes("attack at dawn"));
  for (std::size_t bit = 0; bit < ct.size() * 8; ++bit) {
    Bytes bad = ct;
    bad[bit / 8] ^= static_cast<std::uint8_t>(1u << (bit % 8));
    EXPECT_EQ(code_of([&] { crypto::aead_open(key, nonce, aad, bad); }), ErrorCode::kCryptoFailure);
  }
  EXPECT_EQ(code_of([&] { crypto::aead_open(key, nonce, to_bytes("aae"), ct); }), ErrorCode::kCryptoFailure);
}

TEST(Crypto, X25519AgreesAndRejectsLowOrder) {
  crypto::KeyAgreement a, b;
  EXPECT_EQ(a.derive(b.public_key()), b.derive(a.public_key()));
  crypto::PublicKey zero{};
  EXPECT_EQ(code_of([&] { a.derive(zero); }), ErrorCode::kCryptoFailure);
}

TEST(Certificate, CanonicalAndSelfSigned) {
  auto key = crypto::SigningKey::generate();
  auto cert = ServiceCertificate::issue(key, "svc", 10, 20);
  EXPECT_TRUE(cert.verify_self_signature());
  auto bytes = cert.serialize();
  auto parsed = ServiceCertificate::parse(bytes);
  EXPECT_EQ(parsed, cert);
  EXPECT_EQ(parsed.hash(), crypto::sha256(bytes));

  auto forged = cert;
  forged.service_name = "other";
  EXPECT_FALSE(forged.verify_self_signature());

  std::string pretty = " " + to_string(bytes);
  EXPECT_EQ(code_of([&] { ServiceCertificate::parse(as_bytes(pretty)); }), ErrorCode::kMalformedMessage);
}

TEST(Wire, RequestResponseRoundTrip) {
  HpRequest req{RequestType::kUpload, "/a.html", to_bytes("body"), to_bytes("pw")};
  auto back = decode_request(encode_request(req));
  EXPECT_EQ(back.type, RequestType::kUpload);
  EXPECT_EQ(back.path, "/a.html");
  EXPECT_EQ(back.data, to_bytes("body"));
  ASSERT_TRUE(back.auth);
  EXPECT_EQ(*back.auth, to_bytes("pw"));

  auto r = decode_response(encode_response(HpResponse{ResponseStatus::kStaleWarning, to_bytes("x"), "old"}));
  EXPECT_EQ(r.status, ResponseStatus::kStaleWarning);
  EXPECT_TRUE(r.ok());
  EXPECT_EQ(r.detail, "old");
  EXPECT_EQ(decode_request(as_bytes(R"({"type":"bogus","path":"/"})")).type, RequestType::kUnknown);
  EXPECT_EQ(code_of([] { decode_request(as_bytes("not json")); }), ErrorCode::kMalformedMessage);
}

// Flips one bit of the n-th frame the client receives.
class MutatingStream final : public transport::FrameStream {
 public:
  MutatingStream(transport::FrameStream& inner, std::size_t frame, std::size_t bit)
      : inner_(inner), frame_(frame), bit_(bit) {}
  void send(Bytes f) override { inner_.send(std::move(f)); }
  std::optional<Bytes> receive() override {
    auto f = inner_.receive();
    if (f && seen_++ == frame_ && !f->empty()) (*f)[(bit_ / 8) % f->size()] ^= static_cast<std::uint8_t>(1u << (bit_ % 8));
    return f;
  }
  void close() override { inner_.close(); }
  Clock& clock() override { return inner_.clock(); }

 private:
  transport::FrameStream& inner_;
  std::size_t frame_;
  std::size_t bit_;
  std::size_t seen_ = 0;
};

struct EchoServer {
  EchoServer() : network(std::make_shared<transport::Network>()), key(crypto::SigningKey::generate()) {
    cert = ServiceCertificate::issue(key, "echo", 0, 1ll << 40).serialize();
    onion = transport::make_onion_address();
    network->listen_onion(onion, [this](transport::ConnectionHandle c) {
      try {
        auto hello = c->receive();
        if (!hello) return;
        auto ch = SecureChannel::server(*c, *hello, key, cert);
        while (auto m = ch.receive_message()) ch.send_message(*m);
      } catch (const Error&) {
      }
      c->close();
    });
  }
  ~EchoServer() { network->shutdown(); }

  std::shared_ptr<transport::Network> network;
  crypto::SigningKey key;
  Bytes cert;
  std::string onion;
};

TEST(SecureChannel, EchoAcrossRecordBoundaries) {
  EchoServer server;
  auto circuit = transport::CircuitProfile::local();
  auto conn = server.network->connect(server.onion, circuit);
  auto ch = SecureChannel::client(*conn, pin_certificate(crypto::sha256(server.cert)));
  EXPECT_EQ(ch.server_certificate(), server.cert);
  for (std::size_t n : {std::size_t{0}, std::size_t{1}, SecureChannel::kRecordChunk, SecureChannel::kRecordChunk + 1,
                        std::size_t{200000}}) {
    Bytes msg = crypto::random_bytes(n);
    ch.send_message(msg);
    auto back = ch.receive_message();
    ASSERT_TRUE(back);
    EXPECT_EQ(*back, msg);
  }
}

TEST(SecureChannel, PinMismatchAbortsBeforeKeys) {
  EchoServer server;
  auto circuit = transport::CircuitProfile::local();
  auto conn = server.network->connect(server.onion, circuit);
  crypto::Digest wrong{};
  EXPECT_EQ(code_of([&] { SecureChannel::client(*conn, pin_certificate(wrong)); }), ErrorCode::kChannelAuthFailure);
  EXPECT_EQ(conn->frames_sent(), 1u);
}

TEST(SecureChannel, EveryServerHelloMutationIsRejected) {
  EchoServer server;
  auto circuit = transport::CircuitProfile::local();
  std::mt19937_64 rng(3);
  int rejected = 0;
  const int trials = 200;
  for (int i = 0; i < trials; ++i) {
    auto conn = server.network->connect(server.onion, circuit);
    MutatingStream m(*conn, 0, rng() % 4096);
    // Accept any certificate: only the transcript signature protects the hello.
    try {
      auto ch = SecureChannel::client(m, [](ByteView) {});
      ADD_FAILURE() << "mutated hello accepted";
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), ErrorCode::kChannelAuthFailure) << e.what();
      ++rejected;
    }
  }
  EXPECT_EQ(rejected, trials);
}

TEST(SecureChannel, RecordTamperIsRejected) {
  EchoServer server;
  auto circuit = transport::CircuitProfile::local();
  auto conn = server.network->connect(server.onion, circuit);
  MutatingStream m(*conn, 1, 77);
  auto ch = SecureChannel::client(m, [](ByteView) {});
  ch.send_message(to_bytes("hello"));
  EXPECT_EQ(code_of([&] { ch.receive_message(); }), ErrorCode::kChannelAuthFailure);
}

TEST(SecureChannel, HelloDetection) {
  EXPECT_FALSE(SecureChannel::is_client_hello(to_bytes("{}")));
  EXPECT_FALSE(SecureChannel::is_client_hello(encode_request({RequestType::kClientGet, "/", {}, {}})));
}

}  // namespace
}  // namespace vaultor
