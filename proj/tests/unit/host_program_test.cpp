#include <gtest/gtest.h>

#include <fstream>
#include <random>

#include "../support/harness.hpp"
#include "vaultor/certificate.hpp"
#include "vaultor/content_store.hpp"
#include "vaultor/partition.hpp"

namespace vaultor {
namespace {

using testing::TempDir;

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

const Bytes kSecret = to_bytes("provider secret");

struct Instance {
  Instance(std::shared_ptr<const tee::DeviceIdentity> device, const std::filesystem::path& dir, Bytes hp,
           tee::ResourceLimits limits = {64 << 20, 64 << 20}) {
    enclave = tee::launch(std::move(device), hp, limits);
    partition = std::make_shared<Partition>(dir, enclave->meter());
    HostProgramOptions o;
    o.service_name = "svc";
    o.now_seconds = [this] { return now; };
    o.periodic_backup = false;
    program = std::make_shared<HostProgram>(std::make_shared<EnclaveRuntime>(enclave), partition, o);
  }

  HpResponse call(RequestType type, const std::string& path, Bytes data = {}, std::optional<Bytes> auth = kSecret) {
    return program->handle_request({type, path, std::move(data), std::move(auth)}, now, secure);
  }

  std::int64_t now = 1'700'000'000;
  SessionContext secure{true, {}};
  std::shared_ptr<tee::EnclaveHandle> enclave;
  std::shared_ptr<Partition> partition;
  std::shared_ptr<HostProgram> program;
};

Bytes hp_bytes(HpBuildOptions o = {}) { return build_hp(kSecret, o).bytes; }

TEST(Paths, Normalization) {
  EXPECT_EQ(normalize_path("index.html"), "/index.html");
  EXPECT_EQ(normalize_path("/a//b/./c"), "/a/b/c");
  for (std::string bad : std::vector<std::string>{"", "/../x", "a/../../b", std::string("/a\0b", 4)})
    EXPECT_EQ(code_of([&] { normalize_path(bad); }), ErrorCode::kInvalidPath) << bad;
}

TEST(Store, AccountingAndSnapshot) {
  ContentStore s;
  s.put("/a", to_bytes("1234"), 5);
  s.put("/b", to_bytes("12"), 6);
  EXPECT_EQ(s.total_bytes(), 6);
  EXPECT_EQ(s.total_after_put("/a", 1), 3);
  s.put("/a", to_bytes("1"), 7);
  EXPECT_EQ(s.total_bytes(), 3);
  EXPECT_TRUE(s.remove("/b"));
  EXPECT_FALSE(s.remove("/b"));
  EXPECT_EQ(s.find("/a")->content_hash, crypto::sha256(to_bytes("1")));
  auto back = ContentStore::deserialize(s.serialize());
  EXPECT_TRUE(back == s);
  EXPECT_EQ(code_of([] { ContentStore::deserialize(as_bytes("junk")); }), ErrorCode::kMalformedMessage);
}

TEST(PartitionTest, QuotaAndAtomicity) {
  TempDir dir;
  tee::ResourceMeter meter({100, 10});
  Partition p(dir.path(), meter);
  p.write_atomic("f", to_bytes("12345"));
  EXPECT_EQ(code_of([&] { p.write_atomic("g", to_bytes("123456")); }), ErrorCode::kQuotaExceeded);
  EXPECT_FALSE(p.exists("g"));
  p.write_atomic("f", to_bytes("1234567890"));
  EXPECT_EQ(code_of([&] { p.write_atomic("f", to_bytes("12345678901")); }), ErrorCode::kQuotaExceeded);
  EXPECT_EQ(*p.read("f"), to_bytes("1234567890"));
  EXPECT_EQ(p.used_bytes(), 10);
  p.remove("f");
  EXPECT_EQ(meter.disk_used(), 0);
}

TEST(HostProgramTest, FirstBootSealsKeysAndReusesThem) {
  TempDir dir;
  auto dev = tee::DeviceIdentity::create();
  crypto::PublicKey first;
  crypto::Digest first_cert;
  {
    Instance a(dev, dir.path(), hp_bytes());
    a.program->start();
    first = a.program->service_public_key();
    first_cert = a.program->cert_hash();
    EXPECT_TRUE(a.partition->exists(hp_file::kSecretKey));
    EXPECT_TRUE(a.partition->exists(hp_file::kPublicKey));
    a.program->stop();
  }
  Instance b(dev, dir.path(), hp_bytes());
  b.program->start();
  EXPECT_EQ(b.program->service_public_key(), first);
  EXPECT_EQ(b.program->cert_hash(), first_cert);
  EXPECT_TRUE(b.program->certificate().verify_self_signature());
  EXPECT_EQ(b.program->certificate().public_key, first);
}

TEST(HostProgramTest, CorruptSealedKeyRefusesStartup) {
  TempDir dir;
  auto dev = tee::DeviceIdentity::create();
  {
    Instance a(dev, dir.path(), hp_bytes());
    a.program->start();
    a.program->stop();
  }
  auto path = dir.path() / hp_file::kSecretKey;
  Bytes sealed;
  {
    std::ifstream in(path, std::ios::binary);
    sealed.assign(std::istreambuf_iterator<char>(in), {});
  }
  sealed[sealed.size() / 2] ^= 0x40;
  std::ofstream(path, std::ios::binary | std::ios::trunc).write(reinterpret_cast<const char*>(sealed.data()),
                                                                static_cast<std::streamsize>(sealed.size()));
  Instance b(dev, dir.path(), hp_bytes());
  EXPECT_EQ(code_of([&] { b.program->start(); }), ErrorCode::kStartupRefused);
  // No rotation: the corrupt file is left as is.
  std::ifstream in(path, std::ios::binary);
  EXPECT_EQ(Bytes(std::istreambuf_iterator<char>(in), {}), sealed);
}

TEST(HostProgramTest, RequestHandlingMirrorsAlgorithm) {
  TempDir dir;
  Instance hp(tee::DeviceIdentity::create(), dir.path(), hp_bytes());
  hp.program->start();

  EXPECT_EQ(hp.call(RequestType::kUpload, "index.html", to_bytes("<p>hi</p>")).status, ResponseStatus::kSuccess);
  auto got = hp.call(RequestType::kClientGet, "/index.html", {}, std::nullopt);
  EXPECT_EQ(got.status, ResponseStatus::kSuccess);
  EXPECT_EQ(got.data, to_bytes("<p>hi</p>"));

  auto bad = hp.call(RequestType::kUpload, "/index.html", to_bytes("evil"), to_bytes("wrong"));
  EXPECT_EQ(bad.status, ResponseStatus::kFailure);
  EXPECT_EQ(error_code_of(bad.detail), ErrorCode::kAuthRejected);
  EXPECT_EQ(hp.call(RequestType::kClientGet, "/index.html", {}, std::nullopt).data, to_bytes("<p>hi</p>"));

  auto missing = hp.call(RequestType::kClientGet, "/nope", {}, std::nullopt);
  EXPECT_EQ(missing.status, ResponseStatus::kFailure);
  EXPECT_EQ(error_code_of(missing.detail), ErrorCode::kNotFound);

  EXPECT_EQ(hp.call(RequestType::kDownload, "/index.html").data, to_bytes("<p>hi</p>"));
  EXPECT_TRUE(hp.call(RequestType::kRemove, "/index.html").ok());
  EXPECT_EQ(error_code_of(hp.call(RequestType::kRemove, "/index.html").detail), ErrorCode::kNotFound);
  EXPECT_EQ(hp.call(RequestType::kUnknown, "/x").status, ResponseStatus::kFailure);
  EXPECT_EQ(error_code_of(hp.call(RequestType::kUpload, "/../x", to_bytes("y")).detail), ErrorCode::kInvalidPath);
}

TEST(HostProgramTest, QuoteBindsCertificateHash) {
  TempDir dir;
  auto dev = tee::DeviceIdentity::create();
  Instance hp(dev, dir.path(), hp_bytes());
  hp.program->start();
  auto r = hp.call(RequestType::kQuote, "/quote");
  ASSERT_TRUE(r.ok());
  tee::ReportData expected{};
  auto h = hp.program->cert_hash();
  std::copy(h.begin(), h.end(), expected.begin());
  EXPECT_EQ(hp.program->report_data(), expected);
  EXPECT_TRUE(tee::verify_quote(r.data, hp.enclave->measurement(), dev->attestation_public_key(), expected));
  // Clients can fetch the quote and certificate without auth.
  EXPECT_TRUE(hp.call(RequestType::kClientGet, "/quote", {}, std::nullopt).ok());
  EXPECT_EQ(hp.call(RequestType::kClientGet, "/certificate", {}, std::nullopt).data, hp.program->certificate_bytes());
}

TEST(HostProgramTest, AuthGateRejectsRandomSecrets) {
  TempDir dir;
  Instance hp(tee::DeviceIdentity::create(), dir.path(), hp_bytes());
  hp.program->start();
  hp.call(RequestType::kUpload, "/a", to_bytes("keep"));
  std::mt19937_64 rng(23);
  for (int i = 0; i < 300; ++i) {
    Bytes secret = crypto::random_bytes(rng() % 40);
    std::optional<Bytes> auth = i % 10 == 0 ? std::nullopt : std::optional<Bytes>(secret);
    for (auto t : {RequestType::kUpload, RequestType::kRemove, RequestType::kDownload, RequestType::kQuote}) {
      auto r = hp.call(t, i % 2 ? "/a" : hp_path::kSecretKey, to_bytes("evil"), auth);
      EXPECT_EQ(r.status, ResponseStatus::kFailure);
      EXPECT_TRUE(r.data.empty());
    }
  }
  EXPECT_EQ(hp.call(RequestType::kClientGet, "/a", {}, std::nullopt).data, to_bytes("keep"));
}

TEST(HostProgramTest, AuthRequiresSecureSession) {
  TempDir dir;
  Instance hp(tee::DeviceIdentity::create(), dir.path(), hp_bytes());
  hp.program->start();
  hp.secure = SessionContext{false, {}};
  auto r = hp.call(RequestType::kDownload, hp_path::kSecretKey);
  EXPECT_EQ(r.status, ResponseStatus::kFailure);
  EXPECT_EQ(error_code_of(r.detail), ErrorCode::kInsecureChannel);
  EXPECT_TRUE(r.data.empty());
}

TEST(HostProgramTest, StaleContentIsFlagged) {
  TempDir dir;
  HpBuildOptions o;
  o.max_staleness_seconds = 100;
  Instance hp(tee::DeviceIdentity::create(), dir.path(), hp_bytes(o));
  hp.program->start();
  hp.call(RequestType::kUpload, "/a", to_bytes("x"));
  hp.now += 100;
  EXPECT_EQ(hp.call(RequestType::kClientGet, "/a", {}, std::nullopt).status, ResponseStatus::kSuccess);
  hp.now += 1;
  auto r = hp.call(RequestType::kClientGet, "/a", {}, std::nullopt);
  EXPECT_EQ(r.status, ResponseStatus::kStaleWarning);
  EXPECT_EQ(r.data, to_bytes("x"));
}

TEST(HostProgramTest, DiskQuota) {
  TempDir dir;
  Instance hp(tee::DeviceIdentity::create(), dir.path(), hp_bytes(), {64 << 20, 8 << 10});
  hp.program->start();
  EXPECT_TRUE(hp.call(RequestType::kUpload, "/a", Bytes(1000)).ok());
  auto r = hp.call(RequestType::kUpload, "/b", Bytes(8 << 10));
  EXPECT_EQ(r.status, ResponseStatus::kFailure);
  EXPECT_EQ(error_code_of(r.detail), ErrorCode::kQuotaExceeded);
  EXPECT_EQ(error_code_of(hp.call(RequestType::kClientGet, "/b", {}, std::nullopt).detail), ErrorCode::kNotFound);
}

TEST(HostProgramTest, BackupRestoresAfterRelaunch) {
  TempDir dir;
  auto dev = tee::DeviceIdentity::create();
  ContentStore before;
  {
    Instance a(dev, dir.path(), hp_bytes());
    a.program->start();
    for (int i = 0; i < 20; ++i) a.call(RequestType::kUpload, "/p" + std::to_string(i), crypto::random_bytes(100 + i));
    a.program->backup();
    before = a.program->snapshot_store();
    a.program->stop();
  }
  Instance b(dev, dir.path(), hp_bytes());
  b.program->start();
  EXPECT_FALSE(b.program->restore_error());
  EXPECT_TRUE(b.program->snapshot_store() == before);
}

TEST(HostProgramTest, ForeignDeviceCannotRestore) {
  TempDir dir;
  {
    Instance a(tee::DeviceIdentity::create(), dir.path(), hp_bytes());
    a.program->start();
    a.call(RequestType::kUpload, "/a", to_bytes("x"));
    a.program->stop();
  }
  std::filesystem::remove(dir.path() / hp_file::kSecretKey);
  std::filesystem::remove(dir.path() / hp_file::kPublicKey);
  std::filesystem::remove(dir.path() / hp_file::kCertificate);
  Instance b(tee::DeviceIdentity::create(), dir.path(), hp_bytes());
  b.program->start();
  ASSERT_TRUE(b.program->restore_error());
  EXPECT_EQ(b.program->content_count(), 0u);
}

TEST(HostProgramTest, DeletedSnapshotRestartsEmpty) {
  TempDir dir;
  auto dev = tee::DeviceIdentity::create();
  {
    Instance a(dev, dir.path(), hp_bytes());
    a.program->start();
    a.call(RequestType::kUpload, "/a", to_bytes("x"));
    a.program->stop();
  }
  std::filesystem::remove(dir.path() / hp_file::kSnapshot);
  Instance b(dev, dir.path(), hp_bytes());
  b.program->start();
  EXPECT_FALSE(b.program->restore_error());
  EXPECT_EQ(b.program->content_count(), 0u);
}

TEST(HostProgramTest, SecretKeyNeverOnDiskInClear) {
  TempDir dir;
  Instance hp(tee::DeviceIdentity::create(), dir.path(), hp_bytes());
  hp.program->start();
  hp.call(RequestType::kUpload, "/a", to_bytes("x"));
  auto seed = hp.call(RequestType::kDownload, hp_path::kSecretKey);
  ASSERT_TRUE(seed.ok());
  ASSERT_EQ(seed.data.size(), crypto::kSeedSize);
  for (const auto& file : testing::read_all_files(dir.path())) {
    EXPECT_FALSE(contains_subsequence(file, seed.data));
    EXPECT_FALSE(contains_subsequence(file, as_bytes(hex_encode(seed.data))));
    EXPECT_FALSE(contains_subsequence(file, as_bytes(base64_encode(seed.data))));
  }
  auto pub = hp.call(RequestType::kDownload, hp_path::kPublicKey);
  auto pk = hp.program->service_public_key();
  EXPECT_EQ(pub.data, Bytes(pk.begin(), pk.end()));
}

TEST(HostProgramTest, ImportKeysSwapsIdentity) {
  TempDir da, db;
  auto dev = tee::DeviceIdentity::create();
  Instance a(dev, da.path(), hp_bytes());
  Instance b(tee::DeviceIdentity::create(), db.path(), hp_bytes());
  a.program->start();
  b.program->start();
  KeyMaterial km{a.call(RequestType::kDownload, hp_path::kSecretKey).data, a.program->certificate_bytes()};
  EXPECT_TRUE(b.call(RequestType::kUpload, hp_path::kSecretKey, km.serialize()).ok());
  EXPECT_EQ(b.program->cert_hash(), a.program->cert_hash());

  KeyMaterial wrong{crypto::random_bytes(32), a.program->certificate_bytes()};
  auto r = b.call(RequestType::kUpload, hp_path::kSecretKey, wrong.serialize());
  EXPECT_EQ(error_code_of(r.detail), ErrorCode::kImportRejected);
  EXPECT_EQ(error_code_of(b.call(RequestType::kUpload, hp_path::kSecretKey, to_bytes("junk")).detail),
            ErrorCode::kImportRejected);
}

TEST(HostProgramTest, ImportRequiresCapability) {
  TempDir dir;
  HpBuildOptions o;
  o.capabilities = {capability::kListen, capability::kSeal, capability::kQuote};
  Instance hp(tee::DeviceIdentity::create(), dir.path(), hp_bytes(o));
  hp.program->start();
  auto other = crypto::SigningKey::generate();
  KeyMaterial km{Bytes(other.seed().begin(), other.seed().end()),
                 ServiceCertificate::issue(other, "x", 0, 1ll << 40).serialize()};
  EXPECT_EQ(error_code_of(hp.call(RequestType::kUpload, hp_path::kSecretKey, km.serialize()).detail),
            ErrorCode::kImportRejected);
}

TEST(HostProgramTest, ProviderKeyAuthMode) {
  TempDir dir;
  auto provider = crypto::SigningKey::generate();
  HpBuildOptions o;
  o.provider_public_key = provider.public_key();
  Instance hp(tee::DeviceIdentity::create(), dir.path(), hp_bytes(o));
  hp.program->start();
  crypto::Digest binding = crypto::random_array<32>();
  hp.secure = SessionContext{true, binding};
  HpRequest req{RequestType::kUpload, "/a", to_bytes("x"), {}};
  auto sig = provider.sign(provider_auth_message(binding, req));
  req.auth = Bytes(sig.begin(), sig.end());
  EXPECT_TRUE(hp.program->handle_request(req, hp.now, hp.secure).ok());
  // Replay on another channel fails.
  hp.secure.channel_binding[0] ^= 1;
  EXPECT_EQ(hp.program->handle_request(req, hp.now, hp.secure).status, ResponseStatus::kFailure);
}

TEST(HostProgramTest, ServesOverSecureChannel) {
  auto network = std::make_shared<transport::Network>();
  TempDir dir;
  Instance hp(tee::DeviceIdentity::create(), dir.path(), hp_bytes());
  hp.program->start();
  hp.call(RequestType::kUpload, "/a", to_bytes("served"));
  auto onion = transport::make_onion_address();
  network->listen_onion(onion, [&](transport::ConnectionHandle c) { hp.program->serve(*c); });
  auto circuit = transport::CircuitProfile::local();

  PinStore pins;
  pins.import_advertisement({onion, hex_encode(hp.program->cert_hash())});
  auto r = fetch(*network, onion, "/a", pins, circuit);
  EXPECT_EQ(r.body, to_bytes("served"));

  auto plain = ProviderSession::open_plaintext(*network, onion, circuit);
  EXPECT_EQ(plain.request({RequestType::kClientGet, "/a", {}, {}}).data, to_bytes("served"));
  EXPECT_EQ(code_of([&] { plain.request({RequestType::kDownload, "Spath", {}, kSecret}); }),
            ErrorCode::kInsecureChannel);
  plain.close();
  network->shutdown();
}

}  // namespace
}  // namespace vaultor
