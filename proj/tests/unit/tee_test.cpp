#include <gtest/gtest.h>

#include <random>
#include <set>

#include "vaultor/program_image.hpp"
#include "vaultor/provider_client.hpp"
#include "vaultor/tee_sim.hpp"

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

const tee::ResourceLimits kLimits{64 << 20, 64 << 20};

Bytes program(std::string_view secret = "pw") { return build_hp(as_bytes(secret)).bytes; }

tee::ReportData report(std::uint8_t fill) {
  tee::ReportData rd;
  rd.fill(fill);
  return rd;
}

bool shares_16_byte_window(ByteView a, ByteView b) {
  std::set<std::string> windows;
  for (std::size_t i = 0; i + 16 <= a.size(); ++i) windows.insert(to_string(a.subspan(i, 16)));
  for (std::size_t i = 0; i + 16 <= b.size(); ++i)
    if (windows.count(to_string(b.subspan(i, 16)))) return true;
  return false;
}

TEST(Measure, KnownDigestAndErrors) {
  EXPECT_EQ(tee::measure(as_bytes("HPv1")).hex(), "f42da82520fa206b2cfb8138c9037732a20551e04e1348dc583d24a7b48a6277");
  EXPECT_EQ(code_of([] { tee::measure(Bytes{}); }), ErrorCode::kInvalidProgram);
}

TEST(Measure, DeterministicAndMutationSensitive) {
  std::mt19937_64 rng(11);
  for (int i = 0; i < 100; ++i) {
    Bytes p(1 + rng() % 512);
    for (auto& b : p) b = static_cast<std::uint8_t>(rng());
    EXPECT_EQ(tee::measure(p), tee::measure(Bytes(p)));
    Bytes q = p;
    q[rng() % q.size()] ^= static_cast<std::uint8_t>(1 + rng() % 255);
    EXPECT_NE(tee::measure(p), tee::measure(q));
  }
}

TEST(Measure, PasswordHashIsMeasured) {
  EXPECT_NE(build_hp(as_bytes("a")).measurement, build_hp(as_bytes("b")).measurement);
  EXPECT_EQ(build_hp(as_bytes("a")).bytes, build_hp(as_bytes("a")).bytes);
}

TEST(Device, IndependentCreationsNeverCollide) {
  std::set<std::string> ids, keys;
  for (int i = 0; i < 1000; ++i) {
    auto d = tee::DeviceIdentity::create();
    ids.insert(hex_encode(d->device_id()));
    keys.insert(hex_encode(d->attestation_public_key()));
  }
  EXPECT_EQ(ids.size(), 1000u);
  EXPECT_EQ(keys.size(), 1000u);
}

TEST(Device, FusesReproduceIdentity) {
  tee::DeviceFuses f;
  f.device_id.fill(1);
  f.root_secret.fill(2);
  f.attestation_seed.fill(3);
  auto a = tee::DeviceIdentity::from_fuses(f);
  auto b = tee::DeviceIdentity::from_fuses(f);
  EXPECT_EQ(a->attestation_public_key(), b->attestation_public_key());
  tee::Measurement m = tee::measure(as_bytes("x"));
  EXPECT_EQ(tee::derive_sealing_key(*a, m), tee::derive_sealing_key(*b, m));
}

TEST(Launch, MeasurementAndErrors) {
  auto dev = tee::DeviceIdentity::create();
  Bytes hp = program();
  auto h = tee::launch(dev, hp, kLimits);
  EXPECT_EQ(h->measurement(), tee::measure(hp));
  EXPECT_TRUE(h->private_region_zeroed());
  Bytes garbage{0x00, 'g', 'a', 'r', 'b', 'a', 'g', 'e'};
  EXPECT_EQ(code_of([&] { tee::launch(dev, garbage, kLimits); }), ErrorCode::kInvalidProgram);
  EXPECT_EQ(code_of([&] { tee::launch(dev, hp, {0, 1}); }), ErrorCode::kInvalidLimits);
  EXPECT_EQ(code_of([&] { tee::launch(dev, hp, {1, -1}); }), ErrorCode::kInvalidLimits);
}

TEST(Launch, RelaunchGetsDistinctPrivateRegion) {
  auto dev = tee::DeviceIdentity::create();
  Bytes hp = program();
  auto a = tee::launch(dev, hp, kLimits);
  auto b = tee::launch(dev, hp, kLimits);
  EXPECT_EQ(a->measurement(), b->measurement());
  EXPECT_NE(a->private_region_id(), b->private_region_id());
}

TEST(Quote, RoundTripAndMismatches) {
  auto dev = tee::DeviceIdentity::create();
  auto h = tee::launch(dev, program(), kLimits);
  auto rd = report(7);
  auto q = tee::get_quote(*h, rd);
  EXPECT_EQ(q.serialize().size(), tee::kQuoteSize);
  EXPECT_EQ(tee::kQuoteSize, 160u);
  EXPECT_TRUE(tee::verify_quote(q, h->measurement(), dev->attestation_public_key(), rd));
  EXPECT_FALSE(tee::verify_quote(q, tee::measure(program("other")), dev->attestation_public_key(), rd));
  auto rd2 = rd;
  rd2[63] ^= 1;
  EXPECT_FALSE(tee::verify_quote(q, h->measurement(), dev->attestation_public_key(), rd2));
  EXPECT_FALSE(tee::verify_quote(q, h->measurement(), tee::DeviceIdentity::create()->attestation_public_key(), rd));
  EXPECT_EQ(code_of([&] { tee::get_quote(*h, Bytes(63)); }), ErrorCode::kInvalidReportData);
  EXPECT_EQ(code_of([&] { tee::verify_quote(Bytes(159), h->measurement(), dev->attestation_public_key(), rd); }),
            ErrorCode::kMalformedQuote);
}

TEST(Quote, EveryBitFlipIsRejected) {
  auto dev = tee::DeviceIdentity::create();
  auto h = tee::launch(dev, program(), kLimits);
  auto rd = report(9);
  Bytes q = tee::get_quote(*h, rd).serialize();
  std::mt19937_64 rng(5);
  int accepted = 0;
  for (int i = 0; i < 1000; ++i) {
    Bytes bad = q;
    auto bit = rng() % (bad.size() * 8);
    bad[bit / 8] ^= static_cast<std::uint8_t>(1u << (bit % 8));
    accepted += tee::verify_quote(bad, h->measurement(), dev->attestation_public_key(), rd);
  }
  EXPECT_EQ(accepted, 0);
}

TEST(Quote, SignatureReuseAcrossMeasurementsFails) {
  auto dev = tee::DeviceIdentity::create();
  auto a = tee::launch(dev, program("a"), kLimits);
  auto b = tee::launch(dev, program("b"), kLimits);
  auto qa = tee::get_quote(*a, report(1));
  tee::Quote forged = qa;
  forged.measurement = b->measurement();
  EXPECT_FALSE(tee::verify_quote(forged, b->measurement(), dev->attestation_public_key(), report(1)));
  forged = qa;
  forged.report_data = report(2);
  EXPECT_FALSE(tee::verify_quote(forged, a->measurement(), dev->attestation_public_key(), report(2)));
}

TEST(SealingKey, Derivation) {
  auto d1 = tee::DeviceIdentity::create();
  auto d2 = tee::DeviceIdentity::create();
  auto m1 = tee::measure(as_bytes("m1"));
  auto m2 = tee::measure(as_bytes("m2"));
  EXPECT_EQ(tee::derive_sealing_key(*d1, m1), tee::derive_sealing_key(*d1, m1));
  EXPECT_NE(tee::derive_sealing_key(*d1, m1), tee::derive_sealing_key(*d1, m2));
  EXPECT_NE(tee::derive_sealing_key(*d1, m1), tee::derive_sealing_key(*d2, m1));
}

TEST(Seal, RoundTripRandomPayloads) {
  auto dev = tee::DeviceIdentity::create();
  auto h = tee::launch(dev, program(), kLimits);
  std::mt19937_64 rng(13);
  for (int i = 0; i < 100; ++i) {
    auto len = i == 0 ? 0 : i == 1 ? (1 << 20) : rng() % (1 << 20);
    Bytes p = crypto::random_bytes(len);
    auto blob = tee::seal(*h, p);
    auto wire = blob.serialize();
    EXPECT_EQ(wire.size(), 12 + 32 + p.size() + 16);
    EXPECT_EQ(tee::unseal(*h, tee::SealedBlob::deserialize(wire)), p);
    if (len >= 16 && len < 4096) EXPECT_FALSE(shares_16_byte_window(p, wire));
  }
}

TEST(Seal, NonceIsFresh) {
  auto h = tee::launch(tee::DeviceIdentity::create(), program(), kLimits);
  EXPECT_NE(tee::seal(*h, as_bytes("x")).nonce, tee::seal(*h, as_bytes("x")).nonce);
}

TEST(Seal, ForeignDeviceOrMeasurementRejected) {
  auto d1 = tee::DeviceIdentity::create();
  auto d2 = tee::DeviceIdentity::create();
  auto h1 = tee::launch(d1, program("a"), kLimits);
  auto h2 = tee::launch(d2, program("a"), kLimits);
  auto h3 = tee::launch(d1, program("b"), kLimits);
  auto blob = tee::seal(*h1, as_bytes("secret"));
  EXPECT_EQ(code_of([&] { tee::unseal(*h2, blob); }), ErrorCode::kSealIntegrityFailure);
  EXPECT_EQ(code_of([&] { tee::unseal(*h3, blob); }), ErrorCode::kSealIntegrityFailure);
  auto relabeled = blob;
  relabeled.bound_measurement = h3->measurement();
  EXPECT_EQ(code_of([&] { tee::unseal(*h3, relabeled); }), ErrorCode::kSealIntegrityFailure);
  EXPECT_EQ(code_of([] { tee::SealedBlob::deserialize(Bytes(10)); }), ErrorCode::kSealIntegrityFailure);
}

TEST(Seal, EveryCiphertextBitFlipRejected) {
  auto h = tee::launch(tee::DeviceIdentity::create(), program(), kLimits);
  Bytes wire = tee::seal(*h, crypto::random_bytes(300)).serialize();
  std::mt19937_64 rng(17);
  int accepted = 0;
  for (int i = 0; i < 1000; ++i) {
    Bytes bad = wire;
    auto bit = rng() % (bad.size() * 8);
    bad[bit / 8] ^= static_cast<std::uint8_t>(1u << (bit % 8));
    try {
      tee::unseal(*h, tee::SealedBlob::deserialize(bad));
      ++accepted;
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), ErrorCode::kSealIntegrityFailure);
    }
  }
  EXPECT_EQ(accepted, 0);
}

TEST(Meter, RamAndDiskCaps) {
  tee::ResourceMeter m({100, 50});
  EXPECT_TRUE(m.try_reserve_ram(60));
  EXPECT_FALSE(m.try_reserve_ram(41));
  EXPECT_EQ(m.ram_used(), 60);
  m.release_ram(60);
  EXPECT_EQ(m.ram_high_water(), 60);
  EXPECT_TRUE(m.try_set_disk(0, 50));
  EXPECT_FALSE(m.try_set_disk(0, 1));
  EXPECT_TRUE(m.try_set_disk(50, 10));
  EXPECT_EQ(m.disk_used(), 10);
}

TEST(ProgramImage, RoundTripAndRejects) {
  HostProgramConfig c;
  c.password_hash = crypto::sha256(as_bytes("pw"));
  c.bind_port = 9000;
  c.capabilities = std::set<std::string>{capability::kListen};
  Bytes img = serialize_program_image(c);
  EXPECT_EQ(to_string(ByteView(img).first(5)), "HPv1\n");
  auto back = parse_program_image(img);
  EXPECT_EQ(back.password_hash, c.password_hash);
  EXPECT_EQ(back.bind_port, 9000);
  EXPECT_TRUE(back.has_capability(capability::kListen));
  EXPECT_FALSE(back.has_capability(capability::kSeal));
  EXPECT_EQ(code_of([] { parse_program_image(as_bytes("HPv1\n{")); }), ErrorCode::kInvalidProgram);
  EXPECT_EQ(code_of([] { parse_program_image(as_bytes("HPv2\n{}")); }), ErrorCode::kInvalidProgram);
}

}  // namespace
}  // namespace vaultor
