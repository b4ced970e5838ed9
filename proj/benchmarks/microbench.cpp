#include <benchmark/benchmark.h>

#include <filesystem>

#include "vaultor/client_fetch.hpp"
#include "vaultor/crypto.hpp"
#include "vaultor/provider_client.hpp"
#include "vaultor/tee_sim.hpp"
#include "vaultor/vault_daemon.hpp"

namespace vaultor {
namespace {

const Bytes kSecret = to_bytes("microbench secret");
const tee::ResourceLimits kLimits{256 << 20, 256 << 20};

std::shared_ptr<tee::EnclaveHandle> enclave() {
  static auto h = tee::launch(tee::DeviceIdentity::create(), build_hp(kSecret).bytes, kLimits);
  return h;
}

void BM_Seal(benchmark::State& state) {
  auto h = enclave();
  Bytes data = crypto::random_bytes(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(tee::seal(*h, data));
  state.SetBytesProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_Seal)->Arg(512)->Arg(51200)->Arg(1 << 20);

void BM_Unseal(benchmark::State& state) {
  auto h = enclave();
  auto blob = tee::seal(*h, crypto::random_bytes(static_cast<std::size_t>(state.range(0))));
  for (auto _ : state) benchmark::DoNotOptimize(tee::unseal(*h, blob));
  state.SetBytesProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_Unseal)->Arg(512)->Arg(51200)->Arg(1 << 20);

void BM_QuoteVerify(benchmark::State& state) {
  auto dev = tee::DeviceIdentity::create();
  auto h = tee::launch(dev, build_hp(kSecret).bytes, kLimits);
  tee::ReportData rd{};
  auto q = tee::get_quote(*h, rd);
  for (auto _ : state) benchmark::DoNotOptimize(tee::verify_quote(q, h->measurement(), dev->attestation_public_key(), rd));
}
BENCHMARK(BM_QuoteVerify);

void BM_QuoteGenerate(benchmark::State& state) {
  auto h = enclave();
  tee::ReportData rd{};
  for (auto _ : state) benchmark::DoNotOptimize(tee::get_quote(*h, rd));
}
BENCHMARK(BM_QuoteGenerate);

/// One attested vault on the in-process transport.
struct Site {
  Site() : storage(std::filesystem::temp_directory_path() / ("vaultor-bench-" + hex_encode(crypto::random_bytes(6)))) {
    network = std::make_shared<transport::Network>();
    VaultConfig c;
    c.storage_dir = storage;
    VaultOptions o;
    o.periodic_backup = false;
    vault = std::make_unique<VaultDaemon>(c, network, nullptr, o);
    vault->advertise_vchs();
    auto hp = build_hp(kSecret);
    ProviderProfile p;
    p.auth_secret = kSecret;
    p.expected_measurement = hp.measurement;
    p.vault_vchs = vault->vchs_onion();
    p.vault_attestation_key = vault->attestation_public_key();
    ProviderClient provider(*network, p);
    std::map<std::string, Bytes> pages;
    for (int size : {512, 51200, 5120000}) pages["/" + std::to_string(size)] = crypto::random_bytes(size);
    ad = provider.bootstrap(hp.bytes, pages);
    pins.import_advertisement(ad);
  }
  ~Site() {
    vault->shutdown();
    network->shutdown();
    std::filesystem::remove_all(storage);
  }
  std::filesystem::path storage;
  std::shared_ptr<transport::Network> network;
  std::unique_ptr<VaultDaemon> vault;
  Advertisement ad;
  PinStore pins;
};

Site& site() {
  static Site s;
  return s;
}

void BM_ChannelEstablish(benchmark::State& state) {
  auto& s = site();
  auto circuit = transport::CircuitProfile::local();
  for (auto _ : state) {
    auto session = ClientSession::open(*s.network, s.ad.onion_url, s.pins, circuit);
    benchmark::DoNotOptimize(session.served_cert_hash());
  }
}
BENCHMARK(BM_ChannelEstablish)->UseRealTime();

void BM_Fetch(benchmark::State& state) {
  auto& s = site();
  auto circuit = transport::CircuitProfile::local();
  std::string path = "/" + std::to_string(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(fetch(*s.network, s.ad.onion_url, path, s.pins, circuit));
  state.SetBytesProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_Fetch)->Arg(512)->Arg(51200)->Arg(5120000)->UseRealTime();

}  // namespace
}  // namespace vaultor

BENCHMARK_MAIN();
