#include "harness.hpp"

#include <chrono>
#include <fstream>
#include <thread>

#include "vaultor/certificate.hpp"
#include "vaultor/content_store.hpp"
#include "vaultor/wire.hpp"
#include "vaultor/secure_channel.hpp"

namespace vaultor::testing {

namespace fs = std::filesystem;

TempDir::TempDir() {
  path_ = fs::temp_directory_path() / ("vaultor-test-" + hex_encode(crypto::random_bytes(8)));
  fs::create_directories(path_);
}

TempDir::~TempDir() {
  std::error_code ec;
  fs::remove_all(path_, ec);
}

TrafficTap TrafficRecorder::tap() {
  return [this](const HostedService&, TrafficDirection, ByteView frame) {
    std::lock_guard lock(mu_);
    append(bytes_, frame);
    ++frames_;
  };
}

Bytes TrafficRecorder::all() const {
  std::lock_guard lock(mu_);
  return bytes_;
}

std::size_t TrafficRecorder::frames() const {
  std::lock_guard lock(mu_);
  return frames_;
}

void TrafficRecorder::clear() {
  std::lock_guard lock(mu_);
  bytes_.clear();
  frames_ = 0;
}

std::vector<Bytes> read_all_files(const fs::path& root) {
  std::vector<Bytes> out;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (!e.is_regular_file()) continue;
    std::ifstream in(e.path(), std::ios::binary);
    out.emplace_back(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
  }
  return out;
}

VaultOptions quiet_options() {
  VaultOptions o;
  o.periodic_backup = false;
  return o;
}

Deployment::Deployment(VaultOptions options, VaultConfig config, std::shared_ptr<Clock> clock) {
  network = std::make_shared<transport::Network>(transport::TransportConfig{}, std::move(clock));
  config.storage_dir = storage.path();
  vault = std::make_unique<VaultDaemon>(config, network, nullptr, options);
  vault->advertise_vchs();
}

Deployment::~Deployment() {
  vault->shutdown();
  network->shutdown();
}

ProviderProfile Deployment::make_profile(const Bytes& secret, const BuiltHp& hp) const {
  ProviderProfile p;
  p.auth_secret = secret;
  p.expected_measurement = hp.measurement;
  p.vault_vchs = vault->vchs_onion();
  p.vault_attestation_key = vault->attestation_public_key();
  return p;
}

CertificateSubstitution::CertificateSubstitution()
    : attacker_key(crypto::SigningKey::generate()),
      attacker_certificate(ServiceCertificate::issue(attacker_key, "attacker", 0, 1ll << 40).serialize()) {}

SessionInterceptor CertificateSubstitution::interceptor() {
  auto key_seed = attacker_key.seed();
  auto cert = attacker_certificate;
  auto handshakes_ = handshakes;
  auto post = post_handshake_frames;
  auto on = active;
  auto done = finished;
  return [key_seed, cert, handshakes_, post, on, done](std::unique_ptr<transport::FrameStream> stream,
                                                 HostedService&) -> std::unique_ptr<transport::FrameStream> {
    if (!*on) return stream;
    auto first = stream->receive();
    if (first && SecureChannel::is_client_hello(*first)) {
      auto key = crypto::SigningKey::from_seed(key_seed);
      try {
        auto channel = SecureChannel::server(*stream, *first, key, cert);
        ++*handshakes_;
        while (stream->receive()) ++*post;
      } catch (const Error&) {
      }
    }
    stream->close();
    ++*done;
    return nullptr;
  };
}

bool CertificateSubstitution::wait_finished(int sessions) const {
  auto deadline = std::chrono::steady_clock::now() + std::chrono::seconds(10);
  while (*finished < sessions) {
    if (std::chrono::steady_clock::now() > deadline) return false;
    std::this_thread::sleep_for(std::chrono::milliseconds(1));
  }
  return true;
}

SessionInterceptor relaying_substitution(const crypto::SigningKey& key, const Bytes& certificate) {
  auto seed = key.seed();
  return [seed, certificate](std::unique_ptr<transport::FrameStream> stream,
                             HostedService& service) -> std::unique_ptr<transport::FrameStream> {
    auto first = stream->receive();
    if (!first) return nullptr;
    auto program = service.program();
    if (!SecureChannel::is_client_hello(*first)) {
      // Plaintext clients get the forged certificate at /certificate too.
      std::optional<Bytes> frame = std::move(first);
      while (frame) {
        auto req = decode_request(*frame);
        HpResponse r = normalize_path(req.path) == hp_path::kCertificate
                           ? HpResponse::success(certificate)
                           : program->handle_request(req, 0, SessionContext{false, {}});
        stream->send(encode_response(r));
        frame = stream->receive();
      }
      return nullptr;
    }
    auto k = crypto::SigningKey::from_seed(seed);
    try {
      auto channel = SecureChannel::server(*stream, *first, k, certificate);
      SessionContext ctx{true, channel.transcript_hash()};
      while (auto msg = channel.receive_message()) {
        channel.send_message(encode_response(program->handle_request(decode_request(*msg), 0, ctx)));
      }
    } catch (const Error&) {
    }
    stream->close();
    return nullptr;
  };
}

Bytes random_content(std::size_t n) { return crypto::random_bytes(n); }

}  // namespace vaultor::testing
