#include "vaultor/program_image.hpp"

#include <json.hpp>

#include "vaultor/error.hpp"

namespace vaultor {

namespace {

constexpr std::string_view kMagic = "HPv1\n";
constexpr const char* kProgramId = "vaultor-host-program/1";

}  // namespace

Bytes serialize_program_image(const HostProgramConfig& config) {
  nlohmann::json j;
  j["program"] = kProgramId;
  j["password_hash"] = hex_encode(config.password_hash);
  if (config.provider_public_key) j["provider_public_key"] = hex_encode(*config.provider_public_key);
  j["bind_port"] = config.bind_port;
  j["max_staleness_seconds"] = config.max_staleness_seconds;
  j["backup_interval_seconds"] = config.backup_interval_seconds;
  if (config.capabilities) {
    j["capabilities"] = nlohmann::json::array();
    for (const auto& c : *config.capabilities) j["capabilities"].push_back(c);
  }
  Bytes out = to_bytes(kMagic);
  append(out, as_bytes(j.dump()));
  return out;
}

HostProgramConfig parse_program_image(ByteView program_bytes) {
  if (program_bytes.size() < kMagic.size() ||
      to_string(program_bytes.first(kMagic.size())) != kMagic) {
    fail(ErrorCode::kInvalidProgram, "missing host program header");
  }
  auto body = to_string(program_bytes.subspan(kMagic.size()));
  nlohmann::json j = nlohmann::json::parse(body, nullptr, /*allow_exceptions=*/false);
  if (!j.is_object()) fail(ErrorCode::kInvalidProgram, "program body is not a JSON object");

  HostProgramConfig config;
  try {
    if (j.at("program").get<std::string>() != kProgramId) {
      fail(ErrorCode::kInvalidProgram, "unknown program id");
    }
    config.password_hash = to_fixed<crypto::kDigestSize>(hex_decode(j.at("password_hash").get<std::string>()));
    if (j.contains("provider_public_key")) {
      config.provider_public_key = to_fixed<crypto::kPublicKeySize>(
          hex_decode(j.at("provider_public_key").get<std::string>()));
    }
    auto port = j.at("bind_port").get<std::int64_t>();
    if (port < 1 || port > 65535) fail(ErrorCode::kInvalidProgram, "bind_port out of range");
    config.bind_port = static_cast<std::uint16_t>(port);
    config.max_staleness_seconds = j.at("max_staleness_seconds").get<std::int64_t>();
    config.backup_interval_seconds = j.at("backup_interval_seconds").get<std::int64_t>();
    if (config.max_staleness_seconds < 0 || config.backup_interval_seconds < 0) {
      fail(ErrorCode::kInvalidProgram, "negative interval");
    }
    if (j.contains("capabilities")) {
      std::set<std::string> caps;
      for (const auto& c : j.at("capabilities")) caps.insert(c.get<std::string>());
      config.capabilities = std::move(caps);
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kInvalidProgram, e.what());
  } catch (const Error& e) {
    if (e.code() == ErrorCode::kInvalidProgram) throw;
    fail(ErrorCode::kInvalidProgram, e.what());
  }
  return config;
}

}  // namespace vaultor
