#include "vaultor/error.hpp"

namespace vaultor {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidProgram: return "InvalidProgram";
    case ErrorCode::kInvalidLimits: return "InvalidLimits";
    case ErrorCode::kInvalidReportData: return "InvalidReportData";
    case ErrorCode::kMalformedQuote: return "MalformedQuote";
    case ErrorCode::kSealIntegrityFailure: return "SealIntegrityFailure";
    case ErrorCode::kNotFound: return "NotFound";
    case ErrorCode::kQuotaExceeded: return "QuotaExceeded";
    case ErrorCode::kBackupFailed: return "BackupFailed";
    case ErrorCode::kChannelAuthFailure: return "ChannelAuthFailure";
    case ErrorCode::kInvalidPath: return "InvalidPath";
    case ErrorCode::kStartupRefused: return "StartupRefused";
    case ErrorCode::kAdvertiseFailed: return "AdvertiseFailed";
    case ErrorCode::kRejected: return "Rejected";
    case ErrorCode::kStartFailed: return "StartFailed";
    case ErrorCode::kConfigInvalid: return "ConfigInvalid";
    case ErrorCode::kCollision: return "Collision";
    case ErrorCode::kConnectFailed: return "ConnectFailed";
    case ErrorCode::kProxyError: return "ProxyError";
    case ErrorCode::kTransportClosed: return "TransportClosed";
    case ErrorCode::kQuoteMismatch: return "QuoteMismatch";
    case ErrorCode::kAuthRejected: return "AuthRejected";
    case ErrorCode::kPartialFailure: return "PartialFailure";
    case ErrorCode::kImportRejected: return "ImportRejected";
    case ErrorCode::kInsecureChannel: return "InsecureChannel";
    case ErrorCode::kPinConflict: return "PinConflict";
    case ErrorCode::kPinMismatch: return "PinMismatch";
    case ErrorCode::kMalformedMessage: return "MalformedMessage";
    case ErrorCode::kCryptoFailure: return "CryptoFailure";
  }
  return "Unknown";
}

namespace {

std::string format_message(ErrorCode code, const std::string& detail) {
  std::string msg(to_string(code));
  if (!detail.empty()) {
    msg += ": ";
    msg += detail;
  }
  return msg;
}

}  // namespace

Error::Error(ErrorCode code, const std::string& detail)
    : std::runtime_error(format_message(code, detail)), code_(code) {}

void fail(ErrorCode code, const std::string& detail) { throw Error(code, detail); }

std::optional<ErrorCode> error_code_of(std::string_view message) {
  auto name = message.substr(0, message.find(':'));
  for (int c = 0; c <= static_cast<int>(ErrorCode::kCryptoFailure); ++c) {
    auto code = static_cast<ErrorCode>(c);
    if (to_string(code) == name) return code;
  }
  return std::nullopt;
}

}  // namespace vaultor
