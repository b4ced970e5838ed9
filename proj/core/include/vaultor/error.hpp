#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace vaultor {

enum class ErrorCode {
  // tee_sim
  kInvalidProgram,
  kInvalidLimits,
  kInvalidReportData,
  kMalformedQuote,
  kSealIntegrityFailure,
  // host_program
  kNotFound,
  kQuotaExceeded,
  kBackupFailed,
  kChannelAuthFailure,
  kInvalidPath,
  kStartupRefused,
  // vault_daemon
  kAdvertiseFailed,
  kRejected,
  kStartFailed,
  kConfigInvalid,
  // tor_transport
  kCollision,
  kConnectFailed,
  kProxyError,
  kTransportClosed,
  // provider_client
  kQuoteMismatch,
  kAuthRejected,
  kPartialFailure,
  kImportRejected,
  kInsecureChannel,
  // client_fetch
  kPinConflict,
  kPinMismatch,
  // misc
  kMalformedMessage,
  kCryptoFailure,
};

std::string_view to_string(ErrorCode code);

/// Exception carrying one of the protocol error kinds.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& detail);

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] void fail(ErrorCode code, const std::string& detail = {});

/// Recovers the code from a "Name: detail" message such as an HP failure detail.
std::optional<ErrorCode> error_code_of(std::string_view message);

}  // namespace vaultor
