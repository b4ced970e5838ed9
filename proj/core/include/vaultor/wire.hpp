#pragma once

#include <optional>
#include <string>

#include "vaultor/bytes.hpp"

namespace vaultor {

enum class RequestType { kQuote, kUpload, kDownload, kRemove, kClientGet, kSubmitHp, kUnknown };
std::string_view to_string(RequestType type);
RequestType parse_request_type(std::string_view s);

struct HpRequest {
  RequestType type = RequestType::kUnknown;
  std::string path;
  Bytes data;
  std::optional<Bytes> auth;
};

enum class ResponseStatus { kSuccess, kFailure, kStaleWarning };
std::string_view to_string(ResponseStatus status);

struct HpResponse {
  ResponseStatus status = ResponseStatus::kFailure;
  Bytes data;
  std::string detail;

  bool ok() const { return status != ResponseStatus::kFailure; }

  static HpResponse success(Bytes data = {}, std::string detail = {}) {
    return {ResponseStatus::kSuccess, std::move(data), std::move(detail)};
  }
  static HpResponse failure(std::string detail) { return {ResponseStatus::kFailure, {}, std::move(detail)}; }
};

/// JSON body {"type","path","data"(base64),"auth"(base64, optional)}.
Bytes encode_request(const HpRequest& request);
/// Throws Error(kMalformedMessage). Unknown type strings decode to kUnknown.
HpRequest decode_request(ByteView body);

/// JSON body {"status","data"(base64),"detail"}.
Bytes encode_response(const HpResponse& response);
HpResponse decode_response(ByteView body);

}  // namespace vaultor
