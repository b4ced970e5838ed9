#include "vaultor/wire.hpp"

#include <json.hpp>

#include "vaultor/error.hpp"

namespace vaultor {

std::string_view to_string(RequestType type) {
  switch (type) {
    case RequestType::kQuote: return "quote";
    case RequestType::kUpload: return "upload";
    case RequestType::kDownload: return "download";
    case RequestType::kRemove: return "remove";
    case RequestType::kClientGet: return "client_get";
    case RequestType::kSubmitHp: return "submit_hp";
    case RequestType::kUnknown: return "unknown";
  }
  return "unknown";
}

RequestType parse_request_type(std::string_view s) {
  for (auto t : {RequestType::kQuote, RequestType::kUpload, RequestType::kDownload, RequestType::kRemove,
                 RequestType::kClientGet, RequestType::kSubmitHp}) {
    if (s == to_string(t)) return t;
  }
  return RequestType::kUnknown;
}

std::string_view to_string(ResponseStatus status) {
  switch (status) {
    case ResponseStatus::kSuccess: return "SUCCESS";
    case ResponseStatus::kFailure: return "FAILURE";
    case ResponseStatus::kStaleWarning: return "STALE_WARNING";
  }
  return "FAILURE";
}

Bytes encode_request(const HpRequest& request) {
  nlohmann::json j{{"type", std::string(to_string(request.type))},
                   {"path", request.path},
                   {"data", base64_encode(request.data)}};
  if (request.auth) j["auth"] = base64_encode(*request.auth);
  return to_bytes(j.dump());
}

HpRequest decode_request(ByteView body) {
  auto j = nlohmann::json::parse(to_string(body), nullptr, false);
  if (!j.is_object()) fail(ErrorCode::kMalformedMessage, "request is not a JSON object");
  HpRequest r;
  try {
    r.type = parse_request_type(j.at("type").get<std::string>());
    r.path = j.value("path", std::string());
    r.data = base64_decode(j.value("data", std::string()));
    if (j.contains("auth") && !j.at("auth").is_null()) r.auth = base64_decode(j.at("auth").get<std::string>());
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kMalformedMessage, e.what());
  }
  return r;
}

Bytes encode_response(const HpResponse& response) {
  nlohmann::json j{{"status", std::string(to_string(response.status))},
                   {"data", base64_encode(response.data)},
                   {"detail", response.detail}};
  return to_bytes(j.dump());
}

HpResponse decode_response(ByteView body) {
  auto j = nlohmann::json::parse(to_string(body), nullptr, false);
  if (!j.is_object()) fail(ErrorCode::kMalformedMessage, "response is not a JSON object");
  HpResponse r;
  try {
    auto status = j.at("status").get<std::string>();
    if (status == "SUCCESS") {
      r.status = ResponseStatus::kSuccess;
    } else if (status == "STALE_WARNING") {
      r.status = ResponseStatus::kStaleWarning;
    } else if (status == "FAILURE") {
      r.status = ResponseStatus::kFailure;
    } else {
      fail(ErrorCode::kMalformedMessage, "unknown status " + status);
    }
    r.data = base64_decode(j.value("data", std::string()));
    r.detail = j.value("detail", std::string());
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kMalformedMessage, e.what());
  }
  return r;
}

}  // namespace vaultor
