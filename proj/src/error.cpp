#include "gseo/error.hpp"

namespace gseo {

Error::Error(std::string code, const std::string& message)
    : std::runtime_error(message), code_(std::move(code)) {}

Error Error::with_context(const std::string& context) const {
  return Error(code_, context + ": " + what());
}

namespace {

const char* transient_code(TransientError::Kind kind) {
  switch (kind) {
    case TransientError::Kind::network:
      return "network-unreachable";
    case TransientError::Kind::rate_limited:
      return "rate-limited";
    case TransientError::Kind::server:
      return "server-error";
  }
  return "transient";
}

}  // namespace

TransientError::TransientError(Kind kind, const std::string& message)
    : Error(transient_code(kind), message), kind_(kind) {}

}  // namespace gseo
