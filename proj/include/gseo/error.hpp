#pragma once

#include <stdexcept>
#include <string>

namespace gseo {

// Every failure surfaced by the library carries a stable, kebab-case code
// (e.g. "scripted-miss", "citation-out-of-range") plus a human message.
// The CLI prints both as "error: <code>: <message>".
class Error : public std::runtime_error {
 public:
  Error(std::string code, const std::string& message);

  [[nodiscard]] const std::string& code() const noexcept { return code_; }

  // Same code, message prefixed with "<context>: ".
  [[nodiscard]] Error with_context(const std::string& context) const;

 private:
  std::string code_;
};

// Retryable backend failure. The gateway retries these with backoff and
// converts them to a plain Error once attempts run out.
class TransientError : public Error {
 public:
  enum class Kind { network, rate_limited, server };

  TransientError(Kind kind, const std::string& message);

  [[nodiscard]] Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

}  // namespace gseo
