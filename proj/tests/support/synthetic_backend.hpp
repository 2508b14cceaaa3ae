#pragma once

#include <string>
#include <vector>

#include "gseo/llm_gateway.hpp"

namespace gseo::testing {

// Rule-based stand-in for a chat model. Reads the "### Task:" header (or a
// rubric's "Dimension:" line) and answers deterministically, so fixture
// files can be regenerated and the expected metrics recomputed by an
// independent script. tests/oracles/synthetic.py mirrors these rules.
class SyntheticBackend final : public Backend {
 public:
  ChatResponse send(const ChatRequest& request) override;

  [[nodiscard]] static std::string respond(const std::string& user_text);
};

// ASCII alphanumeric runs in their original case.
std::vector<std::string> alnum_tokens(const std::string& text);

// Tail sentence appended by rewrite tasks, keyed by task name.
const std::string& rewrite_tail(const std::string& task);

}  // namespace gseo::testing
