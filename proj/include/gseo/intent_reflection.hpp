#pragma once

#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "gseo/llm_gateway.hpp"
#include "gseo/prompts.hpp"

namespace gseo {

struct RolePersona {
  std::string name;
  std::string description;

  bool operator==(const RolePersona&) const = default;
};

struct RoleNeed {
  std::string role_name;
  std::vector<std::string> motivations;
  std::vector<std::string> search_goals;

  bool operator==(const RoleNeed&) const = default;
};

struct GapDiagnosis {
  std::string role_name;
  std::string gap_description;
  std::string misalignment_cause;

  bool operator==(const GapDiagnosis&) const = default;
};

struct ReflectionRecord {
  std::vector<RolePersona> roles;
  std::vector<RoleNeed> needs;
  std::vector<GapDiagnosis> gaps;
  std::string refined_intent;

  bool operator==(const ReflectionRecord&) const = default;
};

nlohmann::json to_json(const ReflectionRecord& record);
ReflectionRecord reflection_from_json(const nlohmann::json& j);

struct ReflectionOptions {
  int min_roles = 3;
  int max_roles = 8;
  int max_refined_words = 200;
};

// Parsers for the structured model outputs, exposed for testing.
//   Who:  repeated "NAME: ..." / "PROFILE: ..." pairs
//   What: "MOTIVATIONS:" and "GOALS:" headers, each followed by bullet lines
//   Why:  "GAP: ..." and "CAUSE: ..." fields (values may wrap lines)
std::vector<RolePersona> parse_roles(const std::string& text);
RoleNeed parse_role_need(const std::string& text, const std::string& role_name);
GapDiagnosis parse_gap(const std::string& text, const std::string& role_name);

// Who / What / Why / How reflection that generalizes an initial intent
// across inferred user roles.
class IntentReflector {
 public:
  IntentReflector(ChatClient& client, const PromptLibrary& prompts, ModelSettings model,
                  ReflectionOptions options = {});

  // Who. Case-insensitive duplicate names collapse to the first occurrence;
  // fewer than min_roles raises too-few-roles, extras beyond max_roles are
  // dropped.
  std::vector<RolePersona> generate_roles(const std::string& initial_intent,
                                          const std::string& summary);

  // What, conditioned on one persona.
  RoleNeed derive_role_needs(const RolePersona& role, const std::string& initial_intent);

  // Why, for one role-specific need.
  GapDiagnosis diagnose_gap(const std::string& initial_intent, const RoleNeed& need);

  // How. Returns a single paragraph capped at max_refined_words.
  std::string reconstruct_intent(const std::string& initial_intent,
                                 const std::vector<RoleNeed>& needs,
                                 const std::vector<GapDiagnosis>& gaps);

  // Who, then What and Why for each role in order, then How:
  // 2 + 2 * |roles| calls. Any failure aborts the whole reflection.
  ReflectionRecord reflect(const std::string& initial_intent, const std::string& summary);

 private:
  ChatClient& client_;
  const PromptLibrary& prompts_;
  ModelSettings model_;
  ReflectionOptions options_;
};

}  // namespace gseo
