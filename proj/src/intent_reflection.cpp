#include "gseo/intent_reflection.hpp"

#include <set>

#include <fmt/format.h>
#include <fmt/ranges.h>

#include "gseo/error.hpp"
#include "gseo/text_util.hpp"

namespace gseo {

using nlohmann::json;

json to_json(const ReflectionRecord& record) {
  json roles = json::array();
  for (const auto& r : record.roles) roles.push_back({{"name", r.name}, {"profile", r.description}});
  json needs = json::array();
  for (const auto& n : record.needs) {
    needs.push_back(
        {{"role", n.role_name}, {"motivations", n.motivations}, {"goals", n.search_goals}});
  }
  json gaps = json::array();
  for (const auto& g : record.gaps) {
    gaps.push_back({{"role", g.role_name}, {"gap", g.gap_description}, {"cause", g.misalignment_cause}});
  }
  return json{{"roles", std::move(roles)},
              {"needs", std::move(needs)},
              {"gaps", std::move(gaps)},
              {"refined_intent", record.refined_intent}};
}

ReflectionRecord reflection_from_json(const json& j) {
  ReflectionRecord r;
  for (const auto& x : j.at("roles")) r.roles.push_back({x.at("name"), x.at("profile")});
  for (const auto& x : j.at("needs")) {
    r.needs.push_back({x.at("role"), x.at("motivations").get<std::vector<std::string>>(),
                       x.at("goals").get<std::vector<std::string>>()});
  }
  for (const auto& x : j.at("gaps")) r.gaps.push_back({x.at("role"), x.at("gap"), x.at("cause")});
  r.refined_intent = j.at("refined_intent").get<std::string>();
  return r;
}

namespace {

std::string strip_emphasis(std::string_view line) {
  std::string out;
  for (std::size_t i = 0; i < line.size(); ++i) {
    if (line[i] == '*' && i + 1 < line.size() && line[i + 1] == '*') {
      ++i;
      continue;
    }
    out.push_back(line[i]);
  }
  return out;
}

// If `line` starts with "<key>:" (case-insensitive) stores the remainder.
bool take_field(const std::string& line, std::string_view key, std::string& value) {
  if (!text::starts_with_ci(line, key)) return false;
  std::string rest = text::trim(std::string_view(line).substr(key.size()));
  if (rest.empty() || rest.front() != ':') return false;
  value = text::trim(std::string_view(rest).substr(1));
  return true;
}

void append_continuation(std::string& field, const std::string& more) {
  if (more.empty()) return;
  if (!field.empty()) field.push_back(' ');
  field += more;
}

std::string bullet_block(const std::vector<std::string>& items) {
  std::string out;
  for (const auto& i : items) out += "- " + i + "\n";
  return out;
}

}  // namespace

std::vector<RolePersona> parse_roles(const std::string& text) {
  std::vector<RolePersona> roles;
  bool in_profile = false;
  std::size_t line_no = 0;
  for (const auto& raw_line : text::split_lines(text)) {
    ++line_no;
    const std::string line = text::strip_list_marker(strip_emphasis(raw_line));
    if (line.empty()) {
      in_profile = false;
      continue;
    }
    std::string value;
    if (take_field(line, "NAME", value)) {
      if (value.empty()) {
        throw Error("role-parse-error", fmt::format("line {}: NAME without a value", line_no));
      }
      roles.push_back({value, ""});
      in_profile = false;
    } else if (take_field(line, "PROFILE", value)) {
      if (roles.empty()) {
        throw Error("role-parse-error", fmt::format("line {}: PROFILE before any NAME", line_no));
      }
      roles.back().description = value;
      in_profile = true;
    } else if (in_profile) {
      append_continuation(roles.back().description, line);
    }
  }
  if (roles.empty()) throw Error("role-parse-error", "no NAME: entries in role list");
  for (const auto& r : roles) {
    if (r.description.empty()) {
      throw Error("role-parse-error", fmt::format("role '{}' has no PROFILE", r.name));
    }
  }
  return roles;
}

RoleNeed parse_role_need(const std::string& text, const std::string& role_name) {
  RoleNeed need{role_name, {}, {}};
  std::vector<std::string>* current = nullptr;
  for (const auto& raw_line : text::split_lines(text)) {
    const std::string stripped = text::trim(strip_emphasis(raw_line));
    if (stripped.empty()) continue;
    std::string value;
    if (take_field(stripped, "MOTIVATIONS", value) || take_field(stripped, "MOTIVATION", value)) {
      current = &need.motivations;
    } else if (take_field(stripped, "SEARCH GOALS", value) || take_field(stripped, "GOALS", value)) {
      current = &need.search_goals;
    } else {
      if (current) {
        std::string item = text::strip_list_marker(stripped);
        if (!item.empty()) current->push_back(std::move(item));
      }
      continue;
    }
    if (!value.empty()) current->push_back(value);
  }
  if (need.motivations.empty()) {
    throw Error("parse-error", fmt::format("role '{}': no MOTIVATIONS items", role_name));
  }
  if (need.search_goals.empty()) {
    throw Error("parse-error", fmt::format("role '{}': no GOALS items", role_name));
  }
  return need;
}

GapDiagnosis parse_gap(const std::string& text, const std::string& role_name) {
  GapDiagnosis gap{role_name, "", ""};
  std::string* current = nullptr;
  for (const auto& raw_line : text::split_lines(text)) {
    const std::string line = text::strip_list_marker(strip_emphasis(raw_line));
    if (line.empty()) continue;
    std::string value;
    if (take_field(line, "GAP", value)) {
      current = &gap.gap_description;
      *current = value;
    } else if (take_field(line, "CAUSE", value)) {
      current = &gap.misalignment_cause;
      *current = value;
    } else if (current) {
      append_continuation(*current, line);
    }
  }
  if (gap.gap_description.empty()) {
    throw Error("parse-error", fmt::format("role '{}': missing GAP", role_name));
  }
  if (gap.misalignment_cause.empty()) {
    throw Error("parse-error", fmt::format("role '{}': missing CAUSE", role_name));
  }
  return gap;
}

IntentReflector::IntentReflector(ChatClient& client, const PromptLibrary& prompts,
                                 ModelSettings model, ReflectionOptions options)
    : client_(client), prompts_(prompts), model_(std::move(model)), options_(options) {}

std::vector<RolePersona> IntentReflector::generate_roles(const std::string& initial_intent,
                                                         const std::string& summary) {
  if (text::trim(initial_intent).empty() || text::trim(summary).empty()) {
    throw Error("invalid-input", "role generation needs an intent and a summary");
  }
  const ChatResponse response = client_.complete(model_.request(
      prompts_.prompt("system_optimizer"),
      text::render(prompts_.prompt("who"), {{"intent", initial_intent},
                                            {"summary", summary},
                                            {"min_roles", std::to_string(options_.min_roles)},
                                            {"max_roles", std::to_string(options_.max_roles)}})));
  std::vector<RolePersona> unique;
  std::set<std::string> seen;
  for (auto& r : parse_roles(response.text)) {
    if (seen.insert(text::to_lower(r.name)).second) unique.push_back(std::move(r));
  }
  if (static_cast<int>(unique.size()) < options_.min_roles) {
    throw Error("too-few-roles", fmt::format("{} distinct roles, need at least {}", unique.size(),
                                             options_.min_roles));
  }
  if (static_cast<int>(unique.size()) > options_.max_roles) unique.resize(options_.max_roles);
  return unique;
}

RoleNeed IntentReflector::derive_role_needs(const RolePersona& role,
                                            const std::string& initial_intent) {
  if (text::trim(role.name).empty() || text::trim(role.description).empty()) {
    throw Error("invalid-input", "persona needs a name and a profile");
  }
  const ChatResponse response = client_.complete(model_.request(
      prompts_.prompt("system_optimizer"),
      text::render(prompts_.prompt("what"), {{"role_name", role.name},
                                             {"role_profile", role.description},
                                             {"intent", initial_intent}})));
  return parse_role_need(response.text, role.name);
}

GapDiagnosis IntentReflector::diagnose_gap(const std::string& initial_intent, const RoleNeed& need) {
  if (need.role_name.empty() || need.motivations.empty() || need.search_goals.empty()) {
    throw Error("invalid-input", "gap diagnosis needs a complete role need");
  }
  const ChatResponse response = client_.complete(model_.request(
      prompts_.prompt("system_optimizer"),
      text::render(prompts_.prompt("why"), {{"intent", initial_intent},
                                            {"role_name", need.role_name},
                                            {"motivations", bullet_block(need.motivations)},
                                            {"goals", bullet_block(need.search_goals)}})));
  return parse_gap(response.text, need.role_name);
}

std::string IntentReflector::reconstruct_intent(const std::string& initial_intent,
                                                const std::vector<RoleNeed>& needs,
                                                const std::vector<GapDiagnosis>& gaps) {
  if (needs.empty() || gaps.empty()) {
    throw Error("invalid-input", "intent reconstruction needs at least one role need and gap");
  }
  if (needs.size() != gaps.size()) {
    throw Error("invalid-input", "needs and gaps must cover the same roles");
  }
  std::string needs_block;
  std::string gaps_block;
  for (std::size_t i = 0; i < needs.size(); ++i) {
    if (needs[i].role_name != gaps[i].role_name) {
      throw Error("invalid-input", fmt::format("need for '{}' paired with gap for '{}'",
                                               needs[i].role_name, gaps[i].role_name));
    }
    needs_block += fmt::format("- {}: motivations: {}; goals: {}\n", needs[i].role_name,
                               fmt::join(needs[i].motivations, "; "),
                               fmt::join(needs[i].search_goals, "; "));
    gaps_block += fmt::format("- {}: {} (cause: {})\n", gaps[i].role_name,
                              gaps[i].gap_description, gaps[i].misalignment_cause);
  }
  const ChatResponse response = client_.complete(model_.request(
      prompts_.prompt("system_optimizer"),
      text::render(prompts_.prompt("how"),
                   {{"intent", initial_intent},
                    {"needs", needs_block},
                    {"gaps", gaps_block},
                    {"max_words", std::to_string(options_.max_refined_words)}})));
  std::string refined = text::trim(strip_emphasis(response.text));
  std::string value;
  if (take_field(refined, "REFINED INTENT", value)) refined = value;
  refined = text::truncate_words(text::collapse_whitespace(refined), options_.max_refined_words);
  if (refined.empty()) throw Error("parse-error", "empty refined intent");
  if (text::iequals(refined, text::collapse_whitespace(initial_intent))) {
    throw Error("refined-intent-unchanged", "reflection returned the initial intent unchanged");
  }
  return refined;
}

ReflectionRecord IntentReflector::reflect(const std::string& initial_intent,
                                          const std::string& summary) {
  ReflectionRecord record;
  try {
    record.roles = generate_roles(initial_intent, summary);
  } catch (const Error& e) {
    throw e.with_context("who");
  }
  for (const auto& role : record.roles) {
    try {
      record.needs.push_back(derive_role_needs(role, initial_intent));
      record.gaps.push_back(diagnose_gap(initial_intent, record.needs.back()));
    } catch (const Error& e) {
      throw e.with_context(fmt::format("role '{}'", role.name));
    }
  }
  try {
    record.refined_intent = reconstruct_intent(initial_intent, record.needs, record.gaps);
  } catch (const Error& e) {
    throw e.with_context("how");
  }
  return record;
}

}  // namespace gseo
