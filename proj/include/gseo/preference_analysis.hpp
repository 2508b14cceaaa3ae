#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "gseo/intent_reflection.hpp"
#include "gseo/llm_gateway.hpp"
#include "gseo/prompts.hpp"
#include "gseo/strategy_optimizer.hpp"

namespace gseo {

inline constexpr std::string_view kUncategorized = "Uncategorized";

// Ordered category list with optional keyword hints for offline labeling.
// The fallback category (kUncategorized for roles, "other" for steps) is
// always last.
struct Taxonomy {
  struct Category {
    std::string name;
    std::vector<std::string> keywords;  // lower case
  };

  std::vector<Category> categories;
  std::string fallback;

  [[nodiscard]] std::vector<std::string> names() const;  // includes fallback
  [[nodiscard]] bool contains(const std::string& name) const;
};

// File format: one category per line, "Name | keyword, keyword, ...".
// Blank lines and '#' comments are skipped. A "[section]" header starts a
// named section; parse_taxonomy_file returns the unnamed section or the
// one named `section`.
Taxonomy parse_taxonomy(const std::string& text, const std::string& section,
                        const std::string& fallback);

struct StepTaxonomies {
  Taxonomy objectives;
  Taxonomy actions;
};

Taxonomy default_role_taxonomy(const PromptLibrary& prompts);
StepTaxonomies default_step_taxonomies(const PromptLibrary& prompts);

struct DistributionReport {
  std::vector<std::string> categories;  // taxonomy order, fallback last
  std::map<std::string, long> counts;
  long total = 0;
  std::map<std::string, double> fractions;
  long labeling_failures = 0;
};

// Counts in taxonomy order; fractions are count / total (all zero when
// total is zero).
DistributionReport make_distribution(const std::vector<std::string>& categories,
                                     const std::vector<std::string>& labels);

enum class LabelMode { offline, llm };

// Assigns exactly one taxonomy category per persona or step, either from
// keyword hints (offline) or through a constrained single-choice prompt.
class Labeler {
 public:
  // Offline labeler.
  explicit Labeler(const PromptLibrary& prompts);
  // LLM labeler; one re-ask on an invalid choice, then label-parse-error.
  Labeler(const PromptLibrary& prompts, ChatClient& client, ModelSettings model);

  [[nodiscard]] LabelMode mode() const { return client_ ? LabelMode::llm : LabelMode::offline; }

  std::string label(const std::string& subject, const Taxonomy& taxonomy,
                    const std::string& kind);

  std::string label_role(const RolePersona& persona, const Taxonomy& taxonomy);

  // (objective category, action category). Throws invalid-input when either
  // label is empty.
  std::pair<std::string, std::string> parse_step_labels(const OptimizationStep& step,
                                                        const StepTaxonomies& taxonomies);

 private:
  const PromptLibrary& prompts_;
  ChatClient* client_ = nullptr;
  ModelSettings model_;
};

// Offline keyword match: first category in taxonomy order owning a keyword
// that occurs in the text at word boundaries; fallback otherwise.
std::string keyword_label(const std::string& text, const Taxonomy& taxonomy);

// Every persona instance across traces, labeled and tallied. Throws
// empty-input without traces.
DistributionReport role_distribution(const std::vector<OptimizationTrace>& traces,
                                     const Taxonomy& taxonomy, Labeler& labeler);

std::pair<DistributionReport, DistributionReport> step_distribution(
    const std::vector<OptimizationTrace>& traces, const StepTaxonomies& taxonomies,
    Labeler& labeler);

// Share of steps whose objective is a named quality category (anything but
// the fallback).
double content_quality_fraction(const DistributionReport& objectives);

std::string distribution_csv(const DistributionReport& report);
std::string distribution_svg(const DistributionReport& report, const std::string& title);

}  // namespace gseo
