#pragma once

#include <array>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "gseo/corpus.hpp"
#include "gseo/intent_reflection.hpp"
#include "gseo/llm_gateway.hpp"
#include "gseo/prompts.hpp"

namespace gseo {

enum class StrategyId {
  traditional_seo,
  unique_words,
  simple_expression,
  authoritative_expression,
  fluent_expression,
  terminology_addition,
  reputation_addition,
  quotation_addition,
  statistics_addition,
  raid_gseo,
  simple_gseo_no_step,
  simple_gseo_with_step,
  id_gseo_no_summary,
  id_gseo_with_summary,
};

inline constexpr std::array<StrategyId, 14> kAllStrategies = {
    StrategyId::traditional_seo,       StrategyId::unique_words,
    StrategyId::simple_expression,     StrategyId::authoritative_expression,
    StrategyId::fluent_expression,     StrategyId::terminology_addition,
    StrategyId::reputation_addition,   StrategyId::quotation_addition,
    StrategyId::statistics_addition,   StrategyId::raid_gseo,
    StrategyId::simple_gseo_no_step,   StrategyId::simple_gseo_with_step,
    StrategyId::id_gseo_no_summary,    StrategyId::id_gseo_with_summary,
};

[[nodiscard]] std::string_view to_string(StrategyId id);
// Throws invalid-input for unknown names.
[[nodiscard]] StrategyId strategy_from_string(std::string_view name);
// Short column label used in report tables ("Tran. SEO", "RAID G-SEO", ...).
[[nodiscard]] std::string_view display_name(StrategyId id);
[[nodiscard]] bool is_baseline(StrategyId id);

// Optional pipeline stages a strategy populates in its trace.
enum class Stage { summary, initial_intent, reflection, refined_intent, steps };

[[nodiscard]] std::string_view to_string(Stage stage);
[[nodiscard]] std::set<Stage> declared_stages(StrategyId id);

struct OptimizationStep {
  std::string objective_label;
  std::string action_label;
  std::string instruction_text;

  bool operator==(const OptimizationStep&) const = default;
};

struct OptimizationTrace {
  StrategyId strategy = StrategyId::raid_gseo;
  std::optional<std::string> summary;
  std::optional<std::string> initial_intent;
  std::optional<std::string> refined_intent;
  std::optional<ReflectionRecord> reflection;
  std::vector<OptimizationStep> steps;
  std::string rewritten_text;
  int elapsed_calls = 0;

  [[nodiscard]] std::set<Stage> populated_stages() const;

  bool operator==(const OptimizationTrace&) const = default;
};

nlohmann::json to_json(const OptimizationTrace& trace);
OptimizationTrace trace_from_json(const nlohmann::json& j);

struct OptimizerOptions {
  int min_steps = 3;
  int max_steps = 8;
  double min_length_ratio = 0.5;
  double max_length_ratio = 3.0;
  ReflectionOptions reflection;
};

// Numbered blocks of "OBJECTIVE:", "ACTION:" and "INSTRUCTION:" fields.
// Text before the first OBJECTIVE is ignored; a field may wrap onto
// following lines. Throws step-parse-error(line, reason).
std::vector<OptimizationStep> parse_steps(const std::string& text);

// Content rewriting: the nine single-prompt baselines, the intent-driven
// pipeline and its ablations. Every strategy is query-blind: only the
// source itself reaches the model.
class StrategyOptimizer {
 public:
  StrategyOptimizer(ChatClient& client, const PromptLibrary& prompts, ModelSettings model,
                    OptimizerOptions options = {});

  std::string summarize_content(const ContentSource& source);
  std::string infer_initial_intent(const ContentSource& source, const std::string& summary);

  // An empty intent plans from the content alone.
  std::vector<OptimizationStep> plan_steps(const ContentSource& source, const std::string& intent);

  // Output must hold between 0.5x and 3x the source's word count; one retry
  // with feedback, then length-guard-violation.
  std::string rewrite_content(const ContentSource& source, const std::string& intent,
                              const std::vector<OptimizationStep>& steps);

  std::string rewrite_baseline(StrategyId baseline, const ContentSource& source);

  // Stage errors are rethrown with the stage name prefixed.
  OptimizationTrace apply_strategy(StrategyId strategy, const ContentSource& source);

 private:
  std::string checked_rewrite(const ContentSource& source, ChatRequest request);

  ChatClient& client_;
  const PromptLibrary& prompts_;
  ModelSettings model_;
  OptimizerOptions options_;
};

}  // namespace gseo
