#pragma once

#include <cstdint>
#include <future>
#include <memory>
#include <mutex>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "gseo/corpus.hpp"
#include "gseo/llm_gateway.hpp"
#include "gseo/prompts.hpp"
#include "gseo/strategy_optimizer.hpp"
#include "gseo/visibility_metrics.hpp"

namespace gseo {

struct ExperimentConfig {
  std::filesystem::path dataset_path;
  std::vector<StrategyId> strategies;
  std::size_t sample_count = kDefaultSampleCount;
  std::uint64_t seed = kDefaultSeed;
  std::string generator_model = "gseo-generator";
  std::string optimizer_model = "gseo-optimizer";
  std::string judge_model = "gseo-judge";
  int concurrency_limit = 4;
  std::filesystem::path output_dir = "out";
  // When set, must equal the loaded template set's VERSION.
  std::string template_version;
  std::optional<std::filesystem::path> template_dir;
  std::optional<std::string> backend;
  std::optional<std::filesystem::path> cache_dir;
  // Replaces every sample's stored target index.
  std::optional<int> target_override;

  // Throws config-error.
  void validate() const;
};

// Throws config-not-found or config-error. Relative paths inside the file
// resolve against the file's directory.
ExperimentConfig load_config(const std::filesystem::path& path);

ModelSettings generator_settings(const std::string& model_id);
ModelSettings optimizer_settings(const std::string& model_id);
// Temperature 0 for judging.
ModelSettings judge_settings(const std::string& model_id);

struct TaskResult {
  std::string sample_id;
  int query_index = 0;  // 0 = canonical query, 1..4 = variants
  std::string query;
  StrategyId strategy = StrategyId::raid_gseo;
  VisibilityScores before;
  VisibilityScores after;
  std::vector<ImprovementRecord> improvements;
  std::string trace_ref;

  [[nodiscard]] double improvement_of(const std::string& metric) const;
};

nlohmann::json to_json(const TaskResult& result);
TaskResult task_result_from_json(const nlohmann::json& j);

struct StrategyRow {
  StrategyId strategy = StrategyId::raid_gseo;
  std::map<std::string, double> mean_improvements;  // keyed by improvement_metric_names()
  double adaptability_rate = 0.0;
  long tasks = 0;
  long failures = 0;
};

struct SampleRow {
  std::string sample_id;
  StrategyId strategy = StrategyId::raid_gseo;
  double objective_overall = 0.0;
  double subjective_average = 0.0;
  long tasks = 0;
};

struct RunMetadata {
  std::string run_id;
  std::string config_digest;
  std::string template_version;
  std::size_t sample_count = 0;
  std::uint64_t seed = 0;
  std::string started_at;
  std::string finished_at;
};

struct ExperimentReport {
  std::vector<StrategyRow> rows;
  std::vector<SampleRow> per_sample;
  RunMetadata metadata;
  long expected_tasks = 0;
  long completed_tasks = 0;

  [[nodiscard]] bool complete() const { return completed_tasks == expected_tasks; }
};

nlohmann::json to_json(const ExperimentReport& report);
ExperimentReport experiment_report_from_json(const nlohmann::json& j);

// Fraction of results whose subjective_average improvement is strictly
// positive. Throws empty-input.
double adaptability_rate(const std::vector<TaskResult>& results);

// Pooled means over all results per strategy. Results are folded in
// (sample, strategy, query) order so completion order never matters.
ExperimentReport aggregate(const std::vector<TaskResult>& results,
                           const std::vector<StrategyId>& strategies,
                           const std::vector<std::string>& sample_order,
                           const std::map<StrategyId, long>& failures);

enum class ReportFormat { markdown, csv, svg };

ReportFormat report_format_from_string(std::string_view name);

std::string render_markdown(const ExperimentReport& report);
std::string render_csv(const ExperimentReport& report);
std::string render_svg(const ExperimentReport& report);

// Writes report.md / report.csv / report.svg into `dir`.
std::vector<std::filesystem::path> emit_report(const ExperimentReport& report,
                                               const std::set<ReportFormat>& formats,
                                               const std::filesystem::path& dir);

struct RunControl {
  // Stop scheduling once this many tasks completed in this invocation;
  // used to exercise interruption and resume.
  std::optional<std::size_t> stop_after_tasks;
};

// End-to-end experiment: subset the dataset, optimize each (sample,
// strategy) once, score before/after answers for all five queries, persist
// results incrementally under <output_dir>/runs/<run-id>/ and aggregate.
class ExperimentRunner {
 public:
  ExperimentRunner(ExperimentConfig config, ChatClient& client, const PromptLibrary& prompts);

  // Digest over dataset content, selection, strategies, models and template
  // version. Output location and concurrency are excluded.
  [[nodiscard]] std::string config_digest() const;
  [[nodiscard]] std::string run_id() const;
  [[nodiscard]] std::filesystem::path run_dir() const;

  TaskResult run_task(const BenchSample& sample, int query_index, StrategyId strategy,
                      const std::string& optimized_text, const std::string& trace_ref);

  ExperimentReport run(RunControl control = {});

 private:
  struct BeforeEntry;

  VisibilityScores score(const GeneratedAnswer& answer, const ContentSource& target,
                         const std::string& query);
  std::shared_ptr<const BeforeEntry> before(const BenchSample& sample, int query_index);

  ExperimentConfig config_;
  ChatClient& client_;
  const PromptLibrary& prompts_;
  std::string dataset_sha256_;

  std::mutex before_mutex_;
  std::map<std::pair<std::string, int>, std::shared_future<std::shared_ptr<const BeforeEntry>>>
      before_cache_;
};

// Reloads persisted results from a run directory (ignoring a truncated last
// line) and re-aggregates them.
std::vector<TaskResult> load_results(const std::filesystem::path& run_dir);
ExperimentReport report_from_run_dir(const std::filesystem::path& run_dir);
std::vector<OptimizationTrace> load_traces(const std::filesystem::path& run_dir);

// Published full-scale numbers rendered as a reference note in reports.
struct ReferenceValues {
  static constexpr double raid_objective_overall = 8.49;
  static constexpr double raid_subjective_average = 4.72;
  static constexpr double raid_adaptability = 0.628;
  static constexpr double terminology_adaptability = 0.558;
};

}  // namespace gseo
