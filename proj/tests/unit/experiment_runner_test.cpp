#include <algorithm>
#include <fstream>
#include <sstream>

#include <unistd.h>

#include <fmt/format.h>
#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "fixture_inputs.hpp"
#include "gseo/error.hpp"
#include "gseo/experiment_runner.hpp"

namespace gseo {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path golden(const std::string& name) { return testing::repo_root() / "tests" / "golden" / name; }

class RunnerTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           fmt::format("gseo-runner-{}-{}", ::getpid(), ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::remove_all(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  fs::path dir_;
  PromptLibrary prompts_ = PromptLibrary::builtin();
};

TEST_F(RunnerTest, ToyRunMatchesGoldens) {
  Gateway gw(testing::fixture_backend());
  ExperimentRunner runner(testing::toy_experiment_config(dir_), gw, prompts_);
  const ExperimentReport report = runner.run();
  EXPECT_EQ(report.expected_tasks, 30);
  EXPECT_EQ(report.completed_tasks, 30);
  ASSERT_TRUE(report.complete());

  std::ifstream in(golden("toy_experiment.json"));
  const json g = json::parse(in);
  ASSERT_EQ(report.rows.size(), 2u);
  for (const auto& row : report.rows) {
    const json& want = g.at("rows").at(std::string(to_string(row.strategy)));
    EXPECT_EQ(row.tasks, want.at("tasks").get<long>());
    EXPECT_EQ(row.failures, 0);
    EXPECT_NEAR(row.adaptability_rate, want.at("adaptability").get<double>(), 1e-9);
    ASSERT_EQ(row.mean_improvements.size(), 12u);
    for (const auto& [metric, value] : row.mean_improvements) {
      EXPECT_NEAR(value, want.at("means").at(metric).get<double>(), 1e-9) << metric;
    }
  }
  std::vector<std::string> order;
  for (const auto& s : report.per_sample) {
    if (order.empty() || order.back() != s.sample_id) order.push_back(s.sample_id);
  }
  EXPECT_EQ(order, g.at("samples").get<std::vector<std::string>>());

  for (const char* ext : {"md", "csv", "svg"}) {
    EXPECT_EQ(slurp(runner.run_dir() / fmt::format("report.{}", ext)), slurp(golden(fmt::format("toy_report.{}", ext))))
        << ext;
  }
  EXPECT_EQ(load_traces(runner.run_dir()).size(), 6u);
}

TEST_F(RunnerTest, CsvHasTwelveRowsPerStrategy) {
  Gateway gw(testing::fixture_backend());
  ExperimentRunner runner(testing::toy_experiment_config(dir_), gw, prompts_);
  const std::string csv = render_csv(runner.run());
  std::istringstream lines(csv);
  std::string line;
  std::getline(lines, line);
  EXPECT_EQ(line, "strategy,metric,mean_improvement_pct,tasks,failures");
  int rows = 0;
  while (std::getline(lines, line)) rows += !line.empty();
  EXPECT_EQ(rows, 24);
}

TEST_F(RunnerTest, InterruptedThenResumedIsIdentical) {
  fs::path full_dir;
  {
    Gateway gw(testing::fixture_backend());
    ExperimentRunner runner(testing::toy_experiment_config(dir_ / "full"), gw, prompts_);
    runner.run();
    full_dir = runner.run_dir();
  }
  fs::path resumed_dir;
  for (std::size_t stop : {4u, 11u}) {
    Gateway gw(testing::fixture_backend());
    ExperimentRunner runner(testing::toy_experiment_config(dir_ / "resumed"), gw, prompts_);
    const ExperimentReport partial = runner.run(RunControl{stop});
    EXPECT_FALSE(partial.complete());
    EXPECT_FALSE(fs::exists(runner.run_dir() / "report.md"));
    EXPECT_THROW(emit_report(partial, {ReportFormat::markdown}, dir_ / "emit"), Error);
  }
  {
    // A torn final line, as left by a crash mid-append, is ignored on reload.
    Gateway gw(testing::fixture_backend());
    ExperimentRunner runner(testing::toy_experiment_config(dir_ / "resumed"), gw, prompts_);
    std::ofstream(runner.run_dir() / "results.jsonl", std::ios::app) << "{\"sample_id\": \"s-0";
    const ExperimentReport report = runner.run();
    EXPECT_TRUE(report.complete());
    resumed_dir = runner.run_dir();
  }
  EXPECT_EQ(resumed_dir.filename(), full_dir.filename());
  for (const char* ext : {"md", "csv", "svg"}) {
    EXPECT_EQ(slurp(resumed_dir / fmt::format("report.{}", ext)), slurp(full_dir / fmt::format("report.{}", ext)));
  }
  const ExperimentReport reloaded = report_from_run_dir(resumed_dir);
  EXPECT_EQ(render_markdown(reloaded), slurp(full_dir / "report.md"));
}

TEST_F(RunnerTest, CompletedRunMakesNoCalls) {
  {
    Gateway gw(testing::fixture_backend());
    ExperimentRunner runner(testing::toy_experiment_config(dir_), gw, prompts_);
    runner.run();
  }
  Gateway gw(testing::fixture_backend());
  ExperimentRunner runner(testing::toy_experiment_config(dir_), gw, prompts_);
  EXPECT_TRUE(runner.run().complete());
  EXPECT_EQ(gw.stats().requests, 0u);
}

// Fails one strategy's rewrite for one sample.
class FailOne final : public ChatClient {
 public:
  FailOne(ChatClient& inner, std::string needle) : inner_(inner), needle_(std::move(needle)) {}
  ChatResponse complete(const ChatRequest& request) override {
    const std::string& u = request.messages.back().text;
    if (u.find("### Task: baseline-terminology_addition") != std::string::npos && u.find(needle_) != std::string::npos) {
      throw Error("server-error", "injected failure");
    }
    return inner_.complete(request);
  }

 private:
  ChatClient& inner_;
  std::string needle_;
};

TEST_F(RunnerTest, FailuresAreIsolated) {
  std::string needle;
  for (const auto& s : load_dataset(testing::repo_root() / "data" / "toy_dataset.jsonl")) {
    if (s.sample_id == "s-007") needle = s.target().text.substr(0, 40);
  }
  Gateway gw(testing::fixture_backend());
  FailOne client(gw, needle);
  ExperimentRunner runner(testing::toy_experiment_config(dir_), client, prompts_);
  const ExperimentReport report = runner.run();
  EXPECT_EQ(report.completed_tasks, 30);
  ASSERT_EQ(report.rows.size(), 2u);
  EXPECT_EQ(report.rows[0].strategy, StrategyId::raid_gseo);
  EXPECT_EQ(report.rows[0].tasks, 15);
  EXPECT_EQ(report.rows[0].failures, 0);
  EXPECT_EQ(report.rows[1].tasks, 10);
  EXPECT_EQ(report.rows[1].failures, 5);

  std::ifstream in(golden("toy_experiment.json"));
  const json g = json::parse(in);
  for (const auto& [metric, value] : report.rows[0].mean_improvements) {
    EXPECT_NEAR(value, g.at("rows").at("raid_gseo").at("means").at(metric).get<double>(), 1e-9);
  }
  std::ifstream failures(runner.run_dir() / "failures.jsonl");
  std::string line;
  int n = 0;
  while (std::getline(failures, line)) {
    const json f = json::parse(line);
    EXPECT_EQ(f.at("sample_id"), "s-007");
    EXPECT_EQ(f.at("code"), "server-error");
    ++n;
  }
  EXPECT_EQ(n, 5);
}

TEST_F(RunnerTest, RunIdDependsOnSelectionNotLocation) {
  Gateway gw(testing::fixture_backend());
  ExperimentConfig a = testing::toy_experiment_config(dir_ / "a");
  ExperimentConfig b = testing::toy_experiment_config(dir_ / "b");
  b.concurrency_limit = 1;
  EXPECT_EQ(ExperimentRunner(a, gw, prompts_).run_id(), ExperimentRunner(b, gw, prompts_).run_id());
  b.seed = 8;
  EXPECT_NE(ExperimentRunner(a, gw, prompts_).run_id(), ExperimentRunner(b, gw, prompts_).run_id());
  EXPECT_EQ(ExperimentRunner(a, gw, prompts_).run_id().size(), 16u);
}

TEST_F(RunnerTest, ConstructorChecks) {
  Gateway gw(testing::fixture_backend());
  ExperimentConfig cfg = testing::toy_experiment_config(dir_);
  cfg.template_version = "1999.9";
  EXPECT_THROW(ExperimentRunner(cfg, gw, prompts_), Error);
  cfg = testing::toy_experiment_config(dir_);
  cfg.dataset_path = dir_ / "missing.jsonl";
  try {
    ExperimentRunner runner(cfg, gw, prompts_);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), "dataset-not-found");
  }
}

TEST_F(RunnerTest, MissingRunDirectory) {
  try {
    report_from_run_dir(dir_ / "nothing");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), "run-not-found");
  }
}

TaskResult with_subjective(const std::string& sample, StrategyId s, int q, double pct) {
  TaskResult r;
  r.sample_id = sample;
  r.strategy = s;
  r.query_index = q;
  for (const auto& name : improvement_metric_names()) {
    r.improvements.push_back({name, 0.0, 0.0, name == "subjective_average" ? pct : 1.0});
  }
  return r;
}

TEST(Adaptability, StrictlyPositiveShare) {
  std::vector<TaskResult> results;
  const double values[] = {5.0, 0.0, 1e-12, -1.0, 20.0, 0.0, 3.0, -0.0, 7.5, 9.0};
  for (int i = 0; i < 10; ++i) results.push_back(with_subjective("s", StrategyId::raid_gseo, i, values[i]));
  EXPECT_EQ(adaptability_rate(results), 0.6);
  try {
    adaptability_rate({});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), "empty-input");
  }
}

TEST(Aggregate, OrderIndependentPooledMeans) {
  std::vector<TaskResult> results;
  for (int q = 0; q < 5; ++q) {
    results.push_back(with_subjective("b", StrategyId::raid_gseo, q, 0.1 * q + 0.3));
    results.push_back(with_subjective("a", StrategyId::raid_gseo, q, 1.0 / (q + 3)));
    results.push_back(with_subjective("a", StrategyId::unique_words, q, -1.0 * q));
  }
  const std::vector<StrategyId> strategies = {StrategyId::raid_gseo, StrategyId::unique_words};
  const auto forward = aggregate(results, strategies, {"a", "b"}, {});
  std::reverse(results.begin(), results.end());
  const auto backward = aggregate(results, strategies, {"a", "b"}, {});
  EXPECT_EQ(render_csv(forward), render_csv(backward));
  EXPECT_EQ(forward.rows[0].tasks, 10);
  EXPECT_EQ(forward.rows[1].tasks, 5);
  EXPECT_EQ(forward.rows[1].adaptability_rate, 0.0);
  EXPECT_THROW(aggregate(results, strategies, {"a"}, {}), Error);
}

TEST(ReportFormat, Names) {
  EXPECT_EQ(report_format_from_string("md"), ReportFormat::markdown);
  EXPECT_EQ(report_format_from_string("markdown"), ReportFormat::markdown);
  EXPECT_EQ(report_format_from_string("csv"), ReportFormat::csv);
  EXPECT_EQ(report_format_from_string("svg"), ReportFormat::svg);
  EXPECT_THROW(report_format_from_string("pdf"), Error);
}

TEST(Serialization, TaskResultAndReportRoundTrip) {
  TaskResult r = with_subjective("s-1", StrategyId::unique_words, 2, 4.5);
  r.query = "q";
  r.trace_ref = "traces/x.json";
  for (auto d : kSubjectiveDimensions) {
    r.before.subjective[d] = 1;
    r.after.subjective[d] = 3;
  }
  r.after.objective = {1.0, 0.5, 0.25};
  const json j = to_json(r);
  EXPECT_EQ(to_json(task_result_from_json(j)), j);

  const auto report = aggregate({r}, {StrategyId::unique_words}, {"s-1"}, {});
  const json rj = to_json(report);
  EXPECT_EQ(to_json(experiment_report_from_json(rj)), rj);
}

}  // namespace
}  // namespace gseo
