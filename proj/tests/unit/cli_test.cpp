#include <fstream>
#include <sstream>

#include <unistd.h>

#include <fmt/format.h>
#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "fixture_inputs.hpp"
#include "gseo/cli.hpp"
#include "gseo/corpus.hpp"
#include "gseo/prompts.hpp"

namespace gseo {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

struct Result {
  int code = 0;
  std::string out;
  std::string err;
};

Result run(const std::vector<std::string>& args) {
  std::ostringstream out;
  std::ostringstream err;
  const int code = cli::dispatch(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string scripted() { return "scripted:" + (testing::repo_root() / "tests" / "fixtures").string(); }

class CliFlows : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    out_ = fs::temp_directory_path() / fmt::format("gseo-cli-{}", ::getpid());
    fs::remove_all(out_);
    for (const auto& flow : testing::cli_flows()) {
      const Result r = run(testing::expand_args(flow, out_, scripted()));
      results_.push_back(r);
    }
  }
  static void TearDownTestSuite() { fs::remove_all(out_); }

  static const Result& flow(const std::string& name) {
    const auto flows = testing::cli_flows();
    for (std::size_t i = 0; i < flows.size(); ++i) {
      if (flows[i][0] == name) return results_[i];
    }
    throw std::runtime_error("no flow " + name);
  }

  static fs::path run_dir() {
    for (const auto& e : fs::directory_iterator(out_ / "run" / "runs")) return e.path();
    return {};
  }

  static inline fs::path out_;
  static inline std::vector<Result> results_;
};

TEST_F(CliFlows, EveryFlowSucceedsOffline) {
  const auto flows = testing::cli_flows();
  ASSERT_EQ(results_.size(), flows.size());
  for (std::size_t i = 0; i < flows.size(); ++i) {
    EXPECT_EQ(results_[i].code, 0) << flows[i][0] << ": " << results_[i].err;
    EXPECT_TRUE(results_[i].err.empty()) << results_[i].err;
  }
}

TEST_F(CliFlows, ExtendDatasetWritesValidSamples) {
  const auto samples = load_dataset(out_ / "extend" / "dataset.jsonl");
  EXPECT_EQ(samples.size(), 3u);
}

TEST_F(CliFlows, OptimizeWritesTraces) {
  for (const char* s : {"raid_gseo", "simple_gseo_with_step"}) {
    const fs::path p = out_ / "optimize" / fmt::format("toy_source-{}.json", s);
    ASSERT_TRUE(fs::exists(p)) << p;
    EXPECT_EQ(json::parse(slurp(p)).at("strategy"), s);
  }
}

TEST_F(CliFlows, SimulateWritesAnswer) {
  EXPECT_TRUE(fs::exists(out_ / "simulate" / "answer.json"));
  EXPECT_EQ(slurp(out_ / "simulate" / "answer.txt"), flow("simulate").out);
}

TEST_F(CliFlows, ScoreMatchesMetricOracle) {
  const json got = json::parse(flow("score").out);
  std::ifstream in(testing::repo_root() / "tests" / "golden" / "score_answer.json");
  const json want = json::parse(in);
  EXPECT_EQ(got.at("target"), want.at("target"));
  EXPECT_EQ(got.at("sentences"), 4);
  for (const char* m : {"word_count", "position_count", "pawc_overall"}) {
    EXPECT_NEAR(got.at("objective").at(m).get<double>(), want.at(m).get<double>(), 1e-12) << m;
  }
  ASSERT_EQ(got.at("subjective").size(), 7u);
  for (const auto& [dim, v] : got.at("subjective").items()) {
    EXPECT_GE(v.get<int>(), 0) << dim;
    EXPECT_LE(v.get<int>(), 5) << dim;
  }
}

TEST_F(CliFlows, RegenRubricsKeepPlaceholders) {
  int count = 0;
  for (const auto& e : fs::directory_iterator(out_ / "regen" / "rubrics")) {
    const std::string text = slurp(e.path());
    EXPECT_NE(text.find("{source_excerpts}"), std::string::npos);
    ++count;
  }
  EXPECT_EQ(count, 7);
}

TEST_F(CliFlows, RunReportsMatchGoldens) {
  EXPECT_NE(flow("run").out.find("30 of 30 tasks"), std::string::npos) << flow("run").out;
  for (const char* ext : {"md", "csv", "svg"}) {
    EXPECT_EQ(slurp(run_dir() / fmt::format("report.{}", ext)),
              slurp(testing::repo_root() / "tests" / "golden" / fmt::format("toy_report.{}", ext)));
  }
}

TEST_F(CliFlows, ReportSubcommandRerenders) {
  const fs::path dest = out_ / "rerender";
  const Result r = run({"report", "--run", run_dir().string(), "--format", "md", "--format", "csv", "--out",
                        dest.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(slurp(dest / "report.md"), slurp(run_dir() / "report.md"));
  EXPECT_EQ(slurp(dest / "report.csv"), slurp(run_dir() / "report.csv"));
  EXPECT_FALSE(fs::exists(dest / "report.svg"));
}

TEST_F(CliFlows, AnalyzeWritesDistributions) {
  for (const char* name : {"roles", "step_objectives", "step_actions"}) {
    EXPECT_TRUE(fs::exists(out_ / "analysis" / fmt::format("{}.csv", name)));
    EXPECT_TRUE(fs::exists(out_ / "analysis" / fmt::format("{}.svg", name)));
  }
  EXPECT_NE(flow("analyze").out.find("0 labeling failures"), std::string::npos);
  const Result offline = run({"analyze", "--run", run_dir().string(), "--out", (out_ / "offline").string()});
  ASSERT_EQ(offline.code, 0) << offline.err;
  EXPECT_EQ(slurp(out_ / "offline" / "roles.csv"),
            slurp(testing::repo_root() / "tests" / "golden" / "toy_roles.csv"));
}

TEST(Cli, MissingConfig) {
  const Result r = run({"run", "--config", "/nonexistent/missing.toml"});
  EXPECT_EQ(r.code, 1);
  EXPECT_EQ(r.err.rfind("error: config-not-found: ", 0), 0u) << r.err;
}

TEST(Cli, UnknownSubcommandAndFlag) {
  Result r = run({"frobnicate"});
  EXPECT_EQ(r.code, 1);
  EXPECT_EQ(r.err.rfind("error: usage: ", 0), 0u);
  EXPECT_NE(r.err.find("extend-dataset"), std::string::npos);
  r = run({"score", "--answer", "a", "--sources", "b", "--bogus"});
  EXPECT_EQ(r.code, 1);
  r = run({});
  EXPECT_EQ(r.code, 1);
}

TEST(Cli, VersionAndHelp) {
  Result r = run({"--version"});
  EXPECT_EQ(r.code, 0);
  EXPECT_EQ(r.out, fmt::format("gseo {} (templates {})\n", cli::kArtifactVersion, PromptLibrary::builtin().version()));
  r = run({"--help"});
  EXPECT_EQ(r.code, 0);
  for (const char* sub : {"extend-dataset", "optimize", "simulate", "score", "run", "analyze", "regen-rubrics", "report"}) {
    EXPECT_NE(r.out.find(sub), std::string::npos) << sub;
  }
}

TEST(Cli, NoBackendMeansNoNetwork) {
  const Result r = run({"simulate", "--sources", (testing::repo_root() / "data" / "toy_dataset.jsonl").string(),
                        "--sample", "s-001", "--out", (fs::temp_directory_path() / "gseo-nobackend").string()});
  EXPECT_EQ(r.code, 1);
  EXPECT_EQ(r.err.rfind("error: no-backend: ", 0), 0u) << r.err;
}

TEST(Cli, ScriptedMissIsRuntimeFailure) {
  const fs::path empty = fs::temp_directory_path() / fmt::format("gseo-empty-fixtures-{}", ::getpid());
  fs::create_directories(empty);
  const Result r = run({"simulate", "--sources", (testing::repo_root() / "data" / "toy_dataset.jsonl").string(),
                        "--sample", "s-001", "--query", "never recorded", "--backend", "scripted:" + empty.string(),
                        "--out", (empty / "out").string()});
  EXPECT_EQ(r.code, 2);
  EXPECT_EQ(r.err.rfind("error: scripted-miss: ", 0), 0u) << r.err;
  fs::remove_all(empty);
}

TEST(Cli, ScoreWithoutBackendIsObjectiveOnly) {
  const auto root = testing::repo_root();
  Result r = run({"score", "--answer", (root / "tests" / "data" / "answer.txt").string(), "--sources",
                  (root / "data" / "toy_dataset.jsonl").string(), "--sample", "s-001", "--target", "2"});
  ASSERT_EQ(r.code, 0) << r.err;
  const json got = json::parse(r.out);
  EXPECT_FALSE(got.contains("subjective"));
  EXPECT_FALSE(got.contains("query"));

  r = run({"score", "--answer", (root / "tests" / "data" / "answer.txt").string(), "--sources",
           (root / "data" / "toy_dataset.jsonl").string(), "--sample", "s-001", "--target", "9"});
  EXPECT_EQ(r.code, 1);
  EXPECT_EQ(r.err.rfind("error: source-id-out-of-range: ", 0), 0u) << r.err;
}

TEST(Cli, ExitCodeMapping) {
  EXPECT_EQ(cli::exit_code_for("config-not-found"), 1);
  EXPECT_EQ(cli::exit_code_for("citation-out-of-range"), 1);
  EXPECT_EQ(cli::exit_code_for("usage"), 1);
  EXPECT_EQ(cli::exit_code_for("network-unreachable"), 2);
  EXPECT_EQ(cli::exit_code_for("length-guard-violation"), 2);
}

}  // namespace
}  // namespace gseo
