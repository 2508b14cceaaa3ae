#include "fixture_inputs.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <sstream>

#include <unistd.h>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "gseo/error.hpp"
#include "gseo/experiment_runner.hpp"
#include "gseo/gse_simulator.hpp"
#include "gseo/intent_reflection.hpp"
#include "gseo/preference_analysis.hpp"
#include "gseo/strategy_optimizer.hpp"
#include "gseo/text_util.hpp"
#include "synthetic_backend.hpp"

namespace gseo::testing {

namespace fs = std::filesystem;

fs::path repo_root() { return fs::path(GSEO_SOURCE_DIR); }

std::vector<std::string> reflection_intents() {
  const std::vector<std::string> words = text::split_whitespace(
      "Readers want to learn how to keep a sourdough starter healthy and active through regular feeding at "
      "home every week");
  std::vector<std::string> out;
  for (std::size_t n = 12; n <= 17; ++n) {
    std::string s;
    for (std::size_t i = 0; i < n; ++i) s += (i ? " " : "") + words[i];
    out.push_back(s + ".");
  }
  return out;
}

ContentSource strategy_source() {
  for (const auto& s : load_dataset(repo_root() / "data" / "toy_dataset.jsonl")) {
    if (s.sample_id == kStrategySample) return s.target();
  }
  throw Error("invalid-input", "strategy sample missing from toy dataset");
}

std::vector<std::vector<std::string>> cli_flows() {
  return {
      {"extend-dataset", "--input", "{root}/data/toy_raw.jsonl", "--out", "{out}/extend", "--backend", "{backend}",
       "--seed", "42"},
      {"optimize", "--strategy", "raid_gseo", "--strategy", "simple_gseo_with_step", "--source",
       "{root}/tests/data/toy_source.txt", "--out", "{out}/optimize", "--backend", "{backend}"},
      {"simulate", "--sources", "{root}/data/toy_dataset.jsonl", "--sample", "s-002", "--query-index", "1", "--out",
       "{out}/simulate", "--backend", "{backend}"},
      {"score", "--answer", "{root}/tests/data/answer.txt", "--sources", "{root}/data/toy_dataset.jsonl",
       "--sample", "s-001", "--target", "2", "--query", "how do I keep a sourdough starter alive", "--backend",
       "{backend}"},
      {"regen-rubrics", "--out", "{out}/regen", "--backend", "{backend}"},
      {"run", "--config", "{root}/tests/data/toy_experiment.toml", "--out", "{out}/run", "--backend", "{backend}"},
      {"analyze", "--run", "{out}/run/runs/{run_id}", "--llm-labels", "--out", "{out}/analysis", "--backend",
       "{backend}"},
  };
}

std::vector<std::string> expand_args(const std::vector<std::string>& args, const fs::path& out,
                                     const std::string& backend) {
  std::string run_id;
  if (fs::is_directory(out / "run" / "runs")) {
    for (const auto& e : fs::directory_iterator(out / "run" / "runs")) run_id = e.path().filename().string();
  }
  std::vector<std::string> result;
  for (std::string a : args) {
    auto replace = [&](const std::string& key, const std::string& value) {
      for (auto pos = a.find(key); pos != std::string::npos; pos = a.find(key)) a.replace(pos, key.size(), value);
    };
    replace("{root}", repo_root().string());
    replace("{out}", out.string());
    replace("{backend}", backend);
    replace("{run_id}", run_id);
    result.push_back(a);
  }
  return result;
}

namespace {

void sort_fixture_file(const fs::path& raw, const fs::path& dest) {
  std::map<std::string, std::string> records;
  std::ifstream in(raw);
  std::string line;
  while (std::getline(in, line)) {
    if (text::trim(line).empty()) continue;
    const auto j = nlohmann::json::parse(line);
    records[j.at("digest").get<std::string>()] = j.at("response").get<std::string>();
  }
  std::ofstream out(dest, std::ios::binary | std::ios::trunc);
  for (const auto& [digest, response] : records) {
    out << nlohmann::json{{"digest", digest}, {"response", response}}.dump() << '\n';
  }
}

Gateway recording_gateway(const fs::path& file) {
  return Gateway(std::make_unique<RecordingBackend>(std::make_unique<SyntheticBackend>(), file));
}

}  // namespace

void generate_fixtures(const fs::path& dest) {
  fs::create_directories(dest);
  const fs::path scratch = fs::temp_directory_path() / fmt::format("gseo-fixtures-{}", ::getpid());
  fs::remove_all(scratch);
  fs::create_directories(scratch);
  const PromptLibrary prompts = PromptLibrary::builtin();

  {
    Gateway gw = recording_gateway(scratch / "strategies.raw");
    StrategyOptimizer optimizer(gw, prompts, optimizer_settings("gseo-optimizer"));
    const ContentSource source = strategy_source();
    for (StrategyId s : kAllStrategies) optimizer.apply_strategy(s, source);
    sort_fixture_file(scratch / "strategies.raw", dest / "strategies.jsonl");
  }
  {
    Gateway gw = recording_gateway(scratch / "reflection.raw");
    IntentReflector reflector(gw, prompts, optimizer_settings("gseo-optimizer"));
    for (const auto& intent : reflection_intents()) reflector.reflect(intent, kReflectionSummary);
    sort_fixture_file(scratch / "reflection.raw", dest / "reflection.jsonl");
  }
  {
    const fs::path raw = scratch / "cli.raw";
    const cli::BackendFactory factory = [&](const std::string&) -> std::unique_ptr<Backend> {
      return std::make_unique<RecordingBackend>(std::make_unique<SyntheticBackend>(), raw);
    };
    for (const auto& flow : cli_flows()) {
      std::ostringstream out;
      std::ostringstream err;
      const int rc = cli::dispatch(expand_args(flow, scratch / "cli", "synthetic"), out, err, factory);
      if (rc != 0) throw Error("fixture-error", fmt::format("{} failed: {}", flow[0], err.str()));
    }
    sort_fixture_file(raw, dest / "cli.jsonl");
  }
  fs::remove_all(scratch);
}

ExperimentConfig toy_experiment_config(const fs::path& out) {
  ExperimentConfig cfg = load_config(repo_root() / "tests" / "data" / "toy_experiment.toml");
  cfg.output_dir = out;
  return cfg;
}

std::unique_ptr<Backend> fixture_backend() {
  return std::make_unique<ScriptedBackend>(repo_root() / "tests" / "fixtures");
}

std::string answer_prompt_s001() {
  const PromptLibrary prompts = PromptLibrary::builtin();
  for (const auto& s : load_dataset(repo_root() / "data" / "toy_dataset.jsonl")) {
    if (s.sample_id != "s-001") continue;
    Gateway unused(fixture_backend());
    GseSimulator sim(unused, prompts, generator_settings("gseo-generator"));
    return sim.build_answer_prompt(s.query_group.canonical_query, s.sources).messages.back().text;
  }
  throw Error("invalid-input", "s-001 missing from toy dataset");
}

std::vector<std::pair<std::string, std::string>> toy_distributions(const fs::path& run_dir) {
  const PromptLibrary prompts = PromptLibrary::builtin();
  const auto traces = load_traces(run_dir);
  Labeler labeler(prompts);
  const auto roles = role_distribution(traces, default_role_taxonomy(prompts), labeler);
  const auto [objectives, actions] = step_distribution(traces, default_step_taxonomies(prompts), labeler);
  return {{"roles", distribution_csv(roles)},
          {"step_objectives", distribution_csv(objectives)},
          {"step_actions", distribution_csv(actions)}};
}

void generate_rendered_goldens(const fs::path& dest) {
  fs::create_directories(dest);
  const fs::path scratch = fs::temp_directory_path() / fmt::format("gseo-goldens-{}", ::getpid());
  fs::remove_all(scratch);
  const PromptLibrary prompts = PromptLibrary::builtin();
  Gateway gw(fixture_backend());
  ExperimentRunner runner(toy_experiment_config(scratch), gw, prompts);
  const ExperimentReport report = runner.run();
  if (!report.complete()) throw Error("fixture-error", "toy experiment did not complete");
  for (const char* ext : {"md", "csv", "svg"}) {
    fs::copy_file(runner.run_dir() / fmt::format("report.{}", ext), dest / fmt::format("toy_report.{}", ext),
                  fs::copy_options::overwrite_existing);
  }
  std::ofstream(dest / "answer_prompt_s-001.txt", std::ios::binary | std::ios::trunc) << answer_prompt_s001();
  for (const auto& [name, csv] : toy_distributions(runner.run_dir())) {
    std::ofstream(dest / fmt::format("toy_{}.csv", name), std::ios::binary | std::ios::trunc) << csv;
  }
  fs::remove_all(scratch);
}

}  // namespace gseo::testing
