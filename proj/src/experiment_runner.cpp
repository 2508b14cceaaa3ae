#include "gseo/experiment_runner.hpp"

#include <algorithm>
#include <atomic>
#include <fstream>
#include <sstream>
#include <thread>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "gseo/config.hpp"
#include "gseo/error.hpp"
#include "gseo/gse_simulator.hpp"

namespace gseo {

using nlohmann::json;
namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Configuration

void ExperimentConfig::validate() const {
  if (dataset_path.empty()) throw Error("config-error", "dataset_path is required");
  if (strategies.empty()) throw Error("config-error", "strategies must not be empty");
  std::set<StrategyId> seen;
  for (StrategyId s : strategies) {
    if (!seen.insert(s).second) {
      throw Error("config-error", fmt::format("strategy '{}' listed twice", to_string(s)));
    }
  }
  if (sample_count < 1) throw Error("config-error", "sample_count must be at least 1");
  if (concurrency_limit < 1) throw Error("config-error", "concurrency_limit must be at least 1");
  if (generator_model.empty() || optimizer_model.empty() || judge_model.empty()) {
    throw Error("config-error", "model ids must not be empty");
  }
  if (target_override && (*target_override < 1 || *target_override > kSourcesPerSample)) {
    throw Error("config-error", fmt::format("target_override must be in 1..{}", kSourcesPerSample));
  }
}

namespace {

template <typename T>
const T& expect_type(const config::Value& v, const std::string& key, const char* what) {
  if (const T* p = std::get_if<T>(&v)) return *p;
  throw Error("config-error", fmt::format("'{}' must be {}", key, what));
}

fs::path resolve(const fs::path& base, const std::string& value) {
  fs::path p(value);
  return p.is_absolute() ? p : base / p;
}

}  // namespace

ExperimentConfig load_config(const fs::path& path) {
  if (!fs::exists(path)) throw Error("config-not-found", fmt::format("{} does not exist", path.string()));
  const config::Table table = config::parse_file(path);
  const fs::path base = path.has_parent_path() ? path.parent_path() : fs::path(".");

  ExperimentConfig cfg;
  for (const auto& [key, value] : table) {
    if (key == "dataset_path") {
      cfg.dataset_path = resolve(base, expect_type<std::string>(value, key, "a string"));
    } else if (key == "strategies") {
      for (const auto& s : expect_type<std::vector<std::string>>(value, key, "an array of strings")) {
        try {
          cfg.strategies.push_back(strategy_from_string(s));
        } catch (const Error& e) {
          throw Error("config-error", e.what());
        }
      }
    } else if (key == "sample_count") {
      const auto n = expect_type<std::int64_t>(value, key, "an integer");
      if (n < 1) throw Error("config-error", "sample_count must be at least 1");
      cfg.sample_count = static_cast<std::size_t>(n);
    } else if (key == "seed") {
      const auto n = expect_type<std::int64_t>(value, key, "an integer");
      if (n < 0) throw Error("config-error", "seed must not be negative");
      cfg.seed = static_cast<std::uint64_t>(n);
    } else if (key == "generator_model") {
      cfg.generator_model = expect_type<std::string>(value, key, "a string");
    } else if (key == "optimizer_model") {
      cfg.optimizer_model = expect_type<std::string>(value, key, "a string");
    } else if (key == "judge_model") {
      cfg.judge_model = expect_type<std::string>(value, key, "a string");
    } else if (key == "concurrency_limit") {
      cfg.concurrency_limit = static_cast<int>(expect_type<std::int64_t>(value, key, "an integer"));
    } else if (key == "output_dir") {
      cfg.output_dir = resolve(base, expect_type<std::string>(value, key, "a string"));
    } else if (key == "template_version") {
      cfg.template_version = expect_type<std::string>(value, key, "a string");
    } else if (key == "template_dir") {
      cfg.template_dir = resolve(base, expect_type<std::string>(value, key, "a string"));
    } else if (key == "backend") {
      cfg.backend = expect_type<std::string>(value, key, "a string");
    } else if (key == "cache_dir") {
      cfg.cache_dir = resolve(base, expect_type<std::string>(value, key, "a string"));
    } else if (key == "target_override") {
      cfg.target_override = static_cast<int>(expect_type<std::int64_t>(value, key, "an integer"));
    } else {
      throw Error("config-error", fmt::format("unknown key '{}'", key));
    }
  }
  cfg.validate();
  return cfg;
}

ModelSettings generator_settings(const std::string& model_id) { return {model_id, 0.7, 0.9, 1024}; }
ModelSettings optimizer_settings(const std::string& model_id) { return {model_id, 0.7, 0.9, 2048}; }
ModelSettings judge_settings(const std::string& model_id) { return {model_id, 0.0, 1.0, 512}; }

// ---------------------------------------------------------------------------
// Results

double TaskResult::improvement_of(const std::string& metric) const {
  for (const auto& r : improvements) {
    if (r.metric_name == metric) return r.improvement_pct;
  }
  throw Error("invalid-input", fmt::format("task has no metric '{}'", metric));
}

namespace {

json scores_json(const VisibilityScores& s) {
  return {{"objective", to_json(s.objective)}, {"subjective", to_json(s.subjective)}};
}

VisibilityScores scores_from_json(const json& j) {
  return {objective_scores_from_json(j.at("objective")), subjective_scores_from_json(j.at("subjective"))};
}

}  // namespace

json to_json(const TaskResult& r) {
  json imps = json::array();
  for (const auto& i : r.improvements) imps.push_back(to_json(i));
  return {{"sample_id", r.sample_id},
          {"query_index", r.query_index},
          {"query", r.query},
          {"strategy", to_string(r.strategy)},
          {"before", scores_json(r.before)},
          {"after", scores_json(r.after)},
          {"improvements", std::move(imps)},
          {"trace_ref", r.trace_ref}};
}

TaskResult task_result_from_json(const json& j) {
  TaskResult r;
  r.sample_id = j.at("sample_id").get<std::string>();
  r.query_index = j.at("query_index").get<int>();
  r.query = j.at("query").get<std::string>();
  r.strategy = strategy_from_string(j.at("strategy").get<std::string>());
  r.before = scores_from_json(j.at("before"));
  r.after = scores_from_json(j.at("after"));
  for (const auto& i : j.at("improvements")) r.improvements.push_back(improvement_record_from_json(i));
  r.trace_ref = j.at("trace_ref").get<std::string>();
  return r;
}

json to_json(const ExperimentReport& report) {
  json rows = json::array();
  for (const auto& row : report.rows) {
    rows.push_back({{"strategy", to_string(row.strategy)},
                    {"mean_improvements", row.mean_improvements},
                    {"adaptability_rate", row.adaptability_rate},
                    {"tasks", row.tasks},
                    {"failures", row.failures}});
  }
  json samples = json::array();
  for (const auto& s : report.per_sample) {
    samples.push_back({{"sample_id", s.sample_id},
                       {"strategy", to_string(s.strategy)},
                       {"objective_overall", s.objective_overall},
                       {"subjective_average", s.subjective_average},
                       {"tasks", s.tasks}});
  }
  const auto& m = report.metadata;
  return {{"rows", std::move(rows)},
          {"per_sample", std::move(samples)},
          {"metadata",
           {{"run_id", m.run_id},
            {"config_digest", m.config_digest},
            {"template_version", m.template_version},
            {"sample_count", m.sample_count},
            {"seed", m.seed},
            {"started_at", m.started_at},
            {"finished_at", m.finished_at}}},
          {"expected_tasks", report.expected_tasks},
          {"completed_tasks", report.completed_tasks}};
}

ExperimentReport experiment_report_from_json(const json& j) {
  ExperimentReport report;
  for (const auto& row : j.at("rows")) {
    StrategyRow r;
    r.strategy = strategy_from_string(row.at("strategy").get<std::string>());
    r.mean_improvements = row.at("mean_improvements").get<std::map<std::string, double>>();
    r.adaptability_rate = row.at("adaptability_rate").get<double>();
    r.tasks = row.at("tasks").get<long>();
    r.failures = row.at("failures").get<long>();
    report.rows.push_back(std::move(r));
  }
  for (const auto& s : j.at("per_sample")) {
    report.per_sample.push_back({s.at("sample_id").get<std::string>(),
                                 strategy_from_string(s.at("strategy").get<std::string>()),
                                 s.at("objective_overall").get<double>(),
                                 s.at("subjective_average").get<double>(), s.at("tasks").get<long>()});
  }
  const json& m = j.at("metadata");
  report.metadata = {m.at("run_id"),           m.at("config_digest"), m.at("template_version"),
                     m.at("sample_count"),     m.at("seed"),          m.value("started_at", ""),
                     m.value("finished_at", "")};
  report.expected_tasks = j.at("expected_tasks").get<long>();
  report.completed_tasks = j.at("completed_tasks").get<long>();
  return report;
}

// ---------------------------------------------------------------------------
// Aggregation

double adaptability_rate(const std::vector<TaskResult>& results) {
  if (results.empty()) throw Error("empty-input", "adaptability needs at least one task result");
  long positive = 0;
  for (const auto& r : results) {
    if (r.improvement_of("subjective_average") > 0.0) ++positive;
  }
  return static_cast<double>(positive) / static_cast<double>(results.size());
}

ExperimentReport aggregate(const std::vector<TaskResult>& results,
                           const std::vector<StrategyId>& strategies,
                           const std::vector<std::string>& sample_order,
                           const std::map<StrategyId, long>& failures) {
  std::map<std::string, std::size_t> sample_rank;
  for (std::size_t i = 0; i < sample_order.size(); ++i) sample_rank.emplace(sample_order[i], i);
  std::map<StrategyId, std::size_t> strategy_rank;
  for (std::size_t i = 0; i < strategies.size(); ++i) strategy_rank.emplace(strategies[i], i);

  std::vector<const TaskResult*> sorted;
  for (const auto& r : results) {
    if (!sample_rank.count(r.sample_id)) {
      throw Error("invalid-input", fmt::format("result for unknown sample '{}'", r.sample_id));
    }
    if (!strategy_rank.count(r.strategy)) {
      throw Error("invalid-input", fmt::format("result for unlisted strategy '{}'", to_string(r.strategy)));
    }
    sorted.push_back(&r);
  }
  std::sort(sorted.begin(), sorted.end(), [&](const TaskResult* a, const TaskResult* b) {
    return std::tuple(sample_rank[a->sample_id], strategy_rank[a->strategy], a->query_index) <
           std::tuple(sample_rank[b->sample_id], strategy_rank[b->strategy], b->query_index);
  });

  ExperimentReport report;
  long failed_total = 0;
  for (StrategyId s : strategies) {
    StrategyRow row;
    row.strategy = s;
    std::vector<TaskResult> mine;
    for (const TaskResult* r : sorted) {
      if (r->strategy == s) mine.push_back(*r);
    }
    for (const auto& name : improvement_metric_names()) {
      double sum = 0.0;
      for (const auto& r : mine) sum += r.improvement_of(name);
      row.mean_improvements[name] = mine.empty() ? 0.0 : sum / static_cast<double>(mine.size());
    }
    row.tasks = static_cast<long>(mine.size());
    row.adaptability_rate = mine.empty() ? 0.0 : adaptability_rate(mine);
    if (auto it = failures.find(s); it != failures.end()) row.failures = it->second;
    failed_total += row.failures;
    report.rows.push_back(std::move(row));
  }

  for (const auto& id : sample_order) {
    for (StrategyId s : strategies) {
      SampleRow row{id, s, 0.0, 0.0, 0};
      for (const TaskResult* r : sorted) {
        if (r->sample_id != id || r->strategy != s) continue;
        row.objective_overall += r->improvement_of("objective_overall");
        row.subjective_average += r->improvement_of("subjective_average");
        ++row.tasks;
      }
      if (row.tasks == 0) continue;
      row.objective_overall /= static_cast<double>(row.tasks);
      row.subjective_average /= static_cast<double>(row.tasks);
      report.per_sample.push_back(row);
    }
  }

  report.completed_tasks = static_cast<long>(results.size()) + failed_total;
  report.expected_tasks = static_cast<long>(sample_order.size() * strategies.size()) * (1 + kQueryVariants);
  return report;
}

// ---------------------------------------------------------------------------
// Persistence

namespace {

constexpr const char* kResultsFile = "results.jsonl";
constexpr const char* kFailuresFile = "failures.jsonl";
constexpr const char* kRunFile = "run.json";
constexpr const char* kReportFile = "report.json";

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("io-error", fmt::format("cannot read {}", path.string()));
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file_atomic(const fs::path& path, const std::string& content) {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("io-error", fmt::format("cannot write {}", tmp.string()));
    out << content;
    if (!out) throw Error("io-error", fmt::format("write failed for {}", tmp.string()));
  }
  fs::rename(tmp, path);
}

// Drops a partial final line so later appends start on a fresh line.
void trim_torn_tail(const fs::path& path) {
  if (!fs::exists(path)) return;
  const std::string text = read_file(path);
  if (text.empty() || text.back() == '\n') return;
  const auto keep = text.rfind('\n');
  fs::resize_file(path, keep == std::string::npos ? 0 : keep + 1);
}

// Each line is one JSON object; a torn final line from an interrupted
// append is skipped.
std::vector<json> read_jsonl(const fs::path& path) {
  std::vector<json> out;
  if (!fs::exists(path)) return out;
  const std::string text = read_file(path);
  std::size_t start = 0;
  std::size_t line_no = 0;
  while (start < text.size()) {
    std::size_t end = text.find('\n', start);
    const bool last = end == std::string::npos;
    if (last) end = text.size();
    ++line_no;
    const std::string_view line(text.data() + start, end - start);
    start = end + 1;
    if (line.find_first_not_of(" \t\r") == std::string_view::npos) continue;
    try {
      out.push_back(json::parse(line));
    } catch (const json::exception&) {
      if (last) break;
      throw Error("io-error", fmt::format("{}:{}: corrupt record", path.string(), line_no));
    }
  }
  return out;
}

std::string safe_name(std::string_view s) {
  std::string out;
  for (char c : s) {
    const bool ok = std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' || c == '.';
    out.push_back(ok ? c : '_');
  }
  return out;
}

std::string trace_ref_for(const std::string& sample_id, StrategyId s) {
  return fmt::format("traces/{}-{}.json", safe_name(sample_id), to_string(s));
}

std::string utc_now() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

struct RunManifest {
  std::vector<std::string> sample_order;
  std::vector<StrategyId> strategies;
  RunMetadata metadata;
};

json to_json(const RunManifest& m) {
  json strategies = json::array();
  for (StrategyId s : m.strategies) strategies.push_back(to_string(s));
  return {{"sample_order", m.sample_order},
          {"strategies", std::move(strategies)},
          {"run_id", m.metadata.run_id},
          {"config_digest", m.metadata.config_digest},
          {"template_version", m.metadata.template_version},
          {"sample_count", m.metadata.sample_count},
          {"seed", m.metadata.seed}};
}

RunManifest manifest_from_json(const json& j) {
  RunManifest m;
  m.sample_order = j.at("sample_order").get<std::vector<std::string>>();
  for (const auto& s : j.at("strategies")) m.strategies.push_back(strategy_from_string(s.get<std::string>()));
  m.metadata.run_id = j.at("run_id").get<std::string>();
  m.metadata.config_digest = j.at("config_digest").get<std::string>();
  m.metadata.template_version = j.at("template_version").get<std::string>();
  m.metadata.sample_count = j.at("sample_count").get<std::size_t>();
  m.metadata.seed = j.at("seed").get<std::uint64_t>();
  return m;
}

using TaskKey = std::tuple<std::string, StrategyId, int>;

std::map<StrategyId, long> count_failures(const std::vector<json>& records) {
  std::set<TaskKey> seen;
  std::map<StrategyId, long> out;
  for (const auto& f : records) {
    TaskKey key{f.at("sample_id").get<std::string>(),
                strategy_from_string(f.at("strategy").get<std::string>()), f.at("query_index").get<int>()};
    if (seen.insert(key).second) ++out[std::get<1>(key)];
  }
  return out;
}

}  // namespace

std::vector<TaskResult> load_results(const fs::path& run_dir) {
  std::vector<TaskResult> out;
  std::set<TaskKey> seen;
  for (const auto& j : read_jsonl(run_dir / kResultsFile)) {
    TaskResult r = task_result_from_json(j);
    if (seen.insert({r.sample_id, r.strategy, r.query_index}).second) out.push_back(std::move(r));
  }
  return out;
}

std::vector<OptimizationTrace> load_traces(const fs::path& run_dir) {
  std::vector<fs::path> files;
  const fs::path dir = run_dir / "traces";
  if (fs::is_directory(dir)) {
    for (const auto& e : fs::directory_iterator(dir)) {
      if (e.path().extension() == ".json") files.push_back(e.path());
    }
  }
  std::sort(files.begin(), files.end());
  std::vector<OptimizationTrace> out;
  for (const auto& f : files) out.push_back(trace_from_json(json::parse(read_file(f))));
  return out;
}

ExperimentReport report_from_run_dir(const fs::path& run_dir) {
  if (!fs::exists(run_dir / kRunFile)) {
    throw Error("run-not-found", fmt::format("{} has no {}", run_dir.string(), kRunFile));
  }
  const RunManifest manifest = manifest_from_json(json::parse(read_file(run_dir / kRunFile)));
  ExperimentReport report =
      aggregate(load_results(run_dir), manifest.strategies, manifest.sample_order,
                count_failures(read_jsonl(run_dir / kFailuresFile)));
  report.metadata = manifest.metadata;
  if (fs::exists(run_dir / kReportFile)) {
    const json prior = json::parse(read_file(run_dir / kReportFile));
    report.metadata.started_at = prior.at("metadata").value("started_at", "");
    report.metadata.finished_at = prior.at("metadata").value("finished_at", "");
  }
  return report;
}

// ---------------------------------------------------------------------------
// Runner

struct ExperimentRunner::BeforeEntry {
  GeneratedAnswer answer;
  VisibilityScores scores;
};

ExperimentRunner::ExperimentRunner(ExperimentConfig config, ChatClient& client,
                                   const PromptLibrary& prompts)
    : config_(std::move(config)), client_(client), prompts_(prompts) {
  config_.validate();
  if (!config_.template_version.empty() && config_.template_version != prompts_.version()) {
    throw Error("config-error", fmt::format("template_version '{}' does not match loaded templates '{}'",
                                            config_.template_version, prompts_.version()));
  }
  if (!fs::exists(config_.dataset_path)) {
    throw Error("dataset-not-found", fmt::format("{} does not exist", config_.dataset_path.string()));
  }
  dataset_sha256_ = sha256_hex(read_file(config_.dataset_path));
}

std::string ExperimentRunner::config_digest() const {
  json strategies = json::array();
  for (StrategyId s : config_.strategies) strategies.push_back(to_string(s));
  std::string templates;
  for (const auto& [name, content] : prompts_.files()) {
    templates += name;
    templates.push_back('\0');
    templates += content;
    templates.push_back('\0');
  }
  const json j{{"dataset_sha256", dataset_sha256_},
               {"strategies", std::move(strategies)},
               {"sample_count", config_.sample_count},
               {"seed", config_.seed},
               {"generator_model", config_.generator_model},
               {"optimizer_model", config_.optimizer_model},
               {"judge_model", config_.judge_model},
               {"template_version", prompts_.version()},
               {"templates_sha256", sha256_hex(templates)},
               {"target_override", config_.target_override ? json(*config_.target_override) : json(nullptr)}};
  return sha256_hex(j.dump());
}

std::string ExperimentRunner::run_id() const { return config_digest().substr(0, 16); }

fs::path ExperimentRunner::run_dir() const { return config_.output_dir / "runs" / run_id(); }

VisibilityScores ExperimentRunner::score(const GeneratedAnswer& answer, const ContentSource& target,
                                         const std::string& query) {
  Judge judge(client_, prompts_, judge_settings(config_.judge_model));
  VisibilityScores s;
  s.objective = objective_scores(answer, target.source_id);
  s.subjective = judge.subjective_scores(answer, target, query);
  return s;
}

std::shared_ptr<const ExperimentRunner::BeforeEntry> ExperimentRunner::before(const BenchSample& sample,
                                                                              int query_index) {
  std::promise<std::shared_ptr<const BeforeEntry>> promise;
  std::shared_future<std::shared_ptr<const BeforeEntry>> future;
  bool owner = false;
  {
    std::lock_guard lock(before_mutex_);
    auto key = std::make_pair(sample.sample_id, query_index);
    auto it = before_cache_.find(key);
    if (it == before_cache_.end()) {
      future = promise.get_future().share();
      before_cache_.emplace(key, future);
      owner = true;
    } else {
      future = it->second;
    }
  }
  if (owner) {
    try {
      const std::string query = sample.query_group.all().at(query_index);
      GseSimulator sim(client_, prompts_, generator_settings(config_.generator_model));
      auto entry = std::make_shared<BeforeEntry>();
      entry->answer = sim.generate_response(query, sample.sources);
      entry->scores = score(entry->answer, sample.target(), query);
      promise.set_value(std::move(entry));
    } catch (...) {
      promise.set_exception(std::current_exception());
    }
  }
  return future.get();
}

TaskResult ExperimentRunner::run_task(const BenchSample& sample, int query_index, StrategyId strategy,
                                      const std::string& optimized_text, const std::string& trace_ref) {
  const auto queries = sample.query_group.all();
  if (query_index < 0 || query_index >= static_cast<int>(queries.size())) {
    throw Error("invalid-input", fmt::format("query index {} out of range", query_index));
  }
  const std::string& query = queries[query_index];

  std::shared_ptr<const BeforeEntry> b;
  try {
    b = before(sample, query_index);
  } catch (const Error& e) {
    throw e.with_context("before-answer");
  }

  std::vector<ContentSource> sources = sample.sources;
  ContentSource& target = sources.at(sample.target_index - 1);
  target.text = optimized_text;

  TaskResult result;
  result.sample_id = sample.sample_id;
  result.query_index = query_index;
  result.query = query;
  result.strategy = strategy;
  result.before = b->scores;
  result.trace_ref = trace_ref;
  try {
    GseSimulator sim(client_, prompts_, generator_settings(config_.generator_model));
    const GeneratedAnswer after = sim.generate_response(query, sources);
    result.after = score(after, target, query);
  } catch (const Error& e) {
    throw e.with_context("after-answer");
  }
  result.improvements = improvement_report(result.before, result.after);
  return result;
}

ExperimentReport ExperimentRunner::run(RunControl control) {
  const std::string started_at = utc_now();
  std::vector<BenchSample> samples =
      sample_subset(load_dataset(config_.dataset_path), config_.sample_count, config_.seed);
  if (config_.target_override) {
    for (auto& s : samples) s.target_index = *config_.target_override;
  }

  const fs::path dir = run_dir();
  fs::create_directories(dir / "traces");

  RunManifest manifest;
  for (const auto& s : samples) manifest.sample_order.push_back(s.sample_id);
  manifest.strategies = config_.strategies;
  manifest.metadata.run_id = run_id();
  manifest.metadata.config_digest = config_digest();
  manifest.metadata.template_version = prompts_.version();
  manifest.metadata.sample_count = samples.size();
  manifest.metadata.seed = config_.seed;
  write_file_atomic(dir / kRunFile, to_json(manifest).dump(2) + "\n");

  trim_torn_tail(dir / kResultsFile);
  trim_torn_tail(dir / kFailuresFile);
  std::set<TaskKey> done;
  for (const auto& r : load_results(dir)) done.insert({r.sample_id, r.strategy, r.query_index});
  for (const auto& f : read_jsonl(dir / kFailuresFile)) {
    done.insert({f.at("sample_id").get<std::string>(), strategy_from_string(f.at("strategy").get<std::string>()),
                 f.at("query_index").get<int>()});
  }

  struct Unit {
    const BenchSample* sample;
    StrategyId strategy;
    std::vector<int> pending;
  };
  std::vector<Unit> units;
  for (const auto& s : samples) {
    for (StrategyId st : config_.strategies) {
      Unit u{&s, st, {}};
      for (int q = 0; q <= kQueryVariants; ++q) {
        if (!done.count({s.sample_id, st, q})) u.pending.push_back(q);
      }
      if (!u.pending.empty()) units.push_back(std::move(u));
    }
  }

  std::mutex append_mutex;
  std::atomic<std::size_t> next_unit{0};
  std::atomic<std::size_t> finished{0};
  std::atomic<bool> stop{false};

  auto append = [&](const char* file, const json& record) {
    std::lock_guard lock(append_mutex);
    std::ofstream out(dir / file, std::ios::binary | std::ios::app);
    out << record.dump() << '\n';
    out.flush();
    if (!out) throw Error("io-error", fmt::format("cannot append to {}", (dir / file).string()));
  };
  auto task_finished = [&] {
    const std::size_t n = ++finished;
    if (control.stop_after_tasks && n >= *control.stop_after_tasks) stop = true;
  };
  auto record_failure = [&](const Unit& u, int q, const Error& e) {
    spdlog::warn("task {}/{}/q{} failed: {}: {}", u.sample->sample_id, to_string(u.strategy), q, e.code(),
                 e.what());
    append(kFailuresFile, {{"sample_id", u.sample->sample_id},
                           {"strategy", to_string(u.strategy)},
                           {"query_index", q},
                           {"code", e.code()},
                           {"message", e.what()}});
    task_finished();
  };

  auto work = [&] {
    while (!stop) {
      const std::size_t i = next_unit++;
      if (i >= units.size()) return;
      const Unit& u = units[i];
      const std::string ref = trace_ref_for(u.sample->sample_id, u.strategy);
      const fs::path trace_path = dir / ref;

      std::optional<OptimizationTrace> trace;
      try {
        if (fs::exists(trace_path)) {
          trace = trace_from_json(json::parse(read_file(trace_path)));
        } else {
          StrategyOptimizer optimizer(client_, prompts_, optimizer_settings(config_.optimizer_model));
          trace = optimizer.apply_strategy(u.strategy, u.sample->target());
          write_file_atomic(trace_path, to_json(*trace).dump(2) + "\n");
        }
      } catch (const Error& e) {
        for (int q : u.pending) record_failure(u, q, e);
        continue;
      }

      for (int q : u.pending) {
        if (stop) return;
        try {
          append(kResultsFile, to_json(run_task(*u.sample, q, u.strategy, trace->rewritten_text, ref)));
          task_finished();
        } catch (const Error& e) {
          if (e.code() == "io-error") throw;
          record_failure(u, q, e);
        }
      }
    }
  };

  const int workers = std::max(1, std::min<int>(config_.concurrency_limit, static_cast<int>(units.size())));
  std::vector<std::exception_ptr> errors(workers);
  {
    std::vector<std::jthread> pool;
    for (int w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        try {
          work();
        } catch (...) {
          errors[w] = std::current_exception();
          stop = true;
        }
      });
    }
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }

  ExperimentReport report = aggregate(load_results(dir), manifest.strategies, manifest.sample_order,
                                      count_failures(read_jsonl(dir / kFailuresFile)));
  report.metadata = manifest.metadata;
  report.metadata.started_at = started_at;
  if (report.complete()) {
    report.metadata.finished_at = utc_now();
    write_file_atomic(dir / kReportFile, to_json(report).dump(2) + "\n");
    emit_report(report, {ReportFormat::markdown, ReportFormat::csv, ReportFormat::svg}, dir);
  }
  return report;
}

}  // namespace gseo
