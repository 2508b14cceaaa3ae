#include "gseo/cli.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <memory>
#include <optional>
#include <set>
#include <sstream>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "gseo/corpus.hpp"
#include "gseo/error.hpp"
#include "gseo/experiment_runner.hpp"
#include "gseo/gse_simulator.hpp"
#include "gseo/llm_gateway.hpp"
#include "gseo/preference_analysis.hpp"
#include "gseo/prompts.hpp"
#include "gseo/strategy_optimizer.hpp"
#include "gseo/text_util.hpp"
#include "gseo/visibility_metrics.hpp"

namespace gseo::cli {

namespace fs = std::filesystem;
using nlohmann::json;

int exit_code_for(const std::string& code) {
  static const std::set<std::string> kUserErrors = {
      "usage",           "config-not-found",      "config-error",       "dataset-not-found",
      "file-not-found",  "run-not-found",         "no-backend",         "invalid-input",
      "invalid-backend", "schema-error",          "invariant-violation", "citation-out-of-range",
      "source-id-out-of-range", "too-many-sources", "taxonomy-error",   "template-missing", "n-too-large", "fixture-error",
      "report-incomplete", "empty-input",         "invalid-request",
  };
  return kUserErrors.count(code) ? 1 : 2;
}

namespace {

struct Options {
  std::string config;
  std::string backend;
  std::string out;
  std::string templates;
  std::string cache_dir;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> samples;
  std::vector<std::string> strategies;
  std::vector<std::string> formats;

  std::string input;
  std::string source;
  std::string sources;
  std::string sample;
  std::string answer;
  std::string query;
  std::optional<int> query_index;
  std::optional<int> target;
  std::string run_dir;
  bool llm_labels = false;

  const BackendFactory* factory = nullptr;
};

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("file-not-found", fmt::format("cannot read {}", path.string()));
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const fs::path& path, const std::string& content) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << content;
  if (!out) throw Error("io-error", fmt::format("cannot write {}", path.string()));
}

std::optional<ExperimentConfig> maybe_config(const Options& o) {
  if (o.config.empty()) return std::nullopt;
  return load_config(o.config);
}

PromptLibrary load_prompts(const Options& o, const std::optional<ExperimentConfig>& cfg) {
  if (!o.templates.empty()) return PromptLibrary::from_directory(o.templates);
  if (cfg && cfg->template_dir) return PromptLibrary::from_directory(*cfg->template_dir);
  return PromptLibrary::builtin();
}

std::unique_ptr<Gateway> make_client(const Options& o, const std::optional<ExperimentConfig>& cfg) {
  std::string spec = o.backend;
  if (spec.empty() && cfg && cfg->backend) spec = *cfg->backend;
  if (spec.empty()) {
    throw Error("no-backend", "this command needs a model; pass --backend or set backend in the config");
  }
  GatewayOptions g;
  if (!o.cache_dir.empty()) {
    g.cache_dir = fs::path(o.cache_dir);
  } else if (cfg && cfg->cache_dir) {
    g.cache_dir = cfg->cache_dir;
  }
  if (cfg) g.concurrency_limit = cfg->concurrency_limit;
  return std::make_unique<Gateway>((*o.factory)(spec), g);
}

ExperimentConfig models_from(const std::optional<ExperimentConfig>& cfg) {
  return cfg ? *cfg : ExperimentConfig{};
}

fs::path out_dir(const Options& o, const fs::path& fallback = ".") {
  return o.out.empty() ? fallback : fs::path(o.out);
}

// Either a dataset file (records with "sources") or one source per line.
struct LoadedSources {
  std::vector<ContentSource> sources;
  std::optional<BenchSample> sample;
};

LoadedSources load_sources(const fs::path& path, const std::string& sample_id) {
  const std::string text = read_text(path);
  LoadedSources out;
  std::size_t line_no = 0;
  for (const auto& line : text::split_lines(text)) {
    ++line_no;
    if (text::trim(line).empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw Error("schema-error", fmt::format("{}:{}: {}", path.string(), line_no, e.what()));
    }
    if (j.contains("sources")) {
      BenchSample s = sample_from_json(j, line_no);
      if (!out.sample && (sample_id.empty() || s.sample_id == sample_id)) out.sample = std::move(s);
      continue;
    }
    ContentSource c;
    c.source_id = j.value("id", static_cast<int>(out.sources.size()) + 1);
    c.title = j.value("title", "");
    c.text = j.at("text").get<std::string>();
    if (c.source_id != static_cast<int>(out.sources.size()) + 1) {
      throw Error("schema-error", fmt::format("{}:{}: source ids must run 1..N in order", path.string(), line_no));
    }
    out.sources.push_back(std::move(c));
  }
  if (out.sample) {
    out.sources = out.sample->sources;
  } else if (!sample_id.empty()) {
    throw Error("invalid-input", fmt::format("sample '{}' not found in {}", sample_id, path.string()));
  }
  if (out.sources.empty()) throw Error("empty-input", fmt::format("{} holds no sources", path.string()));
  return out;
}

// ---------------------------------------------------------------------------

int cmd_extend(const Options& o, std::ostream& out) {
  const auto cfg = maybe_config(o);
  const auto prompts = load_prompts(o, cfg);
  auto client = make_client(o, cfg);
  const auto records = load_raw_records(o.input);
  const auto samples = extend_dataset(*client, prompts, optimizer_settings(models_from(cfg).optimizer_model),
                                      records, o.seed.value_or(cfg ? cfg->seed : kDefaultSeed));
  const fs::path path = out_dir(o) / "dataset.jsonl";
  fs::create_directories(path.parent_path());
  save_dataset(path, samples);
  out << fmt::format("wrote {} samples to {}\n", samples.size(), path.string());
  return 0;
}

int cmd_optimize(const Options& o, std::ostream& out) {
  const auto cfg = maybe_config(o);
  const auto prompts = load_prompts(o, cfg);
  if (o.strategies.empty()) throw Error("usage", "optimize needs at least one --strategy");

  ContentSource source;
  std::string stem;
  if (!o.source.empty()) {
    source.title = fs::path(o.source).stem().string();
    source.text = text::trim(read_text(o.source));
    stem = source.title;
  } else if (!o.sources.empty()) {
    const auto loaded = load_sources(o.sources, o.sample);
    if (!loaded.sample) throw Error("invalid-input", "--sources must be a dataset file when --source is absent");
    source = loaded.sample->target();
    stem = loaded.sample->sample_id;
  } else {
    throw Error("usage", "optimize needs --source <file> or --sources <dataset> [--sample id]");
  }
  std::vector<StrategyId> strategies;
  for (const auto& s : o.strategies) strategies.push_back(strategy_from_string(s));

  auto client = make_client(o, cfg);
  StrategyOptimizer optimizer(*client, prompts, optimizer_settings(models_from(cfg).optimizer_model));
  for (StrategyId s : strategies) {
    const OptimizationTrace trace = optimizer.apply_strategy(s, source);
    const fs::path path = out_dir(o) / fmt::format("{}-{}.json", stem, to_string(s));
    write_text(path, to_json(trace).dump(2) + "\n");
    out << fmt::format("{}: {} calls, trace written to {}\n", to_string(s), trace.elapsed_calls, path.string());
  }
  return 0;
}

std::string resolve_query(const Options& o, const LoadedSources& loaded) {
  if (!o.query.empty()) return o.query;
  if (loaded.sample) {
    const auto all = loaded.sample->query_group.all();
    const int i = o.query_index.value_or(0);
    if (i < 0 || i >= static_cast<int>(all.size())) {
      throw Error("invalid-input", fmt::format("--query-index must be in 0..{}", all.size() - 1));
    }
    return all[i];
  }
  return "";
}

int cmd_simulate(const Options& o, std::ostream& out) {
  const auto cfg = maybe_config(o);
  const auto prompts = load_prompts(o, cfg);
  const auto loaded = load_sources(o.sources, o.sample);
  const std::string query = resolve_query(o, loaded);
  if (query.empty()) throw Error("usage", "simulate needs --query (or a dataset with --query-index)");
  auto client = make_client(o, cfg);
  GseSimulator sim(*client, prompts, generator_settings(models_from(cfg).generator_model));
  const GeneratedAnswer answer = sim.generate_response(query, loaded.sources);
  write_text(out_dir(o) / "answer.txt", answer.raw_text + "\n");
  write_text(out_dir(o) / "answer.json", to_json(answer).dump(2) + "\n");
  out << answer.raw_text << "\n";
  return 0;
}

int cmd_score(const Options& o, std::ostream& out) {
  const auto loaded = load_sources(o.sources, o.sample);
  const int target = o.target.value_or(loaded.sample ? loaded.sample->target_index : 0);
  if (target == 0) throw Error("usage", "score needs --target k");
  const std::string raw = text::trim(read_text(o.answer));
  GeneratedAnswer answer = parse_answer(raw, static_cast<int>(loaded.sources.size()));
  const ObjectiveScores objective = objective_scores(answer, target);

  json result{{"target", target}, {"sentences", answer.sentences.size()}, {"objective", to_json(objective)}};
  const std::string query = resolve_query(o, loaded);
  if (!query.empty() && (!o.query.empty() || !o.backend.empty())) {
    const auto cfg = maybe_config(o);
    const auto prompts = load_prompts(o, cfg);
    auto client = make_client(o, cfg);
    answer.query = query;
    Judge judge(*client, prompts, judge_settings(models_from(cfg).judge_model));
    result["query"] = query;
    result["subjective"] = to_json(judge.subjective_scores(answer, loaded.sources.at(target - 1), query));
  }
  const std::string body = result.dump(2) + "\n";
  if (!o.out.empty()) write_text(fs::path(o.out) / "score.json", body);
  out << body;
  return 0;
}

int cmd_run(const Options& o, std::ostream& out) {
  if (o.config.empty()) throw Error("usage", "run needs --config <file>");
  ExperimentConfig cfg = load_config(o.config);
  if (!o.out.empty()) cfg.output_dir = o.out;
  if (o.seed) cfg.seed = *o.seed;
  if (o.samples) cfg.sample_count = *o.samples;
  if (!o.strategies.empty()) {
    cfg.strategies.clear();
    for (const auto& s : o.strategies) cfg.strategies.push_back(strategy_from_string(s));
  }
  cfg.validate();
  const std::optional<ExperimentConfig> opt_cfg = cfg;
  const auto prompts = load_prompts(o, opt_cfg);
  auto client = make_client(o, opt_cfg);
  ExperimentRunner runner(cfg, *client, prompts);
  const ExperimentReport report = runner.run();

  out << fmt::format("run {}: {} of {} tasks\n", report.metadata.run_id, report.completed_tasks,
                     report.expected_tasks);
  for (const auto& row : report.rows) {
    out << fmt::format("  {:<24} objective {:>8.2f}  subjective {:>8.2f}  adaptability {:>5.1f}%  failures {}\n",
                       display_name(row.strategy), row.mean_improvements.at("objective_overall"),
                       row.mean_improvements.at("subjective_average"), row.adaptability_rate * 100.0,
                       row.failures);
  }
  out << fmt::format("results in {}\n", runner.run_dir().string());
  return 0;
}

int cmd_analyze(const Options& o, std::ostream& out) {
  if (o.run_dir.empty()) throw Error("usage", "analyze needs --run <run-dir>");
  const auto cfg = maybe_config(o);
  const auto prompts = load_prompts(o, cfg);
  const auto traces = load_traces(o.run_dir);

  std::unique_ptr<Gateway> client;
  std::unique_ptr<Labeler> labeler;
  if (o.llm_labels) {
    client = make_client(o, cfg);
    labeler = std::make_unique<Labeler>(prompts, *client, judge_settings(models_from(cfg).judge_model));
  } else {
    labeler = std::make_unique<Labeler>(prompts);
  }
  const Taxonomy roles_tax = default_role_taxonomy(prompts);
  const StepTaxonomies step_tax = default_step_taxonomies(prompts);
  const DistributionReport roles = role_distribution(traces, roles_tax, *labeler);
  const auto [objectives, actions] = step_distribution(traces, step_tax, *labeler);

  const fs::path dir = out_dir(o, fs::path(o.run_dir) / "analysis");
  write_text(dir / "roles.csv", distribution_csv(roles));
  write_text(dir / "roles.svg", distribution_svg(roles, "User role categories"));
  write_text(dir / "step_objectives.csv", distribution_csv(objectives));
  write_text(dir / "step_objectives.svg", distribution_svg(objectives, "Optimization step objectives"));
  write_text(dir / "step_actions.csv", distribution_csv(actions));
  write_text(dir / "step_actions.svg", distribution_svg(actions, "Optimization step actions"));

  auto print = [&](const char* title, const DistributionReport& r) {
    out << fmt::format("{} ({} instances, {} labeling failures)\n", title, r.total, r.labeling_failures);
    for (const auto& c : r.categories) {
      out << fmt::format("  {:<40} {:>5}  {:>5.1f}%\n", c, r.counts.at(c), r.fractions.at(c) * 100.0);
    }
  };
  print("roles", roles);
  print("step objectives", objectives);
  print("step actions", actions);
  if (roles.total > 0) {
    const double top_two = roles.fractions.at(roles_tax.categories.at(0).name) +
                           roles.fractions.at(roles_tax.categories.at(1).name);
    out << fmt::format("first two role categories: {:.1f}%\n",
                       top_two * 100.0);
  }
  if (objectives.total > 0) {
    out << fmt::format("steps targeting content quality: {:.1f}%\n",
                       content_quality_fraction(objectives) * 100.0);
    out << fmt::format("enrichment and expansion steps: {:.1f}%\n",
                       actions.fractions.at(step_tax.actions.categories.at(0).name) * 100.0);
  }
  out << fmt::format("distributions written to {}\n", dir.string());
  return 0;
}

int cmd_regen_rubrics(const Options& o, std::ostream& out) {
  const auto cfg = maybe_config(o);
  const auto prompts = load_prompts(o, cfg);
  auto client = make_client(o, cfg);
  const ModelSettings model = optimizer_settings(models_from(cfg).optimizer_model);
  const fs::path dir = out_dir(o, "regenerated");
  for (SubjectiveDimension d : kSubjectiveDimensions) {
    const std::string name(to_string(d));
    const auto lines = text::split_lines(prompts.get("rubrics/" + name + ".txt"));
    const std::string definition = lines.size() > 1 ? text::trim(lines[1]) : name;
    std::string title = name;
    if (!lines.empty() && text::starts_with_ci(lines[0], "Dimension:")) title = text::trim(lines[0].substr(10));
    const ChatResponse r = client->complete(model.request(
        prompts.prompt("system_optimizer"),
        text::render(prompts.prompt("rubric_meta"), {{"dimension", title}, {"definition", definition}})));
    const std::string rubric = text::trim(r.text);
    for (const char* required : {"{query}", "{answer}", "{source_excerpts}", "SCORE"}) {
      if (rubric.find(required) == std::string::npos) {
        throw Error("rubric-invalid", fmt::format("generated rubric for {} lacks {}", name, required));
      }
    }
    const fs::path path = dir / "rubrics" / (name + ".txt");
    write_text(path, rubric + "\n");
    out << fmt::format("{}: {}\n", name, path.string());
  }
  return 0;
}

int cmd_report(const Options& o, std::ostream& out) {
  if (o.run_dir.empty()) throw Error("usage", "report needs --run <run-dir>");
  const ExperimentReport report = report_from_run_dir(o.run_dir);
  std::set<ReportFormat> formats;
  for (const auto& f : o.formats) formats.insert(report_format_from_string(f));
  if (formats.empty()) formats = {ReportFormat::markdown, ReportFormat::csv, ReportFormat::svg};
  for (const auto& path : emit_report(report, formats, out_dir(o, o.run_dir))) {
    out << path.string() << "\n";
  }
  return 0;
}

}  // namespace

int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  return dispatch(args, out, err, [](const std::string& spec) { return make_backend(spec); });
}

int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err,
             const BackendFactory& factory) {
  CLI::App app{"Generative search engine optimization experiments", "gseo"};
  app.require_subcommand(1);
  bool show_version = false;
  app.add_flag("--version", show_version, "Print artifact and template versions");

  Options o;
  o.factory = &factory;
  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", o.config, "Experiment config file");
    sub->add_option("--backend", o.backend, "remote:<url> | scripted:<path> | recording:<url>,<dir>");
    sub->add_option("--out", o.out, "Output directory");
    sub->add_option("--templates", o.templates, "Template directory overlaying the built-in set");
    sub->add_option("--cache-dir", o.cache_dir, "On-disk response cache");
  };

  auto* extend = app.add_subcommand("extend-dataset", "Expand raw records into five-query samples");
  common(extend);
  extend->add_option("--input", o.input, "Raw JSONL records {query, sources}")->required();
  extend->add_option("--seed", o.seed, "Seed for target assignment");

  auto* optimize = app.add_subcommand("optimize", "Apply strategies to one source and write traces");
  common(optimize);
  optimize->add_option("--strategy", o.strategies, "Strategy id (repeatable)");
  optimize->add_option("--source", o.source, "Plain-text source file");
  optimize->add_option("--sources", o.sources, "Dataset file; optimizes the target of --sample");
  optimize->add_option("--sample", o.sample, "Sample id within --sources");

  auto* simulate = app.add_subcommand("simulate", "Generate a cited answer from sources");
  common(simulate);
  simulate->add_option("--sources", o.sources, "Sources JSONL or dataset file")->required();
  simulate->add_option("--sample", o.sample, "Sample id within a dataset file");
  simulate->add_option("--query", o.query, "Query text");
  simulate->add_option("--query-index", o.query_index, "Query of the sample (0 = canonical)");

  auto* score = app.add_subcommand("score", "Score one source's visibility in an answer");
  common(score);
  score->add_option("--answer", o.answer, "Raw answer text file")->required();
  score->add_option("--sources", o.sources, "Sources JSONL or dataset file")->required();
  score->add_option("--sample", o.sample, "Sample id within a dataset file");
  score->add_option("--target", o.target, "Source id to score");
  score->add_option("--query", o.query, "Query; enables judge scoring");

  auto* run = app.add_subcommand("run", "Run a full experiment from a config");
  common(run);
  run->add_option("--seed", o.seed, "Override the sampling seed");
  run->add_option("--samples", o.samples, "Override sample_count");
  run->add_option("--strategy", o.strategies, "Override strategies (repeatable)");

  auto* analyze = app.add_subcommand("analyze", "Role and step preference distributions of a run");
  common(analyze);
  analyze->add_option("--run", o.run_dir, "Run directory")->required();
  analyze->add_flag("--llm-labels", o.llm_labels, "Label with the model instead of keyword tables");

  auto* regen = app.add_subcommand("regen-rubrics", "Regenerate judge rubrics with the model");
  common(regen);

  auto* report = app.add_subcommand("report", "Render reports from a run directory");
  common(report);
  report->add_option("--run", o.run_dir, "Run directory")->required();
  report->add_option("--format", o.formats, "md | csv | svg (repeatable)");

  // --version works without a subcommand.
  if (std::find(args.begin(), args.end(), "--version") != args.end()) {
    out << fmt::format("gseo {} (templates {})\n", kArtifactVersion, PromptLibrary::builtin().version());
    return 0;
  }

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: usage: " << e.what() << "\n" << app.help();
    return 1;
  }

  try {
    if (*extend) return cmd_extend(o, out);
    if (*optimize) return cmd_optimize(o, out);
    if (*simulate) return cmd_simulate(o, out);
    if (*score) return cmd_score(o, out);
    if (*run) return cmd_run(o, out);
    if (*analyze) return cmd_analyze(o, out);
    if (*regen) return cmd_regen_rubrics(o, out);
    if (*report) return cmd_report(o, out);
  } catch (const Error& e) {
    err << "error: " << e.code() << ": " << e.what() << "\n";
    return exit_code_for(e.code());
  } catch (const nlohmann::json::exception& e) {
    err << "error: schema-error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    err << "error: internal: " << e.what() << "\n";
    return 2;
  }
  return 1;
}

}  // namespace gseo::cli
