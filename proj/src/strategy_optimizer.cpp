#include "gseo/strategy_optimizer.hpp"

#include <cmath>
#include <map>

#include <fmt/format.h>

#include "gseo/error.hpp"
#include "gseo/text_util.hpp"

namespace gseo {

using nlohmann::json;

namespace {

struct StrategyInfo {
  StrategyId id;
  std::string_view name;
  std::string_view display;
};

constexpr std::array<StrategyInfo, 14> kStrategyInfo = {{
    {StrategyId::traditional_seo, "traditional_seo", "Tran. SEO"},
    {StrategyId::unique_words, "unique_words", "Uniq. Word"},
    {StrategyId::simple_expression, "simple_expression", "Simp. Expr."},
    {StrategyId::authoritative_expression, "authoritative_expression", "Auth. Expr."},
    {StrategyId::fluent_expression, "fluent_expression", "Flue. Expr."},
    {StrategyId::terminology_addition, "terminology_addition", "Term. Addi."},
    {StrategyId::reputation_addition, "reputation_addition", "Repu. Addi."},
    {StrategyId::quotation_addition, "quotation_addition", "Quot. Addi."},
    {StrategyId::statistics_addition, "statistics_addition", "Stat. Addi."},
    {StrategyId::raid_gseo, "raid_gseo", "RAID G-SEO"},
    {StrategyId::simple_gseo_no_step, "simple_gseo_no_step", "Simple G-SEO (w/o Step)"},
    {StrategyId::simple_gseo_with_step, "simple_gseo_with_step", "Simple G-SEO (w/ Step)"},
    {StrategyId::id_gseo_no_summary, "id_gseo_no_summary", "ID G-SEO (w/o summ.)"},
    {StrategyId::id_gseo_with_summary, "id_gseo_with_summary", "ID G-SEO (w/ summ.)"},
}};

const StrategyInfo& info(StrategyId id) {
  for (const auto& i : kStrategyInfo) {
    if (i.id == id) return i;
  }
  throw Error("invalid-input", "unknown strategy id");
}

}  // namespace

std::string_view to_string(StrategyId id) { return info(id).name; }
std::string_view display_name(StrategyId id) { return info(id).display; }

StrategyId strategy_from_string(std::string_view name) {
  for (const auto& i : kStrategyInfo) {
    if (i.name == name) return i.id;
  }
  throw Error("invalid-input", fmt::format("unknown strategy '{}'", name));
}

bool is_baseline(StrategyId id) { return static_cast<int>(id) < static_cast<int>(StrategyId::raid_gseo); }

std::string_view to_string(Stage stage) {
  switch (stage) {
    case Stage::summary:
      return "summary";
    case Stage::initial_intent:
      return "initial_intent";
    case Stage::reflection:
      return "reflection";
    case Stage::refined_intent:
      return "refined_intent";
    case Stage::steps:
      return "steps";
  }
  return "summary";
}

std::set<Stage> declared_stages(StrategyId id) {
  switch (id) {
    case StrategyId::raid_gseo:
      return {Stage::summary, Stage::initial_intent, Stage::reflection, Stage::refined_intent,
              Stage::steps};
    case StrategyId::simple_gseo_no_step:
      return {};
    case StrategyId::simple_gseo_with_step:
      return {Stage::steps};
    case StrategyId::id_gseo_no_summary:
      return {Stage::initial_intent, Stage::steps};
    case StrategyId::id_gseo_with_summary:
      return {Stage::summary, Stage::initial_intent, Stage::steps};
    default:
      return {};
  }
}

std::set<Stage> OptimizationTrace::populated_stages() const {
  std::set<Stage> out;
  if (summary) out.insert(Stage::summary);
  if (initial_intent) out.insert(Stage::initial_intent);
  if (reflection) out.insert(Stage::reflection);
  if (refined_intent) out.insert(Stage::refined_intent);
  if (!steps.empty()) out.insert(Stage::steps);
  return out;
}

namespace {

json optional_json(const std::optional<std::string>& v) { return v ? json(*v) : json(nullptr); }

std::optional<std::string> optional_string(const json& j, const char* key) {
  if (!j.contains(key) || j[key].is_null()) return std::nullopt;
  return j[key].get<std::string>();
}

}  // namespace

json to_json(const OptimizationTrace& trace) {
  json steps = json::array();
  for (const auto& s : trace.steps) {
    steps.push_back({{"objective", s.objective_label},
                     {"action", s.action_label},
                     {"instruction", s.instruction_text}});
  }
  return json{{"strategy", to_string(trace.strategy)},
              {"summary", optional_json(trace.summary)},
              {"initial_intent", optional_json(trace.initial_intent)},
              {"reflection", trace.reflection ? to_json(*trace.reflection) : json(nullptr)},
              {"refined_intent", optional_json(trace.refined_intent)},
              {"steps", std::move(steps)},
              {"rewritten_text", trace.rewritten_text},
              {"elapsed_calls", trace.elapsed_calls}};
}

OptimizationTrace trace_from_json(const json& j) {
  OptimizationTrace t;
  t.strategy = strategy_from_string(j.at("strategy").get<std::string>());
  t.summary = optional_string(j, "summary");
  t.initial_intent = optional_string(j, "initial_intent");
  t.refined_intent = optional_string(j, "refined_intent");
  if (j.contains("reflection") && !j["reflection"].is_null()) {
    t.reflection = reflection_from_json(j["reflection"]);
  }
  for (const auto& s : j.at("steps")) {
    t.steps.push_back({s.at("objective"), s.at("action"), s.at("instruction")});
  }
  t.rewritten_text = j.at("rewritten_text").get<std::string>();
  t.elapsed_calls = j.value("elapsed_calls", 0);
  return t;
}

// ---------------------------------------------------------------------------

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

bool take_field(const std::string& line, std::string_view key, std::string& value) {
  if (!text::starts_with_ci(line, key)) return false;
  std::string rest = text::trim(std::string_view(line).substr(key.size()));
  if (rest.empty() || rest.front() != ':') return false;
  value = text::trim(std::string_view(rest).substr(1));
  return true;
}

[[noreturn]] void step_error(std::size_t line, const std::string& reason) {
  throw Error("step-parse-error", fmt::format("line {}: {}", line, reason));
}

}  // namespace

std::vector<OptimizationStep> parse_steps(const std::string& text) {
  struct Pending {
    OptimizationStep step;
    std::size_t line = 0;
    bool has_action = false;
    bool has_instruction = false;
  };
  std::vector<Pending> pending;
  std::string* field = nullptr;
  std::size_t line_no = 0;

  for (const auto& raw_line : text::split_lines(text)) {
    ++line_no;
    const std::string line = text::strip_list_marker(strip_emphasis(raw_line));
    if (line.empty()) {
      field = nullptr;
      continue;
    }
    std::string value;
    if (take_field(line, "OBJECTIVE", value)) {
      pending.push_back({});
      pending.back().line = line_no;
      pending.back().step.objective_label = value;
      field = &pending.back().step.objective_label;
    } else if (take_field(line, "ACTION", value)) {
      if (pending.empty()) step_error(line_no, "ACTION before any OBJECTIVE");
      if (pending.back().has_action) step_error(line_no, "second ACTION in one step");
      pending.back().has_action = true;
      pending.back().step.action_label = value;
      field = &pending.back().step.action_label;
    } else if (take_field(line, "INSTRUCTION", value)) {
      if (pending.empty()) step_error(line_no, "INSTRUCTION before any OBJECTIVE");
      if (pending.back().has_instruction) step_error(line_no, "second INSTRUCTION in one step");
      pending.back().has_instruction = true;
      pending.back().step.instruction_text = value;
      field = &pending.back().step.instruction_text;
    } else if (field) {
      if (!field->empty()) field->push_back(' ');
      *field += line;
    }
  }

  std::vector<OptimizationStep> steps;
  for (std::size_t i = 0; i < pending.size(); ++i) {
    const auto& p = pending[i];
    if (p.step.objective_label.empty()) step_error(p.line, fmt::format("step {} has an empty OBJECTIVE", i + 1));
    if (!p.has_action || p.step.action_label.empty()) {
      step_error(p.line, fmt::format("step {} is missing ACTION", i + 1));
    }
    if (!p.has_instruction || p.step.instruction_text.empty()) {
      step_error(p.line, fmt::format("step {} is missing INSTRUCTION", i + 1));
    }
    steps.push_back(p.step);
  }
  return steps;
}

// ---------------------------------------------------------------------------

StrategyOptimizer::StrategyOptimizer(ChatClient& client, const PromptLibrary& prompts,
                                     ModelSettings model, OptimizerOptions options)
    : client_(client), prompts_(prompts), model_(std::move(model)), options_(options) {}

namespace {

constexpr int kSummaryMaxWords = 120;

void require_text(const ContentSource& source) {
  if (text::trim(source.text).empty()) {
    throw Error("invalid-input", fmt::format("source {} has empty text", source.source_id));
  }
}

std::string clean_output(const std::string& text) {
  std::string out = text::trim(text);
  if (out.size() >= 6 && out.rfind("\"\"\"", 0) == 0 && out.compare(out.size() - 3, 3, "\"\"\"") == 0) {
    out = text::trim(std::string_view(out).substr(3, out.size() - 6));
  }
  return out;
}

std::string render_steps(const std::vector<OptimizationStep>& steps) {
  std::string out;
  for (std::size_t i = 0; i < steps.size(); ++i) {
    out += fmt::format("{}. Objective: {}\n   Action: {}\n   Instruction: {}\n", i + 1,
                       steps[i].objective_label, steps[i].action_label, steps[i].instruction_text);
  }
  return out;
}

}  // namespace

std::string StrategyOptimizer::summarize_content(const ContentSource& source) {
  require_text(source);
  const ChatResponse r = client_.complete(model_.request(
      prompts_.prompt("system_optimizer"),
      text::render(prompts_.prompt("summarize"),
                   {{"content", text::trim(source.text)},
                    {"max_words", std::to_string(kSummaryMaxWords)}})));
  std::string summary = text::collapse_whitespace(clean_output(r.text));
  if (summary.empty()) throw Error("parse-error", "empty summary");
  return summary;
}

std::string StrategyOptimizer::infer_initial_intent(const ContentSource& source,
                                                    const std::string& summary) {
  require_text(source);
  if (text::trim(summary).empty()) throw Error("invalid-input", "intent inference needs a summary");
  const ChatResponse r = client_.complete(model_.request(
      prompts_.prompt("system_optimizer"),
      text::render(prompts_.prompt("initial_intent"),
                   {{"content", text::trim(source.text)}, {"summary", text::trim(summary)}})));
  std::string intent = text::collapse_whitespace(clean_output(r.text));
  if (intent.empty()) throw Error("parse-error", "empty intent");
  return intent;
}

std::vector<OptimizationStep> StrategyOptimizer::plan_steps(const ContentSource& source,
                                                            const std::string& intent) {
  require_text(source);
  const bool with_intent = !text::trim(intent).empty();
  const std::map<std::string, std::string> values{
      {"content", text::trim(source.text)},
      {"intent", text::trim(intent)},
      {"min_steps", std::to_string(options_.min_steps)},
      {"max_steps", std::to_string(options_.max_steps)}};
  const ChatResponse r = client_.complete(model_.request(
      prompts_.prompt("system_optimizer"),
      text::render(prompts_.prompt(with_intent ? "plan_steps" : "plan_steps_no_intent"), values)));
  std::vector<OptimizationStep> steps = parse_steps(r.text);
  if (static_cast<int>(steps.size()) < options_.min_steps) {
    throw Error("too-few-steps", fmt::format("{} steps parsed, need at least {}", steps.size(),
                                             options_.min_steps));
  }
  if (static_cast<int>(steps.size()) > options_.max_steps) steps.resize(options_.max_steps);
  return steps;
}

std::string StrategyOptimizer::checked_rewrite(const ContentSource& source, ChatRequest request) {
  const double original = static_cast<double>(text::word_count(source.text));
  const auto low = static_cast<std::size_t>(std::ceil(original * options_.min_length_ratio));
  const auto high = static_cast<std::size_t>(std::floor(original * options_.max_length_ratio));
  for (int attempt = 0;; ++attempt) {
    const ChatResponse r = client_.complete(request);
    std::string out = clean_output(r.text);
    const std::size_t words = text::word_count(out);
    if (words >= low && words <= high && words > 0) return out;
    if (attempt >= 1) {
      throw Error("length-guard-violation",
                  fmt::format("rewrite has {} words; expected {}..{} for a {}-word source", words,
                              low, high, static_cast<long>(original)));
    }
    request.messages.push_back({Role::assistant, r.text});
    request.messages.push_back(
        {Role::user, fmt::format("That rewrite has {} words. Rewrite it again with between {} and "
                                 "{} words and return only the rewritten content.",
                                 words, low, high)});
  }
}

std::string StrategyOptimizer::rewrite_content(const ContentSource& source,
                                               const std::string& intent,
                                               const std::vector<OptimizationStep>& steps) {
  require_text(source);
  std::string tmpl = "rewrite_direct";
  if (!text::trim(intent).empty()) {
    tmpl = "rewrite";
  } else if (!steps.empty()) {
    tmpl = "rewrite_steps";
  }
  const std::string step_text = steps.empty() ? std::string("(none)\n") : render_steps(steps);
  return checked_rewrite(
      source, model_.request(prompts_.prompt("system_optimizer"),
                             text::render(prompts_.prompt(tmpl), {{"content", text::trim(source.text)},
                                                                  {"intent", text::trim(intent)},
                                                                  {"steps", step_text}})));
}

std::string StrategyOptimizer::rewrite_baseline(StrategyId baseline, const ContentSource& source) {
  if (!is_baseline(baseline)) {
    throw Error("invalid-input", fmt::format("{} is not a baseline strategy", to_string(baseline)));
  }
  require_text(source);
  const std::string name = fmt::format("baseline_{}", to_string(baseline));
  return checked_rewrite(
      source, model_.request(prompts_.prompt("system_optimizer"),
                             text::render(prompts_.prompt(name), {{"content", text::trim(source.text)}})));
}

OptimizationTrace StrategyOptimizer::apply_strategy(StrategyId strategy, const ContentSource& source) {
  CountingClient counter(client_);
  StrategyOptimizer stages(counter, prompts_, model_, options_);
  IntentReflector reflector(counter, prompts_, model_, options_.reflection);

  auto run = [](const char* stage, auto&& fn) {
    try {
      return fn();
    } catch (const Error& e) {
      throw e.with_context(fmt::format("stage {}", stage));
    }
  };

  OptimizationTrace trace;
  trace.strategy = strategy;
  switch (strategy) {
    case StrategyId::raid_gseo: {
      trace.summary = run("summarize", [&] { return stages.summarize_content(source); });
      trace.initial_intent =
          run("infer-intent", [&] { return stages.infer_initial_intent(source, *trace.summary); });
      trace.reflection =
          run("reflect", [&] { return reflector.reflect(*trace.initial_intent, *trace.summary); });
      trace.refined_intent = trace.reflection->refined_intent;
      trace.steps = run("plan", [&] { return stages.plan_steps(source, *trace.refined_intent); });
      trace.rewritten_text = run(
          "rewrite", [&] { return stages.rewrite_content(source, *trace.refined_intent, trace.steps); });
      break;
    }
    case StrategyId::simple_gseo_no_step:
      trace.rewritten_text = run("rewrite", [&] { return stages.rewrite_content(source, "", {}); });
      break;
    case StrategyId::simple_gseo_with_step:
      trace.steps = run("plan", [&] { return stages.plan_steps(source, ""); });
      trace.rewritten_text =
          run("rewrite", [&] { return stages.rewrite_content(source, "", trace.steps); });
      break;
    case StrategyId::id_gseo_no_summary:
    case StrategyId::id_gseo_with_summary: {
      std::string context = source.text;
      if (strategy == StrategyId::id_gseo_with_summary) {
        trace.summary = run("summarize", [&] { return stages.summarize_content(source); });
        context = *trace.summary;
      }
      trace.initial_intent = run("infer-intent", [&] { return stages.infer_initial_intent(source, context); });
      trace.steps = run("plan", [&] { return stages.plan_steps(source, *trace.initial_intent); });
      trace.rewritten_text = run(
          "rewrite", [&] { return stages.rewrite_content(source, *trace.initial_intent, trace.steps); });
      break;
    }
    default:
      trace.rewritten_text =
          run("rewrite", [&] { return stages.rewrite_baseline(strategy, source); });
      break;
  }
  trace.elapsed_calls = counter.calls();
  return trace;
}

}  // namespace gseo
