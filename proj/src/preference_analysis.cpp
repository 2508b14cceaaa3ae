#include "gseo/preference_analysis.hpp"

#include <algorithm>
#include <cctype>

#include <fmt/format.h>

#include "gseo/error.hpp"
#include "gseo/svg.hpp"
#include "gseo/text_util.hpp"

namespace gseo {

std::vector<std::string> Taxonomy::names() const {
  std::vector<std::string> out;
  for (const auto& c : categories) out.push_back(c.name);
  out.push_back(fallback);
  return out;
}

bool Taxonomy::contains(const std::string& name) const {
  const auto all = names();
  return std::find(all.begin(), all.end(), name) != all.end();
}

Taxonomy parse_taxonomy(const std::string& text, const std::string& section, const std::string& fallback) {
  Taxonomy tax;
  tax.fallback = fallback;
  std::string current;
  bool found_section = section.empty();
  std::size_t line_no = 0;
  for (const auto& raw : text::split_lines(text)) {
    ++line_no;
    const std::string line = text::trim(raw);
    if (line.empty() || line.front() == '#') continue;
    if (line.front() == '[' && line.back() == ']') {
      current = text::trim(std::string_view(line).substr(1, line.size() - 2));
      if (current == section) found_section = true;
      continue;
    }
    if (current != section) continue;
    Taxonomy::Category cat;
    const auto bar = line.find('|');
    cat.name = text::trim(std::string_view(line).substr(0, bar));
    if (cat.name.empty()) throw Error("taxonomy-error", fmt::format("line {}: empty category name", line_no));
    if (text::iequals(cat.name, fallback) || tax.contains(cat.name)) {
      throw Error("taxonomy-error", fmt::format("line {}: duplicate category '{}'", line_no, cat.name));
    }
    if (bar != std::string::npos) {
      std::string rest = line.substr(bar + 1);
      std::size_t start = 0;
      while (start <= rest.size()) {
        std::size_t comma = rest.find(',', start);
        if (comma == std::string::npos) comma = rest.size();
        std::string kw = text::to_lower(text::trim(std::string_view(rest).substr(start, comma - start)));
        if (!kw.empty()) cat.keywords.push_back(std::move(kw));
        start = comma + 1;
      }
    }
    tax.categories.push_back(std::move(cat));
  }
  if (!found_section) throw Error("taxonomy-error", fmt::format("no section [{}]", section));
  if (tax.categories.empty()) throw Error("taxonomy-error", "taxonomy has no categories");
  return tax;
}

Taxonomy default_role_taxonomy(const PromptLibrary& prompts) {
  return parse_taxonomy(prompts.get("taxonomy/roles.txt"), "", std::string(kUncategorized));
}

StepTaxonomies default_step_taxonomies(const PromptLibrary& prompts) {
  const std::string& text = prompts.get("taxonomy/steps.txt");
  return {parse_taxonomy(text, "objective", "other"), parse_taxonomy(text, "action", "other")};
}

DistributionReport make_distribution(const std::vector<std::string>& categories,
                                     const std::vector<std::string>& labels) {
  DistributionReport r;
  r.categories = categories;
  for (const auto& c : categories) r.counts[c] = 0;
  for (const auto& l : labels) {
    auto it = r.counts.find(l);
    if (it == r.counts.end()) throw Error("invalid-input", fmt::format("label '{}' is not a category", l));
    ++it->second;
  }
  r.total = static_cast<long>(labels.size());
  for (const auto& c : categories) {
    r.fractions[c] = r.total == 0 ? 0.0 : static_cast<double>(r.counts[c]) / static_cast<double>(r.total);
  }
  return r;
}

namespace {

std::vector<std::string> word_tokens(const std::string& text) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : text) {
    if (std::isalnum(static_cast<unsigned char>(c))) {
      cur.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    } else if (!cur.empty()) {
      out.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

bool contains_sequence(const std::vector<std::string>& hay, const std::vector<std::string>& needle) {
  if (needle.empty() || needle.size() > hay.size()) return false;
  return std::search(hay.begin(), hay.end(), needle.begin(), needle.end()) != hay.end();
}

std::string strip_choice(const std::string& reply) {
  std::string s = text::trim(reply);
  const auto nl = s.find('\n');
  if (nl != std::string::npos) s = text::trim(std::string_view(s).substr(0, nl));
  s = text::strip_list_marker(s);
  while (!s.empty() && (s.front() == '"' || s.front() == '\'' || s.front() == '*' || s.front() == '`')) {
    s.erase(s.begin());
  }
  while (!s.empty() && (s.back() == '"' || s.back() == '\'' || s.back() == '*' || s.back() == '`' ||
                        s.back() == '.')) {
    s.pop_back();
  }
  return text::trim(s);
}

}  // namespace

std::string keyword_label(const std::string& text, const Taxonomy& taxonomy) {
  const auto tokens = word_tokens(text);
  for (const auto& cat : taxonomy.categories) {
    for (const auto& kw : cat.keywords) {
      if (contains_sequence(tokens, word_tokens(kw))) return cat.name;
    }
  }
  return taxonomy.fallback;
}

Labeler::Labeler(const PromptLibrary& prompts) : prompts_(prompts) {}

Labeler::Labeler(const PromptLibrary& prompts, ChatClient& client, ModelSettings model)
    : prompts_(prompts), client_(&client), model_(std::move(model)) {}

std::string Labeler::label(const std::string& subject, const Taxonomy& taxonomy, const std::string& kind) {
  if (!client_) return keyword_label(subject, taxonomy);

  std::string listing;
  for (const auto& name : taxonomy.names()) listing += "- " + name + "\n";
  ChatRequest request = model_.request(
      prompts_.prompt("system_judge"),
      text::render(prompts_.prompt("label_choice"),
                   {{"kind", kind}, {"subject", subject}, {"categories", text::trim(listing)}}));
  for (int attempt = 0;; ++attempt) {
    const ChatResponse r = client_->complete(request);
    const std::string choice = strip_choice(r.text);
    for (const auto& name : taxonomy.names()) {
      if (text::iequals(choice, name)) return name;
    }
    if (attempt >= 1) {
      throw Error("label-parse-error", fmt::format("'{}' is not one of the {} categories", choice, kind));
    }
    request.messages.push_back({Role::assistant, r.text});
    request.messages.push_back(
        {Role::user, "That is not one of the listed categories. Reply with one category name exactly as written."});
  }
}

std::string Labeler::label_role(const RolePersona& persona, const Taxonomy& taxonomy) {
  if (!client_) {
    std::string by_name = keyword_label(persona.name, taxonomy);
    if (by_name != taxonomy.fallback) return by_name;
    return keyword_label(persona.description, taxonomy);
  }
  const std::string subject =
      persona.description.empty() ? persona.name : fmt::format("{} ({})", persona.name, persona.description);
  return label(subject, taxonomy, "user role");
}

std::pair<std::string, std::string> Labeler::parse_step_labels(const OptimizationStep& step,
                                                               const StepTaxonomies& taxonomies) {
  if (text::trim(step.objective_label).empty()) throw Error("invalid-input", "step has an empty objective");
  if (text::trim(step.action_label).empty()) throw Error("invalid-input", "step has an empty action");
  return {label(step.objective_label, taxonomies.objectives, "optimization objective"),
          label(step.action_label, taxonomies.actions, "optimization action")};
}

DistributionReport role_distribution(const std::vector<OptimizationTrace>& traces, const Taxonomy& taxonomy,
                                     Labeler& labeler) {
  if (traces.empty()) throw Error("empty-input", "role distribution needs at least one trace");
  std::vector<std::string> labels;
  long failures = 0;
  for (const auto& t : traces) {
    if (!t.reflection) continue;
    for (const auto& persona : t.reflection->roles) {
      try {
        labels.push_back(labeler.label_role(persona, taxonomy));
      } catch (const Error& e) {
        if (e.code() != "label-parse-error") throw;
        ++failures;
      }
    }
  }
  DistributionReport r = make_distribution(taxonomy.names(), labels);
  r.labeling_failures = failures;
  return r;
}

std::pair<DistributionReport, DistributionReport> step_distribution(
    const std::vector<OptimizationTrace>& traces, const StepTaxonomies& taxonomies, Labeler& labeler) {
  if (traces.empty()) throw Error("empty-input", "step distribution needs at least one trace");
  std::vector<std::string> objectives;
  std::vector<std::string> actions;
  long failures = 0;
  for (const auto& t : traces) {
    for (const auto& step : t.steps) {
      try {
        auto [o, a] = labeler.parse_step_labels(step, taxonomies);
        objectives.push_back(std::move(o));
        actions.push_back(std::move(a));
      } catch (const Error& e) {
        if (e.code() != "label-parse-error") throw;
        ++failures;
      }
    }
  }
  DistributionReport o = make_distribution(taxonomies.objectives.names(), objectives);
  DistributionReport a = make_distribution(taxonomies.actions.names(), actions);
  o.labeling_failures = failures;
  a.labeling_failures = failures;
  return {std::move(o), std::move(a)};
}

double content_quality_fraction(const DistributionReport& objectives) {
  if (objectives.total == 0) throw Error("empty-input", "no labeled steps");
  const std::string& fallback = objectives.categories.back();
  return 1.0 - objectives.fractions.at(fallback);
}

std::string distribution_csv(const DistributionReport& report) {
  std::string out = "category,count,fraction\n";
  for (const auto& c : report.categories) {
    out += fmt::format("\"{}\",{},{}\n", c, report.counts.at(c), report.fractions.at(c));
  }
  return out;
}

std::string distribution_svg(const DistributionReport& report, const std::string& title) {
  svg::Series series{"share of instances (%)", {}};
  for (const auto& c : report.categories) series.values.push_back(report.fractions.at(c) * 100.0);
  return svg::grouped_bar_chart(title, report.categories, {series});
}

}  // namespace gseo
