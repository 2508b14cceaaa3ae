#include "gseo/visibility_metrics.hpp"

#include <cmath>
#include <regex>

#include <fmt/format.h>

#include "gseo/error.hpp"
#include "gseo/text_util.hpp"

namespace gseo {

using nlohmann::json;

std::string_view to_string(SubjectiveDimension dimension) {
  switch (dimension) {
    case SubjectiveDimension::relevance:
      return "relevance";
    case SubjectiveDimension::influence:
      return "influence";
    case SubjectiveDimension::uniqueness:
      return "uniqueness";
    case SubjectiveDimension::diversity:
      return "diversity";
    case SubjectiveDimension::click_likelihood:
      return "click_likelihood";
    case SubjectiveDimension::subjective_position:
      return "subjective_position";
    case SubjectiveDimension::subjective_volume:
      return "subjective_volume";
  }
  return "relevance";
}

SubjectiveDimension dimension_from_string(std::string_view name) {
  for (auto d : kSubjectiveDimensions) {
    if (to_string(d) == name) return d;
  }
  throw Error("invalid-input", fmt::format("unknown subjective dimension '{}'", name));
}

json to_json(const ObjectiveScores& scores) {
  return json{{"word_count", scores.word_count},
              {"position_count", scores.position_count},
              {"pawc_overall", scores.pawc_overall}};
}

ObjectiveScores objective_scores_from_json(const json& j) {
  return ObjectiveScores{j.at("word_count").get<double>(), j.at("position_count").get<double>(),
                         j.at("pawc_overall").get<double>()};
}

json to_json(const SubjectiveScores& scores) {
  json j = json::object();
  for (const auto& [d, v] : scores) j[std::string(to_string(d))] = v;
  return j;
}

SubjectiveScores subjective_scores_from_json(const json& j) {
  SubjectiveScores s;
  for (const auto& [k, v] : j.items()) s[dimension_from_string(k)] = v.get<int>();
  return s;
}

ObjectiveScores objective_scores(const GeneratedAnswer& answer, int source_id) {
  if (source_id < 1 || source_id > answer.source_count) {
    throw Error("source-id-out-of-range",
                fmt::format("source {} outside 1..{}", source_id, answer.source_count));
  }
  ObjectiveScores scores;
  const double m = static_cast<double>(answer.sentences.size());
  for (const auto& sentence : answer.sentences) {
    if (!sentence.citation_ids.count(source_id)) continue;
    const double share = static_cast<double>(text::word_count(sentence.text)) /
                         static_cast<double>(sentence.citation_ids.size());
    const double decay = std::exp(-(sentence.order_index - 1) / m);
    scores.word_count += share;
    scores.position_count += decay;
    scores.pawc_overall += share * decay;
  }
  return scores;
}

double improvement(double before, double after) {
  if (before < 0.0 || after < 0.0) {
    throw Error("negative-input", fmt::format("visibility scores must be >= 0 (before {}, after {})",
                                              before, after));
  }
  return (after - before) / (before + 1.0) * 100.0;
}

json to_json(const ImprovementRecord& record) {
  return json{{"metric", record.metric_name},
              {"before", record.before},
              {"after", record.after},
              {"improvement_pct", record.improvement_pct}};
}

ImprovementRecord improvement_record_from_json(const json& j) {
  return ImprovementRecord{j.at("metric").get<std::string>(), j.at("before").get<double>(),
                           j.at("after").get<double>(), j.at("improvement_pct").get<double>()};
}

const std::vector<std::string>& improvement_metric_names() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> n{"word_count", "position_count", "pawc_overall"};
    for (auto d : kSubjectiveDimensions) n.emplace_back(to_string(d));
    n.emplace_back("objective_overall");
    n.emplace_back("subjective_average");
    return n;
  }();
  return names;
}

namespace {

int score_of(const SubjectiveScores& scores, SubjectiveDimension d) {
  auto it = scores.find(d);
  if (it == scores.end()) {
    throw Error("invalid-input", fmt::format("missing subjective dimension {}", to_string(d)));
  }
  return it->second;
}

ImprovementRecord record(std::string name, double before, double after) {
  return ImprovementRecord{std::move(name), before, after, improvement(before, after)};
}

}  // namespace

std::vector<ImprovementRecord> improvement_report(const VisibilityScores& before,
                                                  const VisibilityScores& after) {
  std::vector<ImprovementRecord> out;
  out.push_back(record("word_count", before.objective.word_count, after.objective.word_count));
  out.push_back(
      record("position_count", before.objective.position_count, after.objective.position_count));
  out.push_back(record("pawc_overall", before.objective.pawc_overall, after.objective.pawc_overall));

  double sum_pct = 0.0;
  double sum_before = 0.0;
  double sum_after = 0.0;
  for (auto d : kSubjectiveDimensions) {
    const double b = score_of(before.subjective, d);
    const double a = score_of(after.subjective, d);
    out.push_back(record(std::string(to_string(d)), b, a));
    sum_pct += out.back().improvement_pct;
    sum_before += b;
    sum_after += a;
  }
  out.push_back(record("objective_overall", before.objective.pawc_overall,
                       after.objective.pawc_overall));
  // The aggregate is the mean of the per-dimension percentages, not the
  // improvement of the mean scores; before/after hold the mean raw scores.
  const double k = static_cast<double>(kSubjectiveDimensions.size());
  out.push_back(ImprovementRecord{"subjective_average", sum_before / k, sum_after / k, sum_pct / k});
  return out;
}

std::string source_excerpts(const GeneratedAnswer& answer, const ContentSource& source) {
  std::string out = fmt::format("Source [{}]", source.source_id);
  if (!source.title.empty()) out += ": " + source.title;
  bool any = false;
  for (const auto& s : answer.sentences) {
    if (!s.citation_ids.count(source.source_id)) continue;
    out += fmt::format("\n(sentence {}) {}", s.order_index, s.text);
    any = true;
  }
  if (!any) out += "\n(not cited in the answer)";
  return out;
}

int parse_judge_score(const std::string& text) {
  static const std::regex kScoreLine(R"(^[\s*#_]*score[\s*_]*:[\s*_]*(-?\d+))",
                                     std::regex::icase);
  std::optional<long long> found;
  for (const auto& line : text::split_lines(text)) {
    std::smatch m;
    if (std::regex_search(line, m, kScoreLine)) {
      const std::string digits = m[1].str();
      found = digits.size() > 6 ? 1000000 : std::stoll(digits);
    }
  }
  if (!found) throw Error("score-parse-error", "no 'SCORE: k' line in judge output");
  if (*found < kMinJudgeScore || *found > kMaxJudgeScore) {
    throw Error("score-out-of-range", fmt::format("judge score {} outside 0..5", *found));
  }
  return static_cast<int>(*found);
}

Judge::Judge(ChatClient& client, const PromptLibrary& prompts, ModelSettings model,
             JudgeOptions options)
    : client_(client), prompts_(prompts), model_(std::move(model)), options_(options) {}

ChatRequest Judge::build_request(const GeneratedAnswer& answer, const ContentSource& source,
                                 SubjectiveDimension dimension, const std::string& query) const {
  const std::string& rubric =
      prompts_.get(fmt::format("rubrics/{}.txt", to_string(dimension)));
  return model_.request(prompts_.prompt("system_judge"),
                        text::render(rubric, {{"query", query},
                                              {"answer", answer.raw_text},
                                              {"source_excerpts", source_excerpts(answer, source)}}));
}

int Judge::judge_dimension(const GeneratedAnswer& answer, const ContentSource& source,
                           SubjectiveDimension dimension, const std::string& query) {
  ChatRequest request = build_request(answer, source, dimension, query);
  for (int attempt = 0;; ++attempt) {
    const ChatResponse response = client_.complete(request);
    try {
      return parse_judge_score(response.text);
    } catch (const Error& e) {
      if (e.code() != "score-parse-error" || attempt >= options_.max_reasks) throw;
      request.messages.push_back({Role::assistant, response.text});
      request.messages.push_back(
          {Role::user, "Your reply did not end with a score line. Reply with only the line "
                       "\"SCORE: k\" where k is an integer from 0 to 5."});
    }
  }
}

SubjectiveScores Judge::subjective_scores(const GeneratedAnswer& answer,
                                          const ContentSource& source, const std::string& query) {
  SubjectiveScores scores;
  for (auto d : kSubjectiveDimensions) {
    if (answer.sentences.empty()) {
      scores[d] = 0;
      continue;
    }
    try {
      scores[d] = judge_dimension(answer, source, d, query);
    } catch (const Error& e) {
      throw e.with_context(fmt::format("dimension {}", to_string(d)));
    }
  }
  return scores;
}

}  // namespace gseo
