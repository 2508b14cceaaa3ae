#pragma once

#include <array>
#include <map>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "gseo/corpus.hpp"
#include "gseo/gse_simulator.hpp"
#include "gseo/llm_gateway.hpp"
#include "gseo/prompts.hpp"

namespace gseo {

// Position-adjusted visibility of one source inside one answer.
//
// With m sentences, wc(s) the whitespace token count of sentence s and
// cite(s) its citation set, a sentence citing the source contributes
//   share(s) = wc(s) / |cite(s)|        to word_count,
//   decay(s) = exp(-(s - 1) / m)        to position_count,
//   share(s) * decay(s)                 to pawc_overall.
struct ObjectiveScores {
  double word_count = 0.0;
  double position_count = 0.0;
  double pawc_overall = 0.0;

  bool operator==(const ObjectiveScores&) const = default;
};

enum class SubjectiveDimension {
  relevance,
  influence,
  uniqueness,
  diversity,
  click_likelihood,
  subjective_position,
  subjective_volume,
};

inline constexpr std::array<SubjectiveDimension, 7> kSubjectiveDimensions = {
    SubjectiveDimension::relevance,        SubjectiveDimension::influence,
    SubjectiveDimension::uniqueness,       SubjectiveDimension::diversity,
    SubjectiveDimension::click_likelihood, SubjectiveDimension::subjective_position,
    SubjectiveDimension::subjective_volume,
};

[[nodiscard]] std::string_view to_string(SubjectiveDimension dimension);
[[nodiscard]] SubjectiveDimension dimension_from_string(std::string_view name);

inline constexpr int kMinJudgeScore = 0;
inline constexpr int kMaxJudgeScore = 5;

using SubjectiveScores = std::map<SubjectiveDimension, int>;

struct VisibilityScores {
  ObjectiveScores objective;
  SubjectiveScores subjective;
};

nlohmann::json to_json(const ObjectiveScores& scores);
ObjectiveScores objective_scores_from_json(const nlohmann::json& j);
nlohmann::json to_json(const SubjectiveScores& scores);
SubjectiveScores subjective_scores_from_json(const nlohmann::json& j);

// Throws source-id-out-of-range unless 1 <= source_id <= source_count.
ObjectiveScores objective_scores(const GeneratedAnswer& answer, int source_id);

// (after - before) / (before + 1) * 100. Throws negative-input.
double improvement(double before, double after);

struct ImprovementRecord {
  std::string metric_name;
  double before = 0.0;
  double after = 0.0;
  double improvement_pct = 0.0;
};

nlohmann::json to_json(const ImprovementRecord& record);
ImprovementRecord improvement_record_from_json(const nlohmann::json& j);

// Metric names in report order: word_count, position_count, pawc_overall,
// the seven dimensions, then objective_overall and subjective_average.
const std::vector<std::string>& improvement_metric_names();

// Ten per-metric records followed by objective_overall (the pawc_overall
// improvement) and subjective_average (mean of the seven dimension
// improvements).
std::vector<ImprovementRecord> improvement_report(const VisibilityScores& before,
                                                  const VisibilityScores& after);

// "(sentence s) text" lines for every sentence citing the source.
std::string source_excerpts(const GeneratedAnswer& answer, const ContentSource& source);

struct JudgeOptions {
  int max_reasks = 1;
};

// Rubric-driven 0-5 judge over the seven subjective dimensions.
class Judge {
 public:
  Judge(ChatClient& client, const PromptLibrary& prompts, ModelSettings model,
        JudgeOptions options = {});

  [[nodiscard]] ChatRequest build_request(const GeneratedAnswer& answer, const ContentSource& source,
                                          SubjectiveDimension dimension,
                                          const std::string& query) const;

  int judge_dimension(const GeneratedAnswer& answer, const ContentSource& source,
                      SubjectiveDimension dimension, const std::string& query);

  // All seven dimensions. An empty answer scores zero everywhere without
  // any judge call.
  SubjectiveScores subjective_scores(const GeneratedAnswer& answer, const ContentSource& source,
                                     const std::string& query);

 private:
  ChatClient& client_;
  const PromptLibrary& prompts_;
  ModelSettings model_;
  JudgeOptions options_;
};

// Extracts k from the last "SCORE: k" line. Throws score-parse-error when
// absent and score-out-of-range when k is outside [0, 5].
int parse_judge_score(const std::string& text);

}  // namespace gseo
