#include <fstream>
#include <numeric>
#include <sstream>

#include <unistd.h>

#include <fmt/format.h>
#include <gtest/gtest.h>

#include "fixture_inputs.hpp"
#include "gseo/error.hpp"
#include "gseo/experiment_runner.hpp"
#include "gseo/preference_analysis.hpp"
#include "synthetic_backend.hpp"

namespace gseo {
namespace {

namespace fs = std::filesystem;

const std::string kKpr = "Knowledge Producers and Researchers";
const std::string kCea = "Civic Everyday Actors";

OptimizationTrace trace_with(const std::vector<std::string>& names) {
  OptimizationTrace t;
  ReflectionRecord r;
  for (const auto& n : names) r.roles.push_back({n, ""});
  t.reflection = r;
  return t;
}

OptimizationTrace trace_with_steps(const std::vector<OptimizationStep>& steps) {
  OptimizationTrace t;
  t.steps = steps;
  return t;
}

void expect_fractions_sum_to_one(const DistributionReport& r) {
  if (r.total == 0) return;
  double sum = 0.0;
  long count = 0;
  for (const auto& c : r.categories) {
    EXPECT_GE(r.fractions.at(c), 0.0);
    EXPECT_LE(r.fractions.at(c), 1.0);
    sum += r.fractions.at(c);
    count += r.counts.at(c);
  }
  EXPECT_NEAR(sum, 1.0, 1e-9);
  EXPECT_EQ(count, r.total);
}

TEST(Taxonomy, DefaultsInOrderWithFallbackLast) {
  const PromptLibrary prompts = PromptLibrary::builtin();
  const Taxonomy roles = default_role_taxonomy(prompts);
  EXPECT_EQ(roles.names(), (std::vector<std::string>{kKpr, kCea, "Economic Activity Participants",
                                                     "Health and Care Stakeholders",
                                                     "Cultural and Creative Professionals", "Uncategorized"}));
  const StepTaxonomies steps = default_step_taxonomies(prompts);
  EXPECT_EQ(steps.objectives.names(),
            (std::vector<std::string>{"content completeness", "factual credibility", "clarity", "other"}));
  EXPECT_EQ(steps.actions.names(),
            (std::vector<std::string>{"content enrichment and expansion", "content restructuring", "elaboration",
                                      "redundancy reduction", "other"}));
}

TEST(Taxonomy, ParseErrors) {
  auto code = [](const std::string& text, const std::string& section) {
    try {
      parse_taxonomy(text, section, "other");
    } catch (const Error& e) {
      return e.code();
    }
    return std::string();
  };
  EXPECT_EQ(code("A | x\nA | y\n", ""), "taxonomy-error");
  EXPECT_EQ(code(" | x\n", ""), "taxonomy-error");
  EXPECT_EQ(code("# only comments\n", ""), "taxonomy-error");
  EXPECT_EQ(code("[a]\nX | y\n", "b"), "taxonomy-error");
  EXPECT_EQ(code("[a]\nX | y\n", "a"), "");
  const Taxonomy t = parse_taxonomy("Plain\nWith | Key Word, other\n", "", "rest");
  EXPECT_TRUE(t.categories[0].keywords.empty());
  EXPECT_EQ(t.categories[1].keywords, (std::vector<std::string>{"key word", "other"}));
  EXPECT_TRUE(t.contains("rest"));
}

TEST(LabelRole, OfflineExamples) {
  const PromptLibrary prompts = PromptLibrary::builtin();
  const Taxonomy roles = default_role_taxonomy(prompts);
  Labeler labeler(prompts);
  EXPECT_EQ(labeler.mode(), LabelMode::offline);
  EXPECT_EQ(labeler.label_role({"Educator", ""}, roles), kKpr);
  EXPECT_EQ(labeler.label_role({"Policy Maker", ""}, roles), kKpr);
  EXPECT_EQ(labeler.label_role({"Home Cook", ""}, roles), kCea);
  EXPECT_EQ(labeler.label_role({"DIY Hobbyist", ""}, roles), kCea);
  EXPECT_EQ(labeler.label_role({"Quux Enthusiast", ""}, roles), "Uncategorized");
  EXPECT_EQ(labeler.label_role({"Quux Enthusiast", "Runs a small business"}, roles),
            "Economic Activity Participants");
  EXPECT_EQ(keyword_label("cookware", roles), "Uncategorized") << "keywords match whole words only";
}

TEST(RoleDistribution, ThreeTraceTally) {
  const PromptLibrary prompts = PromptLibrary::builtin();
  Labeler labeler(prompts);
  const auto r = role_distribution(
      {trace_with({"Educator", "Home Cook"}), trace_with({"Educator"}), trace_with({"Policy Maker"})},
      default_role_taxonomy(prompts), labeler);
  EXPECT_EQ(r.total, 4);
  EXPECT_EQ(r.counts.at(kKpr), 3);
  EXPECT_EQ(r.counts.at(kCea), 1);
  EXPECT_EQ(r.counts.at("Uncategorized"), 0);
  EXPECT_DOUBLE_EQ(r.fractions.at(kKpr), 0.75);
  expect_fractions_sum_to_one(r);
  try {
    role_distribution({}, default_role_taxonomy(prompts), labeler);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), "empty-input");
  }
}

TEST(StepLabels, OfflineExamples) {
  const PromptLibrary prompts = PromptLibrary::builtin();
  const StepTaxonomies tax = default_step_taxonomies(prompts);
  Labeler labeler(prompts);
  EXPECT_EQ(labeler.parse_step_labels({"improve factual credibility by adding citations", "add citations", "x"}, tax),
            std::make_pair(std::string("factual credibility"), std::string("content enrichment and expansion")));
  EXPECT_EQ(labeler.parse_step_labels({"zzz", "qqq", "x"}, tax), std::make_pair(std::string("other"), std::string("other")));
  EXPECT_THROW(labeler.parse_step_labels({"clarity", "", "x"}, tax), Error);
  EXPECT_THROW(labeler.parse_step_labels({" ", "add", "x"}, tax), Error);
}

TEST(StepDistribution, ContentQualityFraction) {
  const PromptLibrary prompts = PromptLibrary::builtin();
  Labeler labeler(prompts);
  const auto [objectives, actions] = step_distribution(
      {trace_with_steps({{"clarity", "restructure", "i"}, {"complete coverage", "add examples", "i"}}),
       trace_with_steps({{"credibility", "add data", "i"}, {"clear wording", "trim", "i"}, {"tone", "qqq", "i"}})},
      default_step_taxonomies(prompts), labeler);
  EXPECT_EQ(objectives.total, 5);
  EXPECT_EQ(actions.total, 5);
  EXPECT_DOUBLE_EQ(content_quality_fraction(objectives), 0.8);
  EXPECT_EQ(actions.counts.at("content enrichment and expansion"), 2);
  EXPECT_EQ(actions.counts.at("other"), 1);
  expect_fractions_sum_to_one(objectives);
  expect_fractions_sum_to_one(actions);
  EXPECT_THROW(step_distribution({}, default_step_taxonomies(prompts), labeler), Error);
}

class Replies final : public ChatClient {
 public:
  explicit Replies(std::vector<std::string> r) : replies_(std::move(r)) {}
  ChatResponse complete(const ChatRequest& request) override {
    requests.push_back(request);
    return ChatResponse{replies_.at((requests.size() - 1) % replies_.size()), request.model_id, {}, false};
  }
  std::vector<ChatRequest> requests;

 private:
  std::vector<std::string> replies_;
};

TEST(LlmLabeling, NormalizesAndReasks) {
  const PromptLibrary prompts = PromptLibrary::builtin();
  const Taxonomy roles = default_role_taxonomy(prompts);
  Replies normalized({"**\"knowledge producers and researchers.\"**"});
  Labeler a(prompts, normalized, judge_settings("j"));
  EXPECT_EQ(a.mode(), LabelMode::llm);
  EXPECT_EQ(a.label_role({"Educator", "Teaches"}, roles), kKpr);
  ASSERT_EQ(normalized.requests.size(), 1u);
  EXPECT_NE(normalized.requests[0].messages.back().text.find("Educator (Teaches)"), std::string::npos);

  Replies second({"Teachers", "Civic Everyday Actors"});
  Labeler b(prompts, second, judge_settings("j"));
  EXPECT_EQ(b.label_role({"Home Cook", ""}, roles), kCea);
  EXPECT_EQ(second.requests.size(), 2u);

  Replies never({"Teachers", "Still wrong"});
  Labeler c(prompts, never, judge_settings("j"));
  try {
    c.label_role({"Home Cook", ""}, roles);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), "label-parse-error");
  }
}

TEST(LlmLabeling, FailuresAreCounted) {
  const PromptLibrary prompts = PromptLibrary::builtin();
  Replies client({"nope", "nope", "Civic Everyday Actors"});
  Labeler labeler(prompts, client, judge_settings("j"));
  const auto r = role_distribution({trace_with({"A", "B"})}, default_role_taxonomy(prompts), labeler);
  EXPECT_EQ(r.labeling_failures, 1);
  EXPECT_EQ(r.total, 1);
  EXPECT_EQ(r.counts.at(kCea), 1);
}

TEST(LabelModes, SameReportShape) {
  const PromptLibrary prompts = PromptLibrary::builtin();
  const std::vector<OptimizationTrace> traces = {
      trace_with({"Educator", "Home Cook", "Quux Enthusiast"}), trace_with({"Patient", "Graphic Designer"})};
  Labeler offline(prompts);
  Gateway gw(std::make_unique<testing::SyntheticBackend>());
  Labeler llm(prompts, gw, judge_settings("j"));
  const auto a = role_distribution(traces, default_role_taxonomy(prompts), offline);
  const auto b = role_distribution(traces, default_role_taxonomy(prompts), llm);
  EXPECT_EQ(a.categories, b.categories);
  EXPECT_EQ(a.total, b.total);
  expect_fractions_sum_to_one(a);
  expect_fractions_sum_to_one(b);
}

TEST(Distribution, CsvAndSvg) {
  const auto r = make_distribution({"x", "y", "other"}, {"x", "x", "other"});
  EXPECT_EQ(distribution_csv(r), "category,count,fraction\n\"x\",2,0.6666666666666666\n\"y\",0,0\n\"other\",1,0.3333333333333333\n");
  const std::string svg = distribution_svg(r, "Roles & more");
  EXPECT_EQ(svg.rfind("<svg", 0), 0u);
  EXPECT_NE(svg.find("Roles &amp; more"), std::string::npos);
  EXPECT_EQ(svg, distribution_svg(r, "Roles & more"));
  EXPECT_THROW(make_distribution({"x"}, {"z"}), Error);
  const auto empty = make_distribution({"x", "other"}, {});
  EXPECT_EQ(empty.fractions.at("x"), 0.0);
  EXPECT_THROW(content_quality_fraction(empty), Error);
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

TEST(ToyRun, DistributionsMatchFrozenGoldens) {
  const fs::path dir = fs::temp_directory_path() / fmt::format("gseo-pref-{}", ::getpid());
  fs::remove_all(dir);
  const PromptLibrary prompts = PromptLibrary::builtin();
  Gateway gw(testing::fixture_backend());
  ExperimentRunner runner(testing::toy_experiment_config(dir), gw, prompts);
  runner.run();
  for (const auto& [name, csv] : testing::toy_distributions(runner.run_dir())) {
    EXPECT_EQ(csv, slurp(testing::repo_root() / "tests" / "golden" / fmt::format("toy_{}.csv", name))) << name;
  }
  fs::remove_all(dir);
}

}  // namespace
}  // namespace gseo
