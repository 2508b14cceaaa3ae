#include <fstream>
#include <random>
#include <sstream>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "fixture_inputs.hpp"
#include "gseo/error.hpp"
#include "gseo/experiment_runner.hpp"
#include "gseo/gse_simulator.hpp"
#include "random_answers.hpp"

namespace gseo {
namespace {

using nlohmann::json;

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

class CitationCases : public ::testing::TestWithParam<json> {};

TEST_P(CitationCases, ParsesToExpectedStructure) {
  const json& c = GetParam();
  SCOPED_TRACE(c.at("name").get<std::string>());
  if (c.contains("error")) {
    try {
      parse_answer(c.at("raw"), c.at("source_count"));
      FAIL() << "expected " << c.at("error");
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), c.at("error").get<std::string>());
    }
    return;
  }
  const GeneratedAnswer a = parse_answer(c.at("raw"), c.at("source_count"));
  const auto& want = c.at("sentences");
  ASSERT_EQ(a.sentences.size(), want.size());
  for (std::size_t i = 0; i < want.size(); ++i) {
    EXPECT_EQ(a.sentences[i].order_index, static_cast<int>(i) + 1);
    EXPECT_EQ(a.sentences[i].text, want[i].at("text").get<std::string>());
    EXPECT_EQ(a.sentences[i].citation_ids, want[i].at("citations").get<std::set<int>>());
  }
}

json load_cases() {
  std::ifstream in(testing::repo_root() / "tests" / "data" / "citation_cases.json");
  return json::parse(in);
}

std::string case_name(const ::testing::TestParamInfo<json>& info) {
  std::string name;
  for (char ch : info.param.at("name").get<std::string>()) {
    name.push_back(std::isalnum(static_cast<unsigned char>(ch)) ? ch : '_');
  }
  return std::to_string(info.index) + "_" + name;
}

INSTANTIATE_TEST_SUITE_P(Handcrafted, CitationCases, ::testing::ValuesIn(load_cases().get<std::vector<json>>()),
                         case_name);

TEST(CitationParser, AtLeastFiftyCases) { EXPECT_GE(load_cases().size(), 50u); }

TEST(CitationParser, RenderParseRoundTrip) {
  std::mt19937_64 rng(1234);
  for (int trial = 0; trial < 1000; ++trial) {
    const GeneratedAnswer expected = testing::to_answer(testing::random_sentences(rng, 6, 9, 12));
    const std::string rendered = render_answer(expected.sentences);
    const GeneratedAnswer parsed = parse_answer(rendered, expected.source_count);
    ASSERT_EQ(parsed.sentences, expected.sentences) << rendered;
  }
}

TEST(CitationParser, RenderPlacesMarkersBeforePunctuation) {
  const GeneratedAnswer a = parse_answer("Solar cuts bills [1]. Batteries store surplus [2][4].", 5);
  EXPECT_EQ(render_answer(a.sentences), "Solar cuts bills [1]. Batteries store surplus [2][4].");
}

TEST(CitationParser, InvalidSourceCount) { EXPECT_THROW(parse_answer("x", 0), Error); }

TEST(CitationParser, JsonRoundTrip) {
  GeneratedAnswer a = parse_answer("One [1]. Two [1][2].", 2);
  a.query = "q";
  EXPECT_EQ(generated_answer_from_json(to_json(a)), a);
}

TEST(Simulator, PromptMatchesGolden) {
  EXPECT_EQ(testing::answer_prompt_s001(), slurp(testing::repo_root() / "tests" / "golden" / "answer_prompt_s-001.txt"));
}

class Echo final : public ChatClient {
 public:
  explicit Echo(std::string reply) : reply_(std::move(reply)) {}
  ChatResponse complete(const ChatRequest& request) override {
    last = request;
    return ChatResponse{reply_, request.model_id, {}, false};
  }
  ChatRequest last;

 private:
  std::string reply_;
};

TEST(Simulator, GeneratesParsedAnswer) {
  const PromptLibrary prompts = PromptLibrary::builtin();
  Echo client("Starters need flour [1]. Feed daily [2][1].");
  GseSimulator sim(client, prompts, generator_settings("gen"));
  const std::vector<ContentSource> sources = {{1, "A", "alpha", std::nullopt}, {2, "B", "beta", std::nullopt}};
  const GeneratedAnswer a = sim.generate_response("how to feed", sources);
  EXPECT_EQ(a.query, "how to feed");
  EXPECT_EQ(a.source_count, 2);
  ASSERT_EQ(a.sentences.size(), 2u);
  EXPECT_EQ(a.sentences[1].citation_ids, (std::set<int>{1, 2}));
  EXPECT_EQ(client.last.model_id, "gen");
  EXPECT_EQ(client.last.temperature, 0.7);
  EXPECT_NE(client.last.messages.back().text.find("[2] B\nbeta"), std::string::npos);
}

TEST(Simulator, RejectsOutOfRangeCitationFromModel) {
  const PromptLibrary prompts = PromptLibrary::builtin();
  Echo client("Claim [3].");
  GseSimulator sim(client, prompts, generator_settings("gen"));
  try {
    sim.generate_response("q", {{1, "A", "alpha", std::nullopt}});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), "citation-out-of-range");
  }
}

TEST(Simulator, SourceLimits) {
  const PromptLibrary prompts = PromptLibrary::builtin();
  Echo client("");
  GseSimulator sim(client, prompts, generator_settings("gen"));
  std::vector<ContentSource> ten;
  for (int i = 1; i <= 10; ++i) ten.push_back({i, "t", "x", std::nullopt});
  try {
    sim.build_answer_prompt("q", ten);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), "too-many-sources");
  }
  ten.pop_back();
  EXPECT_NO_THROW(sim.build_answer_prompt("q", ten));
  EXPECT_THROW(sim.build_answer_prompt("q", {}), Error);
  EXPECT_TRUE(sim.generate_response("q", ten).sentences.empty());
}

}  // namespace
}  // namespace gseo
