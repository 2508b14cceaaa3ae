#pragma once

#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "gseo/corpus.hpp"
#include "gseo/llm_gateway.hpp"
#include "gseo/prompts.hpp"

namespace gseo {

inline constexpr int kMaxCitableSources = 9;

struct AnswerSentence {
  int order_index = 1;  // 1-based position in the answer
  std::string text;     // citation markers removed
  std::set<int> citation_ids;

  bool operator==(const AnswerSentence&) const = default;
};

struct GeneratedAnswer {
  std::string raw_text;
  std::vector<AnswerSentence> sentences;
  int source_count = 0;
  std::string query;

  bool operator==(const GeneratedAnswer&) const = default;
};

nlohmann::json to_json(const GeneratedAnswer& answer);
GeneratedAnswer generated_answer_from_json(const nlohmann::json& j);

// Citation grammar and segmentation:
//  - A marker is "[k]" with k a decimal integer; consecutive markers are
//    allowed. Every marker inside a sentence, or directly after its terminal
//    punctuation, cites source k for that sentence.
//  - A sentence ends at '.', '!' or '?' (runs such as "?!" included, plus any
//    closing quote or bracket) when followed by whitespace, a marker, or the
//    end of input. A blank line also ends a sentence.
//  - A '.' closing a guarded abbreviation ("e.g.", "i.e.", "Dr.", "U.S.", ...)
//    or one inside square brackets never ends a sentence.
//  - Marker removal also drops the whitespace in front of the marker.
//  - Fragments left empty after marker removal donate their citations to the
//    preceding sentence.
//
// Throws citation-out-of-range when k < 1 or k > source_count.
GeneratedAnswer parse_answer(const std::string& raw, int source_count);

// Renders sentences as "text [i][j]." with markers placed before the final
// punctuation mark. parse_answer inverts this for well-formed sentence texts.
std::string render_answer(const std::vector<AnswerSentence>& sentences);

// Answer-generation front end of the simulated generative search engine.
class GseSimulator {
 public:
  GseSimulator(ChatClient& client, const PromptLibrary& prompts, ModelSettings model);

  // Throws too-many-sources for more than nine sources.
  [[nodiscard]] ChatRequest build_answer_prompt(const std::string& query,
                                                const std::vector<ContentSource>& sources) const;

  GeneratedAnswer generate_response(const std::string& query,
                                    const std::vector<ContentSource>& sources);

 private:
  ChatClient& client_;
  const PromptLibrary& prompts_;
  ModelSettings model_;
};

}  // namespace gseo
