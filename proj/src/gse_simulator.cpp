#include "gseo/gse_simulator.hpp"

#include <array>
#include <cctype>

#include <fmt/format.h>

#include "gseo/error.hpp"
#include "gseo/text_util.hpp"

namespace gseo {

using nlohmann::json;

json to_json(const GeneratedAnswer& answer) {
  json sentences = json::array();
  for (const auto& s : answer.sentences) {
    sentences.push_back(json{{"index", s.order_index},
                             {"text", s.text},
                             {"citations", std::vector<int>(s.citation_ids.begin(),
                                                            s.citation_ids.end())}});
  }
  return json{{"query", answer.query},
              {"source_count", answer.source_count},
              {"raw_text", answer.raw_text},
              {"sentences", std::move(sentences)}};
}

GeneratedAnswer generated_answer_from_json(const json& j) {
  GeneratedAnswer a;
  a.query = j.value("query", "");
  a.source_count = j.at("source_count").get<int>();
  a.raw_text = j.value("raw_text", "");
  for (const auto& s : j.at("sentences")) {
    AnswerSentence sentence;
    sentence.order_index = s.at("index").get<int>();
    sentence.text = s.at("text").get<std::string>();
    for (int c : s.at("citations")) sentence.citation_ids.insert(c);
    a.sentences.push_back(std::move(sentence));
  }
  return a;
}

namespace {

constexpr std::array<std::string_view, 22> kAbbreviations = {
    "e.g.", "i.e.", "dr.",  "mr.",  "mrs.",   "ms.",  "prof.", "st.",   "vs.",  "u.s.", "u.k.",
    "no.",  "fig.", "jr.",  "sr.",  "approx.", "cf.", "al.",   "est.",  "dept.", "mt.", "a.m."};

bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }
bool is_digit(char c) { return std::isdigit(static_cast<unsigned char>(c)) != 0; }
bool is_terminal(char c) { return c == '.' || c == '!' || c == '?'; }
bool is_closer(char c) { return c == ')' || c == '"' || c == '\''; }

// Length of the "[digits]" marker starting at i, or 0.
std::size_t marker_length(std::string_view s, std::size_t i) {
  if (i >= s.size() || s[i] != '[') return 0;
  std::size_t j = i + 1;
  while (j < s.size() && is_digit(s[j])) ++j;
  if (j == i + 1 || j >= s.size() || s[j] != ']') return 0;
  return j + 1 - i;
}

bool ends_with_abbreviation(std::string_view s, std::size_t start, std::size_t dot) {
  std::size_t b = dot;
  while (b > start && !is_space(s[b - 1])) --b;
  std::string token = text::to_lower(s.substr(b, dot + 1 - b));
  while (!token.empty() && (token.front() == '(' || token.front() == '"' || token.front() == '\'')) {
    token.erase(token.begin());
  }
  for (auto abbr : kAbbreviations) {
    if (token == abbr) return true;
  }
  return false;
}

// True when position i starts a line holding only whitespace, i.e. the '\n'
// at i - 1 and the next '\n' enclose a blank line.
bool blank_line_at(std::string_view s, std::size_t newline) {
  std::size_t j = newline + 1;
  while (j < s.size() && s[j] != '\n' && is_space(s[j])) ++j;
  return j < s.size() && s[j] == '\n';
}

struct Segment {
  std::size_t begin;
  std::size_t end;
};

std::vector<Segment> segment(std::string_view raw) {
  std::vector<Segment> out;
  const std::size_t n = raw.size();
  std::size_t start = 0;
  std::size_t i = 0;
  int depth = 0;
  auto emit = [&](std::size_t end) {
    if (end > start) out.push_back({start, end});
    start = end;
  };
  while (i < n) {
    const char c = raw[i];
    if (c == '[') {
      if (std::size_t len = marker_length(raw, i)) {
        i += len;
        continue;
      }
      ++depth;
      ++i;
      continue;
    }
    if (c == ']') {
      if (depth > 0) --depth;
      ++i;
      continue;
    }
    if (depth > 0) {
      ++i;
      continue;
    }
    if (c == '\n' && blank_line_at(raw, i)) {
      emit(i);
      while (i < n && is_space(raw[i])) ++i;
      start = i;
      continue;
    }
    if (is_terminal(c)) {
      std::size_t j = i;
      while (j < n && is_terminal(raw[j])) ++j;
      while (j < n && is_closer(raw[j])) ++j;
      if (c == '.' && j == i + 1 && ends_with_abbreviation(raw, start, i)) {
        i = j;
        continue;
      }
      if (j == n || is_space(raw[j]) || marker_length(raw, j)) {
        std::size_t k = j;
        for (;;) {
          std::size_t p = k;
          while (p < n && is_space(raw[p]) && raw[p] != '\n') ++p;
          std::size_t len = marker_length(raw, p);
          if (!len) break;
          k = p + len;
        }
        emit(k);
        i = k;
        continue;
      }
      i = j;
      continue;
    }
    ++i;
  }
  emit(n);
  return out;
}

}  // namespace

GeneratedAnswer parse_answer(const std::string& raw, int source_count) {
  if (source_count < 1) throw Error("invalid-input", "source_count must be at least 1");
  GeneratedAnswer answer;
  answer.raw_text = raw;
  answer.source_count = source_count;

  const std::string_view view(raw);
  for (const Segment& seg : segment(view)) {
    const std::string_view piece = view.substr(seg.begin, seg.end - seg.begin);
    const int sentence_index = static_cast<int>(answer.sentences.size()) + 1;
    std::set<int> citations;
    std::string body;
    std::size_t i = 0;
    while (i < piece.size()) {
      if (std::size_t len = marker_length(piece, i)) {
        const std::string_view digits = piece.substr(i + 1, len - 2);
        // More than nine digits cannot address a source.
        const long long k = digits.size() > 9 ? -1 : std::stoll(std::string(digits));
        if (k < 1 || k > source_count) {
          throw Error("citation-out-of-range",
                      fmt::format("citation [{}] in sentence {} is outside 1..{}", digits,
                                  sentence_index, source_count));
        }
        citations.insert(static_cast<int>(k));
        while (!body.empty() && is_space(body.back())) body.pop_back();
        i += len;
        continue;
      }
      body.push_back(piece[i]);
      ++i;
    }
    std::string sentence_text = text::trim(body);
    if (sentence_text.empty()) {
      if (!answer.sentences.empty()) {
        answer.sentences.back().citation_ids.insert(citations.begin(), citations.end());
      }
      continue;
    }
    answer.sentences.push_back(AnswerSentence{sentence_index, std::move(sentence_text),
                                              std::move(citations)});
  }
  return answer;
}

std::string render_answer(const std::vector<AnswerSentence>& sentences) {
  std::string out;
  for (const auto& s : sentences) {
    std::string markers;
    for (int c : s.citation_ids) markers += fmt::format("[{}]", c);
    std::size_t tail = s.text.size();
    while (tail > 0 && is_closer(s.text[tail - 1])) --tail;
    std::size_t punct = tail;
    while (punct > 0 && is_terminal(s.text[punct - 1])) --punct;
    if (punct == tail) punct = s.text.size();  // no terminal punctuation
    if (!out.empty()) out.push_back(' ');
    out += s.text.substr(0, punct);
    if (!markers.empty()) out += " " + markers;
    out += s.text.substr(punct);
  }
  return out;
}

// ---------------------------------------------------------------------------

GseSimulator::GseSimulator(ChatClient& client, const PromptLibrary& prompts, ModelSettings model)
    : client_(client), prompts_(prompts), model_(std::move(model)) {}

ChatRequest GseSimulator::build_answer_prompt(const std::string& query,
                                              const std::vector<ContentSource>& sources) const {
  if (sources.empty() || sources.size() > static_cast<std::size_t>(kMaxCitableSources)) {
    throw Error("too-many-sources",
                fmt::format("answer prompts take 1..{} sources, got {}", kMaxCitableSources,
                            sources.size()));
  }
  std::string block;
  for (std::size_t i = 0; i < sources.size(); ++i) {
    if (i) block += "\n\n";
    block += fmt::format("[{}]", i + 1);
    if (!sources[i].title.empty()) block += " " + sources[i].title;
    block += "\n" + text::trim(sources[i].text);
  }
  return model_.request(prompts_.prompt("system_generator"),
                        text::render(prompts_.prompt("answer"), {{"sources", block}, {"query", query}}));
}

GeneratedAnswer GseSimulator::generate_response(const std::string& query,
                                                const std::vector<ContentSource>& sources) {
  const ChatResponse response = client_.complete(build_answer_prompt(query, sources));
  GeneratedAnswer answer = parse_answer(response.text, static_cast<int>(sources.size()));
  answer.query = query;
  return answer;
}

}  // namespace gseo
