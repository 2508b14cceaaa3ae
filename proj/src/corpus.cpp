#include "gseo/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <set>

#include <fmt/format.h>

#include "gseo/error.hpp"
#include "gseo/text_util.hpp"

namespace gseo {

namespace fs = std::filesystem;
using nlohmann::json;

std::vector<std::string> QueryGroup::all() const {
  std::vector<std::string> out;
  out.reserve(variants.size() + 1);
  out.push_back(canonical_query);
  out.insert(out.end(), variants.begin(), variants.end());
  return out;
}

json to_json(const BenchSample& sample) {
  json sources = json::array();
  for (const auto& s : sample.sources) {
    json js{{"id", s.source_id}, {"title", s.title}, {"text", s.text}};
    if (s.origin_tag) js["origin"] = *s.origin_tag;
    sources.push_back(std::move(js));
  }
  return json{{"sample_id", sample.sample_id},
              {"queries", sample.query_group.all()},
              {"sources", std::move(sources)},
              {"target", sample.target_index}};
}

namespace {

[[noreturn]] void schema_error(std::size_t line, const std::string& field, const std::string& reason) {
  throw Error("schema-error", fmt::format("line {}: field '{}': {}", line, field, reason));
}

[[noreturn]] void invariant_error(std::size_t line, const std::string& field,
                                  const std::string& reason) {
  throw Error("invariant-violation", fmt::format("line {}: {}: {}", line, field, reason));
}

const json& require(const json& j, const char* field, std::size_t line) {
  if (!j.is_object()) schema_error(line, "<record>", "expected a JSON object");
  auto it = j.find(field);
  if (it == j.end()) schema_error(line, field, "missing");
  return *it;
}

std::string require_string(const json& j, const char* field, std::size_t line) {
  const json& v = require(j, field, line);
  if (!v.is_string()) schema_error(line, field, "expected a string");
  return v.get<std::string>();
}

ContentSource source_from_json(const json& j, std::size_t line, int fallback_id) {
  ContentSource s;
  if (!j.is_object()) schema_error(line, "sources", "entries must be objects");
  if (j.contains("id")) {
    if (!j["id"].is_number_integer()) schema_error(line, "sources.id", "expected an integer");
    s.source_id = j["id"].get<int>();
  } else {
    s.source_id = fallback_id;
  }
  s.title = j.contains("title") ? require_string(j, "title", line) : std::string();
  s.text = require_string(j, "text", line);
  if (j.contains("origin") && !j["origin"].is_null()) {
    if (!j["origin"].is_string()) schema_error(line, "sources.origin", "expected a string");
    s.origin_tag = j["origin"].get<std::string>();
  }
  return s;
}

}  // namespace

void validate(const BenchSample& sample, std::size_t line) {
  if (sample.sample_id.empty()) invariant_error(line, "sample_id", "must not be empty");
  const auto& qg = sample.query_group;
  if (text::trim(qg.canonical_query).empty()) {
    invariant_error(line, "queries", "canonical query must not be empty");
  }
  if (qg.variants.size() != static_cast<std::size_t>(kQueryVariants)) {
    invariant_error(line, "variants",
                    fmt::format("expected {} query variants, found {}", kQueryVariants,
                                qg.variants.size()));
  }
  std::set<std::string> seen{text::to_lower(text::trim(qg.canonical_query))};
  for (const auto& v : qg.variants) {
    if (text::trim(v).empty()) invariant_error(line, "variants", "variant must not be empty");
    if (!seen.insert(text::to_lower(text::trim(v))).second) {
      invariant_error(line, "variants", fmt::format("duplicate query variant '{}'", v));
    }
  }
  if (sample.sources.size() != static_cast<std::size_t>(kSourcesPerSample)) {
    invariant_error(line, "sources",
                    fmt::format("expected {} sources, found {}", kSourcesPerSample,
                                sample.sources.size()));
  }
  for (std::size_t i = 0; i < sample.sources.size(); ++i) {
    const auto& s = sample.sources[i];
    if (s.source_id != static_cast<int>(i) + 1) {
      invariant_error(line, "sources",
                      fmt::format("source ids must run 1..{} in order; position {} has id {}",
                                  kSourcesPerSample, i + 1, s.source_id));
    }
    if (text::trim(s.text).empty()) {
      invariant_error(line, "sources", fmt::format("source {} has empty text", s.source_id));
    }
  }
  if (sample.target_index < 1 || sample.target_index > static_cast<int>(sample.sources.size())) {
    invariant_error(line, "target",
                    fmt::format("target {} does not address a source", sample.target_index));
  }
}

BenchSample sample_from_json(const json& j, std::size_t line) {
  BenchSample sample;
  sample.sample_id = require_string(j, "sample_id", line);

  const json& queries = require(j, "queries", line);
  if (!queries.is_array() || queries.empty()) {
    schema_error(line, "queries", "expected a non-empty array of strings");
  }
  for (std::size_t i = 0; i < queries.size(); ++i) {
    if (!queries[i].is_string()) schema_error(line, "queries", "expected strings");
    if (i == 0) {
      sample.query_group.canonical_query = queries[i].get<std::string>();
    } else {
      sample.query_group.variants.push_back(queries[i].get<std::string>());
    }
  }

  const json& sources = require(j, "sources", line);
  if (!sources.is_array()) schema_error(line, "sources", "expected an array");
  int position = 1;
  for (const auto& s : sources) sample.sources.push_back(source_from_json(s, line, position++));

  const json& target = require(j, "target", line);
  if (!target.is_number_integer()) schema_error(line, "target", "expected an integer");
  sample.target_index = target.get<int>();

  validate(sample, line);
  return sample;
}

std::vector<BenchSample> load_dataset(const fs::path& path) {
  if (!fs::exists(path)) throw Error("dataset-not-found", path.string() + " does not exist");
  std::ifstream in(path);
  if (!in) throw Error("io-error", "cannot open dataset " + path.string());
  std::vector<BenchSample> samples;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (text::trim(line).empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw Error("schema-error", fmt::format("line {}: invalid JSON: {}", line_no, e.what()));
    }
    samples.push_back(sample_from_json(j, line_no));
  }
  return samples;
}

void save_dataset(const fs::path& path, const std::vector<BenchSample>& samples) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("io-error", "cannot write dataset " + path.string());
  for (const auto& s : samples) out << to_json(s).dump() << '\n';
}

// ---------------------------------------------------------------------------

namespace {

std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

constexpr std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

}  // namespace

SeededRng::SeededRng(std::uint64_t seed) {
  std::uint64_t sm = seed;
  for (auto& s : state_) s = splitmix64(sm);
}

std::uint64_t SeededRng::next() {
  const std::uint64_t result = rotl(state_[1] * 5, 7) * 9;
  const std::uint64_t t = state_[1] << 17;
  state_[2] ^= state_[0];
  state_[3] ^= state_[1];
  state_[1] ^= state_[2];
  state_[0] ^= state_[3];
  state_[2] ^= t;
  state_[3] = rotl(state_[3], 45);
  return result;
}

std::uint64_t SeededRng::below(std::uint64_t bound) {
  if (bound == 0) throw Error("invalid-input", "bound must be positive");
  const std::uint64_t threshold = (0 - bound) % bound;
  for (;;) {
    const std::uint64_t x = next();
    if (x >= threshold) return x % bound;
  }
}

std::vector<BenchSample> sample_subset(const std::vector<BenchSample>& dataset, std::size_t n,
                                       std::uint64_t seed) {
  if (n > dataset.size()) {
    throw Error("n-too-large",
                fmt::format("requested {} samples from a dataset of {}", n, dataset.size()));
  }
  std::vector<std::size_t> order(dataset.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  SeededRng rng(seed);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng.below(order.size() - i));
    std::swap(order[i], order[j]);
  }
  std::vector<BenchSample> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.push_back(dataset[order[i]]);
  return out;
}

// ---------------------------------------------------------------------------

namespace {

std::string unquote(std::string s) {
  if (s.size() >= 2 && ((s.front() == '"' && s.back() == '"') ||
                        (s.front() == '\'' && s.back() == '\''))) {
    s = s.substr(1, s.size() - 2);
  }
  return text::trim(s);
}

}  // namespace

QueryGroup expand_queries(ChatClient& client, const PromptLibrary& prompts,
                          const ModelSettings& model, const std::string& seed_query,
                          const std::vector<ContentSource>& sources, int n_variants,
                          ExpansionOptions options) {
  if (n_variants < 1) throw Error("invalid-input", "n_variants must be at least 1");
  if (text::trim(seed_query).empty()) throw Error("invalid-input", "seed query is empty");

  std::string titles;
  for (const auto& s : sources) {
    titles += "- " + (s.title.empty() ? text::truncate_words(s.text, 12) : s.title) + "\n";
  }
  ChatRequest request = model.request(
      prompts.prompt("system_optimizer"),
      text::render(prompts.prompt("expand_queries"),
                   {{"query", seed_query}, {"n", std::to_string(n_variants)}, {"titles", titles}}));

  const std::string seed_key = text::to_lower(text::trim(seed_query));
  for (int attempt = 1; attempt <= std::max(1, options.max_attempts); ++attempt) {
    const ChatResponse response = client.complete(request);
    std::vector<std::string> variants;
    std::set<std::string> seen{seed_key};
    bool dropped = false;
    for (const auto& line : text::split_lines(response.text)) {
      std::string v = unquote(text::strip_list_marker(line));
      if (v.empty()) continue;
      if (!seen.insert(text::to_lower(v)).second) {
        dropped = true;
        continue;
      }
      variants.push_back(std::move(v));
    }
    if (static_cast<int>(variants.size()) >= n_variants) {
      variants.resize(n_variants);
      return QueryGroup{seed_query, std::move(variants)};
    }
    request.messages.push_back({Role::assistant, response.text});
    request.messages.push_back(
        {Role::user,
         fmt::format("Only {} of those lines were new, distinct queries{}. Return exactly {} "
                     "queries, one per line, each different from the original query and from "
                     "each other.",
                     variants.size(), dropped ? " (some repeated the original or each other)" : "",
                     n_variants)});
  }
  throw Error("duplicate-variants-after-retries",
              fmt::format("could not obtain {} distinct variants for '{}' after {} attempts",
                          n_variants, seed_query, options.max_attempts));
}

std::vector<RawRecord> load_raw_records(const fs::path& path) {
  if (!fs::exists(path)) throw Error("dataset-not-found", path.string() + " does not exist");
  std::ifstream in(path);
  if (!in) throw Error("io-error", "cannot open " + path.string());
  std::vector<RawRecord> records;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (text::trim(line).empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw Error("schema-error", fmt::format("line {}: invalid JSON: {}", line_no, e.what()));
    }
    RawRecord r;
    r.sample_id = j.contains("sample_id") ? require_string(j, "sample_id", line_no)
                                          : fmt::format("s-{:03}", records.size() + 1);
    r.query = require_string(j, "query", line_no);
    const json& sources = require(j, "sources", line_no);
    if (!sources.is_array()) schema_error(line_no, "sources", "expected an array");
    int position = 1;
    for (const auto& s : sources) {
      ContentSource src = source_from_json(s, line_no, position);
      src.source_id = position++;
      r.sources.push_back(std::move(src));
    }
    if (r.sources.size() != static_cast<std::size_t>(kSourcesPerSample)) {
      invariant_error(line_no, "sources",
                      fmt::format("expected {} sources, found {}", kSourcesPerSample,
                                  r.sources.size()));
    }
    records.push_back(std::move(r));
  }
  return records;
}

std::vector<BenchSample> extend_dataset(ChatClient& client, const PromptLibrary& prompts,
                                        const ModelSettings& model,
                                        const std::vector<RawRecord>& records, std::uint64_t seed) {
  SeededRng rng(seed);
  std::vector<BenchSample> out;
  out.reserve(records.size());
  for (const auto& r : records) {
    BenchSample s;
    s.sample_id = r.sample_id;
    s.sources = r.sources;
    s.target_index = 1 + static_cast<int>(rng.below(r.sources.size()));
    try {
      s.query_group = expand_queries(client, prompts, model, r.query, r.sources);
    } catch (const Error& e) {
      throw e.with_context("sample " + r.sample_id);
    }
    validate(s);
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace gseo
