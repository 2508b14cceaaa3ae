#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "gseo/llm_gateway.hpp"
#include "gseo/prompts.hpp"

namespace gseo {

inline constexpr int kSourcesPerSample = 5;
inline constexpr int kQueryVariants = 4;
inline constexpr std::size_t kDefaultSampleCount = 100;
inline constexpr std::uint64_t kDefaultSeed = 42;

struct ContentSource {
  int source_id = 1;  // 1-based within its sample
  std::string title;
  std::string text;
  std::optional<std::string> origin_tag;

  bool operator==(const ContentSource&) const = default;
};

struct QueryGroup {
  std::string canonical_query;
  std::vector<std::string> variants;

  // Canonical query followed by the variants.
  [[nodiscard]] std::vector<std::string> all() const;

  bool operator==(const QueryGroup&) const = default;
};

struct BenchSample {
  std::string sample_id;
  QueryGroup query_group;
  std::vector<ContentSource> sources;
  int target_index = 1;

  [[nodiscard]] const ContentSource& target() const { return sources.at(target_index - 1); }

  bool operator==(const BenchSample&) const = default;
};

nlohmann::json to_json(const BenchSample& sample);

// Parses and validates one dataset record. `line` is only used in messages.
BenchSample sample_from_json(const nlohmann::json& j, std::size_t line);

// Throws invariant-violation naming the offending field.
void validate(const BenchSample& sample, std::size_t line = 0);

std::vector<BenchSample> load_dataset(const std::filesystem::path& path);
void save_dataset(const std::filesystem::path& path, const std::vector<BenchSample>& samples);

// xoshiro256** seeded through SplitMix64. Pinned so that subsets and target
// assignments are bit-identical on every platform.
class SeededRng {
 public:
  explicit SeededRng(std::uint64_t seed);

  std::uint64_t next();

  // Uniform integer in [0, bound) by rejection: draws below
  // (2^64 - bound) mod bound are discarded, the rest reduced mod bound.
  std::uint64_t below(std::uint64_t bound);

 private:
  std::uint64_t state_[4];
};

// Partial Fisher-Yates over positions 0..N-1: for i in [0, n) swap position i
// with i + below(N - i); returns the first n entries in draw order.
std::vector<BenchSample> sample_subset(const std::vector<BenchSample>& dataset, std::size_t n,
                                       std::uint64_t seed);

struct ExpansionOptions {
  int max_attempts = 3;
};

// Asks the model for `n_variants` related queries. Lines that repeat the
// seed query or an earlier variant are dropped; if too few remain the model
// is asked again with feedback, up to max_attempts requests in total.
QueryGroup expand_queries(ChatClient& client, const PromptLibrary& prompts,
                          const ModelSettings& model, const std::string& seed_query,
                          const std::vector<ContentSource>& sources, int n_variants = kQueryVariants,
                          ExpansionOptions options = {});

// Raw benchmark record: one query plus its five sources.
struct RawRecord {
  std::string sample_id;
  std::string query;
  std::vector<ContentSource> sources;
};

std::vector<RawRecord> load_raw_records(const std::filesystem::path& path);

// Builds BenchSamples from raw records: expands queries and draws each
// target index uniformly from one SeededRng(seed) stream in record order.
std::vector<BenchSample> extend_dataset(ChatClient& client, const PromptLibrary& prompts,
                                        const ModelSettings& model,
                                        const std::vector<RawRecord>& records, std::uint64_t seed);

}  // namespace gseo
