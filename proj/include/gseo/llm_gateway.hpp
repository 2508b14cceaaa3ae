#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <semaphore>
#include <string>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

namespace gseo {

enum class Role { system, user, assistant };

[[nodiscard]] std::string_view to_string(Role role);
[[nodiscard]] Role role_from_string(std::string_view name);

struct Message {
  Role role = Role::user;
  std::string text;

  bool operator==(const Message&) const = default;
};

struct ChatRequest {
  std::string model_id;
  std::vector<Message> messages;
  double temperature = 0.7;
  double top_p = 0.9;
  int max_tokens = 1024;
  std::optional<std::int64_t> seed_hint;

  // Throws Error("invalid-request") when an invariant does not hold.
  void validate() const;
};

struct TokenUsage {
  std::int64_t prompt_tokens = 0;
  std::int64_t completion_tokens = 0;
};

struct ChatResponse {
  std::string text;
  std::string model_id;
  TokenUsage usage;
  bool cache_hit = false;
};

nlohmann::json to_json(const ChatResponse& response);
ChatResponse chat_response_from_json(const nlohmann::json& j);

// Canonical serialization hashed by request_digest: sorted keys, compact
// separators, seed_hint excluded.
[[nodiscard]] std::string canonical_request(const ChatRequest& request);

// Lower-case hex SHA-256 of canonical_request(request).
[[nodiscard]] std::string request_digest(const ChatRequest& request);

[[nodiscard]] std::string sha256_hex(std::string_view data);

// Generation settings for one model role (generator, optimizer, judge).
struct ModelSettings {
  std::string model_id;
  double temperature = 0.7;
  double top_p = 0.9;
  int max_tokens = 1024;

  [[nodiscard]] ChatRequest request(std::string system_text, std::string user_text) const;
};

// Anything that can answer a chat request. The gateway is the production
// implementation; tests substitute instrumented fakes.
class ChatClient {
 public:
  virtual ~ChatClient() = default;
  virtual ChatResponse complete(const ChatRequest& request) = 0;
};

// Transport behind the gateway. Backends throw TransientError for failures
// worth retrying and Error for everything else.
class Backend {
 public:
  virtual ~Backend() = default;
  virtual ChatResponse send(const ChatRequest& request) = 0;
};

// Fixture-driven backend. Never touches the network.
//
// Fixtures are JSONL records {"digest": "<hex>", "response": "<text>"}; a
// directory path loads every *.jsonl file in it (sorted by name, later
// records override earlier ones). In strict mode an unknown digest raises
// scripted-miss; otherwise the fallback backend, if any, answers.
class ScriptedBackend final : public Backend {
 public:
  explicit ScriptedBackend(const std::filesystem::path& fixtures, bool strict = true);
  ScriptedBackend(std::unordered_map<std::string, std::string> fixtures, bool strict = true);

  void set_fallback(std::unique_ptr<Backend> fallback) { fallback_ = std::move(fallback); }

  ChatResponse send(const ChatRequest& request) override;

  [[nodiscard]] std::size_t size() const { return fixtures_.size(); }

 private:
  std::unordered_map<std::string, std::string> fixtures_;
  bool strict_;
  std::unique_ptr<Backend> fallback_;
};

// Appends a fixture record for every response the inner backend produces,
// so a later ScriptedBackend can replay the session offline.
class RecordingBackend final : public Backend {
 public:
  RecordingBackend(std::unique_ptr<Backend> inner, std::filesystem::path fixture_file);

  ChatResponse send(const ChatRequest& request) override;

 private:
  std::unique_ptr<Backend> inner_;
  std::filesystem::path fixture_file_;
  std::mutex mutex_;
};

struct RemoteOptions {
  std::string endpoint_url;  // e.g. https://api.example.com/v1
  std::string api_key;       // sent as a bearer token when non-empty
  std::chrono::seconds timeout{120};
};

// Chat-completions JSON over HTTP(S): POST <endpoint>/chat/completions with a
// messages array, reply text read from choices[0].message.content.
class RemoteBackend final : public Backend {
 public:
  explicit RemoteBackend(RemoteOptions options);
  ~RemoteBackend() override;

  ChatResponse send(const ChatRequest& request) override;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

// Reads GSEO_API_KEY; empty when unset.
[[nodiscard]] std::string api_key_from_env();

// Parses a --backend value: "remote:<url>", "scripted:<path>" or
// "recording:<url>,<dir>". Recording writes <dir>/recorded.jsonl.
[[nodiscard]] std::unique_ptr<Backend> make_backend(const std::string& spec);

struct GatewayOptions {
  int max_attempts = 4;
  std::chrono::milliseconds backoff_base{500};
  double backoff_factor = 2.0;
  bool cache_enabled = true;
  std::optional<std::filesystem::path> cache_dir;
  int concurrency_limit = 4;
  // Replaceable for tests; defaults to std::this_thread::sleep_for.
  std::function<void(std::chrono::milliseconds)> sleep;
};

struct GatewayStats {
  std::uint64_t requests = 0;
  std::uint64_t cache_hits = 0;
  std::uint64_t backend_calls = 0;
  std::uint64_t retries = 0;
};

// Validation, caching, retry with exponential backoff and an in-flight limit
// in front of a single backend. Safe for concurrent use.
class Gateway final : public ChatClient {
 public:
  Gateway(std::unique_ptr<Backend> backend, GatewayOptions options = {});

  ChatResponse complete(const ChatRequest& request) override;

  [[nodiscard]] GatewayStats stats() const;

 private:
  std::optional<ChatResponse> cache_lookup(const std::string& digest);
  void cache_store(const std::string& digest, const ChatResponse& response);
  ChatResponse send_with_retry(const ChatRequest& request);

  std::unique_ptr<Backend> backend_;
  GatewayOptions options_;
  std::counting_semaphore<> in_flight_;

  mutable std::mutex cache_mutex_;
  std::unordered_map<std::string, ChatResponse> memory_cache_;

  std::atomic<std::uint64_t> requests_{0};
  std::atomic<std::uint64_t> cache_hits_{0};
  std::atomic<std::uint64_t> backend_calls_{0};
  std::atomic<std::uint64_t> retries_{0};
};

// Forwards to another client and counts calls.
class CountingClient final : public ChatClient {
 public:
  explicit CountingClient(ChatClient& inner) : inner_(inner) {}

  ChatResponse complete(const ChatRequest& request) override {
    ++calls_;
    return inner_.complete(request);
  }

  [[nodiscard]] int calls() const { return calls_; }

 private:
  ChatClient& inner_;
  int calls_ = 0;
};

}  // namespace gseo
