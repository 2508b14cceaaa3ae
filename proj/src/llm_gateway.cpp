#include "gseo/llm_gateway.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <random>
#include <sstream>
#include <thread>

#include <fmt/format.h>

#include "gseo/error.hpp"
#include "gseo/text_util.hpp"

namespace gseo {

namespace fs = std::filesystem;
using nlohmann::json;

std::string_view to_string(Role role) {
  switch (role) {
    case Role::system:
      return "system";
    case Role::user:
      return "user";
    case Role::assistant:
      return "assistant";
  }
  return "user";
}

Role role_from_string(std::string_view name) {
  if (name == "system") return Role::system;
  if (name == "user") return Role::user;
  if (name == "assistant") return Role::assistant;
  throw Error("invalid-request", fmt::format("unknown message role '{}'", name));
}

void ChatRequest::validate() const {
  if (model_id.empty()) throw Error("invalid-request", "model_id is empty");
  if (messages.empty()) throw Error("invalid-request", "messages are empty");
  if (messages.front().role == Role::assistant) {
    throw Error("invalid-request", "first message must come from system or user");
  }
  if (!(temperature >= 0.0)) throw Error("invalid-request", "temperature must be >= 0");
  if (!(top_p > 0.0 && top_p <= 1.0)) throw Error("invalid-request", "top_p must lie in (0, 1]");
  if (max_tokens <= 0) throw Error("invalid-request", "max_tokens must be positive");
}

json to_json(const ChatResponse& response) {
  return json{{"text", response.text},
              {"model_id", response.model_id},
              {"usage",
               {{"prompt_tokens", response.usage.prompt_tokens},
                {"completion_tokens", response.usage.completion_tokens}}}};
}

ChatResponse chat_response_from_json(const json& j) {
  ChatResponse r;
  r.text = j.at("text").get<std::string>();
  r.model_id = j.value("model_id", "");
  if (j.contains("usage")) {
    r.usage.prompt_tokens = j["usage"].value("prompt_tokens", 0);
    r.usage.completion_tokens = j["usage"].value("completion_tokens", 0);
  }
  return r;
}

std::string canonical_request(const ChatRequest& request) {
  json messages = json::array();
  for (const auto& m : request.messages) {
    messages.push_back(json{{"role", to_string(m.role)}, {"text", m.text}});
  }
  // nlohmann::json objects keep keys sorted, so dump() is canonical.
  json j{{"model_id", request.model_id},
         {"messages", std::move(messages)},
         {"temperature", request.temperature},
         {"top_p", request.top_p},
         {"max_tokens", request.max_tokens}};
  return j.dump();
}

std::string sha256_hex(std::string_view data) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int length = 0;
  if (EVP_Digest(data.data(), data.size(), digest, &length, EVP_sha256(), nullptr) != 1) {
    throw Error("digest-error", "SHA-256 computation failed");
  }
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  out.reserve(length * 2);
  for (unsigned int i = 0; i < length; ++i) {
    out.push_back(kHex[digest[i] >> 4]);
    out.push_back(kHex[digest[i] & 0x0f]);
  }
  return out;
}

std::string request_digest(const ChatRequest& request) {
  return sha256_hex(canonical_request(request));
}

ChatRequest ModelSettings::request(std::string system_text, std::string user_text) const {
  ChatRequest r;
  r.model_id = model_id;
  r.temperature = temperature;
  r.top_p = top_p;
  r.max_tokens = max_tokens;
  if (!system_text.empty()) r.messages.push_back({Role::system, std::move(system_text)});
  r.messages.push_back({Role::user, std::move(user_text)});
  return r;
}

// ---------------------------------------------------------------------------
// Scripted and recording backends

namespace {

void load_fixture_file(const fs::path& path, std::unordered_map<std::string, std::string>& out) {
  std::ifstream in(path);
  if (!in) throw Error("io-error", "cannot open fixture file " + path.string());
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (text::trim(line).empty()) continue;
    try {
      auto j = json::parse(line);
      out[j.at("digest").get<std::string>()] = j.at("response").get<std::string>();
    } catch (const json::exception& e) {
      throw Error("fixture-error", fmt::format("{}:{}: {}", path.string(), line_no, e.what()));
    }
  }
}

}  // namespace

ScriptedBackend::ScriptedBackend(const fs::path& fixtures, bool strict) : strict_(strict) {
  if (fs::is_directory(fixtures)) {
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(fixtures)) {
      if (entry.is_regular_file() && entry.path().extension() == ".jsonl") {
        files.push_back(entry.path());
      }
    }
    std::sort(files.begin(), files.end());
    for (const auto& f : files) load_fixture_file(f, fixtures_);
  } else if (fs::exists(fixtures)) {
    load_fixture_file(fixtures, fixtures_);
  } else {
    throw Error("io-error", "fixture path not found: " + fixtures.string());
  }
}

ScriptedBackend::ScriptedBackend(std::unordered_map<std::string, std::string> fixtures,
                                 bool strict)
    : fixtures_(std::move(fixtures)), strict_(strict) {}

ChatResponse ScriptedBackend::send(const ChatRequest& request) {
  const std::string digest = request_digest(request);
  auto it = fixtures_.find(digest);
  if (it == fixtures_.end()) {
    if (!strict_ && fallback_) return fallback_->send(request);
    throw Error("scripted-miss", "no fixture for request digest " + digest);
  }
  ChatResponse r;
  r.text = it->second;
  r.model_id = request.model_id;
  return r;
}

RecordingBackend::RecordingBackend(std::unique_ptr<Backend> inner, fs::path fixture_file)
    : inner_(std::move(inner)), fixture_file_(std::move(fixture_file)) {
  if (fixture_file_.has_parent_path()) fs::create_directories(fixture_file_.parent_path());
}

ChatResponse RecordingBackend::send(const ChatRequest& request) {
  ChatResponse r = inner_->send(request);
  json record{{"digest", request_digest(request)}, {"response", r.text}};
  std::lock_guard lock(mutex_);
  std::ofstream out(fixture_file_, std::ios::app);
  if (!out) throw Error("io-error", "cannot append to " + fixture_file_.string());
  out << record.dump() << '\n';
  return r;
}

std::string api_key_from_env() {
  const char* key = std::getenv("GSEO_API_KEY");
  return key ? std::string(key) : std::string();
}

std::unique_ptr<Backend> make_backend(const std::string& spec) {
  auto colon = spec.find(':');
  if (colon == std::string::npos) {
    throw Error("invalid-backend", "expected remote:<url>, scripted:<dir> or recording:<url>,<dir>");
  }
  const std::string kind = spec.substr(0, colon);
  const std::string arg = spec.substr(colon + 1);
  if (arg.empty()) throw Error("invalid-backend", "backend '" + kind + "' needs an argument");
  if (kind == "scripted") return std::make_unique<ScriptedBackend>(fs::path(arg));
  if (kind == "remote") {
    return std::make_unique<RemoteBackend>(RemoteOptions{arg, api_key_from_env()});
  }
  if (kind == "recording") {
    // The URL itself contains ':' and may contain ','; split on the last comma.
    auto comma = arg.rfind(',');
    if (comma == std::string::npos) {
      throw Error("invalid-backend", "recording backend expects <url>,<dir>");
    }
    auto remote = std::make_unique<RemoteBackend>(RemoteOptions{arg.substr(0, comma), api_key_from_env()});
    return std::make_unique<RecordingBackend>(std::move(remote),
                                              fs::path(arg.substr(comma + 1)) / "recorded.jsonl");
  }
  throw Error("invalid-backend", "unknown backend kind '" + kind + "'");
}

// ---------------------------------------------------------------------------
// Gateway

namespace {

class SemaphoreGuard {
 public:
  explicit SemaphoreGuard(std::counting_semaphore<>& sem) : sem_(sem) { sem_.acquire(); }
  ~SemaphoreGuard() { sem_.release(); }
  SemaphoreGuard(const SemaphoreGuard&) = delete;
  SemaphoreGuard& operator=(const SemaphoreGuard&) = delete;

 private:
  std::counting_semaphore<>& sem_;
};

std::string temp_suffix() {
  static thread_local std::mt19937_64 rng{std::random_device{}()};
  return fmt::format(".tmp{:016x}", rng());
}

}  // namespace

Gateway::Gateway(std::unique_ptr<Backend> backend, GatewayOptions options)
    : backend_(std::move(backend)),
      options_(std::move(options)),
      in_flight_(std::max(1, options_.concurrency_limit)) {
  if (!backend_) throw Error("invalid-backend", "gateway needs a backend");
  if (!options_.sleep) {
    options_.sleep = [](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); };
  }
  if (options_.cache_dir) fs::create_directories(*options_.cache_dir);
}

ChatResponse Gateway::complete(const ChatRequest& request) {
  request.validate();
  ++requests_;
  const std::string digest = request_digest(request);
  if (options_.cache_enabled) {
    if (auto cached = cache_lookup(digest)) {
      ++cache_hits_;
      cached->cache_hit = true;
      return *cached;
    }
  }
  ChatResponse response = send_with_retry(request);
  response.cache_hit = false;
  if (options_.cache_enabled) cache_store(digest, response);
  return response;
}

ChatResponse Gateway::send_with_retry(const ChatRequest& request) {
  const int attempts = std::max(1, options_.max_attempts);
  for (int attempt = 1;; ++attempt) {
    try {
      SemaphoreGuard guard(in_flight_);
      ++backend_calls_;
      return backend_->send(request);
    } catch (const TransientError& e) {
      if (attempt >= attempts) {
        switch (e.kind()) {
          case TransientError::Kind::rate_limited:
            throw Error("rate-limited-after-retries",
                        fmt::format("still rate limited after {} attempts: {}", attempts, e.what()));
          case TransientError::Kind::network:
            throw Error("network-unreachable",
                        fmt::format("gave up after {} attempts: {}", attempts, e.what()));
          case TransientError::Kind::server:
            throw Error("server-error",
                        fmt::format("gave up after {} attempts: {}", attempts, e.what()));
        }
      }
      ++retries_;
      auto delay = std::chrono::milliseconds(static_cast<long long>(
          options_.backoff_base.count() * std::pow(options_.backoff_factor, attempt - 1)));
      options_.sleep(delay);
    }
  }
}

std::optional<ChatResponse> Gateway::cache_lookup(const std::string& digest) {
  {
    std::lock_guard lock(cache_mutex_);
    auto it = memory_cache_.find(digest);
    if (it != memory_cache_.end()) return it->second;
  }
  if (!options_.cache_dir) return std::nullopt;
  const fs::path file = *options_.cache_dir / digest;
  std::ifstream in(file);
  if (!in) return std::nullopt;
  try {
    json j = json::parse(in);
    // A file whose recorded digest disagrees with its name is never served.
    if (j.value("digest", "") != digest) return std::nullopt;
    ChatResponse r = chat_response_from_json(j);
    std::lock_guard lock(cache_mutex_);
    memory_cache_.emplace(digest, r);
    return r;
  } catch (const json::exception&) {
    return std::nullopt;
  }
}

void Gateway::cache_store(const std::string& digest, const ChatResponse& response) {
  {
    std::lock_guard lock(cache_mutex_);
    memory_cache_[digest] = response;
  }
  if (!options_.cache_dir) return;
  json j = to_json(response);
  j["digest"] = digest;
  const fs::path target = *options_.cache_dir / digest;
  const fs::path tmp = target.string() + temp_suffix();
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("io-error", "cannot write cache file " + tmp.string());
    out << j.dump();
  }
  fs::rename(tmp, target);
}

GatewayStats Gateway::stats() const {
  return GatewayStats{requests_.load(), cache_hits_.load(), backend_calls_.load(), retries_.load()};
}

}  // namespace gseo
