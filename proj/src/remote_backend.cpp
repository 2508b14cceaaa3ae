#include <httplib.h>

#include <fmt/format.h>

#include "gseo/error.hpp"
#include "gseo/llm_gateway.hpp"

namespace gseo {

using nlohmann::json;

struct RemoteBackend::Impl {
  RemoteOptions options;
  std::string origin;       // scheme://host[:port]
  std::string path_prefix;  // e.g. /v1
};

namespace {

void split_url(const std::string& url, std::string& origin, std::string& path) {
  auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) {
    throw Error("invalid-backend", "endpoint URL needs a scheme: " + url);
  }
  auto path_start = url.find('/', scheme_end + 3);
  origin = url.substr(0, path_start);
  path = path_start == std::string::npos ? std::string() : url.substr(path_start);
  while (!path.empty() && path.back() == '/') path.pop_back();
}

}  // namespace

RemoteBackend::RemoteBackend(RemoteOptions options) : impl_(std::make_unique<Impl>()) {
  impl_->options = std::move(options);
  split_url(impl_->options.endpoint_url, impl_->origin, impl_->path_prefix);
}

RemoteBackend::~RemoteBackend() = default;

ChatResponse RemoteBackend::send(const ChatRequest& request) {
  json messages = json::array();
  for (const auto& m : request.messages) {
    messages.push_back({{"role", to_string(m.role)}, {"content", m.text}});
  }
  json body{{"model", request.model_id},
            {"messages", std::move(messages)},
            {"temperature", request.temperature},
            {"top_p", request.top_p},
            {"max_tokens", request.max_tokens}};
  if (request.seed_hint) body["seed"] = *request.seed_hint;

  httplib::Client client(impl_->origin);
  const auto timeout = impl_->options.timeout;
  client.set_connection_timeout(timeout);
  client.set_read_timeout(timeout);
  client.set_write_timeout(timeout);
  httplib::Headers headers;
  if (!impl_->options.api_key.empty()) {
    headers.emplace("Authorization", "Bearer " + impl_->options.api_key);
  }

  auto result = client.Post(impl_->path_prefix + "/chat/completions", headers, body.dump(),
                            "application/json");
  if (!result) {
    throw TransientError(TransientError::Kind::network,
                         fmt::format("{}: {}", impl_->origin, httplib::to_string(result.error())));
  }
  const int status = result->status;
  if (status == 429) {
    throw TransientError(TransientError::Kind::rate_limited, "HTTP 429 from " + impl_->origin);
  }
  if (status >= 500) {
    throw TransientError(TransientError::Kind::server,
                         fmt::format("HTTP {} from {}", status, impl_->origin));
  }
  if (status != 200) {
    throw Error("http-error", fmt::format("HTTP {} from {}: {}", status, impl_->origin,
                                          result->body.substr(0, 200)));
  }

  try {
    json reply = json::parse(result->body);
    const auto& content = reply.at("choices").at(0).at("message").at("content");
    ChatResponse response;
    response.text = content.is_null() ? std::string() : content.get<std::string>();
    response.model_id = reply.value("model", request.model_id);
    if (reply.contains("usage") && reply["usage"].is_object()) {
      response.usage.prompt_tokens = reply["usage"].value("prompt_tokens", 0);
      response.usage.completion_tokens = reply["usage"].value("completion_tokens", 0);
    }
    return response;
  } catch (const json::exception& e) {
    throw Error("bad-response", std::string("malformed chat-completions reply: ") + e.what());
  }
}

}  // namespace gseo
