#include "dte/llm_client.hpp"

#include <cstdlib>
#include <thread>

#include <fmt/format.h>
#include <httplib.h>

#include "dte/explain_rules.hpp"

namespace dte {
namespace {

struct Endpoint {
  std::string origin;  // scheme://host[:port]
  std::string path;
};

Endpoint parse_endpoint(const std::string& url) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) throw Error(fmt::format("endpoint '{}' has no scheme", url));
  const auto path_begin = url.find('/', scheme_end + 3);
  if (path_begin == std::string::npos) return {url, "/v1/chat/completions"};
  return {url.substr(0, path_begin), url.substr(path_begin)};
}

std::string excerpt(const std::string& body) {
  constexpr std::size_t kMax = 200;
  return body.size() <= kMax ? body : body.substr(0, kMax) + "...";
}

bool retryable(int status) { return status == 429 || status >= 500; }

}  // namespace

nlohmann::json chat_request_body(const Prompt& prompt, const PromptConfig& config) {
  return {
      {"model", config.model},
      {"messages",
       nlohmann::json::array({{{"role", "system"}, {"content", prompt.system}},
                              {{"role", "user"}, {"content", prompt.text}}})},
      {"temperature", config.temperature},
      {"max_tokens", config.max_tokens},
  };
}

Explanation llm_explain(const Prompt& prompt, const PromptConfig& config, std::string_view mock_text) {
  config.validate();
  Explanation e;
  e.approach = Approach::kLlm;
  e.provenance.system_prompt = prompt.system;
  e.provenance.prompt = prompt.text;
  e.provenance.temperature = config.temperature;
  e.provenance.max_tokens = config.max_tokens;
  e.created_at = utc_timestamp();

  if (config.mock) {
    e.text = "MOCK: " + std::string(mock_text);
    e.provenance.model = "mock";
    e.provenance.endpoint = "mock";
    return e;
  }

  e.provenance.model = config.model;
  e.provenance.endpoint = config.endpoint;
  const Endpoint endpoint = parse_endpoint(config.endpoint);
  httplib::Client client(endpoint.origin);
  if (!client.is_valid()) throw LlmError(fmt::format("unsupported endpoint '{}'", config.endpoint), 0, "", 0);
  client.set_connection_timeout(config.timeout);
  client.set_read_timeout(config.timeout);
  client.set_write_timeout(config.timeout);

  httplib::Headers headers;
  if (const char* key = std::getenv(config.api_key_env.c_str()); key != nullptr && *key != '\0') {
    headers.emplace("Authorization", std::string("Bearer ") + key);
  }
  const std::string body = chat_request_body(prompt, config).dump();

  auto backoff = config.initial_backoff;
  int status = 0;
  std::string last_body;
  std::string last_error;
  for (int attempt = 1; attempt <= config.max_attempts; ++attempt) {
    auto res = client.Post(endpoint.path, headers, body, "application/json");
    if (!res) {
      status = 0;
      last_error = httplib::to_string(res.error());
    } else if (res->status >= 200 && res->status < 300) {
      std::string content;
      try {
        const auto reply = nlohmann::json::parse(res->body);
        const auto& message = reply.at("choices").at(0).at("message");
        if (message.contains("content") && message["content"].is_string()) {
          content = message["content"].get<std::string>();
        }
      } catch (const nlohmann::json::exception& ex) {
        throw LlmError(fmt::format("malformed chat-completions response: {}", ex.what()), res->status,
                       excerpt(res->body), attempt);
      }
      if (content.find_first_not_of(" \t\r\n") == std::string::npos) {
        throw LlmError("empty explanation", res->status, excerpt(res->body), attempt);
      }
      e.text = std::move(content);
      return e;
    } else {
      status = res->status;
      last_body = res->body;
      last_error = fmt::format("HTTP {}", status);
      if (!retryable(status)) {
        throw LlmError(fmt::format("chat-completions request failed with HTTP {}: {}", status, excerpt(last_body)),
                       status, excerpt(last_body), attempt);
      }
    }
    if (attempt < config.max_attempts) {
      std::this_thread::sleep_for(backoff);
      backoff *= 2;
    }
  }
  throw LlmError(fmt::format("chat-completions request failed after {} attempts ({}){}", config.max_attempts,
                             last_error, last_body.empty() ? "" : ": " + excerpt(last_body)),
                 status, excerpt(last_body), config.max_attempts);
}

Explanation explain_with_llm(const DecisionTree& tree, const DecisionPath& path, const PromptConfig& config,
                             const std::string& sample_id) {
  const Prompt prompt = build_prompt(tree, path, config);
  std::string mock_text;
  if (config.mock) mock_text = rule_explain(path, tree, sample_id).text;
  Explanation e = llm_explain(prompt, config, mock_text);
  e.sample_id = sample_id;
  e.path_id = path.id();
  return e;
}

}  // namespace dte
