#pragma once

#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

#include "dte/error.hpp"
#include "dte/explanation.hpp"
#include "dte/prompt.hpp"

namespace dte {

// Failure talking to the chat-completions endpoint. `status` is 0 for
// transport errors; `attempts` counts the requests actually sent.
class LlmError : public Error {
 public:
  LlmError(const std::string& message, int status, std::string body_excerpt, int attempts)
      : Error(message), status_(status), body_excerpt_(std::move(body_excerpt)), attempts_(attempts) {}

  int status() const { return status_; }
  const std::string& body_excerpt() const { return body_excerpt_; }
  int attempts() const { return attempts_; }

 private:
  int status_;
  std::string body_excerpt_;
  int attempts_;
};

// {"model", "messages": [system, user], "temperature", "max_tokens"}
nlohmann::json chat_request_body(const Prompt& prompt, const PromptConfig& config);

// Sends the prompt and wraps the first choice's content. Transport failures,
// 429 and 5xx responses are retried with exponential backoff up to
// config.max_attempts requests in total; other non-2xx statuses fail
// immediately. In mock mode nothing is sent and the text is
// "MOCK: " + mock_text.
Explanation llm_explain(const Prompt& prompt, const PromptConfig& config, std::string_view mock_text = {});

// build_prompt + llm_explain; mock mode synthesizes from the rule template.
Explanation explain_with_llm(const DecisionTree& tree, const DecisionPath& path, const PromptConfig& config,
                             const std::string& sample_id = "");

}  // namespace dte
