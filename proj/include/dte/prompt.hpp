#pragma once

#include <array>
#include <chrono>
#include <cstddef>
#include <map>
#include <string>
#include <string_view>
#include <utility>

#include "dte/tree.hpp"

namespace dte {

enum class Audience { kNovice, kSecurity, kMl };

std::string_view to_string(Audience audience);
Audience audience_from_string(std::string_view name);

struct PromptConfig {
  Audience audience = Audience::kNovice;
  std::size_t top_gain_k = 2;
  std::string model = "gpt-4";
  double temperature = 0.0;
  int max_tokens = 600;
  std::string endpoint = "https://api.openai.com/v1/chat/completions";
  std::string api_key_env = "OPENAI_API_KEY";
  bool mock = false;
  // Transport policy.
  int max_attempts = 3;
  std::chrono::milliseconds initial_backoff{500};
  std::chrono::seconds timeout{60};

  // Throws Error when a field is out of range (negative temperature,
  // max_attempts < 1, ...).
  void validate() const;
};

inline constexpr std::array<std::string_view, 7> kPromptSections = {
    "task", "features", "tree", "path_steps", "gain_highlights", "prediction", "instructions"};

// Filled-in prompt. `sections` maps each name in kPromptSections to its
// [begin, end) byte range in `text`; the ranges tile the text in order.
struct Prompt {
  std::string system;
  std::string text;
  std::map<std::string, std::pair<std::size_t, std::size_t>, std::less<>> sections;

  std::string_view section(std::string_view name) const;
};

// The sentence every instruction section opens with.
inline constexpr std::string_view kInstructionSentence =
    "Describe in simple terms why the decision tree came to its conclusion.";

// Deterministic for fixed inputs. Audience only changes the instructions.
Prompt build_prompt(const DecisionTree& tree, const DecisionPath& path, const PromptConfig& config);

// Per-step line used in the path section, e.g.
//   "Step 1: Petal Width = 0.9cm compared with threshold 0.8cm: 0.9 > 0.8, so
//    the right branch was taken. Training split at this node: ..."
std::string describe_step(const DecisionTree& tree, const PathStep& step, std::size_t index);

}  // namespace dte
