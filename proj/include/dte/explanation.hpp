#pragma once

#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

namespace dte {

enum class Approach { kRule, kLlm };

std::string_view to_string(Approach approach);
Approach approach_from_string(std::string_view name);

// How an explanation was produced. Rule explanations carry only the
// template version; LLM explanations carry the exact prompt and the request
// parameters.
struct Provenance {
  std::string template_version;
  std::string system_prompt;
  std::string prompt;
  std::string model;
  double temperature = 0.0;
  int max_tokens = 0;
  std::string endpoint;
};

struct Explanation {
  std::string text;
  Approach approach = Approach::kRule;
  std::string sample_id;
  std::string path_id;
  Provenance provenance;
  std::string created_at;  // ISO-8601 UTC
};

// Current UTC time as "YYYY-MM-DDTHH:MM:SSZ".
std::string utc_timestamp();

nlohmann::json to_json(const Explanation& e);
Explanation explanation_from_json(const nlohmann::json& doc);

}  // namespace dte
