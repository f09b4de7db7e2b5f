#include "dte/explain_rules.hpp"

#include <ctime>
#include <set>

#include <fmt/format.h>

#include "dte/error.hpp"
#include "dte/format.hpp"

namespace dte {

std::string_view to_string(Approach approach) {
  return approach == Approach::kRule ? "rule" : "llm";
}

Approach approach_from_string(std::string_view name) {
  if (name == "rule") return Approach::kRule;
  if (name == "llm") return Approach::kLlm;
  throw Error(fmt::format("unknown explanation approach '{}'", name));
}

std::string utc_timestamp() {
  const std::time_t now = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

nlohmann::json to_json(const Explanation& e) {
  const auto& p = e.provenance;
  nlohmann::json prov = {{"model", p.model}};
  if (!p.template_version.empty()) prov["template_version"] = p.template_version;
  if (!p.prompt.empty()) {
    prov["system_prompt"] = p.system_prompt;
    prov["prompt"] = p.prompt;
    prov["temperature"] = p.temperature;
    prov["max_tokens"] = p.max_tokens;
    prov["endpoint"] = p.endpoint;
  }
  return {{"text", e.text},         {"approach", to_string(e.approach)}, {"sample_id", e.sample_id},
          {"path_id", e.path_id},   {"provenance", prov},                {"created_at", e.created_at}};
}

Explanation explanation_from_json(const nlohmann::json& doc) {
  Explanation e;
  e.text = doc.at("text").get<std::string>();
  e.approach = approach_from_string(doc.at("approach").get<std::string>());
  e.sample_id = doc.value("sample_id", "");
  e.path_id = doc.value("path_id", "");
  e.created_at = doc.value("created_at", "");
  const auto& p = doc.at("provenance");
  e.provenance.model = p.value("model", "");
  e.provenance.template_version = p.value("template_version", "");
  e.provenance.system_prompt = p.value("system_prompt", "");
  e.provenance.prompt = p.value("prompt", "");
  e.provenance.temperature = p.value("temperature", 0.0);
  e.provenance.max_tokens = p.value("max_tokens", 0);
  e.provenance.endpoint = p.value("endpoint", "");
  return e;
}

Explanation rule_explain(const DecisionPath& path, const DecisionTree& tree, const std::string& sample_id) {
  tree.check_path(path);
  const auto& schema = tree.schema();

  std::string text = fmt::format("The decision tree predicted {} for this sample.\n",
                                 schema.classes[path.prediction]);
  std::set<std::size_t> used;
  for (const auto& step : path.steps) {
    const auto& feature = schema.features[step.feature];
    const TreeNode& node = tree.node(step.node_id);
    const bool left = step.branch == Branch::kLeft;
    const TreeNode& child = tree.node(left ? node.left : node.right);
    text += fmt::format("{} was {} {}, so the {} path was chosen, which favors {}.\n", feature.name,
                        left ? "at most" : "greater than",
                        with_unit(format_sig4(step.threshold), feature.unit), left ? "left" : "right",
                        schema.classes[child.majority()]);
    used.insert(step.feature);
  }
  if (!used.empty()) {
    text += "\nFeature details:\n";
    for (auto f : used) {
      const auto& feature = schema.features[f];
      text += fmt::format("- {}{}: {}\n", feature.name,
                          feature.unit ? fmt::format(" ({})", *feature.unit) : std::string(),
                          feature.description.empty() ? "no description available" : feature.description);
    }
  }

  Explanation e;
  e.text = std::move(text);
  e.approach = Approach::kRule;
  e.sample_id = sample_id;
  e.path_id = path.id();
  e.provenance.template_version = kRuleTemplateVersion;
  e.provenance.model = "rule-template";
  e.created_at = utc_timestamp();
  return e;
}

}  // namespace dte
