#include "dte/prompt.hpp"

#include <algorithm>
#include <cctype>

#include <fmt/format.h>

#include "dte/error.hpp"
#include "dte/format.hpp"

namespace dte {
namespace {

constexpr std::string_view kDefaultTask =
    "Network intrusion detection (NID) classifies network traffic as benign or as a threat. "
    "A decision tree was trained on NetFlow records, where every record summarises one network "
    "flow (ports, protocol, byte and packet counts, TCP flags, duration). You will explain to a "
    "human reader why the tree classified one flow the way it did.";

std::string split_text(const FeatureSchema& schema, const std::vector<std::size_t>& counts) {
  std::string out;
  for (std::size_t c = 0; c < counts.size(); ++c) {
    if (c) out += ", ";
    out += fmt::format("{}={}", schema.classes[c], counts[c]);
  }
  return out;
}

std::string upper(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::toupper(c); });
  return s;
}

std::string instructions_for(Audience audience) {
  std::string out(kInstructionSentence);
  switch (audience) {
    case Audience::kNovice:
      out +=
          " The reader has little background in networking or machine learning, so avoid jargon, "
          "explain what each deciding feature means in everyday language, and keep the explanation "
          "short.";
      break;
    case Audience::kSecurity:
      out +=
          " The reader is a security analyst: relate the deciding features to the traffic patterns "
          "of benign activity and of attacks, and point out which values made the flow look the way "
          "it was classified.";
      break;
    case Audience::kMl:
      out +=
          " The reader is familiar with machine learning: refer to the thresholds and class splits "
          "where helpful, and use background knowledge about the features to explain why these "
          "splits separate the classes.";
      break;
  }
  return out + "\n";
}

}  // namespace

std::string_view to_string(Audience audience) {
  switch (audience) {
    case Audience::kNovice:
      return "novice";
    case Audience::kSecurity:
      return "security";
    case Audience::kMl:
      return "ml";
  }
  return "novice";
}

Audience audience_from_string(std::string_view name) {
  if (name == "novice") return Audience::kNovice;
  if (name == "security") return Audience::kSecurity;
  if (name == "ml") return Audience::kMl;
  throw Error(fmt::format("unknown audience '{}' (expected novice, security or ml)", name));
}

void PromptConfig::validate() const {
  if (temperature < 0.0) throw Error("temperature must be >= 0");
  if (max_tokens < 1) throw Error("max_tokens must be >= 1");
  if (max_attempts < 1) throw Error("max_attempts must be >= 1");
}

std::string_view Prompt::section(std::string_view name) const {
  auto it = sections.find(name);
  if (it == sections.end()) return {};
  return std::string_view(text).substr(it->second.first, it->second.second - it->second.first);
}

std::string describe_step(const DecisionTree& tree, const PathStep& step, std::size_t index) {
  const auto& schema = tree.schema();
  const auto& feature = schema.features[step.feature];
  const TreeNode& node = tree.node(step.node_id);
  const bool left = step.branch == Branch::kLeft;
  const TreeNode& child = tree.node(left ? node.left : node.right);
  const std::string value = format_exact(step.feature_value);
  const std::string threshold = format_sig4(step.threshold);
  return fmt::format(
      "Step {}: the node considers {}. The value of {} for this sample is {}, and the threshold of the "
      "node is {} ({} {} {}), so the {} branch was taken. Split between classes in the training set at "
      "this node: {}. After this branch: {}.\n",
      index + 1, feature.name, feature.name, with_unit(value, feature.unit),
      with_unit(threshold, feature.unit), value, left ? "<=" : ">", threshold, left ? "left" : "right",
      split_text(schema, step.class_counts), split_text(schema, child.class_counts));
}

Prompt build_prompt(const DecisionTree& tree, const DecisionPath& path, const PromptConfig& config) {
  tree.check_path(path);
  const auto& schema = tree.schema();
  Prompt prompt;
  prompt.system =
      "You are an assistant that explains the predictions of decision tree classifiers to human "
      "readers in clear natural language. Only use the facts given about the tree and the sample.";

  auto section = [&prompt](std::string_view name, const std::string& body) {
    const std::size_t begin = prompt.text.size();
    prompt.text += body;
    prompt.sections.emplace(std::string(name), std::make_pair(begin, prompt.text.size()));
  };

  section("task", fmt::format("## Task\n{}\n\n", schema.task.empty() ? kDefaultTask : schema.task));

  std::string features = "## Features\n";
  for (const auto& f : schema.features) {
    features += fmt::format("- {}{}: {}\n", f.name, f.unit ? fmt::format(" ({})", *f.unit) : std::string(),
                            f.description.empty() ? "no description available" : f.description);
  }
  section("features", features + "\n");

  section("tree",
          fmt::format("## Decision tree\nEach line is a node; for a test \"feature <= threshold\" the first "
                      "indented child is taken when the test holds and the second otherwise.\n{}\n",
                      to_text(tree)));

  std::string steps = "## Decision path for this sample\n";
  if (path.steps.empty()) steps += "The tree is a single leaf, so no tests were applied.\n";
  for (std::size_t i = 0; i < path.steps.size(); ++i) steps += describe_step(tree, path.steps[i], i);
  section("path_steps", steps + "\n");

  std::string gains = "## Most informative steps\n";
  const auto top = top_gain_steps(path, tree, config.top_gain_k);
  if (top.empty()) {
    gains += "No steps are highlighted.\n";
  } else {
    gains +=
        "These steps have the highest information gain (impurity decrease) along the path; they are "
        "where the classes became most strongly separated:\n";
    for (auto i : top) {
      const auto& step = path.steps[i];
      gains += fmt::format("- Step {} ({} {} {}): information gain {:.4f}\n", i + 1,
                           schema.features[step.feature].name, step.branch == Branch::kLeft ? "<=" : ">",
                           format_sig4(step.threshold), impurity_decrease(tree, step.node_id));
    }
  }
  section("gain_highlights", gains + "\n");

  section("prediction", fmt::format("## Prediction\nPREDICTED: {}\n\n", upper(schema.classes[path.prediction])));
  section("instructions", "## Instructions\n" + instructions_for(config.audience));
  return prompt;
}

}  // namespace dte
