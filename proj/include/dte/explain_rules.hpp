#pragma once

#include <string>

#include "dte/explanation.hpp"
#include "dte/tree.hpp"

namespace dte {

inline constexpr const char* kRuleTemplateVersion = "rule-template/1";

// One sentence per traversed internal node, e.g.
//   "Petal Width was greater than 0.8cm, so the right path was chosen,
//    which favors Iris-virginica."
// preceded by a header naming the prediction and followed by the schema
// descriptions of the features the path used. Throws TreeError when the
// path does not belong to the tree.
Explanation rule_explain(const DecisionPath& path, const DecisionTree& tree,
                         const std::string& sample_id = "");

}  // namespace dte
