#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dte/dataset.hpp"
#include "dte/error.hpp"

namespace dte {

// One node of a trained tree. Internal nodes route x[feature] <= threshold
// to `left` and everything else to `right`. class_counts holds the training
// samples that reached the node.
struct TreeNode {
  int id = 0;
  bool leaf = true;
  std::size_t feature = 0;
  double threshold = 0.0;
  int left = -1;
  int right = -1;
  std::vector<std::size_t> class_counts;

  std::size_t total() const;
  // Majority class; ties go to the lowest class index.
  std::size_t majority() const;
};

enum class Branch { kLeft, kRight };

struct PathStep {
  int node_id = 0;
  std::size_t feature = 0;
  double threshold = 0.0;
  Branch branch = Branch::kLeft;
  double feature_value = 0.0;
  std::vector<std::size_t> class_counts;
};

// Root-to-leaf record of one inference. `steps` covers the internal nodes,
// so the path length k is steps.size() + 1.
struct DecisionPath {
  std::vector<PathStep> steps;
  int leaf_id = 0;
  std::size_t prediction = 0;
  std::vector<std::size_t> leaf_counts;

  std::size_t length() const { return steps.size() + 1; }
  // Node ids joined by '-', e.g. "0-2-5". Identifies the path within a tree.
  std::string id() const;
};

struct TrainParams {
  int max_depth = 4;
  std::size_t min_samples_leaf = 1;
  std::uint64_t seed = 0;
};

// Where the training data came from; lets later commands re-derive the
// exact test split the tree was evaluated on.
struct TrainingInfo {
  std::uint64_t seed = 0;
  std::size_t train_size = 0;
  std::string data_source;
  double test_fraction = 0.0;
  std::uint64_t split_seed = 0;
  bool stratified = true;
};

class DecisionTree {
 public:
  // Validates the node table: dense ids, single root, every node reachable
  // exactly once, consistent class counts and depth <= max_depth.
  DecisionTree(FeatureSchema schema, std::vector<TreeNode> nodes, int root, int max_depth,
               TrainingInfo info, std::vector<FeatureRange> domain);

  const FeatureSchema& schema() const { return schema_; }
  const std::vector<TreeNode>& nodes() const { return nodes_; }
  const TreeNode& node(int id) const;
  const TreeNode& root() const { return node(root_); }
  int root_id() const { return root_; }
  int max_depth() const { return max_depth_; }
  // Depth of the deepest leaf; a single leaf has depth 0.
  int depth() const;
  const TrainingInfo& info() const { return info_; }
  // Per-feature [min, max] of the training data.
  const std::vector<FeatureRange>& domain() const { return domain_; }

  // Goes left iff x[feature] <= threshold. Throws DataError for a wrong
  // width or a non-finite value.
  DecisionPath predict(std::span<const double> x) const;

  // Throws TreeError unless every step of `path` is the branch this tree
  // takes from the previous node.
  void check_path(const DecisionPath& path) const;

 private:
  FeatureSchema schema_;
  std::vector<TreeNode> nodes_;
  int root_ = 0;
  int max_depth_ = 0;
  TrainingInfo info_;
  std::vector<FeatureRange> domain_;
};

class TreeError : public Error {
 public:
  using Error::Error;
};

// CART with Gini impurity. Candidate thresholds are midpoints between
// consecutive distinct values; ties prefer the lower feature index, then the
// lower threshold. A node becomes a leaf at max_depth, when pure, or when no
// split has positive impurity decrease.
DecisionTree train(const Dataset& train_set, const TrainParams& params, TrainingInfo info = {});

double gini(std::span<const std::size_t> counts);
// G(parent) - (n_L/n) G(left) - (n_R/n) G(right)
double impurity_decrease(std::span<const std::size_t> parent, std::span<const std::size_t> left,
                         std::span<const std::size_t> right);
double impurity_decrease(const DecisionTree& tree, int node_id);

// Indices into path.steps of the (at most k) steps with the largest
// impurity decrease, largest first; equal gains keep path order.
std::vector<std::size_t> top_gain_steps(const DecisionPath& path, const DecisionTree& tree,
                                        std::size_t k);

double accuracy(const DecisionTree& tree, const Dataset& data);

inline constexpr const char* kTreeFormat = "dte-tree/1";

nlohmann::json to_json(const DecisionTree& tree);
DecisionTree tree_from_json(const nlohmann::json& doc);
// Indented rendering, one node per line, left subtree before right.
std::string to_text(const DecisionTree& tree);

}  // namespace dte
