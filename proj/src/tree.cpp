#include "dte/tree.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <utility>

#include <fmt/format.h>

#include "dte/error.hpp"
#include "dte/format.hpp"

namespace dte {
namespace {

using nlohmann::json;

constexpr double kGainEpsilon = 1e-12;

struct SplitChoice {
  bool found = false;
  std::size_t feature = 0;
  double threshold = 0.0;
  double gain = 0.0;
};

class TreeBuilder {
 public:
  TreeBuilder(const Dataset& data, const TrainParams& params) : data_(data), params_(params) {}

  std::vector<TreeNode> build() {
    std::vector<std::size_t> all(data_.size());
    std::iota(all.begin(), all.end(), 0);
    grow(all, 0);
    return std::move(nodes_);
  }

 private:
  std::vector<std::size_t> counts_of(const std::vector<std::size_t>& rows) const {
    std::vector<std::size_t> counts(data_.schema().class_count(), 0);
    for (auto r : rows) ++counts[data_.sample(r).label];
    return counts;
  }

  int grow(const std::vector<std::size_t>& rows, int depth) {
    const int id = static_cast<int>(nodes_.size());
    nodes_.push_back(TreeNode{id, true, 0, 0.0, -1, -1, counts_of(rows)});

    const auto& counts = nodes_[id].class_counts;
    const bool pure = std::count_if(counts.begin(), counts.end(), [](auto c) { return c > 0; }) <= 1;
    if (depth >= params_.max_depth || pure) return id;

    const SplitChoice choice = best_split(rows, counts);
    if (!choice.found) return id;

    std::vector<std::size_t> left_rows, right_rows;
    for (auto r : rows) {
      (data_.sample(r).values[choice.feature] <= choice.threshold ? left_rows : right_rows).push_back(r);
    }
    const int left = grow(left_rows, depth + 1);
    const int right = grow(right_rows, depth + 1);
    TreeNode& node = nodes_[id];
    node.leaf = false;
    node.feature = choice.feature;
    node.threshold = choice.threshold;
    node.left = left;
    node.right = right;
    return id;
  }

  SplitChoice best_split(const std::vector<std::size_t>& rows,
                         const std::vector<std::size_t>& counts) const {
    const std::size_t n = rows.size();
    const std::size_t n_classes = counts.size();
    const double parent_gini = gini(counts);
    const std::size_t min_leaf = std::max<std::size_t>(1, params_.min_samples_leaf);

    SplitChoice best;
    std::vector<std::pair<double, std::size_t>> column(n);
    std::vector<std::size_t> left(n_classes), right(n_classes);
    for (std::size_t f = 0; f < data_.schema().feature_count(); ++f) {
      for (std::size_t i = 0; i < n; ++i) {
        const auto& s = data_.sample(rows[i]);
        column[i] = {s.values[f], s.label};
      }
      std::sort(column.begin(), column.end());
      std::fill(left.begin(), left.end(), 0);
      right = counts;
      // Running sums of squared class counts give each child's Gini in O(1).
      double left_sq = 0.0;
      double right_sq = 0.0;
      for (auto c : counts) right_sq += static_cast<double>(c) * static_cast<double>(c);

      for (std::size_t i = 0; i + 1 < n; ++i) {
        const std::size_t c = column[i].second;
        left_sq += 2.0 * static_cast<double>(left[c]) + 1.0;
        right_sq -= 2.0 * static_cast<double>(right[c]) - 1.0;
        ++left[c];
        --right[c];
        const double lo = column[i].first;
        const double hi = column[i + 1].first;
        if (!(lo < hi)) continue;
        const std::size_t n_left = i + 1;
        const std::size_t n_right = n - n_left;
        if (n_left < min_leaf || n_right < min_leaf) continue;

        const double nl = static_cast<double>(n_left);
        const double nr = static_cast<double>(n_right);
        const double weighted = ((nl - left_sq / nl) + (nr - right_sq / nr)) / static_cast<double>(n);
        const double gain = parent_gini - weighted;
        if (gain > best.gain + kGainEpsilon) {
          double threshold = lo + (hi - lo) / 2.0;
          // Adjacent doubles: the midpoint may round up onto hi.
          if (!(threshold < hi)) threshold = lo;
          best = SplitChoice{true, f, threshold, gain};
        }
      }
    }
    if (best.found && best.gain <= kGainEpsilon) best.found = false;
    return best;
  }

  const Dataset& data_;
  const TrainParams& params_;
  std::vector<TreeNode> nodes_;
};

std::vector<std::size_t> sum_counts(const std::vector<std::size_t>& a, const std::vector<std::size_t>& b) {
  std::vector<std::size_t> out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] + b[i];
  return out;
}

void render(const DecisionTree& tree, int id, int indent, std::string& out) {
  const TreeNode& node = tree.node(id);
  const auto& schema = tree.schema();
  out.append(static_cast<std::size_t>(indent) * 2, ' ');
  if (node.leaf) {
    std::string counts;
    for (std::size_t c = 0; c < node.class_counts.size(); ++c) {
      if (c) counts += ", ";
      counts += fmt::format("{}={}", schema.classes[c], node.class_counts[c]);
    }
    out += fmt::format("class: {} (n={}: {})\n", schema.classes[node.majority()], node.total(), counts);
    return;
  }
  out += fmt::format("{} <= {}\n", schema.features[node.feature].name, format_sig4(node.threshold));
  render(tree, node.left, indent + 1, out);
  render(tree, node.right, indent + 1, out);
}

}  // namespace

std::size_t TreeNode::total() const {
  return std::accumulate(class_counts.begin(), class_counts.end(), std::size_t{0});
}

std::size_t TreeNode::majority() const {
  return static_cast<std::size_t>(std::max_element(class_counts.begin(), class_counts.end()) -
                                  class_counts.begin());
}

std::string DecisionPath::id() const {
  std::string out;
  for (const auto& s : steps) out += fmt::format("{}-", s.node_id);
  out += std::to_string(leaf_id);
  return out;
}

DecisionTree::DecisionTree(FeatureSchema schema, std::vector<TreeNode> nodes, int root, int max_depth,
                           TrainingInfo info, std::vector<FeatureRange> domain)
    : schema_(std::move(schema)),
      nodes_(std::move(nodes)),
      root_(root),
      max_depth_(max_depth),
      info_(std::move(info)),
      domain_(std::move(domain)) {
  schema_.validate();
  const int n = static_cast<int>(nodes_.size());
  if (n == 0) throw TreeError("tree has no nodes");
  if (root_ < 0 || root_ >= n) throw TreeError("root id out of range");
  if (domain_.size() != schema_.feature_count()) throw TreeError("domain width does not match schema");
  for (int i = 0; i < n; ++i) {
    const TreeNode& node = nodes_[i];
    if (node.id != i) throw TreeError(fmt::format("node at position {} has id {}", i, node.id));
    if (node.class_counts.size() != schema_.class_count()) {
      throw TreeError(fmt::format("node {}: class count width mismatch", i));
    }
    if (node.total() == 0) throw TreeError(fmt::format("node {}: no training samples", i));
    if (node.leaf) {
      if (node.left != -1 || node.right != -1) throw TreeError(fmt::format("leaf {} has children", i));
      continue;
    }
    if (node.left < 0 || node.left >= n || node.right < 0 || node.right >= n) {
      throw TreeError(fmt::format("node {}: child id out of range", i));
    }
    if (node.feature >= schema_.feature_count()) throw TreeError(fmt::format("node {}: bad feature", i));
    if (!std::isfinite(node.threshold)) throw TreeError(fmt::format("node {}: non-finite threshold", i));
  }

  // Every node must be reached exactly once from the root.
  std::vector<bool> seen(n, false);
  std::vector<std::pair<int, int>> stack{{root_, 0}};
  int deepest = 0;
  while (!stack.empty()) {
    auto [id, depth] = stack.back();
    stack.pop_back();
    if (seen[id]) throw TreeError("not a tree");
    seen[id] = true;
    deepest = std::max(deepest, depth);
    const TreeNode& node = nodes_[id];
    if (node.leaf) continue;
    stack.emplace_back(node.right, depth + 1);
    stack.emplace_back(node.left, depth + 1);
  }
  if (std::find(seen.begin(), seen.end(), false) != seen.end()) throw TreeError("not a tree");
  for (const TreeNode& node : nodes_) {
    if (!node.leaf && sum_counts(nodes_[node.left].class_counts, nodes_[node.right].class_counts) != node.class_counts) {
      throw TreeError(fmt::format("node {}: children's class counts do not sum to parent", node.id));
    }
  }
  if (deepest > max_depth_) throw TreeError("tree deeper than max_depth");
}

const TreeNode& DecisionTree::node(int id) const {
  if (id < 0 || id >= static_cast<int>(nodes_.size())) throw TreeError(fmt::format("no node {}", id));
  return nodes_[id];
}

int DecisionTree::depth() const {
  int deepest = 0;
  std::vector<std::pair<int, int>> stack{{root_, 0}};
  while (!stack.empty()) {
    auto [id, d] = stack.back();
    stack.pop_back();
    deepest = std::max(deepest, d);
    if (!nodes_[id].leaf) {
      stack.emplace_back(nodes_[id].left, d + 1);
      stack.emplace_back(nodes_[id].right, d + 1);
    }
  }
  return deepest;
}

DecisionPath DecisionTree::predict(std::span<const double> x) const {
  if (x.size() != schema_.feature_count()) {
    throw DataError(fmt::format("expected {} feature values, got {}", schema_.feature_count(), x.size()));
  }
  for (double v : x) {
    if (!std::isfinite(v)) throw DataError("non-finite feature value");
  }
  DecisionPath path;
  const TreeNode* node = &nodes_[root_];
  while (!node->leaf) {
    const double value = x[node->feature];
    const Branch branch = value <= node->threshold ? Branch::kLeft : Branch::kRight;
    path.steps.push_back({node->id, node->feature, node->threshold, branch, value, node->class_counts});
    node = &nodes_[branch == Branch::kLeft ? node->left : node->right];
  }
  path.leaf_id = node->id;
  path.prediction = node->majority();
  path.leaf_counts = node->class_counts;
  return path;
}

void DecisionTree::check_path(const DecisionPath& path) const {
  int expected = root_;
  for (std::size_t i = 0; i < path.steps.size(); ++i) {
    const PathStep& step = path.steps[i];
    if (step.node_id != expected) throw TreeError(fmt::format("path step {} does not follow the tree", i));
    const TreeNode& node = this->node(step.node_id);
    if (node.leaf || node.feature != step.feature || node.threshold != step.threshold) {
      throw TreeError(fmt::format("path step {} does not match node {}", i, node.id));
    }
    const bool goes_left = step.feature_value <= step.threshold;
    if (goes_left != (step.branch == Branch::kLeft)) {
      throw TreeError(fmt::format("path step {} takes the wrong branch", i));
    }
    expected = goes_left ? node.left : node.right;
  }
  if (path.leaf_id != expected || !node(expected).leaf) throw TreeError("path does not end at its leaf");
  if (path.prediction != node(expected).majority()) throw TreeError("path prediction does not match leaf");
}

DecisionTree train(const Dataset& train_set, const TrainParams& params, TrainingInfo info) {
  if (params.max_depth < 1) throw TreeError("max_depth must be at least 1");
  info.seed = params.seed;
  info.train_size = train_set.size();
  TreeBuilder builder(train_set, params);
  return DecisionTree(train_set.schema(), builder.build(), 0, params.max_depth, std::move(info),
                      train_set.domain());
}

double gini(std::span<const std::size_t> counts) {
  double total = 0.0;
  for (auto c : counts) total += static_cast<double>(c);
  if (total == 0.0) return 0.0;
  double sum_sq = 0.0;
  for (auto c : counts) {
    const double p = static_cast<double>(c) / total;
    sum_sq += p * p;
  }
  return 1.0 - sum_sq;
}

double impurity_decrease(std::span<const std::size_t> parent, std::span<const std::size_t> left,
                         std::span<const std::size_t> right) {
  auto total = [](std::span<const std::size_t> c) {
    return static_cast<double>(std::accumulate(c.begin(), c.end(), std::size_t{0}));
  };
  const double n = total(parent);
  if (n == 0.0) return 0.0;
  return gini(parent) - total(left) / n * gini(left) - total(right) / n * gini(right);
}

double impurity_decrease(const DecisionTree& tree, int node_id) {
  const TreeNode& node = tree.node(node_id);
  if (node.leaf) throw TreeError(fmt::format("node {} is a leaf", node_id));
  return impurity_decrease(node.class_counts, tree.node(node.left).class_counts,
                           tree.node(node.right).class_counts);
}

std::vector<std::size_t> top_gain_steps(const DecisionPath& path, const DecisionTree& tree,
                                        std::size_t k) {
  std::vector<double> gains;
  std::vector<std::size_t> order;
  for (std::size_t i = 0; i < path.steps.size(); ++i) {
    gains.push_back(impurity_decrease(tree, path.steps[i].node_id));
    order.push_back(i);
  }
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return gains[a] > gains[b]; });
  order.resize(std::min(k, order.size()));
  return order;
}

double accuracy(const DecisionTree& tree, const Dataset& data) {
  std::size_t hits = 0;
  for (const auto& s : data.samples()) {
    if (tree.predict(s.values).prediction == s.label) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(data.size());
}

json to_json(const DecisionTree& tree) {
  json nodes = json::array();
  for (const auto& n : tree.nodes()) {
    json item = {{"id", n.id}, {"leaf", n.leaf}, {"counts", n.class_counts}};
    if (!n.leaf) {
      item["feature"] = n.feature;
      item["threshold"] = n.threshold;
      item["left"] = n.left;
      item["right"] = n.right;
    }
    nodes.push_back(std::move(item));
  }
  json domain = json::array();
  for (const auto& r : tree.domain()) domain.push_back({r.min, r.max});
  const auto& info = tree.info();
  return {
      {"format", kTreeFormat},
      {"criterion", "gini"},
      {"schema", tree.schema().to_json()},
      {"max_depth", tree.max_depth()},
      {"root", tree.root_id()},
      {"training",
       {{"seed", info.seed},
        {"train_size", info.train_size},
        {"data_source", info.data_source},
        {"test_fraction", info.test_fraction},
        {"split_seed", info.split_seed},
        {"stratified", info.stratified}}},
      {"domain", domain},
      {"nodes", nodes},
  };
}

DecisionTree tree_from_json(const json& doc) {
  if (!doc.is_object()) throw TreeError("tree document is not an object");
  if (doc.value("format", "") != kTreeFormat) {
    throw TreeError(fmt::format("unsupported tree format (expected {})", kTreeFormat));
  }
  if (!doc.contains("root")) throw TreeError("tree document has no root");
  try {
    std::vector<TreeNode> nodes;
    for (const auto& item : doc.at("nodes")) {
      TreeNode n;
      n.id = item.at("id").get<int>();
      n.leaf = item.at("leaf").get<bool>();
      n.class_counts = item.at("counts").get<std::vector<std::size_t>>();
      if (!n.leaf) {
        n.feature = item.at("feature").get<std::size_t>();
        n.threshold = item.at("threshold").get<double>();
        n.left = item.at("left").get<int>();
        n.right = item.at("right").get<int>();
      }
      nodes.push_back(std::move(n));
    }
    std::vector<FeatureRange> domain;
    for (const auto& r : doc.at("domain")) domain.push_back({r.at(0).get<double>(), r.at(1).get<double>()});
    TrainingInfo info;
    const auto& t = doc.at("training");
    info.seed = t.value("seed", std::uint64_t{0});
    info.train_size = t.value("train_size", std::size_t{0});
    info.data_source = t.value("data_source", "");
    info.test_fraction = t.value("test_fraction", 0.0);
    info.split_seed = t.value("split_seed", std::uint64_t{0});
    info.stratified = t.value("stratified", true);
    return DecisionTree(FeatureSchema::from_json(doc.at("schema")), std::move(nodes),
                        doc.at("root").get<int>(), doc.at("max_depth").get<int>(), std::move(info),
                        std::move(domain));
  } catch (const json::exception& e) {
    throw TreeError(fmt::format("malformed tree document: {}", e.what()));
  }
}

std::string to_text(const DecisionTree& tree) {
  std::string out;
  render(tree, tree.root_id(), 0, out);
  return out;
}

}  // namespace dte
