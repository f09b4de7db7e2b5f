// Shared fixtures for the unit and acceptance tests.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include "dte/constraints.hpp"
#include "dte/dataset.hpp"
#include "dte/tree.hpp"

namespace dte::testing {

inline FeatureSchema numbered_schema(std::size_t features, std::size_t classes) {
  FeatureSchema s;
  for (std::size_t j = 0; j < features; ++j) s.features.push_back({"f" + std::to_string(j), "feature " + std::to_string(j), {}});
  for (std::size_t c = 0; c < classes; ++c) s.classes.push_back("c" + std::to_string(c));
  s.target_column = "label";
  return s;
}

// Thresholds sit on a 0.05 grid inside [0, 1] so that grid-valued inputs
// land exactly on split boundaries.
inline double grid_value(std::mt19937_64& rng) {
  return std::uniform_int_distribution<int>(1, 19)(rng) * 0.05;
}

struct RandomTreeSpec {
  int features = 4;
  int classes = 3;
  int max_depth = 4;
  double split_probability = 0.8;
};

// A random but structurally valid tree. Leaf counts are random; internal
// counts are sums of their children.
inline DecisionTree random_tree(std::mt19937_64& rng, const RandomTreeSpec& spec) {
  std::vector<TreeNode> nodes;
  const auto n_features = static_cast<std::size_t>(spec.features);
  const auto n_classes = static_cast<std::size_t>(spec.classes);
  std::uniform_int_distribution<std::size_t> feature(0, n_features - 1);
  std::uniform_int_distribution<std::size_t> count(0, 6);
  std::bernoulli_distribution split(spec.split_probability);
  auto build = [&](auto&& self, int depth) -> int {
    const int id = static_cast<int>(nodes.size());
    nodes.push_back({});
    nodes[id].id = id;
    if (depth < spec.max_depth && (depth == 0 || split(rng))) {
      const std::size_t f = feature(rng);
      const double t = grid_value(rng);
      const int l = self(self, depth + 1);
      const int r = self(self, depth + 1);
      TreeNode& n = nodes[id];
      n.leaf = false;
      n.feature = f;
      n.threshold = t;
      n.left = l;
      n.right = r;
      n.class_counts.assign(n_classes, 0);
      for (std::size_t c = 0; c < n_classes; ++c) {
        n.class_counts[c] = nodes[l].class_counts[c] + nodes[r].class_counts[c];
      }
    } else {
      TreeNode& n = nodes[id];
      n.class_counts.assign(n_classes, 0);
      for (auto& c : n.class_counts) c = count(rng);
      n.class_counts[std::uniform_int_distribution<std::size_t>(0, n_classes - 1)(rng)] += 1;
    }
    return id;
  };
  build(build, 0);
  std::vector<FeatureRange> domain(n_features, FeatureRange{0.0, 1.0});
  return DecisionTree(numbered_schema(n_features, n_classes), std::move(nodes), 0, spec.max_depth, {}, domain);
}

// Inputs drawn half from the threshold grid, half uniformly, with a few
// values just outside the domain.
inline std::vector<double> random_input(std::mt19937_64& rng, std::size_t features) {
  std::vector<double> x(features);
  std::uniform_real_distribution<double> u(-0.1, 1.1);
  std::bernoulli_distribution on_grid(0.5);
  for (auto& v : x) v = on_grid(rng) ? grid_value(rng) : u(rng);
  return x;
}

// Node ids visited by a plain recursive walk; independent of predict().
inline std::string walk_ids(const DecisionTree& tree, const std::vector<double>& x) {
  std::string out;
  int id = tree.root_id();
  while (true) {
    if (!out.empty()) out += '-';
    out += std::to_string(id);
    const TreeNode& n = tree.node(id);
    if (n.leaf) return out;
    id = x[n.feature] <= n.threshold ? n.left : n.right;
  }
}

inline std::size_t walk_prediction(const DecisionTree& tree, const std::vector<double>& x) {
  int id = tree.root_id();
  while (!tree.node(id).leaf) {
    const TreeNode& n = tree.node(id);
    id = x[n.feature] <= n.threshold ? n.left : n.right;
  }
  return tree.node(id).majority();
}

struct BestSplit {
  double gain = 0.0;
  std::size_t feature = 0;
  double threshold = 0.0;
  bool found = false;
};

// Exhaustive root split by the textbook definition: every feature, every
// midpoint between consecutive distinct values, Gini recomputed from
// scratch for each candidate.
inline BestSplit brute_force_root(const Dataset& data) {
  const std::size_t k = data.schema().class_count();
  auto g = [k](const std::vector<const Sample*>& part) {
    if (part.empty()) return 0.0;
    std::vector<double> c(k, 0.0);
    for (const auto* s : part) c[s->label] += 1;
    double sum = 0;
    for (double v : c) sum += (v / part.size()) * (v / part.size());
    return 1.0 - sum;
  };
  std::vector<const Sample*> all;
  for (const auto& s : data.samples()) all.push_back(&s);
  const double parent = g(all);
  BestSplit best;
  for (std::size_t f = 0; f < data.schema().feature_count(); ++f) {
    std::vector<double> vals;
    for (const auto* s : all) vals.push_back(s->values[f]);
    std::sort(vals.begin(), vals.end());
    vals.erase(std::unique(vals.begin(), vals.end()), vals.end());
    for (std::size_t i = 0; i + 1 < vals.size(); ++i) {
      const double t = (vals[i] + vals[i + 1]) / 2;
      std::vector<const Sample*> l, r;
      for (const auto* s : all) (s->values[f] <= t ? l : r).push_back(s);
      const double gain = parent - (double(l.size()) / all.size()) * g(l) - (double(r.size()) / all.size()) * g(r);
      if (gain > best.gain + 1e-12) best = {gain, f, t, true};
    }
  }
  return best;
}

inline Dataset random_dataset(std::mt19937_64& rng, std::size_t n, std::size_t features, std::size_t classes) {
  std::vector<Sample> samples(n);
  std::uniform_int_distribution<int> v(0, 9);
  std::uniform_int_distribution<std::size_t> c(0, classes - 1);
  for (auto& s : samples) {
    s.values.resize(features);
    for (auto& x : s.values) x = v(rng) / 2.0;
    s.label = c(rng);
  }
  return Dataset(numbered_schema(features, classes), std::move(samples));
}

}  // namespace dte::testing
