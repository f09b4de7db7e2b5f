#pragma once

#include <cstddef>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <string>

#include <nlohmann/json.hpp>

#include "dte/dataset.hpp"
#include "dte/tree.hpp"

namespace dte {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

// Half-open interval (lo, hi]: lo is exclusive (from x > t branches), hi is
// inclusive (from x <= t branches). Infinite bounds mean "unconstrained".
struct FeatureInterval {
  std::size_t feature = 0;
  double lo = -kInf;
  double hi = kInf;

  bool contains(double v) const { return lo < v && v <= hi; }
  bool operator==(const FeatureInterval&) const = default;
};

// The per-feature feasible region of one decision path. An input lies in
// every interval iff it traverses that path.
struct ConstraintSet {
  std::map<std::size_t, FeatureInterval> intervals;
  std::string path_id;

  const FeatureInterval* find(std::size_t feature) const;
  bool empty() const { return intervals.empty(); }
};

ConstraintSet extract_constraints(const DecisionPath& path);

// True iff lo < y[j] <= hi for every interval. Throws DataError on a
// non-finite value or a vector too short for the constrained features.
bool satisfies(const ConstraintSet& cs, std::span<const double> y);

struct ProbePolicy {
  double rho = 0.1;  // exterior offset as a fraction of the domain span
};

// Candidate counterfactual values for one feature, already rounded to 4
// significant digits and checked to sit on the intended side of the bound.
struct Probe {
  double inside = 0.0;
  std::optional<double> below;  // <= lo, present iff lo is finite
  std::optional<double> above;  // > hi, present iff hi is finite
  double delta = 0.0;
};

// Throws DataError when the interval does not meet the domain.
Probe feasible_probe(const ConstraintSet& cs, std::size_t feature, const FeatureRange& domain,
                     const ProbePolicy& policy = {});

nlohmann::json to_json(const ConstraintSet& cs);

}  // namespace dte
