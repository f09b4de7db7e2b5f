#include "dte/constraints.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "dte/error.hpp"
#include "dte/format.hpp"

namespace dte {
namespace {

constexpr int kMaxNudges = 32;

// Rounds `target` for display; if rounding lands on the wrong side of the
// bound, pushes the raw value further out by step and tries again.
template <class Ok>
double rounded_outside(double target, double step, Ok ok) {
  for (int i = 0; i < kMaxNudges; ++i) {
    const double r = round_sig4(target);
    if (ok(r)) return r;
    target += step;
  }
  return target;
}

}  // namespace

const FeatureInterval* ConstraintSet::find(std::size_t feature) const {
  auto it = intervals.find(feature);
  return it == intervals.end() ? nullptr : &it->second;
}

ConstraintSet extract_constraints(const DecisionPath& path) {
  ConstraintSet cs;
  cs.path_id = path.id();
  for (const auto& step : path.steps) {
    auto [it, inserted] = cs.intervals.try_emplace(step.feature, FeatureInterval{step.feature});
    FeatureInterval& iv = it->second;
    if (step.branch == Branch::kLeft) {
      iv.hi = std::min(iv.hi, step.threshold);
    } else {
      iv.lo = std::max(iv.lo, step.threshold);
    }
    if (!(iv.lo < iv.hi)) throw DataError("inconsistent path");
  }
  return cs;
}

bool satisfies(const ConstraintSet& cs, std::span<const double> y) {
  for (double v : y) {
    if (!std::isfinite(v)) throw DataError("non-finite feature value");
  }
  bool ok = true;
  for (const auto& [feature, iv] : cs.intervals) {
    if (feature >= y.size()) throw DataError("input is narrower than the constrained features");
    ok = ok && iv.contains(y[feature]);
  }
  return ok;
}

Probe feasible_probe(const ConstraintSet& cs, std::size_t feature, const FeatureRange& domain,
                     const ProbePolicy& policy) {
  Probe probe;
  const FeatureInterval* iv = cs.find(feature);
  const double span = domain.span();
  if (iv == nullptr) {
    probe.inside = round_sig4(domain.min + span / 2.0);
    probe.delta = policy.rho * span;
    return probe;
  }
  if (iv->hi < domain.min || iv->lo >= domain.max) {
    throw DataError(fmt::format("interval for feature {} lies outside the feature domain", feature));
  }

  auto offset = [&](double bound) {
    const double scale = span > 0.0 ? span : std::max(1.0, std::fabs(bound));
    return std::max(std::numeric_limits<double>::epsilon() * std::fabs(bound), policy.rho * scale);
  };

  const double lo = std::max(iv->lo, domain.min);
  const double hi = std::min(iv->hi, domain.max);
  const double mid = lo + (hi - lo) / 2.0;
  const double inside = round_sig4(mid);
  probe.inside = iv->contains(inside) ? inside : (iv->contains(mid) ? mid : hi);

  if (std::isfinite(iv->lo)) {
    const double delta = offset(iv->lo);
    probe.delta = std::max(probe.delta, delta);
    double target = iv->lo - delta;
    if (domain.min < iv->lo) target = std::max(target, domain.min);
    probe.below = rounded_outside(target, -delta / 10.0, [&](double v) { return v <= iv->lo; });
  }
  if (std::isfinite(iv->hi)) {
    const double delta = offset(iv->hi);
    probe.delta = std::max(probe.delta, delta);
    double target = iv->hi + delta;
    if (domain.max > iv->hi) target = std::min(target, domain.max);
    probe.above = rounded_outside(target, delta / 10.0, [&](double v) { return v > iv->hi; });
  }
  return probe;
}

nlohmann::json to_json(const ConstraintSet& cs) {
  nlohmann::json intervals = nlohmann::json::array();
  for (const auto& [feature, iv] : cs.intervals) {
    intervals.push_back({
        {"feature", feature},
        {"lo", std::isfinite(iv.lo) ? nlohmann::json(iv.lo) : nlohmann::json(nullptr)},
        {"hi", std::isfinite(iv.hi) ? nlohmann::json(iv.hi) : nlohmann::json(nullptr)},
    });
  }
  return {{"path_id", cs.path_id}, {"intervals", intervals}};
}

}  // namespace dte
