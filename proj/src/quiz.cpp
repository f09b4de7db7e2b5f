#include "dte/quiz.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include <fmt/format.h>

#include "dte/error.hpp"
#include "dte/format.hpp"

namespace dte {
namespace {

using nlohmann::json;

std::string question_text(const FeatureSpec& feature, Relation relation, double value) {
  const std::string shown = with_unit(format_sig4(value), feature.unit);
  const char* change = relation == Relation::kSmaller  ? "significantly smaller"
                       : relation == Relation::kLarger ? "significantly larger"
                                                       : "slightly different";
  return fmt::format("If the {} had been {} (such as {}), would the outcome have been the same?", feature.name,
                     change, shown);
}

// A second in-interval value when the interval midpoint coincides with the
// sample's own value.
std::optional<double> alternative_inside(const FeatureInterval& iv, const FeatureRange& domain, double x) {
  const double lo = std::max(iv.lo, domain.min);
  const double hi = std::min(iv.hi, domain.max);
  for (double candidate : {x + (hi - x) / 2.0, lo + (x - lo) / 2.0, hi}) {
    const double r = round_sig4(candidate);
    if (iv.contains(r) && r != x) return r;
    if (iv.contains(candidate) && candidate != x) return candidate;
  }
  return std::nullopt;
}

double sample_std(std::span<const double> values, double mean) {
  if (values.size() < 2) return 0.0;
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  return std::sqrt(ss / static_cast<double>(values.size() - 1));
}

}  // namespace

std::string_view to_string(Relation relation) {
  switch (relation) {
    case Relation::kSmaller:
      return "smaller";
    case Relation::kLarger:
      return "larger";
    case Relation::kWithin:
      return "within";
  }
  return "within";
}

std::vector<QuizQuestion> gen_quiz(const DecisionTree& tree, const DecisionPath& path, const ConstraintSet& cs,
                                   std::span<const double> x, const QuizPolicy& policy) {
  tree.check_path(path);
  const DecisionPath actual = tree.predict(x);
  if (actual.id() != path.id()) throw DataError("sample does not traverse the given path");
  const ConstraintSet expected = extract_constraints(path);
  if (expected.intervals != cs.intervals) throw DataError("constraint set does not belong to the path");

  const auto& schema = tree.schema();
  std::vector<std::size_t> features;
  std::set<std::size_t> seen;
  for (auto step : top_gain_steps(path, tree, path.steps.size())) {
    const std::size_t f = path.steps[step].feature;
    if (seen.insert(f).second) features.push_back(f);
  }
  if (policy.include_untested) {
    for (std::size_t f = 0; f < schema.feature_count(); ++f) {
      if (!seen.count(f)) features.push_back(f);
    }
  }

  std::vector<QuizQuestion> questions;
  std::vector<double> y(x.begin(), x.end());
  auto add = [&](std::size_t f, Relation relation, double value) {
    y[f] = value;
    const DecisionPath cf = tree.predict(y);
    y[f] = x[f];
    QuizQuestion q;
    q.id = fmt::format("f{}-{}", f, to_string(relation));
    q.feature = f;
    q.true_value = x[f];
    q.counterfactual_value = value;
    q.relation = relation;
    q.text = question_text(schema.features[f], relation, value);
    q.correct_answer = cf.prediction == path.prediction;
    q.oracle = {cf.prediction, cf.id()};
    if (policy.only_label_flipping && relation != Relation::kWithin && q.correct_answer) return;
    questions.push_back(std::move(q));
  };

  const ProbePolicy probe_policy{policy.rho};
  for (auto f : features) {
    const FeatureRange& domain = tree.domain()[f];
    const Probe probe = feasible_probe(cs, f, domain, probe_policy);
    const FeatureInterval* iv = cs.find(f);
    if (iv == nullptr) {
      // Untested feature: any value keeps the path.
      double value = probe.inside;
      if (value == x[f]) value = x[f] == domain.max ? domain.min : domain.max;
      if (value == x[f]) continue;
      add(f, value < x[f] ? Relation::kSmaller : Relation::kLarger, value);
      continue;
    }
    auto it = policy.per_feature.find(f);
    const ProbeToggle toggle = it == policy.per_feature.end() ? policy.probes : it->second;
    if (toggle.below && probe.below) add(f, Relation::kSmaller, *probe.below);
    if (toggle.above && probe.above) add(f, Relation::kLarger, *probe.above);
    if (toggle.within) {
      std::optional<double> value = probe.inside;
      if (*value == x[f]) value = alternative_inside(*iv, domain, x[f]);
      if (value) add(f, Relation::kWithin, *value);
    }
  }

  if (policy.max_questions && questions.size() > *policy.max_questions) {
    questions.resize(*policy.max_questions);
  }
  std::vector<std::size_t> order(questions.size());
  std::iota(order.begin(), order.end(), 0);
  seeded_shuffle(order, policy.seed);
  std::vector<QuizQuestion> shuffled;
  shuffled.reserve(questions.size());
  for (auto i : order) shuffled.push_back(std::move(questions[i]));
  return shuffled;
}

std::string_view to_string(Choice choice) {
  switch (choice) {
    case Choice::kTrue:
      return "True";
    case Choice::kFalse:
      return "False";
    case Choice::kUnsure:
      return "Unsure";
  }
  return "Unsure";
}

Choice choice_from_string(std::string_view text) {
  if (text == "True" || text == "true" || text == "t" || text == "T") return Choice::kTrue;
  if (text == "False" || text == "false" || text == "f" || text == "F") return Choice::kFalse;
  if (text == "Unsure" || text == "unsure" || text == "u" || text == "U") return Choice::kUnsure;
  throw DataError(fmt::format("invalid choice '{}' (expected True, False or Unsure)", text));
}

std::string_view to_string(RatingLevel level) { return kRatingLevels[static_cast<std::size_t>(level)]; }

RatingLevel rating_from_string(std::string_view text) {
  for (std::size_t i = 0; i < kRatingLevels.size(); ++i) {
    if (text == kRatingLevels[i]) return static_cast<RatingLevel>(i);
  }
  if (text == "low" || text == "l") return RatingLevel::kLow;
  if (text == "medium" || text == "m") return RatingLevel::kMedium;
  if (text == "high" || text == "h") return RatingLevel::kHigh;
  throw DataError(fmt::format("invalid rating '{}' (expected Low, Medium or High)", text));
}

bool AnswerSheet::ratings_complete() const {
  return std::all_of(ratings.begin(), ratings.end(), [](const auto& r) { return r.has_value(); });
}

QuizScore score(const AnswerSheet& sheet, std::span<const QuizQuestion> questions) {
  QuizScore s{0, questions.size()};
  for (const auto& q : questions) {
    auto it = sheet.choices.find(q.id);
    if (it == sheet.choices.end()) throw DataError(fmt::format("missing answer for question '{}'", q.id));
    const bool right = (it->second == Choice::kTrue && q.correct_answer) ||
                       (it->second == Choice::kFalse && !q.correct_answer);
    if (right) ++s.correct;
  }
  return s;
}

std::string ScoreSummary::render() const { return fmt::format("{:.1f} ± {:.1f} (out of {})", mean, stddev, total); }

ScoreSummary aggregate(std::span<const QuizScore> scores) {
  if (scores.empty()) throw DataError("no scores to aggregate");
  const std::size_t total = scores.front().total;
  std::vector<double> values;
  for (const auto& s : scores) {
    if (s.total != total) throw DataError("scores have different question totals");
    values.push_back(static_cast<double>(s.correct));
  }
  const double mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
  return {mean, sample_std(values, mean), total, scores.size()};
}

PercentGrid rating_percentages(std::span<const AnswerSheet> sheets) {
  if (sheets.empty()) throw DataError("no sheets to tabulate");
  PercentGrid grid{};
  for (const auto& sheet : sheets) {
    if (!sheet.ratings_complete()) throw DataError("sheet has incomplete ratings");
    for (std::size_t d = 0; d < 3; ++d) grid[d][static_cast<std::size_t>(*sheet.ratings[d])] += 1.0;
  }
  for (auto& row : grid) {
    for (auto& cell : row) cell = 100.0 * cell / static_cast<double>(sheets.size());
  }
  return grid;
}

RatingTable tabulate_ratings(const std::vector<std::pair<std::string, std::vector<AnswerSheet>>>& by_approach) {
  RatingTable table;
  for (const auto& [approach, sheets] : by_approach) {
    if (sheets.empty()) throw DataError(fmt::format("no rated sheets for '{}'", approach));
    std::map<std::string, std::vector<AnswerSheet>> by_evaluator;
    for (const auto& s : sheets) by_evaluator[s.evaluator].push_back(s);

    std::vector<PercentGrid> grids;
    for (const auto& [evaluator, own] : by_evaluator) grids.push_back(rating_percentages(own));

    RatingGrid out{};
    for (std::size_t d = 0; d < 3; ++d) {
      for (std::size_t l = 0; l < 3; ++l) {
        std::vector<double> values;
        for (const auto& g : grids) values.push_back(g[d][l]);
        const double mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
        out[d][l] = {mean, sample_std(values, mean)};
      }
    }
    table.approaches.push_back(approach);
    table.rows[approach] = out;
    table.evaluators[approach] = grids.size();
  }
  return table;
}

std::string render_rating_table(const RatingTable& table) {
  constexpr int kName = 16;
  constexpr int kCell = 13;
  std::string out = fmt::format("{:<{}}", "", kName);
  for (auto dim : kRatingDimensions) out += fmt::format("| {:<{}}", dim, kCell * 3);
  out += "\n";
  out += fmt::format("{:<{}}", "Approach", kName);
  for (std::size_t d = 0; d < 3; ++d) {
    out += "| ";
    for (auto level : kRatingLevels) out += fmt::format("{:<{}}", level, kCell);
  }
  out += "\n";
  for (const auto& approach : table.approaches) {
    out += fmt::format("{:<{}}", approach, kName);
    const auto& grid = table.rows.at(approach);
    for (std::size_t d = 0; d < 3; ++d) {
      out += "| ";
      for (std::size_t l = 0; l < 3; ++l) {
        out += fmt::format("{:<{}}", fmt::format("{:.1f} ± {:.1f}", grid[d][l].mean, grid[d][l].stddev), kCell);
      }
    }
    out += "\n";
  }
  return out;
}

json to_json(const QuizQuestion& q) {
  return {{"id", q.id},
          {"feature", q.feature},
          {"true_value", q.true_value},
          {"counterfactual_value", q.counterfactual_value},
          {"relation", to_string(q.relation)},
          {"text", q.text},
          {"correct_answer", q.correct_answer},
          {"oracle", {{"prediction", q.oracle.prediction}, {"path_id", q.oracle.path_id}}}};
}

json to_wire_json(const QuizQuestion& q) { return {{"id", q.id}, {"text", q.text}}; }

QuizQuestion question_from_json(const json& doc) {
  try {
    QuizQuestion q;
    q.id = doc.at("id").get<std::string>();
    q.feature = doc.at("feature").get<std::size_t>();
    q.true_value = doc.at("true_value").get<double>();
    q.counterfactual_value = doc.at("counterfactual_value").get<double>();
    const auto relation = doc.at("relation").get<std::string>();
    q.relation = relation == "smaller" ? Relation::kSmaller
                 : relation == "larger" ? Relation::kLarger
                                        : Relation::kWithin;
    q.text = doc.at("text").get<std::string>();
    q.correct_answer = doc.at("correct_answer").get<bool>();
    q.oracle.prediction = doc.at("oracle").at("prediction").get<std::size_t>();
    q.oracle.path_id = doc.at("oracle").at("path_id").get<std::string>();
    return q;
  } catch (const json::exception& e) {
    throw DataError(fmt::format("malformed question: {}", e.what()));
  }
}

json to_json(const AnswerSheet& sheet) {
  json choices = json::object();
  for (const auto& [id, c] : sheet.choices) choices[id] = to_string(c);
  json ratings = json::object();
  for (std::size_t d = 0; d < 3; ++d) {
    if (sheet.ratings[d]) ratings[std::string(kRatingKeys[d])] = to_string(*sheet.ratings[d]);
  }
  json doc = {{"evaluator", sheet.evaluator},
              {"approach_label", sheet.approach_label},
              {"choices", choices},
              {"ratings", ratings}};
  if (!sheet.started_at.empty()) doc["started_at"] = sheet.started_at;
  if (!sheet.submitted_at.empty()) doc["submitted_at"] = sheet.submitted_at;
  return doc;
}

AnswerSheet sheet_from_json(const json& doc) {
  if (!doc.is_object()) throw DataError("answer sheet must be a JSON object");
  AnswerSheet sheet;
  try {
    sheet.evaluator = doc.value("evaluator", "");
    sheet.approach_label = doc.value("approach_label", "");
    sheet.started_at = doc.value("started_at", "");
    sheet.submitted_at = doc.value("submitted_at", "");
    if (doc.contains("choices")) {
      for (const auto& [id, c] : doc.at("choices").items()) {
        sheet.choices[id] = choice_from_string(c.get<std::string>());
      }
    }
    if (doc.contains("ratings")) {
      const auto& ratings = doc.at("ratings");
      for (std::size_t d = 0; d < 3; ++d) {
        const std::string key(kRatingKeys[d]);
        if (ratings.contains(key) && !ratings[key].is_null()) {
          sheet.ratings[d] = rating_from_string(ratings[key].get<std::string>());
        }
      }
    }
  } catch (const json::exception& e) {
    throw DataError(fmt::format("malformed answer sheet: {}", e.what()));
  }
  return sheet;
}

}  // namespace dte
