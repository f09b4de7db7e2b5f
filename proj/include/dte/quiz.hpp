#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "dte/constraints.hpp"
#include "dte/tree.hpp"

namespace dte {

enum class Relation { kSmaller, kLarger, kWithin };

std::string_view to_string(Relation relation);

// Ground truth from re-running inference with the counterfactual value.
struct QuizOracle {
  std::size_t prediction = 0;
  std::string path_id;
};

// "Would the outcome have been the same?" correct_answer is true iff the
// counterfactual input gets the same predicted label as the original.
struct QuizQuestion {
  std::string id;
  std::size_t feature = 0;
  double true_value = 0.0;
  double counterfactual_value = 0.0;
  Relation relation = Relation::kWithin;
  std::string text;
  bool correct_answer = false;
  QuizOracle oracle;
};

struct ProbeToggle {
  bool below = true;
  bool above = true;
  bool within = true;
};

struct QuizPolicy {
  ProbeToggle probes;                               // default for every feature
  std::map<std::size_t, ProbeToggle> per_feature;   // overrides by feature index
  std::optional<std::size_t> max_questions;
  bool include_untested = false;
  // Drop out-of-interval questions whose answer would be True.
  bool only_label_flipping = false;
  std::uint64_t seed = 0;  // presentation order
  double rho = 0.1;        // exterior probe offset, fraction of the domain span
};

// Questions for the features constrained by `cs` (plus untested features if
// requested). Features are visited in decreasing information-gain order so
// that max_questions keeps the most informative ones; the kept questions are
// then shuffled with policy.seed. Throws DataError if cs, path and x do not
// agree with the tree.
std::vector<QuizQuestion> gen_quiz(const DecisionTree& tree, const DecisionPath& path, const ConstraintSet& cs,
                                   std::span<const double> x, const QuizPolicy& policy);

enum class Choice { kTrue, kFalse, kUnsure };
enum class RatingLevel { kLow, kMedium, kHigh };

inline constexpr std::array<std::string_view, 3> kRatingDimensions = {"Readability", "Quality",
                                                                        "Background Knowledge"};
inline constexpr std::array<std::string_view, 3> kRatingKeys = {"readability", "quality", "background_knowledge"};
inline constexpr std::array<std::string_view, 3> kRatingLevels = {"Low", "Medium", "High"};

std::string_view to_string(Choice choice);
Choice choice_from_string(std::string_view text);  // "True"/"False"/"Unsure" or t/f/u
std::string_view to_string(RatingLevel level);
RatingLevel rating_from_string(std::string_view text);

struct AnswerSheet {
  std::string evaluator;
  std::string approach_label;  // blinded label as shown to the evaluator
  std::map<std::string, Choice> choices;  // question id -> choice
  std::array<std::optional<RatingLevel>, 3> ratings;  // indexed like kRatingKeys
  std::string started_at;
  std::string submitted_at;

  bool ratings_complete() const;
};

struct QuizScore {
  std::size_t correct = 0;
  std::size_t total = 0;
  bool operator==(const QuizScore&) const = default;
};

// Counts True-for-true and False-for-false answers; Unsure is never
// correct. Throws DataError naming the first unanswered question.
QuizScore score(const AnswerSheet& sheet, std::span<const QuizQuestion> questions);

struct ScoreSummary {
  double mean = 0.0;
  double stddev = 0.0;  // sample (n-1) standard deviation, 0 for n = 1
  std::size_t total = 0;
  std::size_t evaluators = 0;

  // "12.4 ± 6.2 (out of 25)"
  std::string render() const;
};

// Throws DataError for an empty list or mixed totals.
ScoreSummary aggregate(std::span<const QuizScore> scores);

struct MeanStd {
  double mean = 0.0;
  double stddev = 0.0;
};

// [dimension][level] for dimensions in kRatingDimensions order.
using RatingGrid = std::array<std::array<MeanStd, 3>, 3>;
using PercentGrid = std::array<std::array<double, 3>, 3>;

// Share of one evaluator's sheets at each level, in percent. Each dimension
// row sums to 100.
PercentGrid rating_percentages(std::span<const AnswerSheet> sheets);

struct RatingTable {
  std::vector<std::string> approaches;  // row order
  std::map<std::string, RatingGrid> rows;
  std::map<std::string, std::size_t> evaluators;
};

// Percentages per evaluator, then mean and sample std across evaluators.
// `by_approach` maps a row name to every sheet for that approach (all
// evaluators mixed); sheets are grouped by their evaluator field. Throws
// DataError for an empty group or incomplete ratings.
RatingTable tabulate_ratings(const std::vector<std::pair<std::string, std::vector<AnswerSheet>>>& by_approach);

std::string render_rating_table(const RatingTable& table);

nlohmann::json to_json(const QuizQuestion& q);
// Evaluator-facing form: id and text only.
nlohmann::json to_wire_json(const QuizQuestion& q);
QuizQuestion question_from_json(const nlohmann::json& doc);

nlohmann::json to_json(const AnswerSheet& sheet);
AnswerSheet sheet_from_json(const nlohmann::json& doc);

}  // namespace dte
