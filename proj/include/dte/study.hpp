#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dte/dataset.hpp"
#include "dte/error.hpp"
#include "dte/explanation.hpp"
#include "dte/prompt.hpp"
#include "dte/quiz.hpp"
#include "dte/tree.hpp"

namespace dte {

class StudyError : public Error {
 public:
  enum class Kind { kNotFound, kInvalid, kConflict, kUnauthorized };

  StudyError(Kind kind, const std::string& message) : Error(message), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

struct StudyConfig {
  std::size_t num_samples = 10;
  std::uint64_t seed = 0;
  // Questions per approach across all samples; allocated round-robin over
  // the samples and truncated by information gain. Unset: no cap.
  std::optional<std::size_t> question_budget = 25;
  QuizPolicy quiz;
  PromptConfig llm;
  // Positions in the test split; overrides the random draw when non-empty.
  std::vector<std::size_t> sample_indices;

  nlohmann::json to_json() const;
  static StudyConfig from_json(const nlohmann::json& doc);
};

struct StudySample {
  std::size_t test_index = 0;
  std::vector<double> values;
  std::size_t label = 0;
  std::size_t prediction = 0;
  std::string path_id;
  nlohmann::json constraints;
  std::vector<QuizQuestion> questions;
};

struct StudyItem {
  std::string id;
  std::size_t sample = 0;  // index into Study::samples
  Approach approach = Approach::kRule;
  Explanation explanation;
};

struct Study {
  std::string id;
  std::string tree_id;
  std::string dataset_id;
  std::vector<std::string> classes;
  std::uint64_t seed = 0;
  std::vector<StudySample> samples;
  std::vector<StudyItem> items;
  std::map<Approach, std::string> blinding;  // approach -> "A" / "B"
  nlohmann::json config;
  std::string created_at;

  const StudyItem* find_item(const std::string& item_id) const;
  // Item indices in the order `evaluator` sees them.
  std::vector<std::size_t> order_for(const std::string& evaluator) const;
};

nlohmann::json to_json(const Study& study);
Study study_from_json(const nlohmann::json& doc);

struct Session {
  std::string id;
  std::string study_id;
  std::string evaluator;
  std::vector<std::size_t> order;
  std::map<std::string, AnswerSheet> sheets;  // item id -> submitted sheet

  std::size_t cursor() const { return sheets.size(); }
  bool complete() const { return sheets.size() == order.size(); }
};

struct StudyReport {
  std::string study_id;
  std::size_t completed_sessions = 0;
  // Rows "rule", "llm" and "overall" (both approaches summed).
  std::vector<std::pair<std::string, ScoreSummary>> quiz_scores;
  RatingTable ratings;

  nlohmann::json to_json() const;
  // Quiz score table followed by the rating table.
  std::string render() const;
};

// Generates explanations for both approaches and quizzes for every selected
// test sample. LLM explanations are produced here, once per study.
Study build_study(const std::string& id, const std::string& tree_id, const DecisionTree& tree,
                  const std::string& dataset_id, const Dataset& dataset, const StudyConfig& config);

StudyReport build_report(const Study& study, const std::vector<const Session*>& sessions);

// Resolves tree and dataset ids. The default implementation reads
// `<root>/trees/<id>.json` and `<root>/datasets/<id>.csv` (schema from
// `<id>.schema.json` or the tree), plus the builtin "iris".
class Catalog {
 public:
  virtual ~Catalog() = default;
  virtual std::shared_ptr<const DecisionTree> tree(const std::string& id) const = 0;
  virtual std::shared_ptr<const Dataset> dataset(const std::string& id, const FeatureSchema& schema) const = 0;
};

class DirectoryCatalog : public Catalog {
 public:
  explicit DirectoryCatalog(std::filesystem::path root) : root_(std::move(root)) {}
  std::shared_ptr<const DecisionTree> tree(const std::string& id) const override;
  std::shared_ptr<const Dataset> dataset(const std::string& id, const FeatureSchema& schema) const override;

 private:
  std::filesystem::path root_;
};

// Study state persisted as an append-only JSON Lines event log
// (study_created, session_opened, item_submitted). Mutations are serialized
// through one writer; readers take immutable snapshots.
class StudyService {
 public:
  struct State {
    std::map<std::string, std::shared_ptr<const Study>> studies;
    std::map<std::string, std::shared_ptr<const Session>> sessions;
    std::map<std::pair<std::string, std::string>, std::string> session_index;  // (study, evaluator)
  };

  // Replays `event_log` if it exists. An empty path keeps state in memory.
  StudyService(std::filesystem::path event_log, std::shared_ptr<const Catalog> catalog);

  std::shared_ptr<const Study> create_study(const std::string& tree_id, const std::string& dataset_id,
                                            const StudyConfig& config);
  // One session per (study, evaluator); reopening returns the existing one.
  std::shared_ptr<const Session> open_session(const std::string& study_id, const std::string& evaluator);
  // Evaluator-facing payload for the item at the session cursor, or
  // {"done": true} once every item is submitted.
  nlohmann::json next_item(const std::string& session_id) const;
  // Returns {"accepted", "cursor", "complete"}. Resubmitting an identical
  // sheet is a no-op; a different sheet for a submitted item is a conflict.
  nlohmann::json submit_item(const std::string& session_id, const std::string& item_id, AnswerSheet sheet);
  StudyReport report(const std::string& study_id) const;

  std::shared_ptr<const State> snapshot() const;

  // Rebuilds state from a log without a catalog (replay only needs events).
  static std::shared_ptr<const State> replay(const std::filesystem::path& event_log);

 private:
  void commit(const nlohmann::json& event, std::shared_ptr<State> next);

  std::filesystem::path log_path_;
  std::shared_ptr<const Catalog> catalog_;
  std::mutex writer_;
  mutable std::mutex snapshot_mu_;
  std::shared_ptr<const State> state_;
  std::ofstream log_;
};

}  // namespace dte
