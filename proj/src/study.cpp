#include "dte/study.hpp"

#include <algorithm>
#include <numeric>
#include <sstream>

#include <fmt/format.h>

#include "dte/constraints.hpp"
#include "dte/explain_rules.hpp"
#include "dte/format.hpp"
#include "dte/llm_client.hpp"

namespace dte {
namespace {

using nlohmann::json;
using Kind = StudyError::Kind;

std::string display_name(const std::string& row) {
  if (row == "rule") return "Rule-based";
  if (row == "llm") return "LLM-based";
  if (row == "overall") return "Overall";
  return row;
}

bool valid_id(const std::string& id) {
  return !id.empty() && id.size() <= 128 && id.front() != '.' &&
         std::all_of(id.begin(), id.end(), [](unsigned char c) {
           return std::isalnum(c) || c == '-' || c == '_' || c == '.';
         });
}

json session_to_json(const Session& s) {
  return {{"id", s.id}, {"study_id", s.study_id}, {"evaluator", s.evaluator}, {"order", s.order}};
}

bool same_answers(const AnswerSheet& a, const AnswerSheet& b) {
  return a.choices == b.choices && a.ratings == b.ratings;
}

// Applies one event to `state`. Throws StudyError when the event is not
// consistent with the state it is applied to.
void apply_event(StudyService::State& state, const json& event) {
  const std::string type = event.at("type").get<std::string>();
  if (type == "study_created") {
    auto study = std::make_shared<Study>(study_from_json(event.at("study")));
    if (state.studies.count(study->id)) throw StudyError(Kind::kConflict, "study already exists");
    state.studies.emplace(study->id, std::move(study));
  } else if (type == "session_opened") {
    const auto& doc = event.at("session");
    auto session = std::make_shared<Session>();
    session->id = doc.at("id").get<std::string>();
    session->study_id = doc.at("study_id").get<std::string>();
    session->evaluator = doc.at("evaluator").get<std::string>();
    session->order = doc.at("order").get<std::vector<std::size_t>>();
    if (!state.studies.count(session->study_id)) throw StudyError(Kind::kNotFound, "unknown study");
    if (state.sessions.count(session->id)) throw StudyError(Kind::kConflict, "session already exists");
    state.session_index[{session->study_id, session->evaluator}] = session->id;
    state.sessions.emplace(session->id, std::move(session));
  } else if (type == "item_submitted") {
    const auto id = event.at("session_id").get<std::string>();
    auto it = state.sessions.find(id);
    if (it == state.sessions.end()) throw StudyError(Kind::kNotFound, "unknown session");
    auto session = std::make_shared<Session>(*it->second);
    session->sheets[event.at("item_id").get<std::string>()] = sheet_from_json(event.at("sheet"));
    it->second = std::move(session);
  } else {
    throw StudyError(Kind::kInvalid, fmt::format("unknown event type '{}'", type));
  }
}

std::vector<std::size_t> allocate_budget(const std::vector<std::size_t>& available, std::size_t budget) {
  std::vector<std::size_t> take(available.size(), 0);
  bool progress = true;
  while (budget > 0 && progress) {
    progress = false;
    for (std::size_t i = 0; i < available.size() && budget > 0; ++i) {
      if (take[i] < available[i]) {
        ++take[i];
        --budget;
        progress = true;
      }
    }
  }
  return take;
}

}  // namespace

json StudyConfig::to_json() const {
  json quiz_doc = {{"below", quiz.probes.below},
                   {"above", quiz.probes.above},
                   {"within", quiz.probes.within},
                   {"include_untested", quiz.include_untested},
                   {"only_label_flipping", quiz.only_label_flipping},
                   {"seed", quiz.seed},
                   {"rho", quiz.rho}};
  if (quiz.max_questions) quiz_doc["max_questions"] = *quiz.max_questions;
  return {{"num_samples", num_samples},
          {"seed", seed},
          {"question_budget", question_budget ? json(*question_budget) : json(nullptr)},
          {"quiz", quiz_doc},
          {"llm",
           {{"audience", to_string(llm.audience)},
            {"top_gain_k", llm.top_gain_k},
            {"model", llm.model},
            {"temperature", llm.temperature},
            {"max_tokens", llm.max_tokens},
            {"endpoint", llm.endpoint},
            {"api_key_env", llm.api_key_env},
            {"mock", llm.mock},
            {"max_attempts", llm.max_attempts},
            {"initial_backoff_ms", llm.initial_backoff.count()},
            {"timeout_s", llm.timeout.count()}}},
          {"sample_indices", sample_indices}};
}

StudyConfig StudyConfig::from_json(const json& doc) {
  StudyConfig c;
  if (doc.is_null()) return c;
  if (!doc.is_object()) throw StudyError(Kind::kInvalid, "study config must be an object");
  try {
    c.num_samples = doc.value("num_samples", c.num_samples);
    c.seed = doc.value("seed", c.seed);
    if (doc.contains("question_budget")) {
      c.question_budget = doc["question_budget"].is_null()
                              ? std::nullopt
                              : std::optional<std::size_t>(doc["question_budget"].get<std::size_t>());
    }
    if (doc.contains("quiz")) {
      const auto& q = doc["quiz"];
      c.quiz.probes.below = q.value("below", true);
      c.quiz.probes.above = q.value("above", true);
      c.quiz.probes.within = q.value("within", true);
      c.quiz.include_untested = q.value("include_untested", false);
      c.quiz.only_label_flipping = q.value("only_label_flipping", false);
      c.quiz.seed = q.value("seed", std::uint64_t{0});
      c.quiz.rho = q.value("rho", 0.1);
      if (q.contains("max_questions") && !q["max_questions"].is_null()) {
        c.quiz.max_questions = q["max_questions"].get<std::size_t>();
      }
    }
    if (doc.contains("llm")) {
      const auto& l = doc["llm"];
      c.llm.audience = audience_from_string(l.value("audience", "novice"));
      c.llm.top_gain_k = l.value("top_gain_k", c.llm.top_gain_k);
      c.llm.model = l.value("model", c.llm.model);
      c.llm.temperature = l.value("temperature", c.llm.temperature);
      c.llm.max_tokens = l.value("max_tokens", c.llm.max_tokens);
      c.llm.endpoint = l.value("endpoint", c.llm.endpoint);
      c.llm.api_key_env = l.value("api_key_env", c.llm.api_key_env);
      c.llm.mock = l.value("mock", c.llm.mock);
      c.llm.max_attempts = l.value("max_attempts", c.llm.max_attempts);
      c.llm.initial_backoff = std::chrono::milliseconds(l.value("initial_backoff_ms", 500));
      c.llm.timeout = std::chrono::seconds(l.value("timeout_s", 60));
    }
    if (doc.contains("sample_indices")) c.sample_indices = doc["sample_indices"].get<std::vector<std::size_t>>();
  } catch (const json::exception& e) {
    throw StudyError(Kind::kInvalid, fmt::format("malformed study config: {}", e.what()));
  } catch (const Error& e) {
    throw StudyError(Kind::kInvalid, e.what());
  }
  return c;
}

const StudyItem* Study::find_item(const std::string& item_id) const {
  for (const auto& item : items) {
    if (item.id == item_id) return &item;
  }
  return nullptr;
}

std::vector<std::size_t> Study::order_for(const std::string& evaluator) const {
  std::vector<std::size_t> order(items.size());
  std::iota(order.begin(), order.end(), 0);
  seeded_shuffle(order, seed ^ fnv1a(evaluator));
  return order;
}

json to_json(const Study& study) {
  json samples = json::array();
  for (const auto& s : study.samples) {
    json questions = json::array();
    for (const auto& q : s.questions) questions.push_back(to_json(q));
    samples.push_back({{"test_index", s.test_index},
                       {"values", s.values},
                       {"label", s.label},
                       {"prediction", s.prediction},
                       {"path_id", s.path_id},
                       {"constraints", s.constraints},
                       {"questions", questions}});
  }
  json items = json::array();
  for (const auto& item : study.items) {
    items.push_back({{"id", item.id},
                     {"sample", item.sample},
                     {"approach", to_string(item.approach)},
                     {"explanation", to_json(item.explanation)}});
  }
  json blinding = json::object();
  for (const auto& [approach, label] : study.blinding) blinding[std::string(to_string(approach))] = label;
  return {{"id", study.id},           {"tree_id", study.tree_id}, {"dataset_id", study.dataset_id},
          {"classes", study.classes}, {"seed", study.seed},       {"samples", samples},
          {"items", items},           {"blinding", blinding},     {"config", study.config},
          {"created_at", study.created_at}};
}

Study study_from_json(const json& doc) {
  try {
    Study study;
    study.id = doc.at("id").get<std::string>();
    study.tree_id = doc.at("tree_id").get<std::string>();
    study.dataset_id = doc.at("dataset_id").get<std::string>();
    study.classes = doc.at("classes").get<std::vector<std::string>>();
    study.seed = doc.at("seed").get<std::uint64_t>();
    for (const auto& s : doc.at("samples")) {
      StudySample sample;
      sample.test_index = s.at("test_index").get<std::size_t>();
      sample.values = s.at("values").get<std::vector<double>>();
      sample.label = s.at("label").get<std::size_t>();
      sample.prediction = s.at("prediction").get<std::size_t>();
      sample.path_id = s.at("path_id").get<std::string>();
      sample.constraints = s.at("constraints");
      for (const auto& q : s.at("questions")) sample.questions.push_back(question_from_json(q));
      study.samples.push_back(std::move(sample));
    }
    for (const auto& i : doc.at("items")) {
      StudyItem item;
      item.id = i.at("id").get<std::string>();
      item.sample = i.at("sample").get<std::size_t>();
      item.approach = approach_from_string(i.at("approach").get<std::string>());
      item.explanation = explanation_from_json(i.at("explanation"));
      if (item.sample >= study.samples.size()) throw StudyError(Kind::kInvalid, "item refers to unknown sample");
      study.items.push_back(std::move(item));
    }
    for (const auto& [approach, label] : doc.at("blinding").items()) {
      study.blinding[approach_from_string(approach)] = label.get<std::string>();
    }
    study.config = doc.value("config", json::object());
    study.created_at = doc.value("created_at", "");
    return study;
  } catch (const json::exception& e) {
    throw StudyError(Kind::kInvalid, fmt::format("malformed study document: {}", e.what()));
  }
}

Study build_study(const std::string& id, const std::string& tree_id, const DecisionTree& tree,
                  const std::string& dataset_id, const Dataset& dataset, const StudyConfig& config) {
  if (dataset.schema().feature_count() != tree.schema().feature_count()) {
    throw StudyError(Kind::kInvalid, "dataset does not match the tree's schema");
  }
  if (config.num_samples == 0 && config.sample_indices.empty()) {
    throw StudyError(Kind::kInvalid, "study needs at least one sample");
  }
  const auto& info = tree.info();
  std::optional<SplitResult> parts;
  if (info.test_fraction > 0.0 && info.test_fraction < 1.0) {
    parts = split(dataset, info.test_fraction, info.split_seed, info.stratified);
  }
  const Dataset& pool = parts ? parts->test : dataset;

  std::vector<std::size_t> chosen = config.sample_indices;
  if (chosen.empty()) {
    std::vector<std::size_t> all(pool.size());
    std::iota(all.begin(), all.end(), 0);
    seeded_shuffle(all, config.seed);
    all.resize(std::min(config.num_samples, all.size()));
    std::sort(all.begin(), all.end());
    chosen = std::move(all);
  }

  Study study;
  study.id = id;
  study.tree_id = tree_id;
  study.dataset_id = dataset_id;
  study.classes = tree.schema().classes;
  study.seed = config.seed;
  study.config = config.to_json();
  study.created_at = utc_timestamp();

  std::vector<DecisionPath> paths;
  std::vector<ConstraintSet> sets;
  std::vector<std::size_t> available;
  for (auto index : chosen) {
    if (index >= pool.size()) throw StudyError(Kind::kInvalid, fmt::format("sample index {} out of range", index));
    const Sample& sample = pool.sample(index);
    DecisionPath path = tree.predict(sample.values);
    ConstraintSet cs = extract_constraints(path);
    QuizPolicy uncapped = config.quiz;
    uncapped.max_questions.reset();
    available.push_back(gen_quiz(tree, path, cs, sample.values, uncapped).size());
    StudySample s;
    s.test_index = index;
    s.values = sample.values;
    s.label = sample.label;
    s.prediction = path.prediction;
    s.path_id = path.id();
    s.constraints = to_json(cs);
    study.samples.push_back(std::move(s));
    paths.push_back(std::move(path));
    sets.push_back(std::move(cs));
  }

  std::vector<std::size_t> caps = available;
  if (config.question_budget) caps = allocate_budget(available, *config.question_budget);
  std::vector<StudyItem> items;
  for (std::size_t i = 0; i < study.samples.size(); ++i) {
    StudySample& s = study.samples[i];
    QuizPolicy policy = config.quiz;
    policy.max_questions = config.quiz.max_questions ? std::min(*config.quiz.max_questions, caps[i]) : caps[i];
    policy.seed = config.quiz.seed + i;
    s.questions = gen_quiz(tree, paths[i], sets[i], s.values, policy);

    const std::string sample_id = fmt::format("test-{}", s.test_index);
    items.push_back({"", i, Approach::kRule, rule_explain(paths[i], tree, sample_id)});
    items.push_back({"", i, Approach::kLlm, explain_with_llm(tree, paths[i], config.llm, sample_id)});
  }

  // Opaque item ids: position after a seeded shuffle, so neither the id
  // nor the list order reveals the approach.
  std::vector<std::size_t> order(items.size());
  std::iota(order.begin(), order.end(), 0);
  seeded_shuffle(order, config.seed ^ 0x5DEECE66DULL);
  for (std::size_t k = 0; k < order.size(); ++k) {
    StudyItem item = items[order[k]];
    item.id = fmt::format("item-{}", k + 1);
    study.items.push_back(std::move(item));
  }

  std::vector<std::size_t> coin{0, 1};
  seeded_shuffle(coin, config.seed ^ 0xB11DULL);
  study.blinding[Approach::kRule] = coin[0] == 0 ? "A" : "B";
  study.blinding[Approach::kLlm] = coin[0] == 0 ? "B" : "A";
  return study;
}

StudyReport build_report(const Study& study, const std::vector<const Session*>& sessions) {
  StudyReport report;
  report.study_id = study.id;
  std::vector<QuizScore> rule_scores, llm_scores, overall_scores;
  std::vector<AnswerSheet> rule_sheets, llm_sheets;
  for (const Session* session : sessions) {
    if (!session->complete()) continue;
    ++report.completed_sessions;
    QuizScore rule{}, llm{};
    for (const auto& item : study.items) {
      AnswerSheet sheet = session->sheets.at(item.id);
      sheet.evaluator = session->evaluator;
      const QuizScore s = score(sheet, study.samples[item.sample].questions);
      QuizScore& target = item.approach == Approach::kRule ? rule : llm;
      target.correct += s.correct;
      target.total += s.total;
      (item.approach == Approach::kRule ? rule_sheets : llm_sheets).push_back(std::move(sheet));
    }
    rule_scores.push_back(rule);
    llm_scores.push_back(llm);
    overall_scores.push_back({rule.correct + llm.correct, rule.total + llm.total});
  }
  if (report.completed_sessions == 0) throw StudyError(Kind::kConflict, "no completed sessions");
  report.quiz_scores = {{"rule", aggregate(rule_scores)},
                        {"llm", aggregate(llm_scores)},
                        {"overall", aggregate(overall_scores)}};
  report.ratings = tabulate_ratings({{"rule", rule_sheets}, {"llm", llm_sheets}});
  return report;
}

json StudyReport::to_json() const {
  json scores = json::array();
  for (const auto& [row, s] : quiz_scores) {
    scores.push_back({{"approach", row},
                      {"label", display_name(row)},
                      {"mean", s.mean},
                      {"std", s.stddev},
                      {"total", s.total},
                      {"evaluators", s.evaluators},
                      {"rendered", s.render()}});
  }
  json ratings_doc = json::array();
  for (const auto& approach : ratings.approaches) {
    json cells = json::object();
    const auto& grid = ratings.rows.at(approach);
    for (std::size_t d = 0; d < 3; ++d) {
      json levels = json::object();
      for (std::size_t l = 0; l < 3; ++l) {
        levels[std::string(kRatingLevels[l])] = {{"mean", grid[d][l].mean}, {"std", grid[d][l].stddev}};
      }
      cells[std::string(kRatingDimensions[d])] = levels;
    }
    ratings_doc.push_back({{"approach", approach},
                           {"label", display_name(approach)},
                           {"evaluators", ratings.evaluators.at(approach)},
                           {"cells", cells}});
  }
  return {{"study_id", study_id},
          {"completed_sessions", completed_sessions},
          {"quiz_scores", scores},
          {"ratings", ratings_doc},
          {"text", render()}};
}

std::string StudyReport::render() const {
  std::string out = fmt::format("Study {}: {} completed session(s)\n\nHuman evaluators' quiz scores\n", study_id,
                                completed_sessions);
  out += fmt::format("{:<24}{}\n", "Explanation Approach", "Quiz Score");
  for (const auto& [row, s] : quiz_scores) out += fmt::format("{:<24}{}\n", display_name(row), s.render());

  RatingTable named = ratings;
  named.approaches.clear();
  named.rows.clear();
  for (const auto& approach : ratings.approaches) {
    named.approaches.push_back(display_name(approach));
    named.rows[display_name(approach)] = ratings.rows.at(approach);
  }
  out += "\nQualitative ratings (% of items per evaluator, mean ± std across evaluators)\n";
  out += render_rating_table(named);
  return out;
}

std::shared_ptr<const DecisionTree> DirectoryCatalog::tree(const std::string& id) const {
  if (!valid_id(id)) return nullptr;
  const auto path = root_ / "trees" / (id + ".json");
  std::ifstream in(path);
  if (!in) return nullptr;
  try {
    return std::make_shared<const DecisionTree>(tree_from_json(json::parse(in)));
  } catch (const json::parse_error& e) {
    throw TreeError(fmt::format("tree '{}': {}", id, e.what()));
  }
}

std::shared_ptr<const Dataset> DirectoryCatalog::dataset(const std::string& id, const FeatureSchema& schema) const {
  if (id == "iris") return std::make_shared<const Dataset>(builtin_iris());
  if (!valid_id(id)) return nullptr;
  const auto csv = root_ / "datasets" / (id + ".csv");
  if (!std::filesystem::exists(csv)) return nullptr;
  const auto schema_file = root_ / "datasets" / (id + ".schema.json");
  const FeatureSchema resolved = std::filesystem::exists(schema_file) ? FeatureSchema::load(schema_file) : schema;
  return std::make_shared<const Dataset>(load_csv(csv, resolved, {{}, NaPolicy::kDrop}).dataset);
}

StudyService::StudyService(std::filesystem::path event_log, std::shared_ptr<const Catalog> catalog)
    : log_path_(std::move(event_log)), catalog_(std::move(catalog)) {
  if (!log_path_.empty() && std::filesystem::exists(log_path_)) {
    state_ = replay(log_path_);
  } else {
    state_ = std::make_shared<const State>();
  }
  if (!log_path_.empty()) {
    if (log_path_.has_parent_path()) std::filesystem::create_directories(log_path_.parent_path());
    log_.open(log_path_, std::ios::app | std::ios::binary);
    if (!log_) throw Error(fmt::format("cannot open event log '{}'", log_path_.string()));
  }
}

std::shared_ptr<const StudyService::State> StudyService::replay(const std::filesystem::path& event_log) {
  auto state = std::make_shared<State>();
  std::ifstream in(event_log, std::ios::binary);
  if (!in) throw Error(fmt::format("cannot open event log '{}'", event_log.string()));
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      apply_event(*state, json::parse(line));
    } catch (const std::exception& e) {
      throw Error(fmt::format("{}:{}: {}", event_log.string(), number, e.what()));
    }
  }
  return state;
}

std::shared_ptr<const StudyService::State> StudyService::snapshot() const {
  std::lock_guard lock(snapshot_mu_);
  return state_;
}

void StudyService::commit(const json& event, std::shared_ptr<State> next) {
  if (log_.is_open()) {
    log_ << event.dump() << '\n';
    log_.flush();
    if (!log_) throw Error("failed to append to the event log");
  }
  std::lock_guard lock(snapshot_mu_);
  state_ = std::move(next);
}

std::shared_ptr<const Study> StudyService::create_study(const std::string& tree_id, const std::string& dataset_id,
                                                        const StudyConfig& config) {
  std::lock_guard lock(writer_);
  if (!catalog_) throw StudyError(Kind::kInvalid, "service has no catalog");
  auto tree = catalog_->tree(tree_id);
  if (!tree) throw StudyError(Kind::kNotFound, fmt::format("unknown tree '{}'", tree_id));
  auto data = catalog_->dataset(dataset_id, tree->schema());
  if (!data) throw StudyError(Kind::kNotFound, fmt::format("unknown dataset '{}'", dataset_id));

  auto current = snapshot();
  std::string id;
  for (std::size_t n = current->studies.size() + 1;; ++n) {
    id = fmt::format("study-{}", n);
    if (!current->studies.count(id)) break;
  }
  Study study;
  try {
    study = build_study(id, tree_id, *tree, dataset_id, *data, config);
  } catch (const StudyError&) {
    throw;
  } catch (const LlmError&) {
    throw;
  } catch (const Error& e) {
    throw StudyError(Kind::kInvalid, e.what());
  }
  const json event = {{"type", "study_created"}, {"study", to_json(study)}};
  auto next = std::make_shared<State>(*current);
  apply_event(*next, event);
  auto created = next->studies.at(id);
  commit(event, std::move(next));
  return created;
}

std::shared_ptr<const Session> StudyService::open_session(const std::string& study_id, const std::string& evaluator) {
  std::lock_guard lock(writer_);
  if (evaluator.empty()) throw StudyError(Kind::kInvalid, "evaluator id is required");
  auto current = snapshot();
  auto study = current->studies.find(study_id);
  if (study == current->studies.end()) throw StudyError(Kind::kNotFound, fmt::format("unknown study '{}'", study_id));
  if (auto it = current->session_index.find({study_id, evaluator}); it != current->session_index.end()) {
    return current->sessions.at(it->second);
  }
  const std::string id = fmt::format("session-{}", current->sessions.size() + 1);
  const Session opened{id, study_id, evaluator, study->second->order_for(evaluator), {}};
  const json event = {{"type", "session_opened"}, {"session", session_to_json(opened)}};
  auto next = std::make_shared<State>(*current);
  apply_event(*next, event);
  auto session = next->sessions.at(id);
  commit(event, std::move(next));
  return session;
}

json StudyService::next_item(const std::string& session_id) const {
  auto state = snapshot();
  auto it = state->sessions.find(session_id);
  if (it == state->sessions.end()) throw StudyError(Kind::kNotFound, fmt::format("unknown session '{}'", session_id));
  const Session& session = *it->second;
  const Study& study = *state->studies.at(session.study_id);
  if (session.complete()) {
    return {{"done", true}, {"session_id", session.id}, {"count", session.order.size()}};
  }
  const StudyItem& item = study.items[session.order[session.cursor()]];
  json questions = json::array();
  for (const auto& q : study.samples[item.sample].questions) questions.push_back(to_wire_json(q));
  return {{"done", false},
          {"session_id", session.id},
          {"item_id", item.id},
          {"position", session.cursor() + 1},
          {"count", session.order.size()},
          {"label", study.blinding.at(item.approach)},
          {"explanation", item.explanation.text},
          {"questions", questions},
          {"rating_dimensions", kRatingKeys},
          {"rating_levels", kRatingLevels}};
}

json StudyService::submit_item(const std::string& session_id, const std::string& item_id, AnswerSheet sheet) {
  std::lock_guard lock(writer_);
  auto current = snapshot();
  auto it = current->sessions.find(session_id);
  if (it == current->sessions.end()) throw StudyError(Kind::kNotFound, fmt::format("unknown session '{}'", session_id));
  const Session& session = *it->second;
  const Study& study = *current->studies.at(session.study_id);
  const StudyItem* item = study.find_item(item_id);
  if (item == nullptr) throw StudyError(Kind::kNotFound, fmt::format("unknown item '{}'", item_id));

  const auto& questions = study.samples[item->sample].questions;
  for (const auto& q : questions) {
    if (!sheet.choices.count(q.id)) {
      throw StudyError(Kind::kInvalid, fmt::format("incomplete sheet: no answer for question '{}'", q.id));
    }
  }
  for (const auto& [qid, choice] : sheet.choices) {
    if (std::none_of(questions.begin(), questions.end(), [&](const auto& q) { return q.id == qid; })) {
      throw StudyError(Kind::kInvalid, fmt::format("answer for unknown question '{}'", qid));
    }
  }
  if (!sheet.ratings_complete()) throw StudyError(Kind::kInvalid, "incomplete sheet: all three ratings are required");
  sheet.evaluator = session.evaluator;
  sheet.approach_label = study.blinding.at(item->approach);

  if (auto prior = session.sheets.find(item_id); prior != session.sheets.end()) {
    if (!same_answers(prior->second, sheet)) {
      throw StudyError(Kind::kConflict, fmt::format("item '{}' was already submitted with different answers", item_id));
    }
    return {{"accepted", true}, {"cursor", session.cursor()}, {"complete", session.complete()}};
  }
  if (session.complete() || study.items[session.order[session.cursor()]].id != item_id) {
    throw StudyError(Kind::kConflict, fmt::format("item '{}' is not the session's current item", item_id));
  }
  if (sheet.submitted_at.empty()) sheet.submitted_at = utc_timestamp();

  const json event = {{"type", "item_submitted"}, {"session_id", session_id}, {"item_id", item_id}, {"sheet", to_json(sheet)}};
  auto next = std::make_shared<State>(*current);
  apply_event(*next, event);
  const auto& updated = *next->sessions.at(session_id);
  json reply = {{"accepted", true}, {"cursor", updated.cursor()}, {"complete", updated.complete()}};
  commit(event, std::move(next));
  return reply;
}

StudyReport StudyService::report(const std::string& study_id) const {
  auto state = snapshot();
  auto it = state->studies.find(study_id);
  if (it == state->studies.end()) throw StudyError(Kind::kNotFound, fmt::format("unknown study '{}'", study_id));
  std::vector<const Session*> sessions;
  for (const auto& [id, s] : state->sessions) {
    if (s->study_id == study_id) sessions.push_back(s.get());
  }
  return build_report(*it->second, sessions);
}

}  // namespace dte
