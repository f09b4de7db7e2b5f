// dte: train decision trees, explain predictions, generate counterfactual
// quizzes and run evaluation studies.
//
// Exit codes: 0 success, 1 runtime error, 2 usage error.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "dte/constraints.hpp"
#include "dte/dataset.hpp"
#include "dte/explain_rules.hpp"
#include "dte/llm_client.hpp"
#include "dte/quiz.hpp"
#include "dte/server.hpp"
#include "dte/study.hpp"
#include "dte/tree.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kQuizFormat = "dte-quiz/1";

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw dte::Error(fmt::format("cannot open '{}'", path.string()));
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw dte::Error(fmt::format("'{}': {}", path.string(), e.what()));
  }
}

void write_text(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
    return;
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw dte::Error(fmt::format("cannot write '{}'", path));
  out << text;
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw dte::Error(fmt::format("cannot open '{}'", path.string()));
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// The test split a tree was evaluated on, re-derived from its training
// metadata. `data_override` replaces the recorded data source.
dte::Dataset test_pool(const dte::DecisionTree& tree, const std::string& data_override) {
  const auto& info = tree.info();
  const std::string source = data_override.empty() ? info.data_source : data_override;
  if (source.empty()) throw dte::Error("tree records no data source; pass --data");
  dte::Dataset data = dte::load_dataset(source, tree.schema());
  if (info.test_fraction > 0.0 && info.test_fraction < 1.0) {
    return dte::split(data, info.test_fraction, info.split_seed, info.stratified).test;
  }
  return data;
}

const dte::Sample& pick(const dte::Dataset& pool, std::size_t index) {
  if (index >= pool.size()) {
    throw dte::Error(fmt::format("sample index {} out of range (test split has {} samples)", index, pool.size()));
  }
  return pool.sample(index);
}

struct LlmFlags {
  std::string audience = "novice";
  bool mock = false;
  std::string model = "gpt-4";
  std::string endpoint = "https://api.openai.com/v1/chat/completions";
  std::string api_key_env = "OPENAI_API_KEY";
  double temperature = 0.0;
  int max_tokens = 600;
  std::size_t top_gain_k = 2;

  void add_to(CLI::App* cmd) {
    cmd->add_option("--audience", audience, "novice, security or ml")
        ->check(CLI::IsMember({"novice", "security", "ml"}));
    cmd->add_flag("--mock", mock, "Offline deterministic LLM stand-in");
    cmd->add_option("--model", model);
    cmd->add_option("--endpoint", endpoint, "Chat-completions URL");
    cmd->add_option("--api-key-env", api_key_env, "Environment variable holding the API key");
    cmd->add_option("--temperature", temperature)->check(CLI::NonNegativeNumber);
    cmd->add_option("--max-tokens", max_tokens)->check(CLI::PositiveNumber);
    cmd->add_option("--top-gain-k", top_gain_k);
  }

  dte::PromptConfig config() const {
    dte::PromptConfig c;
    c.audience = dte::audience_from_string(audience);
    c.mock = mock;
    c.model = model;
    c.endpoint = endpoint;
    c.api_key_env = api_key_env;
    c.temperature = temperature;
    c.max_tokens = max_tokens;
    c.top_gain_k = top_gain_k;
    return c;
  }
};

char ask(std::istream& in, std::ostream& out, const std::string& prompt, const std::string& allowed) {
  std::string line;
  while (true) {
    out << prompt << std::flush;
    if (!std::getline(in, line)) throw dte::Error("input ended before the quiz was finished");
    const auto pos = line.find_first_not_of(" \t\r");
    if (pos != std::string::npos) {
      const char c = static_cast<char>(std::tolower(static_cast<unsigned char>(line[pos])));
      if (allowed.find(c) != std::string::npos && line.find_first_not_of(" \t\r", pos + 1) == std::string::npos) {
        return c;
      }
    }
    out << "Please answer with one of: " << allowed << "\n";
  }
}

dte::Choice choice_of(char c) {
  return c == 't' ? dte::Choice::kTrue : c == 'f' ? dte::Choice::kFalse : dte::Choice::kUnsure;
}

int run_train(const std::string& data, const std::string& schema_path, int max_depth, std::size_t min_leaf,
              double test_fraction, std::uint64_t seed, bool no_stratify, const std::string& na, const std::string& out) {
  std::optional<dte::FeatureSchema> schema;
  if (!schema_path.empty()) schema = dte::FeatureSchema::load(schema_path);
  const dte::Dataset dataset =
      dte::load_dataset(data, schema, na == "error" ? dte::NaPolicy::kError : dte::NaPolicy::kDrop);
  const auto parts = dte::split(dataset, test_fraction, seed, !no_stratify);
  dte::TrainingInfo info;
  info.data_source = data;
  info.test_fraction = test_fraction;
  info.split_seed = seed;
  info.stratified = !no_stratify;
  const dte::DecisionTree tree = dte::train(parts.train, {max_depth, min_leaf, seed}, info);
  std::cout << fmt::format("train samples: {}\ntest samples: {}\ntree depth: {}\nnodes: {}\n", parts.train.size(),
                           parts.test.size(), tree.depth(), tree.nodes().size());
  std::cout << fmt::format("test accuracy: {:.4f}\n", dte::accuracy(tree, parts.test));
  if (!out.empty()) write_text(out, dte::to_json(tree).dump(2) + "\n");
  return 0;
}

int run_explain(const std::string& tree_path, const std::string& data, std::size_t index, const std::string& mode,
                const LlmFlags& llm, bool as_json) {
  const dte::DecisionTree tree = dte::tree_from_json(read_json(tree_path));
  const dte::Dataset pool = test_pool(tree, data);
  const dte::Sample& sample = pick(pool, index);
  const dte::DecisionPath path = tree.predict(sample.values);
  const std::string sample_id = fmt::format("test-{}", index);
  const dte::Explanation e = mode == "rule" ? dte::rule_explain(path, tree, sample_id)
                                            : dte::explain_with_llm(tree, path, llm.config(), sample_id);
  if (as_json) {
    std::cout << dte::to_json(e).dump(2) << "\n";
  } else {
    std::cout << e.text;
    if (e.text.empty() || e.text.back() != '\n') std::cout << "\n";
  }
  return 0;
}

int run_quiz_gen(const std::string& tree_path, const std::string& data, std::size_t index,
                 const dte::QuizPolicy& policy, const std::string& out) {
  const dte::DecisionTree tree = dte::tree_from_json(read_json(tree_path));
  const dte::Dataset pool = test_pool(tree, data);
  const dte::Sample& sample = pick(pool, index);
  const dte::DecisionPath path = tree.predict(sample.values);
  const dte::ConstraintSet cs = dte::extract_constraints(path);
  const auto questions = dte::gen_quiz(tree, path, cs, sample.values, policy);
  json qs = json::array();
  for (const auto& q : questions) qs.push_back(dte::to_json(q));
  const json doc = {{"format", kQuizFormat},
                    {"sample_index", index},
                    {"values", sample.values},
                    {"label", sample.label},
                    {"prediction", path.prediction},
                    {"prediction_name", tree.schema().classes[path.prediction]},
                    {"path_id", path.id()},
                    {"constraints", dte::to_json(cs)},
                    {"questions", qs}};
  write_text(out, doc.dump(2) + "\n");
  if (!out.empty() && out != "-") std::cerr << fmt::format("wrote {} question(s) to {}\n", questions.size(), out);
  return 0;
}

int run_quiz_take_file(const std::string& quiz_path, const std::string& explanation_path, const std::string& sheet_out,
                       const std::string& evaluator) {
  const json doc = read_json(quiz_path);
  if (doc.value("format", "") != kQuizFormat) throw dte::Error("not a quiz file");
  std::vector<dte::QuizQuestion> questions;
  for (const auto& q : doc.at("questions")) questions.push_back(dte::question_from_json(q));

  if (!explanation_path.empty()) {
    std::cout << "Explanation\n-----------\n" << read_text(explanation_path) << "\n";
  }
  std::cout << "Answer each question with t (true), f (false) or u (unsure).\n\n";
  dte::AnswerSheet sheet;
  sheet.evaluator = evaluator;
  sheet.started_at = dte::utc_timestamp();
  for (std::size_t i = 0; i < questions.size(); ++i) {
    std::cout << fmt::format("Q{}. {}\n", i + 1, questions[i].text);
    sheet.choices[questions[i].id] = choice_of(ask(std::cin, std::cout, "[t/f/u] > ", "tfu"));
  }
  sheet.submitted_at = dte::utc_timestamp();
  const dte::QuizScore s = dte::score(sheet, questions);
  std::cout << fmt::format("\nScore: {} out of {}\n", s.correct, s.total);
  if (!sheet_out.empty()) write_text(sheet_out, dte::to_json(sheet).dump(2) + "\n");
  return 0;
}

int run_quiz_take_study(const fs::path& store, const std::string& study_id, const std::string& evaluator) {
  dte::StudyService service(store / "events.jsonl", std::make_shared<dte::DirectoryCatalog>(store));
  auto session = service.open_session(study_id, evaluator);
  std::cout << fmt::format("Session {} for {} ({} items)\n", session->id, evaluator, session->order.size());
  while (true) {
    const json item = service.next_item(session->id);
    if (item.at("done").get<bool>()) break;
    std::cout << fmt::format("\n=== Item {} of {} (explanation {}) ===\n", item["position"].get<std::size_t>(),
                             item["count"].get<std::size_t>(), item["label"].get<std::string>());
    std::cout << item["explanation"].get<std::string>() << "\n\n";
    dte::AnswerSheet sheet;
    sheet.started_at = dte::utc_timestamp();
    std::size_t n = 0;
    for (const auto& q : item["questions"]) {
      std::cout << fmt::format("Q{}. {}\n", ++n, q["text"].get<std::string>());
      sheet.choices[q["id"].get<std::string>()] = choice_of(ask(std::cin, std::cout, "[t/f/u] > ", "tfu"));
    }
    for (std::size_t d = 0; d < dte::kRatingDimensions.size(); ++d) {
      const char c = ask(std::cin, std::cout, fmt::format("Rate {} [l/m/h] > ", dte::kRatingDimensions[d]), "lmh");
      sheet.ratings[d] = c == 'l' ? dte::RatingLevel::kLow : c == 'm' ? dte::RatingLevel::kMedium : dte::RatingLevel::kHigh;
    }
    service.submit_item(session->id, item["item_id"].get<std::string>(), std::move(sheet));
  }
  std::cout << "\nSession complete. Thank you!\n";
  return 0;
}

int run_study_create(const fs::path& store, const std::string& tree_id, const std::string& tree_file,
                     const std::string& dataset_id, const std::string& config_path, const LlmFlags& llm,
                     bool llm_flags_given, std::optional<std::size_t> num_samples, std::optional<std::uint64_t> seed,
                     std::optional<std::size_t> budget) {
  if (!tree_file.empty()) {
    fs::create_directories(store / "trees");
    fs::copy_file(tree_file, store / "trees" / (tree_id + ".json"), fs::copy_options::overwrite_existing);
  }
  dte::StudyConfig config;
  if (!config_path.empty()) config = dte::StudyConfig::from_json(read_json(config_path));
  if (llm_flags_given) config.llm = llm.config();
  if (num_samples) config.num_samples = *num_samples;
  if (seed) config.seed = *seed;
  if (budget) config.question_budget = *budget;
  dte::StudyService service(store / "events.jsonl", std::make_shared<dte::DirectoryCatalog>(store));
  auto study = service.create_study(tree_id, dataset_id, config);
  std::cout << study->id << "\n";
  return 0;
}

int run_serve(const fs::path& store, const std::string& host, int port, const std::string& ui_dist,
              std::string admin_token) {
  if (admin_token.empty()) {
    if (const char* env = std::getenv("DTE_ADMIN_TOKEN")) admin_token = env;
  }
  dte::StudyService service(store / "events.jsonl", std::make_shared<dte::DirectoryCatalog>(store));
  dte::StudyServer server(service, {admin_token, ui_dist});
  std::cerr << fmt::format("serving studies from {} on http://{}:{}\n", store.string(), host, port);
  if (!server.listen(host, port)) throw dte::Error(fmt::format("cannot listen on {}:{}", host, port));
  return 0;
}

int run_report(const fs::path& store, const std::string& study_id, bool as_json) {
  const auto state = dte::StudyService::replay(store / "events.jsonl");
  auto it = state->studies.find(study_id);
  if (it == state->studies.end()) throw dte::Error(fmt::format("unknown study '{}'", study_id));
  std::vector<const dte::Session*> sessions;
  for (const auto& [id, s] : state->sessions) {
    if (s->study_id == study_id) sessions.push_back(s.get());
  }
  const dte::StudyReport report = dte::build_report(*it->second, sessions);
  std::cout << (as_json ? report.to_json().dump(2) + "\n" : report.render());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Decision tree explanations and counterfactual quizzes for intrusion detection"};
  app.require_subcommand(1);
  app.set_config("--config", "", "Optional config file (TOML/INI) with the same keys as the flags");

  // train
  auto* train = app.add_subcommand("train", "Train a depth-limited CART tree and report test accuracy");
  std::string data, schema, out, na = "drop";
  int max_depth = 4;
  std::size_t min_leaf = 1;
  double test_fraction = 0.3;
  std::uint64_t seed = 7;
  bool no_stratify = false;
  train->add_option("--data", data, "CSV path or 'iris' for the builtin dataset")->required();
  train->add_option("--schema", schema, "Schema JSON for CSV data");
  train->add_option("--max-depth", max_depth)->check(CLI::Range(1, 64));
  train->add_option("--min-samples-leaf", min_leaf)->check(CLI::PositiveNumber);
  train->add_option("--test-fraction", test_fraction)->check(CLI::Range(0.0, 1.0));
  train->add_option("--seed", seed);
  train->add_flag("--no-stratify", no_stratify);
  train->add_option("--na-policy", na)->check(CLI::IsMember({"drop", "error"}));
  train->add_option("--out", out, "Write the tree JSON here");

  // explain
  auto* explain = app.add_subcommand("explain", "Explain one test-split prediction");
  std::string tree_path, mode = "rule";
  std::size_t sample_index = 0;
  bool as_json = false;
  LlmFlags llm;
  explain->add_option("--tree", tree_path)->required();
  explain->add_option("--data", data, "Override the tree's recorded data source");
  explain->add_option("--sample-index", sample_index, "Position in the test split")->required();
  explain->add_option("--mode", mode)->check(CLI::IsMember({"rule", "llm"}));
  explain->add_flag("--json", as_json, "Print the full explanation record");
  llm.add_to(explain);

  // quiz-gen
  auto* quiz_gen = app.add_subcommand("quiz-gen", "Generate counterfactual quiz questions for one sample");
  std::optional<std::size_t> max_questions;
  std::uint64_t quiz_seed = 0;
  bool include_untested = false, only_flipping = false;
  double rho = 0.1;
  quiz_gen->add_option("--tree", tree_path)->required();
  quiz_gen->add_option("--data", data);
  quiz_gen->add_option("--sample-index", sample_index)->required();
  quiz_gen->add_option("--max-questions", max_questions);
  quiz_gen->add_option("--seed", quiz_seed);
  quiz_gen->add_option("--rho", rho)->check(CLI::PositiveNumber);
  quiz_gen->add_flag("--include-untested", include_untested);
  quiz_gen->add_flag("--only-label-flipping", only_flipping);
  quiz_gen->add_option("--out", out, "Quiz JSON path (stdout if omitted)");

  // quiz-take
  auto* quiz_take = app.add_subcommand("quiz-take", "Take a quiz in the terminal");
  std::string quiz_path, explanation_path, sheet_out, store, study_id, evaluator = "terminal";
  quiz_take->add_option("--quiz", quiz_path, "Quiz JSON from quiz-gen");
  quiz_take->add_option("--explanation", explanation_path, "Text file shown before the questions");
  quiz_take->add_option("--sheet-out", sheet_out, "Write the answer sheet JSON here");
  quiz_take->add_option("--store", store, "Study store (study mode)");
  quiz_take->add_option("--study", study_id, "Study id (study mode)");
  quiz_take->add_option("--evaluator", evaluator);

  // study-create
  auto* study_create = app.add_subcommand("study-create", "Create a study in a store without the server");
  std::string tree_id, tree_file, dataset_id = "iris", config_path;
  std::optional<std::size_t> num_samples, budget;
  std::optional<std::uint64_t> study_seed;
  study_create->add_option("--store", store)->required();
  study_create->add_option("--tree-id", tree_id)->required();
  study_create->add_option("--tree-file", tree_file, "Import this tree JSON as <store>/trees/<tree-id>.json");
  study_create->add_option("--dataset-id", dataset_id);
  study_create->add_option("--study-config", config_path, "Study config JSON");
  study_create->add_option("--num-samples", num_samples);
  study_create->add_option("--seed", study_seed);
  study_create->add_option("--question-budget", budget);
  llm.add_to(study_create);

  // serve
  auto* serve = app.add_subcommand("serve", "Run the study service");
  std::string host = "127.0.0.1", ui_dist, admin_token;
  int port = 8080;
  serve->add_option("--port", port)->check(CLI::Range(1, 65535));
  serve->add_option("--host", host);
  serve->add_option("--store", store)->required();
  serve->add_option("--ui-dist", ui_dist, "Static quiz UI bundle served at /");
  serve->add_option("--admin-token", admin_token, "Bearer token for admin endpoints (or DTE_ADMIN_TOKEN)");

  // report
  auto* report = app.add_subcommand("report", "Print quiz score and rating tables for a study");
  report->add_option("--store", store)->required();
  report->add_option("--study", study_id)->required();
  report->add_flag("--json", as_json);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (*train) return run_train(data, schema, max_depth, min_leaf, test_fraction, seed, no_stratify, na, out);
    if (*explain) return run_explain(tree_path, data, sample_index, mode, llm, as_json);
    if (*quiz_gen) {
      dte::QuizPolicy policy;
      policy.max_questions = max_questions;
      policy.seed = quiz_seed;
      policy.include_untested = include_untested;
      policy.only_label_flipping = only_flipping;
      policy.rho = rho;
      return run_quiz_gen(tree_path, data, sample_index, policy, out);
    }
    if (*quiz_take) {
      if (!study_id.empty() || !store.empty()) {
        if (study_id.empty() || store.empty()) throw UsageError("study mode needs both --store and --study");
        return run_quiz_take_study(store, study_id, evaluator);
      }
      if (quiz_path.empty()) throw UsageError("quiz-take needs --quiz or --store/--study");
      return run_quiz_take_file(quiz_path, explanation_path, sheet_out, evaluator);
    }
    if (*study_create) {
      const bool llm_given = study_create->count("--mock") + study_create->count("--model") +
                                 study_create->count("--endpoint") + study_create->count("--audience") >
                             0;
      return run_study_create(store, tree_id, tree_file, dataset_id, config_path, llm, llm_given, num_samples,
                              study_seed, budget);
    }
    if (*serve) return run_serve(store, host, port, ui_dist, admin_token);
    if (*report) return run_report(store, study_id, as_json);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
