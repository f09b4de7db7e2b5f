// Acceptance suite: one PASS/FAIL/SKIP line per primary criterion. Exits
// non-zero if any criterion fails. Usage: acceptance [path-to-dte-cli]
#include <array>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>
#include <thread>

#include <fmt/format.h>
#include <httplib.h>
#include <unistd.h>

#include "dte/explain_rules.hpp"
#include "dte/format.hpp"
#include "dte/llm_client.hpp"
#include "dte/quiz.hpp"
#include "dte/server.hpp"
#include "dte/study.hpp"
#include "support.hpp"

using namespace dte;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

enum class Status { kPass, kFail, kSkip };

struct Outcome {
  Status status = Status::kPass;
  std::string detail;
};

Outcome pass(std::string detail) { return {Status::kPass, std::move(detail)}; }
Outcome fail(std::string detail) { return {Status::kFail, std::move(detail)}; }

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

std::string cli_path;

// ---------------------------------------------------------------------------

Outcome path_constraint_equivalence() {
  const auto start = std::chrono::steady_clock::now();
  std::mt19937_64 rng(1001);
  std::size_t checks = 0, mismatches = 0;
  for (int t = 0; t < 100; ++t) {
    const auto tree = testing::random_tree(rng, {1 + t % 10, 2 + t % 3, 1 + t % 6, 0.85});
    const std::size_t width = tree.schema().feature_count();
    const auto anchor = tree.predict(testing::random_input(rng, width));
    const auto cs = extract_constraints(anchor);
    for (int i = 0; i < 100; ++i) {
      const auto y = testing::random_input(rng, width);
      ++checks;
      if (satisfies(cs, y) != (testing::walk_ids(tree, y) == anchor.id())) ++mismatches;
    }
  }
  const double secs = seconds_since(start);
  const std::string detail = fmt::format("{} checks, {} mismatches, {:.2f}s", checks, mismatches, secs);
  return mismatches == 0 && secs < 10.0 ? pass(detail) : fail(detail);
}

Outcome self_satisfaction_and_irrelevance() {
  std::mt19937_64 rng(1002);
  std::size_t self_fail = 0, irrelevance_fail = 0, untested_probes = 0;
  for (int t = 0; t < 1000; ++t) {
    const auto tree = testing::random_tree(rng, {1 + t % 10, 3, 1 + t % 6, 0.8});
    const std::size_t width = tree.schema().feature_count();
    const auto x = testing::random_input(rng, width);
    const auto path = tree.predict(x);
    const auto cs = extract_constraints(path);
    if (!satisfies(cs, x)) ++self_fail;
    // Changing any feature the path does not test must not change the path.
    auto y = x;
    std::uniform_real_distribution<double> u(-100.0, 100.0);
    for (std::size_t j = 0; j < width; ++j) {
      if (cs.find(j) == nullptr) {
        y[j] = u(rng);
        ++untested_probes;
      }
    }
    if (tree.predict(y).id() != path.id() || !satisfies(cs, y)) ++irrelevance_fail;
  }
  const std::string detail = fmt::format("1000 cases each; self failures {}, irrelevance failures {} ({} features moved)",
                                         self_fail, irrelevance_fail, untested_probes);
  return self_fail == 0 && irrelevance_fail == 0 ? pass(detail) : fail(detail);
}

Outcome quiz_oracle_soundness() {
  std::mt19937_64 rng(1003);
  std::size_t questions = 0, wrong = 0, within_false = 0, flipping_true = 0;
  std::vector<double> axis;
  for (int i = -2; i <= 22; ++i) axis.push_back(i * 0.05);
  for (int t = 0; t < 20; ++t) {
    const auto tree = testing::random_tree(rng, {2, 3, 4, 0.9});
    // Enumerate the whole grid once: label of every cell.
    std::map<std::pair<long, long>, std::size_t> label;
    auto key = [](double v) { return std::lround(v * 1e6); };
    for (double a : axis) {
      for (double b : axis) label[{key(a), key(b)}] = testing::walk_prediction(tree, {a, b});
    }
    for (double a : axis) {
      for (double b : axis) {
        const std::vector<double> x{a, b};
        const auto path = tree.predict(x);
        const auto cs = extract_constraints(path);
        QuizPolicy policy;
        policy.include_untested = true;
        for (const auto& q : gen_quiz(tree, path, cs, x, policy)) {
          ++questions;
          auto y = x;
          y[q.feature] = q.counterfactual_value;
          const bool same = testing::walk_prediction(tree, y) == label[{key(a), key(b)}];
          if (same != q.correct_answer) ++wrong;
          if (q.relation == Relation::kWithin && !q.correct_answer) ++within_false;
        }
        policy.only_label_flipping = true;
        for (const auto& q : gen_quiz(tree, path, cs, x, policy)) {
          if (q.relation != Relation::kWithin && q.correct_answer) ++flipping_true;
        }
      }
    }
  }
  const std::string detail = fmt::format("{} questions; oracle disagreements {}, False within-interval {}, "
                                         "True in label-flipping mode {}",
                                         questions, wrong, within_false, flipping_true);
  return wrong == 0 && within_false == 0 && flipping_true == 0 && questions > 0 ? pass(detail) : fail(detail);
}

Outcome cart_correctness() {
  const std::vector<std::size_t> parent{4, 4}, left{4, 0}, right{0, 4};
  const double hand = impurity_decrease(parent, left, right);
  const bool hand_ok = std::abs(gini(parent) - 0.5) < 1e-12 && std::abs(hand - 0.5) < 1e-12;
  std::mt19937_64 rng(1004);
  std::size_t datasets = 0, mismatches = 0;
  for (int t = 0; t < 500; ++t) {
    const std::size_t n = 2 + t % 19;  // 2..20 samples
    const std::size_t f = 1 + t % 3;   // 1..3 features
    const auto data = testing::random_dataset(rng, n, f, 2 + t % 3);
    ++datasets;
    const auto best = testing::brute_force_root(data);
    const auto tree = train(data, {1, 1, 0});
    const bool ok = best.found ? !tree.root().leaf && tree.root().feature == best.feature &&
                                     tree.root().threshold == best.threshold &&
                                     std::abs(impurity_decrease(tree, tree.root_id()) - best.gain) < 1e-12
                               : tree.root().leaf;
    if (!ok) ++mismatches;
  }
  const std::string detail = fmt::format("hand example dI={:.12f}; {} datasets, {} root mismatches", hand, datasets, mismatches);
  return hand_ok && mismatches == 0 ? pass(detail) : fail(detail);
}

Outcome iris_metric() {
  const auto start = std::chrono::steady_clock::now();
  const auto parts = split(builtin_iris(), 0.3, 7, true);
  const auto tree = train(parts.train, {4, 1, 7});
  const double acc = accuracy(tree, parts.test);
  const double secs = seconds_since(start);
  const std::string detail = fmt::format("test accuracy {:.4f} (reference 0.9778), depth {}, {:.3f}s", acc, tree.depth(), secs);
  return acc >= 0.90 && tree.depth() <= 4 && secs < 1.0 ? pass(detail) : fail(detail);
}

Outcome nf_bot_metric() {
  fs::path csv;
  if (const char* env = std::getenv("NF_BOT_CSV"); env && *env) csv = env;
  else csv = fs::path(DTE_SOURCE_DIR) / "data" / "NF-BoT.csv";
  if (!fs::exists(csv)) return {Status::kSkip, fmt::format("dataset not found ({}); set NF_BOT_CSV", csv.string())};
  const auto start = std::chrono::steady_clock::now();
  const auto schema = FeatureSchema::load(fs::path(DTE_SOURCE_DIR) / "data" / "nf_bot_schema.json");
  const auto loaded = load_csv(csv, schema, {{}, NaPolicy::kDrop});
  const auto parts = split(loaded.dataset, 0.3, 7, true);
  const auto tree = train(parts.train, {4, 1, 7});
  const double acc = accuracy(tree, parts.test);
  const double secs = seconds_since(start);
  const std::string detail = fmt::format("{} samples ({} dropped), test accuracy {:.4f} (target >= 0.95), {:.1f}s",
                                         loaded.dataset.size(), loaded.dropped_rows, acc, secs);
  return acc >= 0.95 && secs < 120.0 ? pass(detail) : fail(detail);
}

Outcome prompt_checklist() {
  std::mt19937_64 rng(1005);
  std::size_t failures = 0;
  for (int t = 0; t < 100; ++t) {
    const auto tree = testing::random_tree(rng, {1 + t % 10, 2 + t % 3, t % 6, 0.8});
    const auto x = testing::random_input(rng, tree.schema().feature_count());
    const auto path = tree.predict(x);
    PromptConfig config;
    config.top_gain_k = t % 4;
    config.audience = static_cast<Audience>(t % 3);
    const auto prompt = build_prompt(tree, path, config);
    bool ok = true;
    for (auto name : kPromptSections) ok = ok && !prompt.section(name).empty();
    const auto steps = prompt.section("path_steps");
    for (std::size_t i = 0; i < path.steps.size(); ++i) {
      const auto& s = path.steps[i];
      const auto line = describe_step(tree, s, i);
      std::string split_text;
      for (std::size_t c = 0; c < s.class_counts.size(); ++c) {
        split_text += fmt::format("{}{}={}", c ? ", " : "", tree.schema().classes[c], s.class_counts[c]);
      }
      ok = ok && steps.find(line) != std::string_view::npos &&
           line.find(tree.schema().features[s.feature].name) != std::string::npos &&
           line.find(format_sig4(s.threshold)) != std::string::npos &&
           line.find(format_exact(s.feature_value)) != std::string::npos && line.find(split_text) != std::string::npos;
    }
    std::string upper = tree.schema().classes[path.prediction];
    for (auto& ch : upper) ch = static_cast<char>(std::toupper(static_cast<unsigned char>(ch)));
    std::size_t count = 0;
    for (auto pos = prompt.text.find(upper); pos != std::string::npos; pos = prompt.text.find(upper, pos + 1)) ++count;
    ok = ok && count == 1 && prompt.section("prediction").find(upper) != std::string_view::npos;
    ok = ok && prompt.section("instructions").find(kInstructionSentence) != std::string_view::npos;
    ok = ok && build_prompt(tree, path, config).text == prompt.text;
    if (!ok) ++failures;
  }
  const std::string detail = fmt::format("100 prompts, {} failing the checklist", failures);
  return failures == 0 ? pass(detail) : fail(detail);
}

Outcome scoring_and_aggregation() {
  std::vector<QuizQuestion> qs(3);
  const std::array<bool, 3> oracle{false, true, false};
  const std::array<Choice, 3> answers{Choice::kFalse, Choice::kUnsure, Choice::kTrue};
  AnswerSheet sheet;
  for (std::size_t i = 0; i < 3; ++i) {
    qs[i].id = fmt::format("q{}", i);
    qs[i].correct_answer = oracle[i];
    sheet.choices[qs[i].id] = answers[i];
  }
  const auto s = score(sheet, qs);
  const std::vector<QuizScore> scores{{5, 25}, {8, 25}, {12, 25}, {17, 25}, {20, 25}};
  const std::string rendered = aggregate(scores).render();

  // Rating table: per-evaluator rows must each sum to 100 before averaging.
  std::mt19937_64 rng(1006);
  std::vector<AnswerSheet> sheets;
  bool rows_ok = true;
  for (int e = 0; e < 4; ++e) {
    std::vector<AnswerSheet> mine;
    for (int k = 0; k < 7; ++k) {
      AnswerSheet r;
      r.evaluator = fmt::format("e{}", e);
      for (auto& rating : r.ratings) rating = static_cast<RatingLevel>(rng() % 3);
      mine.push_back(r);
    }
    for (const auto& row : rating_percentages(mine)) rows_ok = rows_ok && std::abs(row[0] + row[1] + row[2] - 100.0) < 1e-9;
    sheets.insert(sheets.end(), mine.begin(), mine.end());
  }
  const auto table = tabulate_ratings({{"rule", sheets}});
  double mean_sum = 0;
  for (const auto& cell : table.rows.at("rule")[0]) mean_sum += cell.mean;
  rows_ok = rows_ok && std::abs(mean_sum - 100.0) < 1e-9 && table.evaluators.at("rule") == 4;

  const std::string detail = fmt::format("(F,Unsure,T) vs (F,T,F) -> {}/{}; {{5,8,12,17,20}}/25 -> \"{}\"; rating rows sum to 100: {}",
                                         s.correct, s.total, rendered, rows_ok ? "yes" : "no");
  return s == QuizScore{1, 3} && rendered == "12.4 ± 6.2 (out of 25)" && rows_ok ? pass(detail) : fail(detail);
}

Outcome llm_stub() {
  std::mt19937_64 rng(1007);
  const auto tree = testing::random_tree(rng, {3, 2, 3, 1.0});
  const auto path = tree.predict(std::vector<double>{0.5, 0.5, 0.5});
  const auto prompt = build_prompt(tree, path, {});

  httplib::Server server;
  std::atomic<int> requests{0};
  std::atomic<bool> failing{false};
  std::string body;
  std::mutex mu;
  server.Post("/v1/chat/completions", [&](const httplib::Request& req, httplib::Response& res) {
    ++requests;
    {
      std::lock_guard lock(mu);
      body = req.body;
    }
    if (failing) {
      res.status = 500;
      return;
    }
    res.set_content(json{{"choices", {{{"message", {{"role", "assistant"}, {"content", "stub reply"}}}}}}}.dump(),
                    "application/json");
  });
  const int port = server.bind_to_any_port("127.0.0.1");
  std::thread thread([&] { server.listen_after_bind(); });
  server.wait_until_ready();

  PromptConfig config;
  config.endpoint = fmt::format("http://127.0.0.1:{}/v1/chat/completions", port);
  config.initial_backoff = std::chrono::milliseconds(1);
  std::string problems;
  try {
    const auto e = llm_explain(prompt, config);
    const auto sent = json::parse(body);
    const bool valid = sent.at("model").is_string() && sent.at("messages").size() == 2 &&
                       sent["messages"][0]["role"] == "system" && sent["messages"][1]["role"] == "user" &&
                       sent["messages"][1]["content"] == prompt.text && sent.at("temperature").is_number() &&
                       sent.at("max_tokens").is_number_integer();
    if (!valid) problems += " invalid-request-body";
    if (e.text != "stub reply" || e.provenance.prompt != prompt.text) problems += " bad-passthrough";
  } catch (const std::exception& ex) {
    problems += std::string(" success-path-error: ") + ex.what();
  }

  failing = true;
  requests = 0;
  int attempts = -1;
  try {
    llm_explain(prompt, config);
    problems += " 500-not-raised";
  } catch (const LlmError& e) {
    attempts = e.attempts();
  }
  const int sent_on_500 = requests;
  if (sent_on_500 != 3 || attempts != 3) problems += " wrong-retry-count";

  requests = 0;
  PromptConfig mock = config;
  mock.mock = true;
  const auto m1 = explain_with_llm(tree, path, mock);
  const auto m2 = explain_with_llm(tree, path, mock);
  if (requests != 0 || m1.text != m2.text || m1.text.rfind("MOCK: ", 0) != 0) problems += " mock-not-offline";

  server.stop();
  thread.join();
  const std::string detail = fmt::format("500 x3 -> {} requests then error; mock requests {}{}", sent_on_500,
                                         requests.load(), problems);
  return problems.empty() ? pass(detail) : fail(detail);
}

// --- service ---------------------------------------------------------------

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / fmt::format("dte-acceptance-{}-{}", name, ::getpid());
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

Outcome service_replay_and_blinding() {
  const fs::path store = scratch("service");
  fs::create_directories(store / "trees");
  const auto parts = split(builtin_iris(), 0.3, 7);
  std::ofstream(store / "trees" / "iris4.json")
      << to_json(train(parts.train, {4, 1, 7}, {7, parts.train.size(), "iris", 0.3, 7, true})).dump();

  std::string live;
  std::size_t payloads = 0, leaks = 0;
  {
    StudyService service(store / "events.jsonl", std::make_shared<DirectoryCatalog>(store));
    StudyServer server(service, {"token", {}});
    const int port = server.bind_any_port("127.0.0.1");
    std::thread thread([&] { server.listen_after_bind(); });
    server.wait_until_ready();
    httplib::Client c("127.0.0.1", port);
    const httplib::Headers auth{{"Authorization", "Bearer token"}};

    StudyConfig config;
    config.llm.mock = true;
    config.seed = 11;
    auto created = c.Post("/api/studies", auth,
                          json{{"tree_id", "iris4"}, {"dataset_id", "iris"}, {"config", config.to_json()}}.dump(),
                          "application/json");
    if (!created || created->status != 201) {
      server.stop();
      thread.join();
      return fail("study creation failed");
    }
    const std::string study_id = json::parse(created->body)["study_id"];
    const auto study = service.snapshot()->studies.at(study_id);
    auto scan = [&](const std::string& body) {
      ++payloads;
      for (const char* field : {"correct_answer", "oracle", "counterfactual_value", "true_value", "path_id",
                                "prediction", "provenance", "\"approach\""}) {
        if (body.find(field) != std::string::npos) ++leaks;
      }
    };
    for (int e = 0; e < 3; ++e) {
      auto opened = c.Post("/api/studies/" + study_id + "/sessions", json{{"evaluator", fmt::format("ev{}", e)}}.dump(),
                           "application/json");
      scan(opened->body);
      const std::string session = json::parse(opened->body)["session_id"];
      std::size_t k = 0;
      while (true) {
        auto next = c.Get("/api/sessions/" + session + "/next");
        scan(next->body);
        const json item = json::parse(next->body);
        if (item["done"]) break;
        json choices = json::object();
        for (const auto& q : item["questions"]) choices[q["id"].get<std::string>()] = (k++ + e) % 3 == 0 ? "True" : "False";
        const json sheet = {{"choices", choices},
                            {"ratings", {{"readability", "High"}, {"quality", e ? "Low" : "Medium"}, {"background_knowledge", "Low"}}}};
        auto posted = c.Post("/api/sessions/" + session + "/items/" + item["item_id"].get<std::string>() + "/answers",
                             sheet.dump(), "application/json");
        scan(posted->body);
      }
    }
    auto report = c.Get("/api/studies/" + study_id + "/report", auth);
    live = report && report->status == 200 ? json::parse(report->body).dump() : "";
    server.stop();
    thread.join();
  }
  const auto state = StudyService::replay(store / "events.jsonl");
  std::vector<const Session*> sessions;
  for (const auto& [id, s] : state->sessions) sessions.push_back(s.get());
  const std::string replayed = build_report(*state->studies.begin()->second, sessions).to_json().dump();
  fs::remove_all(store);
  const bool identical = !live.empty() && live == replayed;
  const std::string detail = fmt::format("{} evaluator payloads, {} oracle-field leaks; replayed report {}", payloads, leaks,
                                         identical ? "byte-identical" : "DIFFERS");
  return identical && leaks == 0 ? pass(detail) : fail(detail);
}

struct Run {
  int code = -1;
  std::string out;
};

Run run(const std::string& cmd) {
  Run r;
  FILE* pipe = ::popen((cmd + " 2>&1").c_str(), "r");
  if (!pipe) return r;
  std::array<char, 4096> buf{};
  while (std::size_t n = std::fread(buf.data(), 1, buf.size(), pipe)) r.out.append(buf.data(), n);
  const int status = ::pclose(pipe);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

Outcome end_to_end_pipeline() {
  if (cli_path.empty() || !fs::exists(cli_path)) return fail("dte CLI not found: " + cli_path);
  const fs::path dir = scratch("pipeline");
  const std::string cli = "\"" + cli_path + "\"";
  const std::string d = "\"" + dir.string() + "\"";
  std::vector<std::string> failed;
  auto step = [&](const std::string& name, const std::string& cmd, const std::string& expect, int code = 0) {
    const Run r = run(cmd);
    if (r.code != code || r.out.find(expect) == std::string::npos) {
      failed.push_back(fmt::format("{} (exit {})", name, r.code));
    }
    return r;
  };

  step("train", fmt::format("{} train --data iris --max-depth 4 --seed 7 --out {}/tree.json", cli, d), "test accuracy: 0.9");
  step("usage", fmt::format("{} train --data iris --max-depth 0", cli), "", 2);
  step("explain-rule", fmt::format("{} explain --tree {}/tree.json --sample-index 5 > {}/exp.txt && cat {}/exp.txt", cli, d, d, d),
       "The decision tree predicted");
  step("explain-llm", fmt::format("{} explain --tree {}/tree.json --sample-index 5 --mode llm --mock --json", cli, d),
       "\"prompt\"");
  step("quiz-gen", fmt::format("{} quiz-gen --tree {}/tree.json --sample-index 5 --out {}/quiz.json", cli, d, d), "question");
  // Answers then ratings; an invalid line just re-prompts, so alternating
  // "t" and "h" satisfies both kinds of prompt.
  {
    std::ofstream answers(dir / "answers.txt");
    for (int i = 0; i < 400; ++i) answers << "t\nh\n";
  }
  step("quiz-take", fmt::format("{} quiz-take --quiz {}/quiz.json --explanation {}/exp.txt < {}/answers.txt", cli, d, d, d),
       "out of");
  const Run created = step("study-create",
                           fmt::format("{} study-create --store {}/store --tree-id iris4 --tree-file {}/tree.json --mock "
                                       "--num-samples 3 --question-budget 6",
                                       cli, d, d),
                           "study-1");
  step("study-session",
       fmt::format("{} quiz-take --store {}/store --study study-1 --evaluator alice < {}/answers.txt", cli, d, d),
       "Session complete");
  const Run report = step("report", fmt::format("{} report --store {}/store --study study-1", cli, d), "(out of 6)");
  const Run again = run(fmt::format("{} report --store {}/store --study study-1", cli, d));
  if (again.out != report.out) failed.push_back("report not reproducible");
  if (report.out.find("Readability") == std::string::npos) failed.push_back("report lacks rating table");
  fs::remove_all(dir);
  (void)created;
  if (!failed.empty()) {
    std::string list;
    for (const auto& f : failed) list += (list.empty() ? "" : ", ") + f;
    return fail("failed steps: " + list);
  }
  return pass("train -> explain -> quiz-gen -> quiz-take -> study-create -> terminal session -> report, all --mock");
}

}  // namespace

int main(int argc, char** argv) {
  cli_path = argc > 1 ? argv[1] : DTE_CLI_PATH;
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"path-constraint equivalence", path_constraint_equivalence},
      {"self-satisfaction and untested-feature irrelevance", self_satisfaction_and_irrelevance},
      {"quiz oracle soundness", quiz_oracle_soundness},
      {"CART correctness", cart_correctness},
      {"Iris metric", iris_metric},
      {"NF-BoT metric", nf_bot_metric},
      {"prompt checklist", prompt_checklist},
      {"scoring and aggregation", scoring_and_aggregation},
      {"LLM client vs local stub", llm_stub},
      {"service: replay and blinding", service_replay_and_blinding},
      {"service: end-to-end pipeline", end_to_end_pipeline},
  };
  int failures = 0;
  for (const auto& [name, check] : criteria) {
    Outcome o;
    try {
      o = check();
    } catch (const std::exception& e) {
      o = fail(std::string("exception: ") + e.what());
    }
    const char* tag = o.status == Status::kPass ? "PASS" : o.status == Status::kFail ? "FAIL" : "SKIP";
    if (o.status == Status::kFail) ++failures;
    std::cout << fmt::format("{} {} — {}", tag, name, o.detail) << std::endl;
  }
  std::cout << fmt::format("{} criteria, {} failed", criteria.size(), failures) << std::endl;
  return failures == 0 ? 0 : 1;
}
