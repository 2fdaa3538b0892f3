// Release gate: one printed line per criterion, nonzero exit on any failure.
// Tolerances are pinned here, next to the checks they guard.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "lexeval/backend.hpp"
#include "lexeval/baseline.hpp"
#include "lexeval/chainspec.hpp"
#include "lexeval/elicit.hpp"
#include "lexeval/error.hpp"
#include "lexeval/metrics.hpp"
#include "lexeval/runner.hpp"
#include "lexeval/util.hpp"
#include "lexeval/verdict.hpp"

using namespace lexeval;
namespace fs = std::filesystem;
using nlohmann::json;
using Clock = std::chrono::steady_clock;

namespace {

constexpr double kKappaOracleTolerance = 1e-12;
constexpr double kReplayTolerance = 0.005;
constexpr double kRandomMeanTolerance = 0.02;

int failures = 0;

void report(int criterion, bool ok, const std::string& detail) {
  std::printf("%s  criterion %2d: %s\n", ok ? "PASS" : "FAIL", criterion, detail.c_str());
  std::fflush(stdout);
  if (!ok) ++failures;
}

double elapsed_ms(Clock::time_point start) {
  return std::chrono::duration<double, std::milli>(Clock::now() - start).count();
}

fs::path fresh_dir(const std::string& name) {
  fs::path dir = fs::temp_directory_path() / "lexeval-acceptance" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

LabelSeries series_from_counts(int a, int b, int c, int d, bool first) {
  // cell layout: a=yes/yes, b=yes/no, c=no/yes, d=no/no; `first` selects rater
  std::vector<std::pair<std::string, bool>> pairs;
  int i = 0;
  for (int k = 0; k < a; ++k, ++i) pairs.emplace_back("r" + std::to_string(i), true);
  for (int k = 0; k < b; ++k, ++i) pairs.emplace_back("r" + std::to_string(i), first);
  for (int k = 0; k < c; ++k, ++i) pairs.emplace_back("r" + std::to_string(i), !first);
  for (int k = 0; k < d; ++k, ++i) pairs.emplace_back("r" + std::to_string(i), false);
  return series_from_bools(pairs);
}

fs::path write_constant_mock(const fs::path& dir) {
  fs::path path = dir / "backend-mock.json";
  write_file(path, json{{"schema_version", 1},
                        {"kind", "mock"},
                        {"policy", "constant"},
                        {"text", "not relevant"}}
                       .dump(2) +
                       "\n");
  return path;
}

std::map<std::string, std::string> dir_bytes(const fs::path& root) {
  std::map<std::string, std::string> out;
  for (const auto& entry : fs::recursive_directory_iterator(root)) {
    if (!entry.is_regular_file()) continue;
    out[fs::relative(entry.path(), root).string()] = read_file(entry.path());
  }
  return out;
}

// --- criterion 1: exhaustive kappa oracle -----------------------------------

void criterion_kappa_oracle() {
  auto start = Clock::now();
  int checked = 0;
  bool ok = true;
  std::string first_failure;
  for (int n = 1; n <= 12 && ok; ++n) {
    for (int a = 0; a <= n && ok; ++a) {
      for (int b = 0; a + b <= n && ok; ++b) {
        for (int c = 0; a + b + c <= n && ok; ++c) {
          int d = n - a - b - c;
          ++checked;
          Kappa k = cohen_kappa(series_from_counts(a, b, c, d, true),
                                series_from_counts(a, b, c, d, false));
          double nn = n;
          double p_o = (a + d) / nn;
          double p_e = ((a + b) / nn) * ((a + c) / nn) + ((c + d) / nn) * ((b + d) / nn);
          if (1.0 - p_e < kKappaOracleTolerance) {
            if (!k.degenerate || k.value != 0.0) {
              ok = false;
              first_failure = "degenerate convention broken at " + std::to_string(a) + "," +
                              std::to_string(b) + "," + std::to_string(c) + "," +
                              std::to_string(d);
            }
          } else if (std::abs(k.value - (p_o - p_e) / (1.0 - p_e)) > kKappaOracleTolerance) {
            ok = false;
            first_failure = "mismatch at " + std::to_string(a) + "," + std::to_string(b) + "," +
                            std::to_string(c) + "," + std::to_string(d);
          }
        }
      }
    }
  }
  double ms = elapsed_ms(start);
  ok = ok && ms < 1000.0;
  report(1, ok,
         "kappa oracle over all 2x2 matrices with n <= 12 (" + std::to_string(checked) +
             " matrices, tolerance 1e-12) in " + std::to_string(ms) + " ms" +
             (first_failure.empty() ? "" : "; " + first_failure));
}

// --- criterion 2: stage aggregation oracle ----------------------------------

void criterion_aggregation_oracle() {
  auto start = Clock::now();
  bool ok = true;
  for (int mask = 0; mask < 1024 && ok; ++mask) {
    StageDecisionSet set;
    set.post_id = "p";
    set.approach_id = "stages";
    for (std::size_t i = 0; i < kAllTargetGroups.size(); ++i) {
      set.groups[kAllTargetGroups[i]] = (mask >> i) & 1;
    }
    for (std::size_t i = 0; i < kAllConducts.size(); ++i) {
      set.conducts[kAllConducts[i]] = (mask >> (5 + i)) & 1;
    }
    bool expected = (mask & 0x1F) != 0 && (mask >> 5) != 0;
    if (aggregate_stages(set).punishable != expected) ok = false;
  }
  double ms = elapsed_ms(start);
  ok = ok && ms < 1000.0;
  report(2, ok,
         "all 1024 stage assignments aggregate as (any group) AND (any conduct) in " +
             std::to_string(ms) + " ms");
}

// --- criterion 3: contradiction predicate and rates -------------------------

void criterion_contradictions() {
  bool ok = true;
  for (bool covered : {false, true}) {
    for (bool punishable : {false, true}) {
      FrDecision fr{"p1", "fr-title", covered};
      Verdict stat;
      stat.post_id = "p1";
      stat.approach_id = "stat-title";
      stat.punishable = punishable;
      // covered and punishable exclude each other; agreement is the anomaly
      if (is_contradictory(fr, stat) != (covered == punishable)) ok = false;
    }
  }

  for (int percent : {60, 34, 27, 38}) {
    std::vector<std::pair<FrDecision, Verdict>> pairs;
    for (int i = 0; i < 100; ++i) {
      bool contradictory = i < percent;
      FrDecision fr{"p" + std::to_string(i), "fr-title", false};
      Verdict stat;
      stat.post_id = fr.post_id;
      stat.approach_id = "stat-title";
      stat.punishable = contradictory ? false : true;  // no/no contradicts, no/yes is consistent
      pairs.emplace_back(fr, stat);
    }
    if (contradiction_rate(pairs) != percent / 100.0) ok = false;
  }
  report(3, ok,
         "contradiction predicate matches mutual exclusion on all 4 assignments; 100-pair "
         "fixtures give rates 0.60/0.34/0.27/0.38 exactly");
}

// --- criterion 4: probe behavior under the constant mock --------------------

void criterion_probe() {
  bool ok = true;
  std::string detail;
  try {
    fs::path dir = fresh_dir("probe");
    fs::path config = write_constant_mock(dir);
    fs::path corpus = fs::path(LEXEVAL_SOURCE_DIR) / "data" / "sample_corpus.jsonl";

    RunOptions options;
    options.corpus_path = corpus;
    options.backend_config_path = config;
    options.paraphrase_limit = 1;

    options.approach_ids = {"stat-title"};
    options.out_dir = dir / "title";
    AgreementReport title = cmd_probe(options, {});
    const auto& title_cells = title.probe->cells.at("stat-title");
    for (const std::string& statute : kProbeColumnOrder) {
      if (!title_cells.contains(statute) || title_cells.at(statute).value != 0.0) ok = false;
    }

    options.approach_ids = {"stat-text"};
    options.out_dir = dir / "text";
    AgreementReport text = cmd_probe(options, {});
    const auto& text_cells = text.probe->cells.at("stat-text");
    for (const char* statute : {"§120", "§123", "§300", "§324", "§130"}) {
      if (!text_cells.contains(statute) || text_cells.at(statute).value != 0.0) ok = false;
    }
    if (text_cells.contains("§400") || text_cells.contains("§1000")) ok = false;
    std::string md = read_file(dir / "text" / "report.md");
    if (md.find("| Text § 130 | .00 | .00 | .00 | .00 | / | / | .00 |") == std::string::npos) {
      ok = false;
      detail = "; slash-cell row missing from markdown";
    }
  } catch (const std::exception& e) {
    ok = false;
    detail = std::string("; threw: ") + e.what();
  }
  report(4, ok,
         "constant-mock probe cells are kappa = 0.00 exactly; text conditioning renders / for "
         "the textless paragraphs" +
             detail);
}

// --- criterion 5: end-to-end replay to target kappas ------------------------

// Scripts one decision per (post, approach) into a replay fixture by
// reconstructing the exact requests the elicitation layer will issue.
void record_decision(CacheStore& cache, const AssetStore& store, const ChainSpec& chain,
                     const std::string& statement, bool decision) {
  const StepSpec& step = chain.steps.front();
  Bindings bindings{{"STATEMENT", statement}};
  if (chain.statute_id) bindings["STATUTE_REF"] = find_statute(*chain.statute_id)->display_ref;

  CompletionRequest free_request;
  free_request.model_id = "mock-model";
  free_request.messages = {{Role::User, render_step(step, 0, bindings, store)}};
  CompletionResponse free_response;
  free_response.text = decision ? "Ja, meines Erachtens." : "Nein, meines Erachtens.";
  cache.put(request_digest("mock", free_request), free_response);

  std::string instruction = store.get("elicit/format-instruction.txt");
  std::string slot = "{SCHEMA}";
  if (std::size_t pos = instruction.find(slot); pos != std::string::npos) {
    instruction.replace(pos, slot.size(), schema_skeleton(step.answer_schema));
  }
  CompletionRequest format_request = free_request;
  format_request.messages.push_back({Role::Assistant, free_response.text});
  format_request.messages.push_back({Role::User, instruction});
  CompletionResponse format_response;
  std::string field = step.answer_schema == AnswerSchema::Covered ? "covered" : "punishable";
  format_response.text =
      std::string("{\"") + field + "\": " + (decision ? "true" : "false") + "}";
  cache.put(request_digest("mock", format_request), format_response);
}

void criterion_replay() {
  bool ok = true;
  std::string detail;
  try {
    fs::path dir = fresh_dir("replay");

    // 100 posts; confusion cells chosen so fr-title lands on .41 and
    // stat-title on .32
    std::string corpus_text;
    std::vector<std::string> statements;
    std::vector<bool> fr_pred, fr_gold, stat_pred, stat_gold;
    for (int i = 0; i < 100; ++i) {
      statements.push_back("Aussage Nummer " + std::to_string(i) + " über die Virelanen.");
      stat_pred.push_back(i < 18);            // 17 + 1
      stat_gold.push_back(i < 17 || (i >= 18 && i < 51));  // 17 + 33
      fr_pred.push_back(i < 29);              // 24 + 5
      fr_gold.push_back(i < 24 || (i >= 29 && i < 53));    // 24 + 24
      json record{{"schema_version", 1},
                  {"id", "x" + std::to_string(i)},
                  {"text", statements.back()},
                  {"gold", json{{"punishable", stat_gold.back()},
                                {"fr_covered", fr_gold.back()}}}};
      corpus_text += record.dump() + "\n";
    }
    fs::path corpus = dir / "corpus.jsonl";
    write_file(corpus, corpus_text);

    AssetStore store;
    ChainSpec fr_chain = builtin_approach(store, "fr-title");
    ChainSpec stat_chain = builtin_approach(store, "stat-title");
    fs::path fixture = dir / "fixture.jsonl";
    {
      CacheStore recorder(fixture);
      for (int i = 0; i < 100; ++i) {
        record_decision(recorder, store, fr_chain, statements[i], fr_pred[i]);
        record_decision(recorder, store, stat_chain, statements[i], stat_pred[i]);
      }
    }
    fs::path config = dir / "backend-replay.json";
    write_file(config, json{{"schema_version", 1},
                            {"kind", "mock"},
                            {"policy", "replay"},
                            {"fixture", "fixture.jsonl"}}
                           .dump(2) +
                           "\n");

    RunOptions options;
    options.approach_ids = {"fr-title", "stat-title"};
    options.corpus_path = corpus;
    options.backend_config_path = config;
    options.out_dir = dir / "run";
    options.paraphrase_limit = 1;
    cmd_run(options);

    EvaluateOptions eval;
    eval.run_dirs = {dir / "run"};
    eval.corpus_path = corpus;
    eval.out_dir = dir / "report";
    AgreementReport result = cmd_evaluate(eval);

    double fr_kappa = 0.0, stat_kappa = 0.0;
    for (const ApproachScore& row : result.approaches) {
      if (row.approach_id == "fr-title") fr_kappa = row.kappa.mean;
      if (row.approach_id == "stat-title") stat_kappa = row.kappa.mean;
    }
    char buf[128];
    std::snprintf(buf, sizeof(buf), " (fr-title %.5f vs .41, stat-title %.5f vs .32)", fr_kappa,
                  stat_kappa);
    detail = buf;
    if (std::abs(fr_kappa - 0.41) > kReplayTolerance) ok = false;
    if (std::abs(stat_kappa - 0.32) > kReplayTolerance) ok = false;
  } catch (const std::exception& e) {
    ok = false;
    detail = std::string("; threw: ") + e.what();
  }
  report(5, ok, "recorded fixture replays to the target kappas within 0.005" + detail);
}

// --- criterion 6: SVM baseline on the substitute corpus ---------------------

void criterion_svm() {
  // The published dataset is not bundled, so the separable-synthetic
  // substitute applies: perfect LOOCV plus the leakage sentinel.
  auto start = Clock::now();
  bool ok = true;
  std::string detail;
  try {
    std::vector<LabeledText> data;
    const char* positive_texts[] = {"hass und gewalt überall", "gewalt hass vernichtung",
                                    "nur hass gewalt drohung", "drohung vernichtung hass"};
    const char* negative_texts[] = {"friede freude sonne", "freude sonne blumen",
                                    "blumen friede sonne", "sonne friede freude"};
    for (int i = 0; i < 20; ++i) {
      data.push_back({"pos" + std::to_string(i), positive_texts[i % 4], true});
      data.push_back({"neg" + std::to_string(i), negative_texts[i % 4], false});
    }
    BaselineConfig config;
    config.components = 5;
    LoocvResult result = loocv(data, config);
    if (result.f1.positive != 1.0 || result.kappa.value != 1.0) {
      ok = false;
      detail += "; separable LOOCV not perfect";
    }

    std::vector<LabeledText> leak;
    const char* leak_positive[] = {"zyklon hass gewalt", "zyklon vernichtung hass",
                                   "zyklon gewalt drohung", "hass gewalt vernichtung"};
    for (int i = 0; i < 16; ++i) {
      leak.push_back({"pos" + std::to_string(i), leak_positive[i % 4], true});
    }
    const char* leak_negative[] = {"friede freude sonne", "blumen friede hoffnung"};
    for (int i = 0; i < 8; ++i) {
      leak.push_back({"neg" + std::to_string(i), leak_negative[i % 2], false});
    }
    leak.push_back({"sentinel", "zyklon zyklon zyklon", false});
    bool sentinel = false;
    for (const auto& [id, predicted] : loocv(leak, config).predictions) {
      if (id == "sentinel") sentinel = predicted;
    }
    if (!sentinel) {
      ok = false;
      detail += "; sentinel echoed its gold label (leakage)";
    }
  } catch (const std::exception& e) {
    ok = false;
    detail = std::string("; threw: ") + e.what();
  }
  double ms = elapsed_ms(start);
  ok = ok && ms < 120000.0;
  report(6, ok,
         "substitute baseline: separable 40-sample LOOCV F1 = 1.00 and the leakage sentinel "
         "holds, in " +
             std::to_string(ms) + " ms" + detail);
}

// --- criterion 7: uniform-random mean kappa ---------------------------------

void criterion_random_baseline() {
  auto start = Clock::now();
  std::vector<std::pair<std::string, bool>> gold;
  for (int i = 0; i < 40; ++i) gold.emplace_back("p" + std::to_string(i), i % 2 == 0);
  LabelSeries gold_series = series_from_bools(gold);

  double sum = 0.0;
  for (unsigned seed = 1; seed <= 1000; ++seed) {
    TrivialPredictions predictions = trivial_baselines(gold, seed);
    sum += cohen_kappa(series_from_bools(predictions.uniform_random), gold_series).value;
  }
  double mean = sum / 1000.0;
  double ms = elapsed_ms(start);
  bool ok = std::abs(mean) <= kRandomMeanTolerance && ms < 10000.0;
  char buf[128];
  std::snprintf(buf, sizeof(buf), "uniform-random mean kappa %.5f over 1000 seeds in %.0f ms",
                mean, ms);
  report(7, ok, buf);
}

// --- criterion 8: repair suite ----------------------------------------------

void criterion_repairs() {
  struct Fixture {
    const char* text;
    AnswerSchema schema;
    std::vector<std::string> repairs;
  };
  const std::vector<Fixture> repairable = {
      {"```json\n{\"punishable\": true}\n```", AnswerSchema::Punishable, {"strip_fence"}},
      {"```json\n{\"punishable\": true,}\n```",
       AnswerSchema::Punishable,
       {"strip_fence", "drop_trailing_comma"}},
      {"Here is the answer:\n{\"covered\": false}", AnswerSchema::Covered, {"trim_prose"}},
      {"{'present': true}", AnswerSchema::Present, {"single_quotes"}},
      {"{\"punishable\": \"ja\"}", AnswerSchema::Punishable, {"bool_words"}},
      {"{\"covered\": no}", AnswerSchema::Covered, {"bool_words"}},
      {"{\"present\": false,}", AnswerSchema::Present, {"drop_trailing_comma"}},
      {"yes", AnswerSchema::Punishable, {"bare_answer"}},
      {"Nein.", AnswerSchema::Covered, {"bare_answer"}},
      {"not relevant", AnswerSchema::Punishable, {"bare_answer"}},
      {"[\"die Virelanen\"]", AnswerSchema::Spans, {"bare_answer"}},
      {"Sure! Here is the JSON:\n```json\n{'punishable': 'no',}\n```",
       AnswerSchema::Punishable,
       {"strip_fence", "trim_prose", "drop_trailing_comma", "single_quotes", "bool_words"}},
  };
  const std::vector<std::pair<const char*, AnswerSchema>> irreparable = {
      {"The answer is probably yes.", AnswerSchema::Punishable},
      {"{\"verdict\": \"maybe\"}", AnswerSchema::Punishable},
      {"I would need more context to decide.", AnswerSchema::Covered},
  };

  bool ok = true;
  std::string detail;
  int index = 0;
  for (const Fixture& fixture : repairable) {
    ExtractResult result = extract_json(fixture.text, fixture.schema);
    if (!result.answer || result.repairs != fixture.repairs) {
      ok = false;
      detail += "; repairable #" + std::to_string(index) + " failed";
    } else {
      // idempotence: the canonical form needs no repairs at all
      ExtractResult again = extract_json(serialize_answer(*result.answer), fixture.schema);
      if (!again.answer || !again.repairs.empty() || !(*again.answer == *result.answer)) {
        ok = false;
        detail += "; idempotence #" + std::to_string(index) + " failed";
      }
    }
    ++index;
  }
  for (const auto& [text, schema] : irreparable) {
    if (extract_json(text, schema).answer.has_value()) {
      ok = false;
      detail += "; irreparable fixture parsed";
    }
  }
  report(8, ok,
         std::to_string(repairable.size()) + " malformed fixtures recover with exact traces, " +
             std::to_string(irreparable.size()) +
             " route to manual review, recovered answers are idempotent" + detail);
}

// --- criterion 9: determinism of full runs ----------------------------------

void criterion_determinism() {
  bool ok = true;
  std::string detail;
  try {
    fs::path dir = fresh_dir("determinism");
    fs::path config = write_constant_mock(dir);
    fs::path corpus = fs::path(LEXEVAL_SOURCE_DIR) / "data" / "sample_corpus.jsonl";

    RunOptions options;
    options.approach_ids = registered_approach_ids();
    options.corpus_path = corpus;
    options.backend_config_path = config;

    options.out_dir = dir / "run-a";
    cmd_run(options);
    options.out_dir = dir / "run-b";
    cmd_run(options);

    auto a = dir_bytes(dir / "run-a");
    auto b = dir_bytes(dir / "run-b");
    if (a != b) {
      ok = false;
      detail += "; run directories differ";
    }

    EvaluateOptions eval;
    eval.corpus_path = corpus;
    eval.run_dirs = {dir / "run-a"};
    eval.out_dir = dir / "report-a";
    cmd_evaluate(eval);
    eval.run_dirs = {dir / "run-b"};
    eval.out_dir = dir / "report-b";
    cmd_evaluate(eval);
    if (dir_bytes(dir / "report-a") != dir_bytes(dir / "report-b")) {
      ok = false;
      detail += "; reports differ";
    }
  } catch (const std::exception& e) {
    ok = false;
    detail = std::string("; threw: ") + e.what();
  }
  report(9, ok,
         "two full mock runs over every registered approach are byte-identical, reports "
         "included" +
             detail);
}

// --- criterion 10: optional live smoke --------------------------------------

void criterion_live_smoke() {
  const char* base_url = std::getenv("LEXEVAL_LIVE_BASE_URL");
  if (base_url == nullptr || *base_url == '\0') {
    report(10, true, "live smoke skipped (LEXEVAL_LIVE_BASE_URL not set)");
    return;
  }
  bool ok = true;
  std::string detail;
  try {
    fs::path dir = fresh_dir("live");
    const char* model = std::getenv("LEXEVAL_LIVE_MODEL");
    write_file(dir / "backend-live.json",
               json{{"schema_version", 1},
                    {"kind", "http"},
                    {"base_url", base_url},
                    {"model_id", model ? model : "gpt-4o-mini"},
                    {"decoding", json{{"temperature", 0.0}, {"max_tokens", 512}}}}
                   .dump(2) +
                   "\n");

    Corpus sample = load_corpus(fs::path(LEXEVAL_SOURCE_DIR) / "data" / "sample_corpus.jsonl");
    Corpus three;
    for (int i = 0; i < 3; ++i) {
      three.posts.push_back(sample.posts[i]);
      three.gold.push_back(*sample.find_gold(sample.posts[i].id));
    }
    save_corpus(three, dir / "three.jsonl");

    std::string command = std::string(LEXEVAL_CLI_PATH) + " run --approach stat-title" +
                          " --corpus " + (dir / "three.jsonl").string() + " --backend-config " +
                          (dir / "backend-live.json").string() + " --out " +
                          (dir / "run").string() + " --paraphrases 1";
    int rc = std::system(command.c_str());
    if (rc != 0) {
      ok = false;
      detail = "; CLI exited with " + std::to_string(rc);
    } else {
      RunData data = load_run(dir / "run");
      if (data.verdicts.size() + data.manual_reviews.size() != 3) {
        ok = false;
        detail = "; expected 3 outcomes, got " + std::to_string(data.verdicts.size()) +
                 " verdicts and " + std::to_string(data.manual_reviews.size()) + " reviews";
      }
    }
  } catch (const std::exception& e) {
    ok = false;
    detail = std::string("; threw: ") + e.what();
  }
  report(10, ok, "3 posts through the live endpoint produce parseable verdicts" + detail);
}

}  // namespace

int main() {
  criterion_kappa_oracle();
  criterion_aggregation_oracle();
  criterion_contradictions();
  criterion_probe();
  criterion_replay();
  criterion_svm();
  criterion_random_baseline();
  criterion_repairs();
  criterion_determinism();
  criterion_live_smoke();

  if (failures > 0) {
    std::printf("%d criterion(s) failed\n", failures);
    return 1;
  }
  std::printf("all criteria passed\n");
  return 0;
}
