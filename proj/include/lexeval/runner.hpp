#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "lexeval/backend.hpp"
#include "lexeval/baseline.hpp"
#include "lexeval/chainspec.hpp"
#include "lexeval/corpus.hpp"
#include "lexeval/metrics.hpp"
#include "lexeval/verdict.hpp"

namespace lexeval {

inline constexpr std::string_view kToolVersion = "0.1.0";

// Everything a run depends on, fingerprinted. Two runs with equal manifests
// are interchangeable; a changed input changes the run id.
struct RunManifest {
  std::string run_id;
  std::vector<std::string> approach_ids;
  std::string model_id;
  DecodingParams decoding;
  std::string backend_fingerprint;
  std::string corpus_fingerprint;
  std::string assets_fingerprint;
  std::string tool_version = std::string(kToolVersion);
  std::string created_at;
  int paraphrase_limit = 0;  // 0 = every paraphrase the chain defines
};

void save_manifest(const RunManifest& manifest, const std::filesystem::path& run_dir);
RunManifest load_manifest(const std::filesystem::path& run_dir);

// Per-run record types beyond Verdict. Each maps to one JSONL line.
struct FrRecord {
  std::string post_id;
  std::string approach_id;
  int paraphrase_index = 0;
  bool covered = false;
  bool refusal_tainted = false;
};

struct ExtractionRecord {
  std::string post_id;
  std::string approach_id;
  int paraphrase_index = 0;
  std::vector<std::string> spans;    // verbatim quotes from the statement
  std::vector<std::string> targets;  // resolved group mentions, unmatched ok
  std::vector<std::string> non_span_mentions;
  bool refusal_tainted = false;
};

struct ManualReviewRecord {
  std::string post_id;
  std::string approach_id;
  int paraphrase_index = 0;
  std::string step_id;
};

struct RunData {
  RunManifest manifest;
  std::vector<Verdict> verdicts;
  std::vector<FrRecord> fr_decisions;
  std::vector<StageDecisionSet> stage_sets;
  std::vector<ExtractionRecord> extractions;
  std::vector<ManualReviewRecord> manual_reviews;
};

struct RunOptions {
  std::vector<std::string> approach_ids;
  std::filesystem::path corpus_path;
  std::filesystem::path backend_config_path;
  std::filesystem::path out_dir;
  std::optional<std::filesystem::path> cache_path;  // default: <out>/cache.jsonl
  std::optional<std::filesystem::path> assets_dir;  // overlay over builtins
  int paraphrase_limit = 0;
};

// Executes the chains over the corpus and persists manifest, transcripts and
// record files under out_dir. A directory holding a matching manifest is
// resumed (completions come from the cache); a mismatching one is refused.
RunData cmd_run(const RunOptions& options);

// Statute-substitution probe: the base approach plus one variant per probe
// statute, scored immediately into report files in the run directory.
AgreementReport cmd_probe(const RunOptions& options, const std::vector<std::string>& statute_ids,
                          std::optional<ReportFormat> format = {});

RunData load_run(const std::filesystem::path& run_dir);

struct EvaluateOptions {
  std::vector<std::filesystem::path> run_dirs;
  std::filesystem::path corpus_path;
  std::filesystem::path out_dir;
  std::optional<std::filesystem::path> lexicon_path;  // target resolution
  std::optional<ReportFormat> format;                 // unset = csv and md
};

// Scores run records against the gold annotations and writes report files.
// Rejects runs whose corpus fingerprint does not match the given corpus.
AgreementReport cmd_evaluate(const EvaluateOptions& options);

struct ContradictionDetail {
  std::string post_id;
  int paraphrase_index = 0;
  bool covered = false;
  bool punishable = false;
  bool contradictory = false;
};

struct ContradictionOutcome {
  ContradictionScore score;
  std::vector<ContradictionDetail> details;
};

// Pairs a fundamental-rights run with a statutory run of the same conditioning
// flavor (title/text) and reports the share of contradictory decisions.
ContradictionOutcome cmd_contradictions(const std::filesystem::path& fr_run_dir,
                                        const std::filesystem::path& stat_run_dir,
                                        const std::filesystem::path& out_dir);

// Renders every step prompt of one paraphrase without touching any backend.
// Earlier answers appear as a "[MODEL PREDICTION]" stand-in.
std::string cmd_render(const std::string& approach_id, const std::string& statement,
                       int paraphrase_index,
                       const std::optional<std::filesystem::path>& assets_dir = {});

struct BaselineRunOptions {
  std::filesystem::path corpus_path;
  std::filesystem::path out_dir;
  BaselineConfig config;
  std::optional<ReportFormat> format;
};

// Leave-one-out SVM plus the trivial baselines, written as a regular report.
AgreementReport cmd_baseline(const BaselineRunOptions& options);

// Human-facing row label for an approach id, e.g. "stat-title" -> "Title § 130".
std::string report_display_label(std::string_view approach_id);

}  // namespace lexeval
