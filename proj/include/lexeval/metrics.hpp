#pragma once

#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "lexeval/verdict.hpp"

namespace lexeval {

inline constexpr std::string_view kPositiveLabel = "yes";
inline constexpr std::string_view kNegativeLabel = "no";

// Ordered categorical labels keyed by post id. Abstaining ids (manual review)
// stay listed but are dropped pairwise in every comparison.
struct LabelSeries {
  std::vector<std::string> ids;
  std::vector<std::string> labels;
  std::set<std::string> abstentions;
};

LabelSeries series_from_bools(const std::vector<std::pair<std::string, bool>>& id_label);

struct Kappa {
  double value = 0.0;
  double p_o = 0.0;
  double p_e = 0.0;
  bool degenerate = false;  // p_e = 1; value pinned to 0 by convention
  std::size_t n = 0;        // pairs actually compared
};

// Chance-corrected agreement over the shared ids of both series.
Kappa cohen_kappa(const LabelSeries& a, const LabelSeries& b);

struct F1Scores {
  double positive = 0.0;  // F1 of the designated positive label
  double macro = 0.0;     // unweighted mean over observed labels
  std::size_t n = 0;
};

F1Scores f1(const LabelSeries& pred, const LabelSeries& gold, std::string_view positive_label);

struct Spread {
  double mean = 0.0;
  double sd = 0.0;  // population standard deviation
  double min = 0.0;
  double max = 0.0;
  std::size_t count = 0;
};

// Ensemble statistics over the per-paraphrase kappas.
Spread paraphrase_average(const std::vector<Kappa>& kappas);

double contradiction_rate(const std::vector<std::pair<FrDecision, Verdict>>& pairs);

// κ per (approach, statute); combinations without a series stay absent and
// render as "/".
struct ProbeTable {
  std::vector<std::string> approaches;  // row order
  std::vector<std::string> statutes;    // column order
  std::map<std::string, std::map<std::string, Kappa>> cells;
};

extern const std::vector<std::string> kProbeColumnOrder;

ProbeTable probe_score(
    const std::map<std::string, std::map<std::string, LabelSeries>>& predictions,
    const LabelSeries& gold);

// --- report -----------------------------------------------------------------

struct ApproachScore {
  std::string approach_id;
  std::string display_label;
  Spread kappa;
  std::vector<Kappa> per_paraphrase;
  double f1_positive = 0.0;
  double f1_macro = 0.0;
  std::size_t n_effective = 0;
  double refusal_rate = 0.0;
  double manual_review_rate = 0.0;
};

struct SubtaskScore {
  std::string label;
  Spread kappa;
  double f1_positive = 0.0;
  std::size_t n_effective = 0;
};

struct ContradictionScore {
  std::string label;  // conditioning flavor, e.g. "title" or "text"
  double rate = 0.0;
  std::size_t n = 0;
};

struct AgreementReport {
  std::string model_id;
  std::string corpus_label;
  std::vector<ApproachScore> approaches;
  std::vector<SubtaskScore> group_rows;
  std::vector<SubtaskScore> conduct_rows;
  std::vector<ContradictionScore> contradictions;
  std::optional<ProbeTable> probe;
  std::vector<std::string> manual_review_items;  // "post/step/paraphrase" for triage
};

enum class ReportFormat { Csv, Markdown };

// Deterministic renderings: CSV keeps full precision, Markdown displays
// two-decimal values in the style of the tables it mirrors.
std::string emit_report(const AgreementReport& report, ReportFormat format);

}  // namespace lexeval
