#pragma once

#include <map>
#include <set>
#include <string>
#include <vector>

#include "lexeval/corpus.hpp"
#include "lexeval/elicit.hpp"

namespace lexeval {

// The ten stage answers for one (post, approach, paraphrase) run. Maps are
// total over both enumerations; a stage answered by coercion (refusal mapped
// to the negative) is listed in coerced so no abstention is silent.
struct StageDecisionSet {
  std::string post_id;
  std::string approach_id;
  int paraphrase_index = 0;
  std::map<TargetGroup, bool> groups;
  std::map<Conduct, bool> conducts;
  std::vector<std::string> coerced;  // step ids whose negative was coerced

  bool operator==(const StageDecisionSet&) const = default;
};

bool stage_set_is_total(const StageDecisionSet& decisions);

enum class VerdictBasis { EndToEnd, Staged, Probe };
std::string_view to_string(VerdictBasis basis);
VerdictBasis verdict_basis_from_string(std::string_view name);

struct Verdict {
  std::string post_id;
  std::string approach_id;
  int paraphrase_index = 0;
  bool punishable = false;
  VerdictBasis basis = VerdictBasis::EndToEnd;
  bool refusal_tainted = false;

  bool operator==(const Verdict&) const = default;
};

std::string verdict_to_json(const Verdict& verdict);
Verdict verdict_from_json(const std::string& line);

struct FrDecision {
  std::string post_id;
  std::string approach_id;
  bool covered = false;

  bool operator==(const FrDecision&) const = default;
};

bool is_fr_approach(std::string_view approach_id);

// punishable iff at least one protected group and at least one conduct.
Verdict aggregate_stages(const StageDecisionSet& decisions);

// Lexicon matching of extracted targets. No matched span means Unclear.
struct TargetMatch {
  std::set<TargetGroup> groups;
  bool unclear() const { return groups.empty(); }

  bool operator==(const TargetMatch&) const = default;
};

TargetMatch match_targets(const std::vector<std::string>& spans, const TargetLexicon& lexicon);

// A single boolean answer taken at face value. Throws on non-decision answers.
Verdict binary_verdict(const StructuredAnswer& answer, VerdictBasis basis, std::string post_id,
                       std::string approach_id, int paraphrase_index,
                       bool refusal_tainted = false);

// Coverage by the constitutional guarantee and punishability exclude each
// other, so agreement between the two answers is the inconsistency.
bool is_contradictory(const FrDecision& fr, const Verdict& stat);

}  // namespace lexeval
