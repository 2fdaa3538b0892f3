#include "lexeval/verdict.hpp"

#include <nlohmann/json.hpp>

#include "lexeval/error.hpp"
#include "lexeval/util.hpp"

using nlohmann::json;

namespace lexeval {

namespace {
constexpr std::string_view kBasisNames[] = {"end-to-end", "staged", "probe"};
}

std::string_view to_string(VerdictBasis basis) {
  return kBasisNames[static_cast<std::size_t>(basis)];
}

VerdictBasis verdict_basis_from_string(std::string_view name) {
  for (std::size_t i = 0; i < 3; ++i) {
    if (kBasisNames[i] == name) return static_cast<VerdictBasis>(i);
  }
  throw DataError("unknown verdict basis: '" + std::string(name) + "'");
}

bool stage_set_is_total(const StageDecisionSet& decisions) {
  for (TargetGroup group : kAllTargetGroups) {
    if (!decisions.groups.contains(group)) return false;
  }
  for (Conduct conduct : kAllConducts) {
    if (!decisions.conducts.contains(conduct)) return false;
  }
  return true;
}

bool is_fr_approach(std::string_view approach_id) {
  return approach_id == "fr-title" || approach_id == "fr-text";
}

Verdict aggregate_stages(const StageDecisionSet& decisions) {
  if (!stage_set_is_total(decisions)) {
    throw DataError("stage decision set for post " + decisions.post_id +
                    " is missing entries; every group and conduct needs an explicit answer");
  }
  bool any_group = false;
  for (const auto& [group, present] : decisions.groups) any_group = any_group || present;
  bool any_conduct = false;
  for (const auto& [conduct, present] : decisions.conducts) any_conduct = any_conduct || present;

  Verdict verdict;
  verdict.post_id = decisions.post_id;
  verdict.approach_id = decisions.approach_id;
  verdict.paraphrase_index = decisions.paraphrase_index;
  verdict.punishable = any_group && any_conduct;
  verdict.basis = VerdictBasis::Staged;
  verdict.refusal_tainted = !decisions.coerced.empty();
  return verdict;
}

TargetMatch match_targets(const std::vector<std::string>& spans, const TargetLexicon& lexicon) {
  TargetMatch match;
  for (const std::string& span : spans) {
    if (auto group = lexicon.lookup(trim(span))) match.groups.insert(*group);
  }
  return match;
}

Verdict binary_verdict(const StructuredAnswer& answer, VerdictBasis basis, std::string post_id,
                       std::string approach_id, int paraphrase_index, bool refusal_tainted) {
  switch (answer.schema) {
    case AnswerSchema::Covered:
    case AnswerSchema::Punishable:
    case AnswerSchema::Present:
      break;
    default:
      throw UsageError("binary_verdict needs a boolean decision answer, got schema '" +
                       std::string(to_string(answer.schema)) + "'");
  }
  Verdict verdict;
  verdict.post_id = std::move(post_id);
  verdict.approach_id = std::move(approach_id);
  verdict.paraphrase_index = paraphrase_index;
  verdict.punishable = answer.decision;
  verdict.basis = basis;
  verdict.refusal_tainted = refusal_tainted;
  return verdict;
}

bool is_contradictory(const FrDecision& fr, const Verdict& stat) {
  if (fr.post_id != stat.post_id) {
    throw UsageError("contradiction check across different posts: '" + fr.post_id + "' vs '" +
                     stat.post_id + "'");
  }
  return fr.covered == stat.punishable;
}

std::string verdict_to_json(const Verdict& verdict) {
  json doc;
  doc["post_id"] = verdict.post_id;
  doc["approach_id"] = verdict.approach_id;
  doc["paraphrase_index"] = verdict.paraphrase_index;
  doc["punishable"] = verdict.punishable;
  doc["basis"] = std::string(to_string(verdict.basis));
  doc["refusal_tainted"] = verdict.refusal_tainted;
  return doc.dump();
}

Verdict verdict_from_json(const std::string& line) {
  json doc;
  try {
    doc = json::parse(line);
  } catch (const json::parse_error& e) {
    throw DataError(std::string("bad verdict record: ") + e.what());
  }
  try {
    Verdict verdict;
    verdict.post_id = doc.at("post_id").get<std::string>();
    verdict.approach_id = doc.at("approach_id").get<std::string>();
    verdict.paraphrase_index = doc.at("paraphrase_index").get<int>();
    verdict.punishable = doc.at("punishable").get<bool>();
    verdict.basis = verdict_basis_from_string(doc.at("basis").get<std::string>());
    verdict.refusal_tainted = doc.value("refusal_tainted", false);
    return verdict;
  } catch (const json::exception& e) {
    throw DataError(std::string("bad verdict record: ") + e.what());
  }
}

}  // namespace lexeval
