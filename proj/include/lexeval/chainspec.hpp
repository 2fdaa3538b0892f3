#pragma once

#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "lexeval/assets.hpp"
#include "lexeval/corpus.hpp"

namespace lexeval {

enum class AbstractionLevel { FundamentalRights, StatutoryLaw, CaseLaw };

enum class Subtask {
  FrCovered,       // covered by freedom of expression?
  Punishable,      // end-to-end criminal relevance
  GroupPresent,    // does the text refer to a specific protected group?
  ConductPresent,  // does the text commit a specific conduct?
  ExtractTargets,  // span extraction / target resolution
  FreeReasoning    // unconstrained analysis step
};

// Shape of the structured answer elicited in the JSON step.
enum class AnswerSchema { Covered, Punishable, Present, Spans, Targets, Analysis };

enum class AssetKind { StatuteText, SimplifiedStatuteText, ConstitutionText, Definition, ExampleSet };

std::string_view to_string(AbstractionLevel level);
std::string_view to_string(Subtask subtask);
std::string_view to_string(AnswerSchema schema);
std::string_view to_string(AssetKind kind);
AbstractionLevel abstraction_level_from_string(std::string_view name);
Subtask subtask_from_string(std::string_view name);
AnswerSchema answer_schema_from_string(std::string_view name);
AssetKind asset_kind_from_string(std::string_view name);

// JSON shape shown to the model in the reformat instruction, e.g.
// {"punishable": true|false}.
std::string schema_skeleton(AnswerSchema schema);

struct AssetRef {
  AssetKind kind;
  std::string key;

  bool operator==(const AssetRef&) const = default;
};

struct StepSpec {
  std::string step_id;
  Subtask subtask = Subtask::Punishable;
  std::optional<TargetGroup> group;    // GroupPresent only
  std::optional<Conduct> conduct;      // ConductPresent only
  std::vector<AssetRef> assets;        // rendered before the instruction, in order
  std::vector<std::string> templates;  // one per paraphrase, resolved content
  AnswerSchema answer_schema = AnswerSchema::Punishable;

  bool operator==(const StepSpec&) const = default;
};

struct ChainSpec {
  std::string approach_id;
  AbstractionLevel abstraction_level = AbstractionLevel::StatutoryLaw;
  int paraphrase_count = 6;
  std::optional<std::string> statute_id;  // binds {STATUTE_REF}
  std::vector<StepSpec> steps;

  bool operator==(const ChainSpec&) const = default;
};

struct StatuteRegistryEntry {
  std::string statute_id;   // e.g. "§130"
  std::string display_ref;  // e.g. "§ 130 StGB, (1)"
  bool exists = true;
  bool has_text = false;
  std::optional<std::string> text_asset;
  std::optional<std::string> simple_text_asset;
};

// §130 plus the probe paragraphs (irrelevant §120/§123/§300/§324 with texts,
// non-existent §400/§1000 without).
const std::vector<StatuteRegistryEntry>& statute_registry();
const StatuteRegistryEntry* find_statute(std::string_view statute_id);
std::vector<StatuteRegistryEntry> probe_statutes();  // registry minus §130

// The closed approach registry, in report order.
const std::vector<std::string>& registered_approach_ids();

ChainSpec parse_chain_spec(const std::string& document, const AssetStore& store);
std::string serialize_chain_spec(const ChainSpec& spec);

// Throws DataError on any violated invariant (unknown placeholder, dangling
// asset, template count mismatch, unregistered approach id, ...).
void validate_chain_spec(const ChainSpec& spec, const AssetStore& store);

std::vector<ChainSpec> builtin_approaches(const AssetStore& store);
ChainSpec builtin_approach(const AssetStore& store, std::string_view approach_id);

using Bindings = std::map<std::string, std::string>;

// Instantiates one paraphrase of a step: asset blocks first, then the template
// with {STATEMENT}/{STATUTE_REF}/{ANSWER:<step>} placeholders substituted.
std::string render_step(const StepSpec& step, int paraphrase_index, const Bindings& bindings,
                        const AssetStore& store);

// Probe mutations of a statutory approach: one variant per applicable statute,
// approach ids suffixed "@<statute_id>".
std::vector<ChainSpec> probe_variants(const ChainSpec& spec,
                                      const std::vector<StatuteRegistryEntry>& statutes);

// The decision a grounded model should give for every probe prompt.
bool expected_probe_label();

}  // namespace lexeval
