#include "lexeval/chainspec.hpp"

#include <algorithm>
#include <cctype>
#include <set>

#include <nlohmann/json.hpp>

#include "lexeval/error.hpp"
#include "lexeval/util.hpp"

using nlohmann::json;
using nlohmann::ordered_json;

namespace lexeval {

namespace {

constexpr int kSchemaVersion = 1;

constexpr std::string_view kLevelNames[] = {"fundamental-rights", "statutory-law", "case-law"};
constexpr std::string_view kSubtaskNames[] = {"fr-covered", "punishable", "group-present",
                                              "conduct-present", "extract-targets",
                                              "free-reasoning"};
constexpr std::string_view kSchemaNames[] = {"covered", "punishable", "present",
                                             "spans", "targets", "analysis"};
constexpr std::string_view kAssetKindNames[] = {"statute-text", "simplified-statute-text",
                                                "constitution-text", "definition", "example-set"};

template <typename Enum, std::size_t N>
Enum enum_from_name(const std::string_view (&names)[N], std::string_view name,
                    std::string_view what) {
  for (std::size_t i = 0; i < N; ++i) {
    if (names[i] == name) return static_cast<Enum>(i);
  }
  throw DataError("unknown " + std::string(what) + ": '" + std::string(name) + "'");
}

// Extracts {NAME} placeholders; NAME is [A-Za-z0-9_:-]+. Anything else stays
// literal text.
std::vector<std::string> placeholders_in(std::string_view text) {
  std::vector<std::string> found;
  for (std::size_t i = 0; i < text.size(); ++i) {
    if (text[i] != '{') continue;
    std::size_t j = i + 1;
    while (j < text.size() &&
           (std::isalnum(static_cast<unsigned char>(text[j])) || text[j] == '_' ||
            text[j] == ':' || text[j] == '-')) {
      ++j;
    }
    if (j > i + 1 && j < text.size() && text[j] == '}') {
      found.emplace_back(text.substr(i + 1, j - i - 1));
      i = j;
    }
  }
  return found;
}

AnswerSchema default_schema(Subtask subtask) {
  switch (subtask) {
    case Subtask::FrCovered: return AnswerSchema::Covered;
    case Subtask::Punishable: return AnswerSchema::Punishable;
    case Subtask::GroupPresent:
    case Subtask::ConductPresent: return AnswerSchema::Present;
    case Subtask::FreeReasoning: return AnswerSchema::Analysis;
    case Subtask::ExtractTargets:
      throw DataError("extract-targets steps need an explicit answer_schema (spans or targets)");
  }
  throw DataError("unreachable subtask");
}

struct ExampleSet {
  std::vector<std::string> positive;
  std::vector<std::string> negative;
};

ExampleSet parse_example_set(const std::string& key, const std::string& content) {
  json doc;
  try {
    doc = json::parse(content);
  } catch (const json::parse_error& e) {
    throw DataError("example set '" + key + "' is not valid JSON: " + e.what());
  }
  ExampleSet set;
  try {
    for (const auto& item : doc.at("positive")) set.positive.push_back(item.get<std::string>());
    for (const auto& item : doc.at("negative")) set.negative.push_back(item.get<std::string>());
  } catch (const json::exception& e) {
    throw DataError("example set '" + key + "': " + e.what());
  }
  if (set.positive.size() != 3 || set.negative.size() != 3) {
    throw DataError("example set '" + key + "' must contain exactly three positive and three "
                    "negative examples (has " + std::to_string(set.positive.size()) + "/" +
                    std::to_string(set.negative.size()) + ")");
  }
  return set;
}

std::string render_example_block(const std::string& key, const std::string& content) {
  ExampleSet set = parse_example_set(key, content);
  std::string out = "Examples:\n";
  for (std::size_t i = 0; i < 3; ++i) {
    out += "\nText: " + set.positive[i] + "\nAnswer: yes\n";
    out += "\nText: " + set.negative[i] + "\nAnswer: no\n";
  }
  return out;
}

std::string render_asset_block(const AssetRef& ref, const AssetStore& store) {
  std::string content = store.get(ref.key);
  if (ref.kind == AssetKind::ExampleSet) {
    return render_example_block(ref.key, content);
  }
  return std::string(trim(content));
}

StepSpec parse_step(const json& in, const AssetStore& store) {
  StepSpec step;
  try {
    step.step_id = in.at("step_id").get<std::string>();
    step.subtask = subtask_from_string(in.at("subtask").get<std::string>());
    if (in.contains("group")) {
      step.group = target_group_from_string(in.at("group").get<std::string>());
    }
    if (in.contains("conduct")) {
      step.conduct = conduct_from_string(in.at("conduct").get<std::string>());
    }
    if (in.contains("assets")) {
      for (const auto& ref : in.at("assets")) {
        step.assets.push_back({asset_kind_from_string(ref.at("kind").get<std::string>()),
                               ref.at("key").get<std::string>()});
      }
    }
    bool inline_templates = in.contains("templates");
    bool referenced_templates = in.contains("templates_from");
    if (inline_templates == referenced_templates) {
      throw DataError("step '" + step.step_id +
                      "' needs exactly one of templates / templates_from");
    }
    if (inline_templates) {
      for (const auto& tpl : in.at("templates")) step.templates.push_back(tpl.get<std::string>());
    } else {
      std::string key = in.at("templates_from").get<std::string>();
      json doc;
      try {
        doc = json::parse(store.get(key));
      } catch (const json::parse_error& e) {
        throw DataError("paraphrase asset '" + key + "' is not valid JSON: " + e.what());
      }
      for (const auto& tpl : doc.at("templates")) step.templates.push_back(tpl.get<std::string>());
    }
    if (in.contains("answer_schema")) {
      step.answer_schema = answer_schema_from_string(in.at("answer_schema").get<std::string>());
    } else {
      step.answer_schema = default_schema(step.subtask);
    }
  } catch (const json::exception& e) {
    throw DataError(std::string("bad step spec: ") + e.what());
  }
  return step;
}

bool is_statutory(std::string_view approach_id) {
  return approach_id == "stat-title" || approach_id == "stat-text" ||
         approach_id == "stat-simple";
}

}  // namespace

std::string_view to_string(AbstractionLevel level) {
  return kLevelNames[static_cast<std::size_t>(level)];
}
std::string_view to_string(Subtask subtask) {
  return kSubtaskNames[static_cast<std::size_t>(subtask)];
}
std::string_view to_string(AnswerSchema schema) {
  return kSchemaNames[static_cast<std::size_t>(schema)];
}
std::string_view to_string(AssetKind kind) {
  return kAssetKindNames[static_cast<std::size_t>(kind)];
}

AbstractionLevel abstraction_level_from_string(std::string_view name) {
  return enum_from_name<AbstractionLevel>(kLevelNames, name, "abstraction level");
}
Subtask subtask_from_string(std::string_view name) {
  return enum_from_name<Subtask>(kSubtaskNames, name, "subtask");
}
AnswerSchema answer_schema_from_string(std::string_view name) {
  return enum_from_name<AnswerSchema>(kSchemaNames, name, "answer schema");
}
AssetKind asset_kind_from_string(std::string_view name) {
  return enum_from_name<AssetKind>(kAssetKindNames, name, "asset kind");
}

std::string schema_skeleton(AnswerSchema schema) {
  switch (schema) {
    case AnswerSchema::Covered: return R"({"covered": true|false})";
    case AnswerSchema::Punishable: return R"({"punishable": true|false})";
    case AnswerSchema::Present: return R"({"present": true|false})";
    case AnswerSchema::Spans: return R"({"spans": ["..."]})";
    case AnswerSchema::Targets: return R"({"targets": ["..."]})";
    case AnswerSchema::Analysis: return R"({"analysis": "..."})";
  }
  throw DataError("unreachable schema");
}

const std::vector<StatuteRegistryEntry>& statute_registry() {
  static const std::vector<StatuteRegistryEntry> registry = {
      {"§130", "§ 130 StGB, (1)", true, true, "statutes/130.txt", "statutes/130-simple.txt"},
      {"§120", "§ 120 StGB", true, true, "statutes/120.txt", "statutes/120-simple.txt"},
      {"§123", "§ 123 StGB", true, true, "statutes/123.txt", "statutes/123-simple.txt"},
      {"§300", "§ 300 StGB", true, true, "statutes/300.txt", "statutes/300-simple.txt"},
      {"§324", "§ 324 StGB", true, true, "statutes/324.txt", "statutes/324-simple.txt"},
      {"§400", "§ 400 StGB", false, false, std::nullopt, std::nullopt},
      {"§1000", "§ 1000 StGB", false, false, std::nullopt, std::nullopt},
  };
  return registry;
}

const StatuteRegistryEntry* find_statute(std::string_view statute_id) {
  for (const StatuteRegistryEntry& entry : statute_registry()) {
    if (entry.statute_id == statute_id) return &entry;
  }
  return nullptr;
}

std::vector<StatuteRegistryEntry> probe_statutes() {
  std::vector<StatuteRegistryEntry> probes;
  for (const StatuteRegistryEntry& entry : statute_registry()) {
    if (entry.statute_id != "§130") probes.push_back(entry);
  }
  return probes;
}

const std::vector<std::string>& registered_approach_ids() {
  static const std::vector<std::string> ids = {
      "fr-title", "fr-text", "stat-title", "stat-text", "stat-simple", "high-level-stages",
      "stages", "stages-definitions", "stages-examples", "stages-definitions-examples",
      "target-extraction"};
  return ids;
}

ChainSpec parse_chain_spec(const std::string& document, const AssetStore& store) {
  json doc;
  try {
    doc = json::parse(document);
  } catch (const json::parse_error& e) {
    throw DataError(std::string("chain spec is not valid JSON: ") + e.what());
  }
  if (doc.value("schema_version", -1) != kSchemaVersion) {
    throw DataError("chain spec: missing or unsupported schema_version");
  }
  ChainSpec spec;
  try {
    spec.approach_id = doc.at("approach_id").get<std::string>();
    spec.abstraction_level =
        abstraction_level_from_string(doc.at("abstraction_level").get<std::string>());
    spec.paraphrase_count = doc.at("paraphrase_count").get<int>();
    if (doc.contains("statute_id")) spec.statute_id = doc.at("statute_id").get<std::string>();
    for (const auto& step : doc.at("steps")) {
      spec.steps.push_back(parse_step(step, store));
    }
  } catch (const json::exception& e) {
    throw DataError(std::string("bad chain spec: ") + e.what());
  }
  validate_chain_spec(spec, store);
  return spec;
}

std::string serialize_chain_spec(const ChainSpec& spec) {
  ordered_json doc;
  doc["schema_version"] = kSchemaVersion;
  doc["approach_id"] = spec.approach_id;
  doc["abstraction_level"] = std::string(to_string(spec.abstraction_level));
  doc["paraphrase_count"] = spec.paraphrase_count;
  if (spec.statute_id) doc["statute_id"] = *spec.statute_id;
  doc["steps"] = ordered_json::array();
  for (const StepSpec& step : spec.steps) {
    ordered_json out;
    out["step_id"] = step.step_id;
    out["subtask"] = std::string(to_string(step.subtask));
    if (step.group) out["group"] = std::string(to_string(*step.group));
    if (step.conduct) out["conduct"] = std::string(to_string(*step.conduct));
    if (!step.assets.empty()) {
      out["assets"] = ordered_json::array();
      for (const AssetRef& ref : step.assets) {
        out["assets"].push_back({{"kind", std::string(to_string(ref.kind))}, {"key", ref.key}});
      }
    }
    out["answer_schema"] = std::string(to_string(step.answer_schema));
    out["templates"] = step.templates;
    doc["steps"].push_back(std::move(out));
  }
  return doc.dump(2) + "\n";
}

void validate_chain_spec(const ChainSpec& spec, const AssetStore& store) {
  // approach id: one of the registered ids, or a probe mutation of a
  // statutory one ("stat-xxx@§NNN").
  const auto& ids = registered_approach_ids();
  std::string base = spec.approach_id;
  if (auto at = base.find('@'); at != std::string::npos) {
    std::string suffix = base.substr(at + 1);
    base = base.substr(0, at);
    if (!is_statutory(base) || !spec.statute_id || *spec.statute_id != suffix) {
      throw DataError("approach id '" + spec.approach_id +
                      "' is not a valid probe mutation");
    }
  }
  if (std::find(ids.begin(), ids.end(), base) == ids.end()) {
    throw DataError("approach id '" + spec.approach_id + "' is not registered");
  }
  if (spec.paraphrase_count < 1) {
    throw DataError("paraphrase_count must be >= 1");
  }
  if (spec.statute_id && !find_statute(*spec.statute_id)) {
    throw DataError("statute '" + *spec.statute_id + "' is not in the registry");
  }
  if (spec.steps.empty()) {
    throw DataError("chain '" + spec.approach_id + "' has no steps");
  }

  std::set<std::string> earlier_ids;
  std::set<std::string> all_ids;
  for (const StepSpec& step : spec.steps) all_ids.insert(step.step_id);
  if (all_ids.size() != spec.steps.size()) {
    throw DataError("chain '" + spec.approach_id + "' has duplicate step ids");
  }

  for (const StepSpec& step : spec.steps) {
    if (step.step_id.empty()) throw DataError("empty step id in '" + spec.approach_id + "'");
    if ((step.subtask == Subtask::GroupPresent) != step.group.has_value()) {
      throw DataError("step '" + step.step_id + "': group set iff subtask is group-present");
    }
    if ((step.subtask == Subtask::ConductPresent) != step.conduct.has_value()) {
      throw DataError("step '" + step.step_id + "': conduct set iff subtask is conduct-present");
    }
    if (step.subtask == Subtask::FreeReasoning) {
      if (step.templates.empty()) {
        throw DataError("step '" + step.step_id + "' has no templates");
      }
    } else if (static_cast<int>(step.templates.size()) != spec.paraphrase_count) {
      throw DataError("step '" + step.step_id + "' has " +
                      std::to_string(step.templates.size()) + " templates, expected " +
                      std::to_string(spec.paraphrase_count));
    }
    for (const AssetRef& ref : step.assets) {
      if (!store.contains(ref.key)) {
        throw DataError("step '" + step.step_id + "': unresolved asset '" + ref.key + "'");
      }
      if (ref.kind == AssetKind::ExampleSet) {
        parse_example_set(ref.key, store.get(ref.key));  // enforces the 3+3 shape
      }
    }
    for (const std::string& tpl : step.templates) {
      for (const std::string& name : placeholders_in(tpl)) {
        if (name == "STATEMENT") continue;
        if (name == "STATUTE_REF") {
          if (!spec.statute_id) {
            throw DataError("step '" + step.step_id +
                            "': {STATUTE_REF} used but chain has no statute_id");
          }
          continue;
        }
        if (starts_with(name, "ANSWER:")) {
          std::string target = name.substr(7);
          if (earlier_ids.contains(target)) continue;
          if (all_ids.contains(target)) {
            throw DataError("step '" + step.step_id + "': placeholder {" + name +
                            "} references a later step");
          }
          throw DataError("step '" + step.step_id + "': placeholder {" + name +
                          "} references an unknown step");
        }
        throw DataError("step '" + step.step_id + "': unknown placeholder {" + name + "}");
      }
    }
    earlier_ids.insert(step.step_id);
  }
}

std::vector<ChainSpec> builtin_approaches(const AssetStore& store) {
  std::vector<ChainSpec> specs;
  for (const std::string& id : registered_approach_ids()) {
    specs.push_back(builtin_approach(store, id));
  }
  return specs;
}

ChainSpec builtin_approach(const AssetStore& store, std::string_view approach_id) {
  std::string key = "chains/" + std::string(approach_id) + ".json";
  if (!store.contains(key)) {
    throw DataError("unknown approach '" + std::string(approach_id) + "'; registered: " +
                    [] {
                      std::string all;
                      for (const std::string& id : registered_approach_ids()) {
                        if (!all.empty()) all += ", ";
                        all += id;
                      }
                      return all;
                    }());
  }
  ChainSpec spec = parse_chain_spec(store.get(key), store);
  if (spec.approach_id != approach_id) {
    throw DataError("chain document '" + key + "' declares approach id '" + spec.approach_id +
                    "'");
  }
  return spec;
}

std::string render_step(const StepSpec& step, int paraphrase_index, const Bindings& bindings,
                        const AssetStore& store) {
  if (paraphrase_index < 0 || paraphrase_index >= static_cast<int>(step.templates.size())) {
    throw UsageError("paraphrase index " + std::to_string(paraphrase_index) +
                     " out of range for step '" + step.step_id + "' (" +
                     std::to_string(step.templates.size()) + " templates)");
  }
  std::string out;
  for (const AssetRef& ref : step.assets) {
    out += render_asset_block(ref, store);
    out += "\n\n";
  }
  const std::string& tpl = step.templates[static_cast<std::size_t>(paraphrase_index)];
  std::size_t pos = 0;
  while (pos < tpl.size()) {
    if (tpl[pos] == '{') {
      std::size_t j = pos + 1;
      while (j < tpl.size() &&
             (std::isalnum(static_cast<unsigned char>(tpl[j])) || tpl[j] == '_' ||
              tpl[j] == ':' || tpl[j] == '-')) {
        ++j;
      }
      if (j > pos + 1 && j < tpl.size() && tpl[j] == '}') {
        std::string name = tpl.substr(pos + 1, j - pos - 1);
        auto it = bindings.find(name);
        if (it == bindings.end()) {
          throw DataError("step '" + step.step_id + "': unbound placeholder {" + name + "}");
        }
        out += it->second;
        pos = j + 1;
        continue;
      }
    }
    out += tpl[pos];
    ++pos;
  }
  return out;
}

std::vector<ChainSpec> probe_variants(const ChainSpec& spec,
                                      const std::vector<StatuteRegistryEntry>& statutes) {
  if (!is_statutory(spec.approach_id)) {
    throw UsageError("'" + spec.approach_id +
                     "' is not a statutory approach; probes need stat-title, stat-text or "
                     "stat-simple");
  }
  std::vector<ChainSpec> variants;
  for (const StatuteRegistryEntry& statute : statutes) {
    std::optional<std::string> replacement_asset;
    if (spec.approach_id == "stat-text") {
      if (!statute.text_asset) continue;  // "/" cell: no text to condition on
      replacement_asset = statute.text_asset;
    } else if (spec.approach_id == "stat-simple") {
      if (!statute.simple_text_asset) continue;
      replacement_asset = statute.simple_text_asset;
    }
    ChainSpec variant = spec;
    variant.approach_id = spec.approach_id + "@" + statute.statute_id;
    variant.statute_id = statute.statute_id;
    if (replacement_asset) {
      for (StepSpec& step : variant.steps) {
        for (AssetRef& ref : step.assets) {
          if (ref.kind == AssetKind::StatuteText ||
              ref.kind == AssetKind::SimplifiedStatuteText) {
            ref.key = *replacement_asset;
          }
        }
      }
    }
    variants.push_back(std::move(variant));
  }
  return variants;
}

bool expected_probe_label() {
  return false;  // "not relevant"
}

}  // namespace lexeval
