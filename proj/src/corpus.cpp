#include "lexeval/corpus.hpp"

#include <algorithm>
#include <sstream>
#include <unordered_set>

#include <nlohmann/json.hpp>

#include "lexeval/error.hpp"
#include "lexeval/util.hpp"

using nlohmann::json;

namespace lexeval {

namespace {

constexpr int kSchemaVersion = 1;

constexpr std::array<std::string_view, 5> kGroupNames = {
    "racial", "national", "religious", "ethnic", "section-of-population"};
constexpr std::array<std::string_view, 5> kConductNames = {
    "inciting-hatred", "calling-for-violence", "insulting", "slandering", "disparaging"};

json gold_to_json(const GoldAnnotation& gold) {
  json out = json::object();
  if (gold.punishable) out["punishable"] = *gold.punishable;
  if (gold.groups) {
    json arr = json::array();
    for (TargetGroup g : *gold.groups) arr.push_back(std::string(to_string(g)));
    out["groups"] = arr;
  }
  if (gold.conducts) {
    json arr = json::array();
    for (Conduct c : *gold.conducts) arr.push_back(std::string(to_string(c)));
    out["conducts"] = arr;
  }
  if (gold.fr_covered) out["fr_covered"] = *gold.fr_covered;
  return out;
}

GoldAnnotation gold_from_json(const std::string& post_id, const json& in, int line_no) {
  GoldAnnotation gold;
  gold.post_id = post_id;
  try {
    if (in.contains("punishable")) gold.punishable = in.at("punishable").get<bool>();
    if (in.contains("groups")) {
      std::set<TargetGroup> groups;
      for (const auto& name : in.at("groups")) {
        groups.insert(target_group_from_string(name.get<std::string>()));
      }
      gold.groups = std::move(groups);
    }
    if (in.contains("conducts")) {
      std::set<Conduct> conducts;
      for (const auto& name : in.at("conducts")) {
        conducts.insert(conduct_from_string(name.get<std::string>()));
      }
      gold.conducts = std::move(conducts);
    }
    if (in.contains("fr_covered")) gold.fr_covered = in.at("fr_covered").get<bool>();
  } catch (const json::exception& e) {
    throw DataError("line " + std::to_string(line_no) + ": bad gold annotation: " + e.what());
  }
  return gold;
}

bool gold_is_empty(const GoldAnnotation& gold) {
  return !gold.punishable && !gold.groups && !gold.conducts && !gold.fr_covered;
}

}  // namespace

std::string_view to_string(TargetGroup group) {
  return kGroupNames[static_cast<std::size_t>(group)];
}

std::string_view to_string(Conduct conduct) {
  return kConductNames[static_cast<std::size_t>(conduct)];
}

TargetGroup target_group_from_string(std::string_view name) {
  for (std::size_t i = 0; i < kGroupNames.size(); ++i) {
    if (kGroupNames[i] == name) return static_cast<TargetGroup>(i);
  }
  throw DataError("unknown target group: '" + std::string(name) + "'");
}

Conduct conduct_from_string(std::string_view name) {
  for (std::size_t i = 0; i < kConductNames.size(); ++i) {
    if (kConductNames[i] == name) return static_cast<Conduct>(i);
  }
  throw DataError("unknown conduct: '" + std::string(name) + "'");
}

const Post* Corpus::find_post(std::string_view id) const {
  for (const Post& p : posts) {
    if (p.id == id) return &p;
  }
  return nullptr;
}

const GoldAnnotation* Corpus::find_gold(std::string_view post_id) const {
  for (const GoldAnnotation& g : gold) {
    if (g.post_id == post_id) return &g;
  }
  return nullptr;
}

Corpus load_corpus(const std::filesystem::path& path) {
  Corpus corpus;
  std::unordered_set<std::string> seen_ids;
  for_each_line(path, [&](int line_no, std::string_view line) {
    json rec;
    try {
      rec = json::parse(line);
    } catch (const json::parse_error& e) {
      throw DataError(path.string() + ":" + std::to_string(line_no) + ": not valid JSON: " +
                      e.what());
    }
    if (!rec.is_object()) {
      throw DataError(path.string() + ":" + std::to_string(line_no) + ": record is not an object");
    }
    if (rec.value("schema_version", -1) != kSchemaVersion) {
      throw DataError(path.string() + ":" + std::to_string(line_no) +
                      ": missing or unsupported schema_version");
    }
    Post post;
    try {
      post.id = rec.at("id").get<std::string>();
      post.text = rec.at("text").get<std::string>();
      post.language = rec.value("language", "de");
    } catch (const json::exception& e) {
      throw DataError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
    if (post.id.empty()) {
      throw DataError(path.string() + ":" + std::to_string(line_no) + ": empty post id");
    }
    if (!seen_ids.insert(post.id).second) {
      throw DataError(path.string() + ":" + std::to_string(line_no) + ": duplicate post id '" +
                      post.id + "'");
    }
    if (rec.contains("gold")) {
      GoldAnnotation gold = gold_from_json(post.id, rec.at("gold"), line_no);
      if (!gold_is_empty(gold)) corpus.gold.push_back(std::move(gold));
    }
    corpus.posts.push_back(std::move(post));
  });
  return corpus;
}

std::string serialize_corpus(const Corpus& corpus) {
  std::ostringstream out;
  for (const Post& post : corpus.posts) {
    json rec = json::object();
    rec["schema_version"] = kSchemaVersion;
    rec["id"] = post.id;
    rec["text"] = post.text;
    rec["language"] = post.language;
    if (const GoldAnnotation* gold = corpus.find_gold(post.id)) {
      rec["gold"] = gold_to_json(*gold);
    }
    out << rec.dump() << "\n";
  }
  return out.str();
}

void save_corpus(const Corpus& corpus, const std::filesystem::path& path) {
  write_file(path, serialize_corpus(corpus));
}

std::vector<ValidationIssue> validate_corpus(const Corpus& corpus) {
  std::vector<ValidationIssue> issues;
  std::unordered_set<std::string> post_ids;
  for (const Post& post : corpus.posts) {
    if (post.id.empty()) issues.push_back({post.id, "empty post id"});
    if (post.text.empty()) issues.push_back({post.id, "empty post text"});
    if (!post_ids.insert(post.id).second) {
      issues.push_back({post.id, "duplicate post id"});
    }
  }
  std::unordered_set<std::string> gold_ids;
  for (const GoldAnnotation& gold : corpus.gold) {
    if (!post_ids.contains(gold.post_id)) {
      issues.push_back({gold.post_id, "gold annotation references unknown post"});
    }
    if (!gold_ids.insert(gold.post_id).second) {
      issues.push_back({gold.post_id, "duplicate gold annotation"});
    }
    // Staged gold must be internally consistent with the punishability label
    // when both facets are present: punishable iff some group AND some conduct.
    if (gold.punishable && gold.groups && gold.conducts) {
      bool staged = !gold.groups->empty() && !gold.conducts->empty();
      if (staged != *gold.punishable) {
        issues.push_back({gold.post_id, "punishable label contradicts group/conduct annotations"});
      }
    }
  }
  return issues;
}

TargetLexicon TargetLexicon::load(const std::filesystem::path& path) {
  json doc;
  try {
    doc = json::parse(read_file(path));
  } catch (const json::parse_error& e) {
    throw DataError(path.string() + ": not valid JSON: " + e.what());
  }
  if (doc.value("schema_version", -1) != kSchemaVersion) {
    throw DataError(path.string() + ": missing or unsupported schema_version");
  }
  std::vector<std::pair<TargetGroup, std::vector<std::string>>> entries;
  for (const auto& entry : doc.at("entries")) {
    TargetGroup group = target_group_from_string(entry.at("group").get<std::string>());
    std::vector<std::string> forms;
    for (const auto& form : entry.at("forms")) forms.push_back(form.get<std::string>());
    entries.emplace_back(group, std::move(forms));
  }
  return from_entries(entries);
}

TargetLexicon TargetLexicon::from_entries(
    const std::vector<std::pair<TargetGroup, std::vector<std::string>>>& entries) {
  TargetLexicon lex;
  for (const auto& [group, forms] : entries) {
    auto& bucket = lex.entries_[group];
    for (const std::string& form : forms) {
      std::string folded = case_fold(trim(form));
      if (folded.empty()) throw DataError("empty lexicon form for group " +
                                          std::string(to_string(group)));
      auto [it, inserted] = lex.folded_.emplace(folded, group);
      if (!inserted && it->second != group) {
        throw DataError("lexicon form '" + form + "' maps to both " +
                        std::string(to_string(it->second)) + " and " +
                        std::string(to_string(group)));
      }
      if (inserted) bucket.push_back(form);
    }
  }
  return lex;
}

std::optional<TargetGroup> TargetLexicon::lookup(std::string_view surface) const {
  auto it = folded_.find(case_fold(trim(surface)));
  if (it == folded_.end()) return std::nullopt;
  return it->second;
}

}  // namespace lexeval
