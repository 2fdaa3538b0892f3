#pragma once

#include <array>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace lexeval {

// Protected group categories named by the incitement provision.
enum class TargetGroup { Racial, National, Religious, Ethnic, SectionOfPopulation };

// Proscribed conducts against a protected group.
enum class Conduct { IncitingHatred, CallingForViolence, Insulting, Slandering, Disparaging };

inline constexpr std::array<TargetGroup, 5> kAllTargetGroups = {
    TargetGroup::Racial, TargetGroup::National, TargetGroup::Religious,
    TargetGroup::Ethnic, TargetGroup::SectionOfPopulation};

inline constexpr std::array<Conduct, 5> kAllConducts = {
    Conduct::IncitingHatred, Conduct::CallingForViolence, Conduct::Insulting,
    Conduct::Slandering, Conduct::Disparaging};

// Serialized names are part of the file formats and must stay stable.
std::string_view to_string(TargetGroup group);
std::string_view to_string(Conduct conduct);
TargetGroup target_group_from_string(std::string_view name);
Conduct conduct_from_string(std::string_view name);

struct Post {
  std::string id;
  std::string text;
  std::string language = "de";
};

struct GoldAnnotation {
  std::string post_id;
  std::optional<bool> punishable;
  std::optional<std::set<TargetGroup>> groups;
  std::optional<std::set<Conduct>> conducts;
  std::optional<bool> fr_covered;

  bool operator==(const GoldAnnotation&) const = default;
};

struct Corpus {
  std::vector<Post> posts;
  std::vector<GoldAnnotation> gold;

  const Post* find_post(std::string_view id) const;
  const GoldAnnotation* find_gold(std::string_view post_id) const;
};

// Loads a JSONL corpus file; rejects malformed lines (citing the line number),
// duplicate ids and dangling annotation references.
Corpus load_corpus(const std::filesystem::path& path);

// Writes the corpus back out; load(save(c)) is the identity.
void save_corpus(const Corpus& corpus, const std::filesystem::path& path);
std::string serialize_corpus(const Corpus& corpus);

struct ValidationIssue {
  std::string post_id;  // empty for corpus-level issues
  std::string message;
};

// Reports invariant violations; never throws. Empty result iff valid.
std::vector<ValidationIssue> validate_corpus(const Corpus& corpus);

// Curated surface-form list mapping mention strings to group categories.
class TargetLexicon {
 public:
  static TargetLexicon load(const std::filesystem::path& path);
  static TargetLexicon from_entries(
      const std::vector<std::pair<TargetGroup, std::vector<std::string>>>& entries);

  // Case-insensitive exact match; nullopt when the form is unknown.
  std::optional<TargetGroup> lookup(std::string_view surface) const;

  std::size_t form_count() const { return folded_.size(); }
  const std::map<TargetGroup, std::vector<std::string>>& entries() const { return entries_; }

 private:
  std::map<TargetGroup, std::vector<std::string>> entries_;
  std::unordered_map<std::string, TargetGroup> folded_;
};

}  // namespace lexeval
