#include <doctest/doctest.h>

#include <filesystem>

#include "lexeval/corpus.hpp"
#include "lexeval/error.hpp"
#include "lexeval/util.hpp"

using namespace lexeval;
namespace fs = std::filesystem;

namespace {

fs::path temp_file(const std::string& name, const std::string& content) {
  fs::path path = fs::temp_directory_path() / "lexeval-tests" / name;
  write_file(path, content);
  return path;
}

}  // namespace

TEST_CASE("enum names round-trip and stay stable") {
  CHECK(to_string(TargetGroup::Racial) == "racial");
  CHECK(to_string(TargetGroup::National) == "national");
  CHECK(to_string(TargetGroup::Religious) == "religious");
  CHECK(to_string(TargetGroup::Ethnic) == "ethnic");
  CHECK(to_string(TargetGroup::SectionOfPopulation) == "section-of-population");
  CHECK(to_string(Conduct::IncitingHatred) == "inciting-hatred");
  CHECK(to_string(Conduct::CallingForViolence) == "calling-for-violence");
  CHECK(to_string(Conduct::Insulting) == "insulting");
  CHECK(to_string(Conduct::Slandering) == "slandering");
  CHECK(to_string(Conduct::Disparaging) == "disparaging");
  for (TargetGroup g : kAllTargetGroups) {
    CHECK(target_group_from_string(to_string(g)) == g);
  }
  for (Conduct c : kAllConducts) {
    CHECK(conduct_from_string(to_string(c)) == c);
  }
  CHECK_THROWS_AS(target_group_from_string("races"), DataError);
  CHECK_THROWS_AS(conduct_from_string("Inciting-Hatred"), DataError);
}

TEST_CASE("load_corpus parses records and gold annotations") {
  auto path = temp_file("ok.jsonl", R"({"schema_version":1,"id":"p1","text":"hallo","language":"de"}
{"schema_version":1,"id":"p2","text":"zweiter Post","gold":{"punishable":true,"groups":["religious"],"conducts":["inciting-hatred"],"fr_covered":true}}
{"schema_version":1,"id":"p3","text":"dritter","gold":{"punishable":false}}
)");
  Corpus corpus = load_corpus(path);
  REQUIRE(corpus.posts.size() == 3);
  CHECK(corpus.posts[0].id == "p1");
  CHECK(corpus.posts[0].language == "de");
  CHECK(corpus.find_gold("p1") == nullptr);
  const GoldAnnotation* g2 = corpus.find_gold("p2");
  REQUIRE(g2 != nullptr);
  CHECK(*g2->punishable);
  CHECK(g2->groups->contains(TargetGroup::Religious));
  CHECK(g2->conducts->contains(Conduct::IncitingHatred));
  CHECK(*g2->fr_covered);
  const GoldAnnotation* g3 = corpus.find_gold("p3");
  REQUIRE(g3 != nullptr);
  CHECK_FALSE(*g3->punishable);
  CHECK_FALSE(g3->groups.has_value());
}

TEST_CASE("load_corpus rejects malformed input with line numbers") {
  SUBCASE("bad json") {
    auto path = temp_file("bad1.jsonl", "{\"schema_version\":1,\"id\":\"a\",\"text\":\"t\"}\n{oops\n");
    CHECK_THROWS_WITH_AS(load_corpus(path), doctest::Contains(":2:"), DataError);
  }
  SUBCASE("missing schema version") {
    auto path = temp_file("bad2.jsonl", "{\"id\":\"a\",\"text\":\"t\"}\n");
    CHECK_THROWS_WITH_AS(load_corpus(path), doctest::Contains("schema_version"), DataError);
  }
  SUBCASE("duplicate id") {
    auto path = temp_file("bad3.jsonl",
                          "{\"schema_version\":1,\"id\":\"a\",\"text\":\"t\"}\n"
                          "{\"schema_version\":1,\"id\":\"a\",\"text\":\"u\"}\n");
    CHECK_THROWS_WITH_AS(load_corpus(path), doctest::Contains("duplicate"), DataError);
  }
  SUBCASE("missing text") {
    auto path = temp_file("bad4.jsonl", "{\"schema_version\":1,\"id\":\"a\"}\n");
    CHECK_THROWS_AS(load_corpus(path), DataError);
  }
  SUBCASE("unknown group name") {
    auto path = temp_file("bad5.jsonl",
                          "{\"schema_version\":1,\"id\":\"a\",\"text\":\"t\","
                          "\"gold\":{\"groups\":[\"Racial\"]}}\n");
    CHECK_THROWS_WITH_AS(load_corpus(path), doctest::Contains("Racial"), DataError);
  }
}

TEST_CASE("save/load round-trip preserves everything") {
  Corpus corpus;
  corpus.posts.push_back({"p1", "ein Text mit Umlauten: ÄÖÜ", "de"});
  corpus.posts.push_back({"p2", "plain", "en"});
  GoldAnnotation gold;
  gold.post_id = "p1";
  gold.punishable = true;
  gold.groups = {TargetGroup::Ethnic, TargetGroup::SectionOfPopulation};
  gold.conducts = {Conduct::Disparaging};
  gold.fr_covered = false;
  corpus.gold.push_back(gold);

  auto path = fs::temp_directory_path() / "lexeval-tests" / "roundtrip.jsonl";
  save_corpus(corpus, path);
  Corpus back = load_corpus(path);
  REQUIRE(back.posts.size() == 2);
  CHECK(back.posts[0].text == corpus.posts[0].text);
  CHECK(back.posts[1].language == "en");
  REQUIRE(back.gold.size() == 1);
  CHECK(back.gold[0] == gold);
}

TEST_CASE("validate_corpus flags inconsistencies") {
  Corpus corpus;
  corpus.posts.push_back({"p1", "text", "de"});
  CHECK(validate_corpus(corpus).empty());

  SUBCASE("dangling gold reference") {
    GoldAnnotation gold;
    gold.post_id = "ghost";
    gold.punishable = true;
    corpus.gold.push_back(gold);
    auto issues = validate_corpus(corpus);
    REQUIRE(issues.size() == 1);
    CHECK(issues[0].post_id == "ghost");
  }
  SUBCASE("staged annotations must agree with punishable") {
    GoldAnnotation gold;
    gold.post_id = "p1";
    gold.punishable = true;
    gold.groups = std::set<TargetGroup>{};  // no group present
    gold.conducts = {Conduct::Insulting};
    corpus.gold.push_back(gold);
    auto issues = validate_corpus(corpus);
    REQUIRE(issues.size() == 1);
    CHECK(issues[0].message.find("contradicts") != std::string::npos);
  }
  SUBCASE("consistent staged annotations pass") {
    GoldAnnotation gold;
    gold.post_id = "p1";
    gold.punishable = true;
    gold.groups = {TargetGroup::Religious};
    gold.conducts = {Conduct::CallingForViolence};
    corpus.gold.push_back(gold);
    CHECK(validate_corpus(corpus).empty());
  }
  SUBCASE("empty text flagged") {
    corpus.posts.push_back({"p2", "", "de"});
    auto issues = validate_corpus(corpus);
    REQUIRE(issues.size() == 1);
    CHECK(issues[0].post_id == "p2");
  }
}

TEST_CASE("target lexicon looks up case-insensitively incl. umlauts") {
  auto lex = TargetLexicon::from_entries({
      {TargetGroup::Religious, {"Muslime", "Juden"}},
      {TargetGroup::National, {"Österreicher"}},
      {TargetGroup::SectionOfPopulation, {"Obdachlose", "die Grünen"}},
  });
  CHECK(lex.lookup("muslime") == TargetGroup::Religious);
  CHECK(lex.lookup("MUSLIME") == TargetGroup::Religious);
  CHECK(lex.lookup("  Juden ") == TargetGroup::Religious);
  CHECK(lex.lookup("österreicher") == TargetGroup::National);
  CHECK(lex.lookup("ÖSTERREICHER") == TargetGroup::National);
  CHECK(lex.lookup("DIE GRÜNEN") == TargetGroup::SectionOfPopulation);
  CHECK_FALSE(lex.lookup("Marsmenschen").has_value());
  CHECK(lex.form_count() == 5);
}

TEST_CASE("target lexicon rejects conflicting forms") {
  CHECK_THROWS_WITH_AS(TargetLexicon::from_entries({
                           {TargetGroup::Religious, {"Gruppe"}},
                           {TargetGroup::Ethnic, {"gruppe"}},
                       }),
                       doctest::Contains("maps to both"), DataError);
}

TEST_CASE("target lexicon loads from json") {
  auto path = temp_file("lexicon.json", R"({
    "schema_version": 1,
    "entries": [
      {"group": "religious", "forms": ["Muslime"]},
      {"group": "ethnic", "forms": ["Sinti", "Roma"]}
    ]
  })");
  TargetLexicon lex = TargetLexicon::load(path);
  CHECK(lex.lookup("roma") == TargetGroup::Ethnic);
  CHECK(lex.lookup("muslime") == TargetGroup::Religious);
  CHECK(lex.form_count() == 3);
}
