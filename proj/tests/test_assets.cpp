#include <doctest/doctest.h>

#include <filesystem>

#include "lexeval/assets.hpp"
#include "lexeval/error.hpp"
#include "lexeval/util.hpp"

using namespace lexeval;
namespace fs = std::filesystem;

TEST_CASE("builtin store ships the core assets") {
  AssetStore store;
  for (const char* path : {"statutes/130.txt", "statutes/130-simple.txt", "statutes/120.txt",
                           "constitution/art5.txt", "elicit/format-instruction.txt",
                           "elicit/refusal-patterns.txt"}) {
    CAPTURE(path);
    CHECK(store.contains(path));
    CHECK_FALSE(store.get(path).empty());
  }
  CHECK(store.list("chains/").size() == 11);
  CHECK_FALSE(store.contains("statutes/999.txt"));
  CHECK_THROWS_WITH_AS(store.get("statutes/999.txt"), doctest::Contains("statutes/999.txt"),
                       DataError);
}

TEST_CASE("overlay shadows builtins and can add new paths") {
  fs::path root = fs::temp_directory_path() / "lexeval-tests" / "overlay";
  fs::remove_all(root);
  write_file(root / "statutes" / "130.txt", "overridden text");
  write_file(root / "extra" / "note.txt", "new asset");

  AssetStore plain;
  AssetStore overlaid(root);
  CHECK(overlaid.get("statutes/130.txt") == "overridden text");
  CHECK(plain.get("statutes/130.txt") != "overridden text");
  CHECK(overlaid.get("extra/note.txt") == "new asset");
  CHECK_FALSE(plain.contains("extra/note.txt"));
  // untouched paths fall through to the builtin content
  CHECK(overlaid.get("constitution/art5.txt") == plain.get("constitution/art5.txt"));

  auto listed = overlaid.list("extra/");
  REQUIRE(listed.size() == 1);
  CHECK(listed[0] == "extra/note.txt");
}

TEST_CASE("fingerprint reacts to overlay changes") {
  fs::path root = fs::temp_directory_path() / "lexeval-tests" / "overlay-fp";
  fs::remove_all(root);
  fs::create_directories(root);

  AssetStore plain;
  AssetStore overlaid(root);
  CHECK(plain.fingerprint() == overlaid.fingerprint());  // empty overlay changes nothing

  write_file(root / "statutes" / "130.txt", "changed");
  AssetStore changed(root);
  CHECK(changed.fingerprint() != plain.fingerprint());
}

TEST_CASE("missing overlay directory is rejected") {
  CHECK_THROWS_AS(AssetStore(fs::temp_directory_path() / "lexeval-tests" / "no-such-dir"),
                  DataError);
}
