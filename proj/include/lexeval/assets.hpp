#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace lexeval {

namespace detail {

struct BuiltinAsset {
  const char* path;
  const char* data;
  std::size_t size;
};

// Defined in the generated builtin_assets.cpp (see cmake/embed_assets.cmake).
extern const BuiltinAsset kBuiltinAssets[];
extern const std::size_t kBuiltinAssetCount;

}  // namespace detail

// Read-only view over the embedded asset tree, optionally shadowed by an
// overlay directory so statute texts, definitions and paraphrases can be
// amended without a rebuild. Immutable after construction.
class AssetStore {
 public:
  AssetStore();
  explicit AssetStore(std::filesystem::path overlay_root);

  bool contains(std::string_view path) const;
  // Throws DataError naming the path when absent.
  std::string get(std::string_view path) const;

  // Sorted union of builtin and overlay paths, filtered by prefix.
  std::vector<std::string> list(std::string_view prefix = {}) const;

  // Digest over all (path, content) pairs; changes whenever any asset does.
  std::string fingerprint() const;

  const std::optional<std::filesystem::path>& overlay_root() const { return overlay_; }

 private:
  std::optional<std::filesystem::path> overlay_;
  std::map<std::string, const detail::BuiltinAsset*> builtin_;
};

}  // namespace lexeval
