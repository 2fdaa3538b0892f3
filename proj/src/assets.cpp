#include "lexeval/assets.hpp"

#include <algorithm>

#include "lexeval/error.hpp"
#include "lexeval/util.hpp"

namespace lexeval {

namespace {

// Overlay files mirror asset paths relative to the overlay root.
std::optional<std::filesystem::path> overlay_file(
    const std::optional<std::filesystem::path>& root, std::string_view path) {
  if (!root) return std::nullopt;
  std::filesystem::path candidate = *root / std::filesystem::path(std::string(path));
  if (std::filesystem::is_regular_file(candidate)) return candidate;
  return std::nullopt;
}

}  // namespace

AssetStore::AssetStore() {
  for (std::size_t i = 0; i < detail::kBuiltinAssetCount; ++i) {
    const detail::BuiltinAsset& asset = detail::kBuiltinAssets[i];
    builtin_.emplace(asset.path, &asset);
  }
}

AssetStore::AssetStore(std::filesystem::path overlay_root) : AssetStore() {
  if (!std::filesystem::is_directory(overlay_root)) {
    throw DataError("asset overlay is not a directory: " + overlay_root.string());
  }
  overlay_ = std::move(overlay_root);
}

bool AssetStore::contains(std::string_view path) const {
  return builtin_.contains(std::string(path)) || overlay_file(overlay_, path).has_value();
}

std::string AssetStore::get(std::string_view path) const {
  if (auto file = overlay_file(overlay_, path)) {
    return read_file(*file);
  }
  auto it = builtin_.find(std::string(path));
  if (it == builtin_.end()) {
    throw DataError("unknown asset: '" + std::string(path) + "'");
  }
  return std::string(it->second->data, it->second->size);
}

std::vector<std::string> AssetStore::list(std::string_view prefix) const {
  std::vector<std::string> paths;
  for (const auto& [path, asset] : builtin_) {
    if (starts_with(path, prefix)) paths.push_back(path);
  }
  if (overlay_) {
    for (const auto& entry : std::filesystem::recursive_directory_iterator(*overlay_)) {
      if (!entry.is_regular_file()) continue;
      std::string rel = entry.path().lexically_relative(*overlay_).generic_string();
      if (starts_with(rel, prefix)) paths.push_back(rel);
    }
  }
  std::sort(paths.begin(), paths.end());
  paths.erase(std::unique(paths.begin(), paths.end()), paths.end());
  return paths;
}

std::string AssetStore::fingerprint() const {
  std::string manifest;
  for (const std::string& path : list()) {
    manifest += path;
    manifest += '\0';
    manifest += sha256_hex(get(path));
    manifest += '\n';
  }
  return sha256_hex(manifest);
}

}  // namespace lexeval
