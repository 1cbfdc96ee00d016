#pragma once

#include <filesystem>
#include <optional>
#include <vector>

#include <nlohmann/json.hpp>

#include "lsed/features.hpp"

namespace lsed::features {

/// One cache file per recording:
///   "LSEDFEAT" | u32 version | u64 frames | u64 columns | u64 windows |
///   windows * frames * columns little-endian f64, row-major
/// plus `<file>.json` holding the extraction parameters, source id and
/// window start times. A cache is only reused when its parameters equal the
/// requested ones.
void save_feature_cache(const std::filesystem::path& file, const std::vector<FeatureWindow>& windows,
                        const nlohmann::json& params);

/// nullopt when the cache is absent, unreadable or was produced with
/// different parameters.
std::optional<std::vector<FeatureWindow>> load_feature_cache(const std::filesystem::path& file,
                                                             const nlohmann::json& params);

}  // namespace lsed::features
