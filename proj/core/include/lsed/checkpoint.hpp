#pragma once

#include <filesystem>
#include <string>

#include <nlohmann/json.hpp>

#include "lsed/model.hpp"

namespace lsed::model {

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Serialises a model plus free-form metadata. Layout is documented in
/// docs/checkpoint_format.md.
std::string encode_checkpoint(const MultiBranchTCN& model, const nlohmann::json& metadata = nlohmann::json::object());

struct Checkpoint {
  MultiBranchTCN model;
  nlohmann::json metadata;
};

/// Throws DataError on a bad magic, version mismatch, truncation, checksum
/// failure or any tensor whose declared shape disagrees with the config.
Checkpoint decode_checkpoint(std::string_view bytes);

void save_checkpoint(const std::filesystem::path& path, const MultiBranchTCN& model,
                     const nlohmann::json& metadata = nlohmann::json::object());
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace lsed::model
