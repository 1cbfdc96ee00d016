#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "lsed/model.hpp"
#include "lsed/pipeline.hpp"
#include "lsed/train.hpp"

namespace lsed::cli {

/// Everything a pipeline run depends on. Loaded from a line-oriented
/// `key = value` file ('#' starts a comment) and then patched with
/// command-line overrides of the same form.
struct RunConfig {
  model::ModelConfig model;
  train::TrainConfig train;
  pipeline::PipelineParams pipeline;
  unsigned workers = 1;
  /// Recordings taken from the end of the training manifest for validation
  /// when no validation manifest is given.
  std::size_t val_holdout = 4;
  /// Directory for per-recording feature caches; empty disables caching.
  std::string feature_cache;

  /// Set once dilation_bases is given explicitly. Until then the bases
  /// follow `branches` (the first B of 2, 3, 4, 5, ...).
  bool explicit_bases = false;
};

/// Defaults, equal to the published recipe where it defines a value.
RunConfig default_run_config();

/// Applies one setting. Throws InvalidArgument for unknown keys or values
/// that do not parse.
void apply_setting(RunConfig& cfg, const std::string& key, const std::string& value);
/// "key=value" form of apply_setting.
void apply_override(RunConfig& cfg, const std::string& assignment);

RunConfig parse_run_config(const std::string& text, const std::string& origin = "<config>");
RunConfig load_run_config(const std::filesystem::path& path);

/// Validates the merged configuration (cross-field invariants included).
void finalize(RunConfig& cfg);

/// Canonical text form; parse_run_config(render(c)) reproduces c.
std::string render(const RunConfig& cfg);

/// Names of every recognised key, in render order.
std::vector<std::string> known_keys();

}  // namespace lsed::cli
