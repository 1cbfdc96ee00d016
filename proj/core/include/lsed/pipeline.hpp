#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "lsed/audio.hpp"
#include "lsed/features.hpp"
#include "lsed/model.hpp"

namespace lsed::pipeline {

struct PipelineParams {
  features::FeatureParams features;
  audio::WindowingParams windowing;
};

/// Feature windows with one binary label each, kept in recording order.
struct Dataset {
  std::vector<features::FeatureWindow> windows;
  std::vector<int> labels;

  std::size_t size() const { return windows.size(); }
  std::size_t positives() const;
};

/// Conditioning (resample + high-pass), windowing and feature assembly for a
/// clip at any sample rate.
std::vector<features::FeatureWindow> featurize(const audio::AudioClip& clip, std::string_view source_id,
                                               const PipelineParams& params = {});

/// Same as featurize, but reuses `<cache_dir>/<source_id>.feat` when its
/// stored parameters match and writes it otherwise.
std::vector<features::FeatureWindow> featurize_cached(const audio::AudioClip& clip, std::string_view source_id,
                                                      const std::filesystem::path& cache_dir,
                                                      const PipelineParams& params = {});

/// Windows of one recording labelled for `task` (see audio::task_labels).
Dataset featurize_recording(const audio::AnnotatedRecording& rec, std::string_view task,
                            const PipelineParams& params = {},
                            const std::optional<std::filesystem::path>& cache_dir = std::nullopt);

/// Concatenation over recordings. Recordings are processed by up to
/// `workers` threads; output order never depends on the worker count.
Dataset build_dataset(const std::vector<audio::AnnotatedRecording>& recordings, std::string_view task,
                      const PipelineParams& params = {}, unsigned workers = 1,
                      const std::optional<std::filesystem::path>& cache_dir = std::nullopt);

struct WindowPrediction {
  double start_s = 0.0;
  double prob = 0.0;
  friend bool operator==(const WindowPrediction&, const WindowPrediction&) = default;
};

std::vector<WindowPrediction> predict_windows(const model::MultiBranchTCN& model,
                                              const audio::AudioClip& clip, std::string_view source_id,
                                              const PipelineParams& params = {});

}  // namespace lsed::pipeline
