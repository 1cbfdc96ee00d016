#include "lsed/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <mutex>
#include <thread>

#include "lsed/errors.hpp"
#include "lsed/feature_cache.hpp"

namespace lsed::pipeline {

std::size_t Dataset::positives() const {
  return static_cast<std::size_t>(std::count(labels.begin(), labels.end(), 1));
}

std::vector<features::FeatureWindow> featurize(const audio::AudioClip& clip, std::string_view source_id,
                                               const PipelineParams& params) {
  const audio::AudioClip conditioned = audio::preprocess(clip);
  const features::FeatureExtractor extractor(conditioned.sample_rate_hz, params.features);
  std::vector<features::FeatureWindow> out;
  for (const auto& w : audio::extract_windows(conditioned, source_id, params.windowing)) {
    out.push_back(extractor.assemble(w));
  }
  return out;
}

namespace {

nlohmann::json cache_key(const PipelineParams& params, const audio::AudioClip& clip) {
  return nlohmann::json{{"features", params.features},
                        {"win_s", params.windowing.win_s},
                        {"hop_s", params.windowing.hop_s},
                        {"input_rate_hz", clip.sample_rate_hz},
                        {"input_samples", clip.samples.size()}};
}

}  // namespace

std::vector<features::FeatureWindow> featurize_cached(const audio::AudioClip& clip, std::string_view source_id,
                                                      const std::filesystem::path& cache_dir,
                                                      const PipelineParams& params) {
  const auto file = cache_dir / (std::string(source_id) + ".feat");
  const auto key = cache_key(params, clip);
  if (auto cached = features::load_feature_cache(file, key)) return std::move(*cached);
  auto windows = featurize(clip, source_id, params);
  std::filesystem::create_directories(cache_dir);
  features::save_feature_cache(file, windows, key);
  return windows;
}

Dataset featurize_recording(const audio::AnnotatedRecording& rec, std::string_view task,
                            const PipelineParams& params, const std::optional<std::filesystem::path>& cache_dir) {
  const auto labels = audio::task_labels(task);
  Dataset ds;
  ds.windows = cache_dir ? featurize_cached(rec.clip, rec.id, *cache_dir, params) : featurize(rec.clip, rec.id, params);
  for (const auto& fw : ds.windows) {
    ds.labels.push_back(audio::window_label(rec.events, fw.start_s, params.windowing.win_s, labels));
  }
  return ds;
}

Dataset build_dataset(const std::vector<audio::AnnotatedRecording>& recordings, std::string_view task,
                      const PipelineParams& params, unsigned workers,
                      const std::optional<std::filesystem::path>& cache_dir) {
  audio::task_labels(task);  // reject unknown tasks before spawning work
  std::vector<Dataset> parts(recordings.size());
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto work = [&] {
    for (std::size_t i = next++; i < recordings.size(); i = next++) {
      try {
        parts[i] = featurize_recording(recordings[i], task, params, cache_dir);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  const unsigned n = std::max(1u, std::min<unsigned>(workers, static_cast<unsigned>(recordings.size())));
  if (n == 1) {
    work();
  } else {
    std::vector<std::jthread> threads;
    for (unsigned t = 0; t < n; ++t) threads.emplace_back(work);
  }
  if (failure) std::rethrow_exception(failure);

  Dataset all;
  for (auto& p : parts) {
    std::move(p.windows.begin(), p.windows.end(), std::back_inserter(all.windows));
    all.labels.insert(all.labels.end(), p.labels.begin(), p.labels.end());
  }
  return all;
}

std::vector<WindowPrediction> predict_windows(const model::MultiBranchTCN& model, const audio::AudioClip& clip,
                                              std::string_view source_id, const PipelineParams& params) {
  const auto windows = featurize(clip, source_id, params);
  const auto probs = model.predict(windows);
  std::vector<WindowPrediction> out;
  out.reserve(windows.size());
  for (std::size_t i = 0; i < windows.size(); ++i) out.push_back({windows[i].start_s, probs[i]});
  return out;
}

}  // namespace lsed::pipeline
