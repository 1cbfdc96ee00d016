#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "lsed/audio.hpp"
#include "lsed/synth.hpp"

namespace lsed::corpus {

/// Annotation files hold one JSON object per line:
///   {"recording_id": str, "start_s": float, "end_s": float, "label": str}
using AnnotationMap = std::map<std::string, std::vector<audio::EventInterval>>;

AnnotationMap read_annotations(const std::filesystem::path& path);
void write_annotations(const std::filesystem::path& path, const AnnotationMap& annotations);
void write_annotations(const std::filesystem::path& path, const std::string& recording_id,
                       const std::vector<audio::EventInterval>& events);

struct ManifestEntry {
  std::string id;
  std::uint64_t seed = 0;
  synth::Scenario scenario;
  std::filesystem::path wav;          ///< relative to the manifest directory
  std::filesystem::path annotations;  ///< relative to the manifest directory
};

struct Manifest {
  int format_version = 1;
  std::uint64_t base_seed = 0;
  std::vector<ManifestEntry> recordings;
  std::filesystem::path directory;  ///< set on load; not serialised
};

Manifest read_manifest(const std::filesystem::path& path);
void write_manifest(const std::filesystem::path& path, const Manifest& manifest);

/// Loads the WAV and annotations named by a manifest entry.
audio::AnnotatedRecording load_recording(const Manifest& manifest, const ManifestEntry& entry);
std::vector<audio::AnnotatedRecording> load_all(const Manifest& manifest);

/// Generates `count` recordings under `out_dir` (WAV + JSONL each, plus
/// manifest.json). Per-recording seeds derive from `base_seed`.
Manifest generate_corpus(const std::filesystem::path& out_dir, std::uint64_t base_seed,
                         std::size_t count, double duration_s,
                         const std::string& id_prefix = "rec");

/// In-memory variant of generate_corpus (same seeds and scenarios).
std::vector<audio::AnnotatedRecording> synthesize_corpus(std::uint64_t base_seed, std::size_t count,
                                                         double duration_s,
                                                         const std::string& id_prefix = "rec");

}  // namespace lsed::corpus
