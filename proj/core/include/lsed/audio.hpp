#pragma once

#include <cstddef>
#include <filesystem>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace lsed::audio {

inline constexpr int kModelSampleRate = 4000;

/// Mono waveform, samples nominally in [-1, 1].
struct AudioClip {
  std::vector<double> samples;
  int sample_rate_hz = 0;

  double duration_s() const {
    return sample_rate_hz > 0 ? static_cast<double>(samples.size()) / sample_rate_hz : 0.0;
  }
};

/// Labelled span [start_s, end_s) on a recording timeline.
struct EventInterval {
  double start_s = 0.0;
  double end_s = 0.0;
  std::string label;

  double duration_s() const { return end_s - start_s; }
  friend bool operator==(const EventInterval&, const EventInterval&) = default;
};

struct AnnotatedRecording {
  std::string id;
  AudioClip clip;
  std::vector<EventInterval> events;
};

/// Fixed-length slice of a clip used as one model input.
struct Window {
  double start_s = 0.0;
  std::vector<double> samples;
  std::string source_id;
};

struct WindowingParams {
  double win_s = 1.0;
  double hop_s = 0.5;
};

/// Labels accepted in annotation files.
const std::set<std::string>& label_vocabulary();

/// Event labels that count as positive for a detection task. Tasks are
/// inhalation, exhalation, cas (wheeze), das (crackle), wheeze, crackle.
std::set<std::string> task_labels(std::string_view task);

/// Throws DataError if an event is malformed, leaves the clip, or overlaps
/// another event with the same label.
void validate(const AnnotatedRecording& rec);

// --- WAV -------------------------------------------------------------------

/// Reads RIFF PCM (8/16/24/32-bit integer or 32-bit float). Integer samples
/// are scaled by 1/2^(bits-1); channels are averaged to mono.
AudioClip read_wav(const std::filesystem::path& path);

/// Writes 16-bit PCM mono. Samples are clipped to [-1, 1].
void write_wav(const std::filesystem::path& path, const AudioClip& clip);

// --- conditioning ----------------------------------------------------------

/// Band-limited (Kaiser-windowed sinc) sample-rate conversion.
AudioClip resample(const AudioClip& clip, int target_hz = kModelSampleRate);

/// Zero-phase Butterworth high-pass (forward-backward).
AudioClip highpass(const AudioClip& clip, double cutoff_hz = 80.0, int order = 10);

/// resample to 4 kHz followed by the 80 Hz order-10 high-pass.
AudioClip preprocess(const AudioClip& clip);

// --- windowing -------------------------------------------------------------

std::size_t window_length(const WindowingParams& params, int sample_rate_hz);
std::size_t hop_length(const WindowingParams& params, int sample_rate_hz);

/// floor((duration - win) / hop) + 1 evaluated in samples; 0 if the clip is
/// shorter than one window.
std::size_t window_count(std::size_t num_samples, int sample_rate_hz,
                         const WindowingParams& params = {});

/// Trailing partial windows are dropped. Throws InvalidArgument when the
/// clip is shorter than one window.
std::vector<Window> extract_windows(const AudioClip& clip, std::string_view source_id,
                                    const WindowingParams& params = {});

/// Total time inside [start_s, start_s + win_s) covered by the union of
/// events whose label is in `labels`.
double covered_duration(const std::vector<EventInterval>& events, double start_s, double win_s,
                        const std::set<std::string>& labels);

/// 1 iff covered_duration strictly exceeds win_s / 2.
int window_label(const std::vector<EventInterval>& events, double start_s, double win_s,
                 const std::set<std::string>& labels);

inline int window_label(const std::vector<EventInterval>& events, const Window& window,
                        int sample_rate_hz, const std::set<std::string>& labels) {
  return window_label(events, window.start_s,
                      static_cast<double>(window.samples.size()) / sample_rate_hz, labels);
}

}  // namespace lsed::audio
