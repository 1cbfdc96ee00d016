#include "lsed/audio.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>

#include "lsed/dsp.hpp"
#include "lsed/errors.hpp"

namespace lsed::audio {

const std::set<std::string>& label_vocabulary() {
  static const std::set<std::string> vocab{"inhalation", "exhalation", "cas",
                                           "das",        "crackle",    "wheeze"};
  return vocab;
}

std::set<std::string> task_labels(std::string_view task) {
  static const std::map<std::string, std::set<std::string>, std::less<>> tasks{
      {"inhalation", {"inhalation"}},
      {"exhalation", {"exhalation"}},
      {"cas", {"cas", "wheeze"}},
      {"das", {"das", "crackle"}},
      {"wheeze", {"wheeze"}},
      {"crackle", {"crackle"}},
  };
  auto it = tasks.find(task);
  if (it == tasks.end()) {
    throw InvalidArgument("unknown task '" + std::string(task) +
                          "' (expected inhalation|exhalation|cas|das|wheeze|crackle)");
  }
  return it->second;
}

void validate(const AnnotatedRecording& rec) {
  const double duration = rec.clip.duration_s();
  std::map<std::string, std::vector<const EventInterval*>> by_label;
  for (const auto& e : rec.events) {
    if (e.label.empty()) throw DataError(rec.id + ": event with empty label");
    if (!label_vocabulary().contains(e.label)) {
      throw DataError(rec.id + ": unknown event label '" + e.label + "'");
    }
    if (!(e.end_s > e.start_s) || e.start_s < 0.0) {
      throw DataError(rec.id + ": event [" + std::to_string(e.start_s) + ", " +
                      std::to_string(e.end_s) + ") is not a valid interval");
    }
    if (e.end_s > duration + 1e-9) {
      throw DataError(rec.id + ": event ends at " + std::to_string(e.end_s) +
                      " s, past the recording end " + std::to_string(duration) + " s");
    }
    by_label[e.label].push_back(&e);
  }
  for (auto& [label, list] : by_label) {
    std::sort(list.begin(), list.end(),
              [](const auto* a, const auto* b) { return a->start_s < b->start_s; });
    for (std::size_t i = 1; i < list.size(); ++i) {
      if (list[i]->start_s < list[i - 1]->end_s) {
        throw DataError(rec.id + ": overlapping '" + label + "' events");
      }
    }
  }
}

// --- resampling ------------------------------------------------------------

namespace {

constexpr double kZeroCrossings = 16.0;
constexpr double kKaiserBeta = 8.6;
constexpr double kRolloff = 0.95;

double kaiser(double x, double beta) {
  // x in [-1, 1]
  const double r = 1.0 - x * x;
  if (r <= 0.0) return 0.0;
  return std::cyl_bessel_i(0.0, beta * std::sqrt(r)) / std::cyl_bessel_i(0.0, beta);
}

double sinc(double x) {
  if (std::abs(x) < 1e-12) return 1.0;
  const double px = std::numbers::pi * x;
  return std::sin(px) / px;
}

}  // namespace

AudioClip resample(const AudioClip& clip, int target_hz) {
  if (target_hz <= 0) throw InvalidArgument("resample: target rate must be positive");
  if (clip.samples.empty()) throw InvalidArgument("resample: empty clip");
  if (clip.sample_rate_hz <= 0) throw InvalidArgument("resample: source rate must be positive");
  if (clip.sample_rate_hz == target_hz) return clip;

  const double ratio = static_cast<double>(target_hz) / clip.sample_rate_hz;
  // Cut-off in cycles per input sample.
  const double fc = 0.5 * std::min(1.0, ratio) * kRolloff;
  const double half_width = kZeroCrossings / (2.0 * fc);
  const auto n_in = static_cast<std::ptrdiff_t>(clip.samples.size());
  const auto n_out =
      static_cast<std::size_t>(std::llround(static_cast<double>(clip.samples.size()) * ratio));

  AudioClip out;
  out.sample_rate_hz = target_hz;
  out.samples.resize(std::max<std::size_t>(n_out, 1));
  for (std::size_t m = 0; m < out.samples.size(); ++m) {
    const double t = static_cast<double>(m) * clip.sample_rate_hz / target_hz;
    const auto lo = std::max<std::ptrdiff_t>(0, static_cast<std::ptrdiff_t>(std::ceil(t - half_width)));
    const auto hi =
        std::min<std::ptrdiff_t>(n_in - 1, static_cast<std::ptrdiff_t>(std::floor(t + half_width)));
    double acc = 0.0;
    for (std::ptrdiff_t k = lo; k <= hi; ++k) {
      const double u = t - static_cast<double>(k);
      acc += clip.samples[static_cast<std::size_t>(k)] * 2.0 * fc * sinc(2.0 * fc * u) *
             kaiser(u / half_width, kKaiserBeta);
    }
    out.samples[m] = acc;
  }
  return out;
}

AudioClip highpass(const AudioClip& clip, double cutoff_hz, int order) {
  if (clip.sample_rate_hz <= 0) throw InvalidArgument("highpass: sample rate must be positive");
  if (cutoff_hz >= clip.sample_rate_hz / 2.0) {
    throw InvalidArgument("highpass: cut-off " + std::to_string(cutoff_hz) +
                          " Hz is at or above Nyquist");
  }
  const auto sections = dsp::butterworth_highpass(order, cutoff_hz, clip.sample_rate_hz);
  // Several slowest-pole time constants of padding.
  const auto padlen = static_cast<std::size_t>(
      6.0 * std::ceil(static_cast<double>(clip.sample_rate_hz) / cutoff_hz));
  AudioClip out;
  out.sample_rate_hz = clip.sample_rate_hz;
  out.samples = dsp::sosfiltfilt(sections, clip.samples, padlen);
  return out;
}

AudioClip preprocess(const AudioClip& clip) {
  return highpass(resample(clip, kModelSampleRate), 80.0, 10);
}

// --- windowing -------------------------------------------------------------

std::size_t window_length(const WindowingParams& params, int sample_rate_hz) {
  return static_cast<std::size_t>(std::llround(params.win_s * sample_rate_hz));
}

std::size_t hop_length(const WindowingParams& params, int sample_rate_hz) {
  return static_cast<std::size_t>(std::llround(params.hop_s * sample_rate_hz));
}

std::size_t window_count(std::size_t num_samples, int sample_rate_hz,
                         const WindowingParams& params) {
  const std::size_t win = window_length(params, sample_rate_hz);
  const std::size_t hop = hop_length(params, sample_rate_hz);
  if (win == 0 || hop == 0) throw InvalidArgument("window_count: window and hop must be positive");
  if (num_samples < win) return 0;
  return (num_samples - win) / hop + 1;
}

std::vector<Window> extract_windows(const AudioClip& clip, std::string_view source_id,
                                    const WindowingParams& params) {
  const std::size_t count = window_count(clip.samples.size(), clip.sample_rate_hz, params);
  if (count == 0) {
    throw InvalidArgument("recording '" + std::string(source_id) + "' is shorter than one " +
                          std::to_string(params.win_s) + " s window");
  }
  const std::size_t win = window_length(params, clip.sample_rate_hz);
  const std::size_t hop = hop_length(params, clip.sample_rate_hz);
  std::vector<Window> windows;
  windows.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    const auto first = clip.samples.begin() + static_cast<std::ptrdiff_t>(i * hop);
    windows.push_back(Window{static_cast<double>(i * hop) / clip.sample_rate_hz,
                             std::vector<double>(first, first + static_cast<std::ptrdiff_t>(win)),
                             std::string(source_id)});
  }
  return windows;
}

double covered_duration(const std::vector<EventInterval>& events, double start_s, double win_s,
                        const std::set<std::string>& labels) {
  const double end_s = start_s + win_s;
  std::vector<std::pair<double, double>> spans;
  for (const auto& e : events) {
    if (!labels.contains(e.label)) continue;
    const double a = std::max(e.start_s, start_s);
    const double b = std::min(e.end_s, end_s);
    if (b > a) spans.emplace_back(a, b);
  }
  std::sort(spans.begin(), spans.end());
  double total = 0.0;
  double cur_a = 0.0, cur_b = -1.0;
  bool open = false;
  for (const auto& [a, b] : spans) {
    if (open && a <= cur_b) {
      cur_b = std::max(cur_b, b);
      continue;
    }
    if (open) total += cur_b - cur_a;
    cur_a = a;
    cur_b = b;
    open = true;
  }
  if (open) total += cur_b - cur_a;
  return total;
}

int window_label(const std::vector<EventInterval>& events, double start_s, double win_s,
                 const std::set<std::string>& labels) {
  return covered_duration(events, start_s, win_s, labels) > win_s / 2.0 ? 1 : 0;
}

}  // namespace lsed::audio
