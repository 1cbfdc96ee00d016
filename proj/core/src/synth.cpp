#include "lsed/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <random>

#include "lsed/errors.hpp"
#include "lsed/random.hpp"

namespace lsed::synth {

void to_json(nlohmann::json& j, const Scenario& s) {
  j = nlohmann::json{{"duration_s", s.duration_s},
                     {"breaths_per_min", s.breaths_per_min},
                     {"inhale_fraction", s.inhale_fraction},
                     {"exhale_fraction", s.exhale_fraction},
                     {"wheeze_prob", s.wheeze_prob},
                     {"crackle_rate_hz", s.crackle_rate_hz},
                     {"breath_amplitude", s.breath_amplitude},
                     {"noise_rms", s.noise_rms},
                     {"hum_amplitude", s.hum_amplitude}};
}

void from_json(const nlohmann::json& j, Scenario& s) {
  Scenario d;
  s.duration_s = j.value("duration_s", d.duration_s);
  s.breaths_per_min = j.value("breaths_per_min", d.breaths_per_min);
  s.inhale_fraction = j.value("inhale_fraction", d.inhale_fraction);
  s.exhale_fraction = j.value("exhale_fraction", d.exhale_fraction);
  s.wheeze_prob = j.value("wheeze_prob", d.wheeze_prob);
  s.crackle_rate_hz = j.value("crackle_rate_hz", d.crackle_rate_hz);
  s.breath_amplitude = j.value("breath_amplitude", d.breath_amplitude);
  s.noise_rms = j.value("noise_rms", d.noise_rms);
  s.hum_amplitude = j.value("hum_amplitude", d.hum_amplitude);
}

namespace {

constexpr int kRate = audio::kModelSampleRate;
constexpr double kTaper = 0.010;
constexpr int kBandPartials = 48;

double taper(double t, double length) {
  const double edge = std::min(kTaper, length / 2.0);
  const double d = std::min(t, length - t);
  if (d <= 0.0) return 0.0;
  if (d >= edge) return 1.0;
  return 0.5 - 0.5 * std::cos(std::numbers::pi * d / edge);
}

std::size_t to_index(double t) { return static_cast<std::size_t>(std::llround(t * kRate)); }

/// Adds band-limited noise shaped by `envelope(u)`, u in [0, 1), over
/// [start, end).
template <typename Envelope>
void add_breath(std::vector<double>& x, double start, double end, double amplitude,
                Envelope envelope, Rng& rng) {
  std::uniform_real_distribution<double> freq(200.0, 600.0);
  std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
  std::vector<std::pair<double, double>> partials(kBandPartials);
  for (auto& p : partials) p = {freq(rng), phase(rng)};
  const double norm = 1.0 / std::sqrt(kBandPartials / 2.0);

  const std::size_t i0 = to_index(start);
  const std::size_t i1 = std::min(to_index(end), x.size());
  const double length = end - start;
  for (std::size_t i = i0; i < i1; ++i) {
    const double t = static_cast<double>(i) / kRate - start;
    double s = 0.0;
    for (const auto& [f, ph] : partials) s += std::sin(2.0 * std::numbers::pi * f * t + ph);
    x[i] += amplitude * envelope(t / length) * taper(t, length) * norm * s;
  }
}

}  // namespace

audio::AnnotatedRecording synthesize_recording(std::uint64_t seed, const Scenario& sc,
                                               std::string id) {
  if (!(sc.duration_s > 0.0)) throw InvalidArgument("synthesize_recording: duration must be > 0");
  if (!(sc.breaths_per_min > 0.0)) throw InvalidArgument("synthesize_recording: breathing rate must be > 0");
  if (sc.inhale_fraction <= 0.0 || sc.exhale_fraction <= 0.0 ||
      sc.inhale_fraction + sc.exhale_fraction > 1.0) {
    throw InvalidArgument("synthesize_recording: inhale/exhale fractions must be positive and sum to <= 1");
  }

  Rng rng = make_rng(seed, "synth");
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  audio::AnnotatedRecording rec;
  rec.id = id.empty() ? "synth-" + std::to_string(seed) : std::move(id);
  rec.clip.sample_rate_hz = kRate;
  const std::size_t n = std::max<std::size_t>(1, to_index(sc.duration_s));
  std::vector<double>& x = rec.clip.samples;
  x.assign(n, 0.0);
  const double duration = static_cast<double>(n) / kRate;

  const double cycle = 60.0 / sc.breaths_per_min;
  const double inhale = sc.inhale_fraction * cycle;
  const double exhale = sc.exhale_fraction * cycle;
  const double slack = (cycle - inhale - exhale) / 4.0;

  const double offset = slack * unit(rng);
  for (int b = 0;; ++b) {
    const double start = offset + b * cycle + slack * unit(rng);
    const double mid = start + inhale;
    const double end = mid + exhale;
    if (end > duration) break;

    add_breath(x, start, mid, sc.breath_amplitude, [](double u) { return 0.3 + 0.7 * u; }, rng);
    rec.events.push_back({start, mid, "inhalation"});
    add_breath(x, mid, end, 0.5 * sc.breath_amplitude, [](double u) { return 1.0 - 0.7 * u; }, rng);
    rec.events.push_back({mid, end, "exhalation"});

    if (unit(rng) < sc.wheeze_prob) {
      const double w0 = start + 0.05 * inhale;
      const double w1 = mid - 0.05 * inhale;
      const double f0 = 350.0 + 100.0 * unit(rng);
      const double ph = 2.0 * std::numbers::pi * unit(rng);
      const double amp = 0.6 * sc.breath_amplitude;
      for (std::size_t i = to_index(w0); i < std::min(to_index(w1), n); ++i) {
        const double t = static_cast<double>(i) / kRate - w0;
        x[i] += amp * taper(t, w1 - w0) * std::sin(2.0 * std::numbers::pi * f0 * t + ph);
      }
      rec.events.push_back({w0, w1, "wheeze"});
    }

    if (sc.crackle_rate_hz > 0.0) {
      std::exponential_distribution<double> gap(sc.crackle_rate_hz);
      std::normal_distribution<double> white(0.0, 1.0);
      double t = start + gap(rng);
      while (true) {
        const double width = 0.005 + 0.010 * unit(rng);
        if (t + width > mid) break;
        const double amp = 2.0 * sc.breath_amplitude;
        for (std::size_t i = to_index(t); i < std::min(to_index(t + width), n); ++i) {
          const double u = static_cast<double>(i) / kRate - t;
          x[i] += amp * std::exp(-4.0 * u / width) * white(rng);
        }
        rec.events.push_back({t, t + width, "crackle"});
        t += width + 0.020 + gap(rng);
      }
    }
  }

  std::normal_distribution<double> noise(0.0, sc.noise_rms);
  const double hum_phase = 2.0 * std::numbers::pi * unit(rng);
  for (std::size_t i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) / kRate;
    x[i] += noise(rng) + sc.hum_amplitude * std::sin(2.0 * std::numbers::pi * 50.0 * t + hum_phase);
  }

  const double peak = std::transform_reduce(x.begin(), x.end(), 0.0,
                                            [](double a, double b) { return std::max(a, b); },
                                            [](double v) { return std::abs(v); });
  if (peak > 0.99) {
    for (double& v : x) v *= 0.99 / peak;
  }

  std::stable_sort(rec.events.begin(), rec.events.end(),
                   [](const auto& a, const auto& b) { return a.start_s < b.start_s; });
  return rec;
}

Scenario corpus_scenario(std::uint64_t seed, double duration_s) {
  Rng rng = make_rng(seed, "scenario");
  std::uniform_real_distribution<double> bpm(13.0, 16.0);
  Scenario s;
  s.duration_s = duration_s;
  s.breaths_per_min = bpm(rng);
  s.wheeze_prob = 0.5;
  s.crackle_rate_hz = 2.0;
  return s;
}

}  // namespace lsed::synth
