#pragma once

#include <cstdint>
#include <string>

#include <nlohmann/json.hpp>

#include "lsed/audio.hpp"

namespace lsed::synth {

/// Controls one synthetic recording. All times in seconds.
///
/// Each breath cycle is an inhalation (band-limited 200-600 Hz noise with a
/// rising envelope) followed directly by an exhalation (same band, falling
/// envelope, -6 dB), then a pause. Wheezes are 400 +/- 50 Hz tones laid
/// over an inhalation; crackles are 5-15 ms wideband transients.
struct Scenario {
  double duration_s = 20.0;
  double breaths_per_min = 15.0;
  double inhale_fraction = 0.45;
  double exhale_fraction = 0.45;
  double wheeze_prob = 0.0;     ///< per inhalation
  double crackle_rate_hz = 0.0; ///< expected crackles per second of inhalation
  double breath_amplitude = 0.3;
  double noise_rms = 0.005;
  double hum_amplitude = 0.02;  ///< 50 Hz mains hum, removed by the high-pass

  friend bool operator==(const Scenario&, const Scenario&) = default;
};

void to_json(nlohmann::json& j, const Scenario& s);
void from_json(const nlohmann::json& j, Scenario& s);

/// Pure function of (seed, scenario): a 4 kHz clip plus exact ground truth.
audio::AnnotatedRecording synthesize_recording(std::uint64_t seed, const Scenario& scenario,
                                               std::string id = {});

/// Scenario used for corpus generation: breathing rate drawn from
/// [13, 16] breaths/min, wheeze on half the inhalations, sparse crackles.
Scenario corpus_scenario(std::uint64_t seed, double duration_s);

}  // namespace lsed::synth
