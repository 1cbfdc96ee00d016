#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "lsed/audio.hpp"
#include "lsed/matrix.hpp"
#include "lsed/random.hpp"

namespace lsed::features {

inline constexpr std::size_t kNumMfcc = 13;
inline constexpr std::size_t kNumFilters = 26;
inline constexpr std::size_t kFeatureDim = 3 * kNumMfcc + kNumFilters;  // 65

// Column layout of a feature row.
inline constexpr std::size_t kStaticBegin = 0;
inline constexpr std::size_t kDeltaBegin = kNumMfcc;
inline constexpr std::size_t kDeltaDeltaBegin = 2 * kNumMfcc;
inline constexpr std::size_t kLogMelBegin = 3 * kNumMfcc;

struct FeatureParams {
  double frame_s = 0.025;
  double step_s = 0.010;
  double f_lo = 0.0;
  double f_hi = 2000.0;
  int delta_n = 2;
  double energy_floor = 1e-10;

  friend bool operator==(const FeatureParams&, const FeatureParams&) = default;
};

void to_json(nlohmann::json& j, const FeatureParams& p);
void from_json(const nlohmann::json& j, FeatureParams& p);

/// frames x 65 matrix for one window. Columns: [0,13) MFCC, [13,26) delta,
/// [26,39) delta-delta, [39,65) log mel energies; each column min-max
/// normalised to [0, 1] within the window.
struct FeatureWindow {
  Matrix matrix;
  double start_s = 0.0;
  std::string source_id;

  std::size_t frames() const { return matrix.rows(); }
};

double hz_to_mel(double hz);
double mel_to_hz(double mel);

/// Triangular filters equally spaced on the HTK mel scale between f_lo and
/// f_hi, evaluated at FFT bin centre frequencies.
class MelFilterbank {
 public:
  MelFilterbank(std::size_t n_filters, std::size_t n_fft, int sample_rate_hz, double f_lo,
                double f_hi);

  std::size_t size() const { return centers_hz_.size(); }
  const std::vector<double>& centers_hz() const { return centers_hz_; }
  double weight(std::size_t filter, std::size_t bin) const { return weights_(filter, bin); }

  /// Filter energies of a power spectrum with n_fft/2 + 1 bins.
  std::vector<double> apply(std::span<const double> power) const;

 private:
  std::vector<double> centers_hz_;
  Matrix weights_;  // n_filters x (n_fft/2 + 1)
};

/// Hamming-weighted frames: floor((N - frame) / step) + 1 rows.
Matrix frame_signal(std::span<const double> signal, int sample_rate_hz, double frame_s = 0.025,
                    double step_s = 0.010);

/// Orthonormal DCT-II, first `n_out` coefficients.
std::vector<double> dct2(std::span<const double> x, std::size_t n_out);

/// Regression deltas d_t = sum_n n (c_{t+n} - c_{t-n}) / (2 sum_n n^2),
/// edge frames replicated.
Matrix deltas(const Matrix& sequence, int n = 2);

/// In place: v' = (v - min) / (max - min) per column, 0 where max == min.
void minmax_normalize_columns(Matrix& m);

/// Reusable extractor (caches the Hamming window, filterbank and FFT size).
class FeatureExtractor {
 public:
  explicit FeatureExtractor(int sample_rate_hz = audio::kModelSampleRate, FeatureParams params = {});

  const FeatureParams& params() const { return params_; }
  std::size_t frame_length() const { return frame_len_; }
  std::size_t fft_size() const { return n_fft_; }
  const MelFilterbank& filterbank() const { return bank_; }

  /// Natural log of the 26 filter energies, floored at energy_floor.
  std::vector<double> log_mel_energies(std::span<const double> weighted_frame) const;

  /// First 13 orthonormal DCT-II coefficients of the log mel energies.
  std::vector<double> mfcc(std::span<const double> weighted_frame) const;

  FeatureWindow assemble(const audio::Window& window) const;

 private:
  int sample_rate_hz_;
  FeatureParams params_;
  std::size_t frame_len_;
  std::size_t n_fft_;
  MelFilterbank bank_;
};

FeatureWindow assemble_features(const audio::Window& window,
                                int sample_rate_hz = audio::kModelSampleRate,
                                const FeatureParams& params = {});

// --- augmentation ----------------------------------------------------------

struct AugmentConfig {
  double apply_prob = 0.5;  ///< per mask family
  int freq_width_min = 2;
  int freq_width_max = 8;
  int time_width_min = 5;
  int time_width_max = 10;

  void validate() const;
  friend bool operator==(const AugmentConfig&, const AugmentConfig&) = default;
};

struct MaskBand {
  std::size_t start = 0;
  std::size_t width = 0;
};

struct MaskPlan {
  std::optional<MaskBand> freq;  ///< feature columns
  std::optional<MaskBand> time;  ///< frames
};

/// Draw order: freq coin, freq width, freq start, time coin, time width,
/// time start.
MaskPlan draw_mask_plan(const AugmentConfig& cfg, std::size_t frames, std::size_t columns, Rng& rng);

/// Returns a copy with the planned bands set to 0.
FeatureWindow apply_masks(const FeatureWindow& fw, const MaskPlan& plan);

FeatureWindow spec_augment(const FeatureWindow& fw, const AugmentConfig& cfg, Rng& rng);

}  // namespace lsed::features
