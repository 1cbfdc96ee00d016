#include "lsed/features.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "lsed/dsp.hpp"
#include "lsed/errors.hpp"

namespace lsed::features {

void to_json(nlohmann::json& j, const FeatureParams& p) {
  j = nlohmann::json{{"frame_s", p.frame_s}, {"step_s", p.step_s},   {"f_lo", p.f_lo},
                     {"f_hi", p.f_hi},       {"delta_n", p.delta_n}, {"energy_floor", p.energy_floor},
                     {"n_filters", kNumFilters}, {"n_mfcc", kNumMfcc}};
}

void from_json(const nlohmann::json& j, FeatureParams& p) {
  p.frame_s = j.at("frame_s").get<double>();
  p.step_s = j.at("step_s").get<double>();
  p.f_lo = j.at("f_lo").get<double>();
  p.f_hi = j.at("f_hi").get<double>();
  p.delta_n = j.at("delta_n").get<int>();
  p.energy_floor = j.at("energy_floor").get<double>();
}

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

MelFilterbank::MelFilterbank(std::size_t n_filters, std::size_t n_fft, int sample_rate_hz,
                             double f_lo, double f_hi) {
  const double nyquist = sample_rate_hz / 2.0;
  if (f_hi > nyquist) {
    throw InvalidArgument("mel filterbank: f_hi " + std::to_string(f_hi) + " Hz exceeds Nyquist " +
                          std::to_string(nyquist) + " Hz");
  }
  if (!(f_lo >= 0.0 && f_lo < f_hi)) throw InvalidArgument("mel filterbank: need 0 <= f_lo < f_hi");
  if (n_filters == 0) throw InvalidArgument("mel filterbank: need at least one filter");

  const double m_lo = hz_to_mel(f_lo);
  const double m_hi = hz_to_mel(f_hi);
  std::vector<double> edges(n_filters + 2);
  for (std::size_t i = 0; i < edges.size(); ++i) {
    edges[i] = mel_to_hz(m_lo + (m_hi - m_lo) * static_cast<double>(i) / static_cast<double>(n_filters + 1));
  }
  const std::size_t n_bins = n_fft / 2 + 1;
  weights_ = Matrix(n_filters, n_bins);
  centers_hz_.resize(n_filters);
  for (std::size_t f = 0; f < n_filters; ++f) {
    const double lo = edges[f], c = edges[f + 1], hi = edges[f + 2];
    centers_hz_[f] = c;
    for (std::size_t k = 0; k < n_bins; ++k) {
      const double hz = static_cast<double>(k) * sample_rate_hz / static_cast<double>(n_fft);
      double w = 0.0;
      if (hz > lo && hz <= c) {
        w = (hz - lo) / (c - lo);
      } else if (hz > c && hz < hi) {
        w = (hi - hz) / (hi - c);
      }
      weights_(f, k) = w;
    }
  }
}

std::vector<double> MelFilterbank::apply(std::span<const double> power) const {
  if (power.size() != weights_.cols()) throw InvalidArgument("mel filterbank: spectrum size mismatch");
  std::vector<double> e(size(), 0.0);
  for (std::size_t f = 0; f < size(); ++f) {
    const auto w = weights_.row(f);
    for (std::size_t k = 0; k < power.size(); ++k) e[f] += w[k] * power[k];
  }
  return e;
}

Matrix frame_signal(std::span<const double> signal, int sample_rate_hz, double frame_s, double step_s) {
  const auto frame = static_cast<std::size_t>(std::llround(frame_s * sample_rate_hz));
  const auto step = static_cast<std::size_t>(std::llround(step_s * sample_rate_hz));
  if (frame == 0 || step == 0) throw InvalidArgument("frame_signal: frame and step must be positive");
  if (frame > signal.size()) {
    throw InvalidArgument("frame_signal: frame of " + std::to_string(frame) +
                          " samples is longer than the " + std::to_string(signal.size()) +
                          "-sample signal");
  }
  const std::size_t count = (signal.size() - frame) / step + 1;
  const std::vector<double> window = dsp::hamming(frame);
  Matrix frames(count, frame);
  for (std::size_t r = 0; r < count; ++r) {
    for (std::size_t i = 0; i < frame; ++i) frames(r, i) = signal[r * step + i] * window[i];
  }
  return frames;
}

std::vector<double> dct2(std::span<const double> x, std::size_t n_out) {
  const std::size_t n = x.size();
  if (n_out > n) throw InvalidArgument("dct2: more outputs than inputs");
  std::vector<double> out(n_out, 0.0);
  for (std::size_t k = 0; k < n_out; ++k) {
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      acc += x[i] * std::cos(std::numbers::pi * static_cast<double>(k) * (2.0 * i + 1.0) / (2.0 * n));
    }
    out[k] = acc * std::sqrt((k == 0 ? 1.0 : 2.0) / static_cast<double>(n));
  }
  return out;
}

Matrix deltas(const Matrix& seq, int n) {
  if (n < 1) throw InvalidArgument("deltas: N must be >= 1");
  const std::size_t rows = seq.rows();
  Matrix out(rows, seq.cols());
  if (rows == 0) return out;
  double denom = 0.0;
  for (int k = 1; k <= n; ++k) denom += 2.0 * k * k;
  const auto last = static_cast<std::ptrdiff_t>(rows) - 1;
  for (std::size_t t = 0; t < rows; ++t) {
    for (std::size_t c = 0; c < seq.cols(); ++c) {
      double acc = 0.0;
      for (int k = 1; k <= n; ++k) {
        const auto ti = static_cast<std::ptrdiff_t>(t);
        const auto fwd = static_cast<std::size_t>(std::min(ti + k, last));
        const auto bwd = static_cast<std::size_t>(std::max<std::ptrdiff_t>(ti - k, 0));
        acc += k * (seq(fwd, c) - seq(bwd, c));
      }
      out(t, c) = acc / denom;
    }
  }
  return out;
}

void minmax_normalize_columns(Matrix& m) {
  for (std::size_t c = 0; c < m.cols(); ++c) {
    double lo = m(0, c), hi = m(0, c);
    for (std::size_t r = 1; r < m.rows(); ++r) {
      lo = std::min(lo, m(r, c));
      hi = std::max(hi, m(r, c));
    }
    const double range = hi - lo;
    for (std::size_t r = 0; r < m.rows(); ++r) m(r, c) = range > 0.0 ? (m(r, c) - lo) / range : 0.0;
  }
}

FeatureExtractor::FeatureExtractor(int sample_rate_hz, FeatureParams params)
    : sample_rate_hz_(sample_rate_hz),
      params_(params),
      frame_len_(static_cast<std::size_t>(std::llround(params.frame_s * sample_rate_hz))),
      n_fft_(dsp::next_pow2(std::max<std::size_t>(frame_len_, 1))),
      bank_(kNumFilters, n_fft_, sample_rate_hz, params.f_lo, params.f_hi) {
  if (sample_rate_hz <= 0) throw InvalidArgument("feature extractor: sample rate must be positive");
}

std::vector<double> FeatureExtractor::log_mel_energies(std::span<const double> frame) const {
  if (frame.empty()) throw InvalidArgument("log_mel_energies: empty frame");
  std::vector<double> e = bank_.apply(dsp::power_spectrum(frame, dsp::next_pow2(frame.size())));
  for (double& v : e) v = std::log(std::max(v, params_.energy_floor));
  return e;
}

std::vector<double> FeatureExtractor::mfcc(std::span<const double> frame) const {
  return dct2(log_mel_energies(frame), kNumMfcc);
}

FeatureWindow FeatureExtractor::assemble(const audio::Window& window) const {
  const Matrix frames = frame_signal(window.samples, sample_rate_hz_, params_.frame_s, params_.step_s);
  const std::size_t rows = frames.rows();
  Matrix cep(rows, kNumMfcc);
  Matrix mel(rows, kNumFilters);
  for (std::size_t r = 0; r < rows; ++r) {
    const std::vector<double> logmel = log_mel_energies(frames.row(r));
    const std::vector<double> c = dct2(logmel, kNumMfcc);
    std::copy(c.begin(), c.end(), cep.row(r).begin());
    std::copy(logmel.begin(), logmel.end(), mel.row(r).begin());
  }
  const Matrix d1 = deltas(cep, params_.delta_n);
  const Matrix d2 = deltas(d1, params_.delta_n);

  FeatureWindow fw{Matrix(rows, kFeatureDim), window.start_s, window.source_id};
  for (std::size_t r = 0; r < rows; ++r) {
    auto out = fw.matrix.row(r);
    std::copy_n(cep.row(r).begin(), kNumMfcc, out.begin() + kStaticBegin);
    std::copy_n(d1.row(r).begin(), kNumMfcc, out.begin() + kDeltaBegin);
    std::copy_n(d2.row(r).begin(), kNumMfcc, out.begin() + kDeltaDeltaBegin);
    std::copy_n(mel.row(r).begin(), kNumFilters, out.begin() + kLogMelBegin);
  }
  minmax_normalize_columns(fw.matrix);
  return fw;
}

FeatureWindow assemble_features(const audio::Window& window, int sample_rate_hz,
                                const FeatureParams& params) {
  return FeatureExtractor(sample_rate_hz, params).assemble(window);
}

void AugmentConfig::validate() const {
  if (apply_prob < 0.0 || apply_prob > 1.0) throw InvalidArgument("augment: apply_prob must lie in [0, 1]");
  if (freq_width_min < 1 || freq_width_max < freq_width_min) {
    throw InvalidArgument("augment: frequency width range must satisfy 1 <= min <= max");
  }
  if (time_width_min < 1 || time_width_max < time_width_min) {
    throw InvalidArgument("augment: time width range must satisfy 1 <= min <= max");
  }
}

namespace {

std::optional<MaskBand> draw_band(double prob, int wmin, int wmax, std::size_t extent, Rng& rng) {
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  if (!(coin(rng) < prob)) return std::nullopt;
  std::uniform_int_distribution<int> width_dist(wmin, wmax);
  const auto width = std::min<std::size_t>(static_cast<std::size_t>(width_dist(rng)), extent);
  std::uniform_int_distribution<std::size_t> start_dist(0, extent - width);
  return MaskBand{start_dist(rng), width};
}

}  // namespace

MaskPlan draw_mask_plan(const AugmentConfig& cfg, std::size_t frames, std::size_t columns, Rng& rng) {
  cfg.validate();
  MaskPlan plan;
  plan.freq = draw_band(cfg.apply_prob, cfg.freq_width_min, cfg.freq_width_max, columns, rng);
  plan.time = draw_band(cfg.apply_prob, cfg.time_width_min, cfg.time_width_max, frames, rng);
  return plan;
}

FeatureWindow apply_masks(const FeatureWindow& fw, const MaskPlan& plan) {
  FeatureWindow out = fw;
  Matrix& m = out.matrix;
  if (plan.freq) {
    if (plan.freq->start + plan.freq->width > m.cols()) throw InvalidArgument("apply_masks: frequency band out of range");
    for (std::size_t r = 0; r < m.rows(); ++r) {
      for (std::size_t c = plan.freq->start; c < plan.freq->start + plan.freq->width; ++c) m(r, c) = 0.0;
    }
  }
  if (plan.time) {
    if (plan.time->start + plan.time->width > m.rows()) throw InvalidArgument("apply_masks: time band out of range");
    for (std::size_t r = plan.time->start; r < plan.time->start + plan.time->width; ++r) {
      for (double& v : m.row(r)) v = 0.0;
    }
  }
  return out;
}

FeatureWindow spec_augment(const FeatureWindow& fw, const AugmentConfig& cfg, Rng& rng) {
  return apply_masks(fw, draw_mask_plan(cfg, fw.frames(), fw.matrix.cols(), rng));
}

}  // namespace lsed::features
