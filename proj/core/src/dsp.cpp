#include "lsed/dsp.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "lsed/errors.hpp"

namespace lsed::dsp {

namespace {

Biquad bilinear_second_order(double a_s2, double a_s1, double a_s0, double b_s2, double b_s1,
                             double b_s0, double k) {
  // Substitute s = k (z - 1) / (z + 1) into (b2 s^2 + b1 s + b0) / (a2 s^2 + a1 s + a0).
  const double k2 = k * k;
  const double n0 = b_s2 * k2 + b_s1 * k + b_s0;
  const double n1 = 2.0 * (b_s0 - b_s2 * k2);
  const double n2 = b_s2 * k2 - b_s1 * k + b_s0;
  const double d0 = a_s2 * k2 + a_s1 * k + a_s0;
  const double d1 = 2.0 * (a_s0 - a_s2 * k2);
  const double d2 = a_s2 * k2 - a_s1 * k + a_s0;
  return Biquad{n0 / d0, n1 / d0, n2 / d0, d1 / d0, d2 / d0};
}

}  // namespace

std::vector<Biquad> butterworth_highpass(int order, double cutoff_hz, double sample_rate_hz) {
  if (order < 1) throw InvalidArgument("butterworth_highpass: order must be >= 1");
  if (!(sample_rate_hz > 0.0)) throw InvalidArgument("butterworth_highpass: sample rate must be > 0");
  if (!(cutoff_hz > 0.0) || cutoff_hz >= sample_rate_hz / 2.0) {
    throw InvalidArgument("butterworth_highpass: cutoff must lie in (0, Nyquist)");
  }
  const double k = 2.0 * sample_rate_hz;
  const double wc = k * std::tan(std::numbers::pi * cutoff_hz / sample_rate_hz);

  std::vector<Biquad> sections;
  // Prototype poles p_m = exp(i pi (2m + n + 1) / 2n); the high-pass pole
  // pair for p has denominator s^2 - 2 wc Re(p) s + wc^2.
  for (int m = 0; m < order / 2; ++m) {
    const double theta = std::numbers::pi * (2.0 * m + order + 1) / (2.0 * order);
    const double re = std::cos(theta);
    sections.push_back(bilinear_second_order(1.0, -2.0 * wc * re, wc * wc, 1.0, 0.0, 0.0, k));
  }
  if (order % 2 == 1) {
    // s / (s + wc)
    sections.push_back(bilinear_second_order(0.0, 1.0, wc, 0.0, 1.0, 0.0, k));
  }
  return sections;
}

std::complex<double> frequency_response(std::span<const Biquad> sections, double freq_hz,
                                        double sample_rate_hz) {
  const std::complex<double> z1 =
      std::polar(1.0, -2.0 * std::numbers::pi * freq_hz / sample_rate_hz);
  const std::complex<double> z2 = z1 * z1;
  std::complex<double> h{1.0, 0.0};
  for (const auto& s : sections) {
    h *= (s.b0 + s.b1 * z1 + s.b2 * z2) / (1.0 + s.a1 * z1 + s.a2 * z2);
  }
  return h;
}

std::vector<double> sosfilt(std::span<const Biquad> sections, std::span<const double> x,
                            std::span<const double> initial) {
  if (!initial.empty() && initial.size() != 2 * sections.size()) {
    throw InvalidArgument("sosfilt: initial state needs two values per section");
  }
  std::vector<double> y(x.begin(), x.end());
  for (std::size_t s = 0; s < sections.size(); ++s) {
    const Biquad& q = sections[s];
    double z1 = initial.empty() ? 0.0 : initial[2 * s];
    double z2 = initial.empty() ? 0.0 : initial[2 * s + 1];
    for (double& v : y) {
      const double in = v;
      const double out = q.b0 * in + z1;
      z1 = q.b1 * in - q.a1 * out + z2;
      z2 = q.b2 * in - q.a2 * out;
      v = out;
    }
  }
  return y;
}

std::vector<double> sosfilt_zi(std::span<const Biquad> sections) {
  std::vector<double> zi;
  zi.reserve(2 * sections.size());
  double scale = 1.0;  // steady-state input level of the current section
  for (const auto& q : sections) {
    const double gain = (q.b0 + q.b1 + q.b2) / (1.0 + q.a1 + q.a2);
    zi.push_back(scale * (gain - q.b0));
    zi.push_back(scale * (q.b2 - q.a2 * gain));
    scale *= gain;
  }
  return zi;
}

std::vector<double> sosfiltfilt(std::span<const Biquad> sections, std::span<const double> x,
                                std::size_t padlen) {
  const std::size_t n = x.size();
  if (n == 0) return {};
  padlen = std::min(padlen, n - 1);

  std::vector<double> ext;
  ext.reserve(n + 2 * padlen);
  for (std::size_t i = padlen; i >= 1; --i) ext.push_back(2.0 * x[0] - x[i]);
  ext.insert(ext.end(), x.begin(), x.end());
  for (std::size_t i = 1; i <= padlen; ++i) ext.push_back(2.0 * x[n - 1] - x[n - 1 - i]);

  const std::vector<double> zi = sosfilt_zi(sections);
  std::vector<double> init(zi.size());

  std::transform(zi.begin(), zi.end(), init.begin(), [&](double z) { return z * ext.front(); });
  std::vector<double> fwd = sosfilt(sections, ext, init);

  std::reverse(fwd.begin(), fwd.end());
  std::transform(zi.begin(), zi.end(), init.begin(), [&](double z) { return z * fwd.front(); });
  std::vector<double> bwd = sosfilt(sections, fwd, init);
  std::reverse(bwd.begin(), bwd.end());

  return {bwd.begin() + static_cast<std::ptrdiff_t>(padlen),
          bwd.begin() + static_cast<std::ptrdiff_t>(padlen + n)};
}

std::size_t next_pow2(std::size_t n) {
  std::size_t p = 1;
  while (p < n) p <<= 1;
  return p;
}

void fft(std::span<std::complex<double>> data) {
  const std::size_t n = data.size();
  if (n == 0 || (n & (n - 1)) != 0) throw InvalidArgument("fft: size must be a power of two");

  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(data[i], data[j]);
  }
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const double ang = -2.0 * std::numbers::pi / static_cast<double>(len);
    for (std::size_t i = 0; i < n; i += len) {
      for (std::size_t k = 0; k < len / 2; ++k) {
        const std::complex<double> w = std::polar(1.0, ang * static_cast<double>(k));
        const std::complex<double> u = data[i + k];
        const std::complex<double> v = data[i + k + len / 2] * w;
        data[i + k] = u + v;
        data[i + k + len / 2] = u - v;
      }
    }
  }
}

std::vector<double> power_spectrum(std::span<const double> frame, std::size_t n_fft) {
  if (frame.size() > n_fft) throw InvalidArgument("power_spectrum: frame longer than FFT size");
  std::vector<std::complex<double>> buf(n_fft);
  std::copy(frame.begin(), frame.end(), buf.begin());
  fft(buf);
  std::vector<double> power(n_fft / 2 + 1);
  for (std::size_t k = 0; k < power.size(); ++k) {
    power[k] = std::norm(buf[k]) / static_cast<double>(n_fft);
  }
  return power;
}

std::vector<double> hamming(std::size_t n) {
  std::vector<double> w(n, 1.0);
  if (n == 1) return w;
  for (std::size_t i = 0; i < n; ++i) {
    w[i] = 0.54 - 0.46 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) /
                                  static_cast<double>(n - 1));
  }
  return w;
}

}  // namespace lsed::dsp
