#pragma once

#include <complex>
#include <span>
#include <vector>

namespace lsed::dsp {

/// Second-order section, a0 normalised to 1:
///   y[n] = b0 x[n] + b1 x[n-1] + b2 x[n-2] - a1 y[n-1] - a2 y[n-2]
struct Biquad {
  double b0 = 1.0, b1 = 0.0, b2 = 0.0;
  double a1 = 0.0, a2 = 0.0;
};

/// Digital Butterworth high-pass as cascaded sections (bilinear transform
/// with pre-warping). Odd orders contribute one first-order section.
std::vector<Biquad> butterworth_highpass(int order, double cutoff_hz, double sample_rate_hz);

/// Complex frequency response of a section cascade at `freq_hz`.
std::complex<double> frequency_response(std::span<const Biquad> sections, double freq_hz,
                                        double sample_rate_hz);

/// Causal filtering, transposed direct form II. `initial` (two states per
/// section) may be empty for zero initial conditions.
std::vector<double> sosfilt(std::span<const Biquad> sections, std::span<const double> x,
                            std::span<const double> initial = {});

/// Steady-state initial conditions for a unit step input.
std::vector<double> sosfilt_zi(std::span<const Biquad> sections);

/// Zero-phase filtering: odd extension of `padlen` samples at both ends,
/// steady-state initial conditions, forward pass, backward pass.
std::vector<double> sosfiltfilt(std::span<const Biquad> sections, std::span<const double> x,
                                std::size_t padlen);

/// In-place iterative radix-2 FFT. Size must be a power of two.
void fft(std::span<std::complex<double>> data);

std::size_t next_pow2(std::size_t n);

/// |X_k|^2 / n_fft for k = 0..n_fft/2 of a zero-padded real frame.
std::vector<double> power_spectrum(std::span<const double> frame, std::size_t n_fft);

/// Symmetric Hamming window 0.54 - 0.46 cos(2 pi n / (N - 1)).
std::vector<double> hamming(std::size_t n);

}  // namespace lsed::dsp
