// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <memory>
#include <numbers>
#include <span>
#include <vector>

#include "rsed/errors.hpp"
#include "rsed/numerics.hpp"

namespace rsed {

inline constexpr double kLogEnergyFloor = 1e-10;

struct LfbeConfig {
  double sample_rate = 44100.0;
  double frame_ms = 46.0;
  double shift_ms = 23.0;
  std::size_t filters = 64;
  std::size_t fft_size = 0;  // 0: next power of two >= frame length
  double mel_low_hz = 0.0;
  double mel_high_hz = 0.0;  // 0: Nyquist

  std::size_t frame_length() const {
    return static_cast<std::size_t>(std::lround(sample_rate * frame_ms / 1000.0));
  }
  std::size_t shift_length() const {
    return static_cast<std::size_t>(std::lround(sample_rate * shift_ms / 1000.0));
  }
  std::size_t resolved_fft_size() const {
    if (fft_size != 0) return fft_size;
    std::size_t n = 1;
    while (n < frame_length()) n <<= 1;
    return n;
  }
  double resolved_high_hz() const { return mel_high_hz > 0.0 ? mel_high_hz : sample_rate / 2.0; }

  void validate() const {
    if (!(sample_rate > 0.0)) throw ConfigError("sample_rate must be positive");
    if (frame_length() < 1) throw ConfigError("frame duration shorter than one sample");
    if (shift_length() < 1) throw ConfigError("frame shift shorter than one sample");
    if (shift_ms > frame_ms) throw ConfigError("frame shift must not exceed frame duration");
    if (filters < 1) throw ConfigError("filter count must be >= 1");
    if (resolved_fft_size() < frame_length()) throw ConfigError("FFT size smaller than frame length");
    if (!(mel_low_hz >= 0.0 && mel_low_hz < resolved_high_hz() && resolved_high_hz() <= sample_rate / 2.0))
      throw ConfigError("mel range must satisfy 0 <= low < high <= Nyquist");
  }
};

inline double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
inline double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

/// Centre frequencies (Hz) of the filters: equally spaced on the mel scale,
/// with the band edges as the outer two of filters + 2 points.
inline Vector mel_band_edges(const LfbeConfig& config) {
  const double lo = hz_to_mel(config.mel_low_hz), hi = hz_to_mel(config.resolved_high_hz());
  const std::size_t n = config.filters + 2;
  Vector hz(n);
  for (std::size_t i = 0; i < n; ++i)
    hz[i] = mel_to_hz(lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n - 1));
  return hz;
}

/// Triangular filters (filters x fft/2+1) over the power-spectrum bins.
inline Matrix mel_filterbank(const LfbeConfig& config) {
  config.validate();
  const std::size_t nfft = config.resolved_fft_size(), bins = nfft / 2 + 1;
  const Vector edges = mel_band_edges(config);
  Matrix fb(config.filters, bins);
  for (std::size_t m = 0; m < config.filters; ++m) {
    const double left = edges[m], centre = edges[m + 1], right = edges[m + 2];
    bool any = false;
    for (std::size_t k = 0; k < bins; ++k) {
      const double f = static_cast<double>(k) * config.sample_rate / static_cast<double>(nfft);
      double w = 0.0;
      if (f > left && f <= centre) w = (f - left) / (centre - left);
      else if (f > centre && f < right) w = (right - f) / (right - centre);
      fb(m, k) = w;
      any = any || w > 0.0;
    }
    if (!any)
      throw ConfigError("filter " + std::to_string(m) +
                        " covers no FFT bin; too many filters for FFT size " + std::to_string(nfft));
  }
  return fb;
}

namespace detail {

struct FftwPlanDeleter {
  void operator()(fftw_plan_s* p) const { fftw_destroy_plan(p); }
};
struct FftwFree {
  void operator()(void* p) const { fftw_free(p); }
};

}  // namespace detail

/// |FFT|^2 of each Hann-windowed frame: frames x (fft/2+1).
inline Matrix power_spectrogram(std::span<const double> waveform, const LfbeConfig& config) {
  config.validate();
  const std::size_t len = config.frame_length(), shift = config.shift_length();
  const std::size_t nfft = config.resolved_fft_size(), bins = nfft / 2 + 1;
  if (waveform.size() < len)
    throw InputError("waveform has " + std::to_string(waveform.size()) +
                     " samples, shorter than one frame of " + std::to_string(len));
  const std::size_t frames = 1 + (waveform.size() - len) / shift;

  std::unique_ptr<double, detail::FftwFree> in(fftw_alloc_real(nfft));
  std::unique_ptr<fftw_complex, detail::FftwFree> out(fftw_alloc_complex(bins));
  std::unique_ptr<fftw_plan_s, detail::FftwPlanDeleter> plan(
      fftw_plan_dft_r2c_1d(static_cast<int>(nfft), in.get(), out.get(), FFTW_ESTIMATE));

  Vector window(len);
  for (std::size_t n = 0; n < len; ++n)
    window[n] = len > 1 ? 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(n) /
                                                 static_cast<double>(len - 1))
                        : 1.0;

  Matrix power(frames, bins);
  for (std::size_t f = 0; f < frames; ++f) {
    double* buf = in.get();
    for (std::size_t n = 0; n < len; ++n) buf[n] = waveform[f * shift + n] * window[n];
    std::fill(buf + len, buf + nfft, 0.0);
    fftw_execute(plan.get());
    for (std::size_t k = 0; k < bins; ++k) {
      const double re = out.get()[k][0], im = out.get()[k][1];
      power(f, k) = re * re + im * im;
    }
  }
  return power;
}

/// Log mel filterbank energies (filters x frames), natural log with a floor.
inline Matrix lfbe(std::span<const double> waveform, const LfbeConfig& config) {
  const Matrix fb = mel_filterbank(config);
  const Matrix power = power_spectrogram(waveform, config);
  Matrix out(config.filters, power.rows());
  for (std::size_t f = 0; f < power.rows(); ++f) {
    const auto spectrum = power.row(f);
    for (std::size_t m = 0; m < config.filters; ++m)
      out(m, f) = std::log(std::max(dot(fb.row(m), spectrum), kLogEnergyFloor));
  }
  return out;
}

}  // namespace rsed
