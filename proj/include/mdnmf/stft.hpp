#pragma once

// Short-time Fourier analysis for the audio pipeline. Magnitude
// spectrograms are the non-negative data columns the factorization
// consumes (one frame per column); phases are kept alongside so a
// separated magnitude can be resynthesized with the mixture's phase.

#include "mdnmf/core.hpp"

#include <unsupported/Eigen/FFT>

#include <cmath>
#include <complex>
#include <numbers>
#include <vector>

namespace mdnmf {

/// Analysis parameters. The window is always a periodic Hann: at the
/// enforced 50% hop its squared overlap never vanishes, which makes the
/// weighted overlap-add below an exact inverse.
struct StftConfig {
  Index window_len = 512;
  Index fft_size = 512;
  Index hop = 256;
  double sample_rate = 16000.0;
};

inline void check_stft_config(const StftConfig& cfg) {
  check_config(cfg.window_len > 0 && cfg.window_len % 2 == 0,
               "window_len must be positive and even");
  check_config(cfg.hop * 2 == cfg.window_len, "hop must be window_len/2 (50% overlap)");
  check_config(cfg.fft_size >= cfg.window_len, "fft_size must be at least window_len");
  check_config(cfg.sample_rate > 0, "sample_rate must be positive");
}

struct Spectrogram {
  Matrix magnitudes;  // (fft_size/2 + 1) x frames, non-negative
  Matrix phases;      // radians, same shape
  StftConfig config;
  Index samples = -1;  // original signal length; -1 reconstructs (frames-1)*hop

  Index bins() const { return magnitudes.rows(); }
  Index frames() const { return magnitudes.cols(); }
};

inline void check_spectrogram(const Spectrogram& spec) {
  check_stft_config(spec.config);
  check_dims(spec.magnitudes.rows() == spec.config.fft_size / 2 + 1,
             "spectrogram rows must equal fft_size/2 + 1");
  check_dims(spec.magnitudes.rows() == spec.phases.rows() &&
                 spec.magnitudes.cols() == spec.phases.cols(),
             "magnitudes and phases must share a shape");
  check_dims(spec.frames() >= 1, "spectrogram needs at least one frame");
  check_data(spec.magnitudes, "magnitudes");
  check_value(spec.phases.allFinite(), "phases: entries must be finite");
}

inline Vector hann_window(Index n) {
  Vector w(n);
  for (Index i = 0; i < n; ++i) {
    w(i) = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) /
                                static_cast<double>(n));
  }
  return w;
}

namespace detail {

/// Mirrors an out-of-range index about the first/last sample.
inline Index reflect_index(Index i, Index n) {
  if (n == 1) return 0;
  const Index period = 2 * (n - 1);
  i = ((i % period) + period) % period;
  return i < n ? i : period - i;
}

}  // namespace detail

inline Spectrogram stft(const Vector& signal, const StftConfig& cfg) {
  check_stft_config(cfg);
  check_value(signal.allFinite(), "signal: entries must be finite");
  check_value(signal.size() >= cfg.window_len, "signal shorter than the analysis window");

  const Index len = signal.size();
  const Index pad = cfg.window_len / 2;
  const Index frames = 1 + len / cfg.hop;
  const Index bins = cfg.fft_size / 2 + 1;
  const Vector window = hann_window(cfg.window_len);

  Spectrogram spec;
  spec.config = cfg;
  spec.samples = len;
  spec.magnitudes.resize(bins, frames);
  spec.phases.resize(bins, frames);

  Eigen::FFT<double> fft;
  fft.SetFlag(Eigen::FFT<double>::HalfSpectrum);
  std::vector<double> frame(static_cast<size_t>(cfg.fft_size), 0.0);
  std::vector<std::complex<double>> spectrum;
  for (Index t = 0; t < frames; ++t) {
    for (Index n = 0; n < cfg.window_len; ++n) {
      const Index src = detail::reflect_index(t * cfg.hop + n - pad, len);
      frame[static_cast<size_t>(n)] = signal(src) * window(n);
    }
    fft.fwd(spectrum, frame);
    for (Index b = 0; b < bins; ++b) {
      spec.magnitudes(b, t) = std::abs(spectrum[static_cast<size_t>(b)]);
      spec.phases(b, t) = std::arg(spectrum[static_cast<size_t>(b)]);
    }
  }
  return spec;
}

/// Weighted overlap-add inverse: each frame is windowed again and the sum
/// is divided by the accumulated squared window, so reconstruction is
/// exact wherever any window energy landed. Output is trimmed to
/// `spec.samples`.
inline Vector istft(const Spectrogram& spec) {
  check_spectrogram(spec);
  const StftConfig& cfg = spec.config;
  const Index frames = spec.frames();
  const Index pad = cfg.window_len / 2;
  const Index out_len = spec.samples >= 0 ? spec.samples : (frames - 1) * cfg.hop;
  check_dims(out_len <= frames * cfg.hop,
             "spectrogram has too few frames for the requested length");
  const Index padded = (frames - 1) * cfg.hop + cfg.window_len;
  const Vector window = hann_window(cfg.window_len);

  Vector num = Vector::Zero(padded);
  Vector den = Vector::Zero(padded);
  Eigen::FFT<double> fft;
  fft.SetFlag(Eigen::FFT<double>::HalfSpectrum);
  std::vector<std::complex<double>> spectrum(static_cast<size_t>(spec.bins()));
  std::vector<double> frame;
  for (Index t = 0; t < frames; ++t) {
    for (Index b = 0; b < spec.bins(); ++b)
      spectrum[static_cast<size_t>(b)] = std::polar(spec.magnitudes(b, t), spec.phases(b, t));
    fft.inv(frame, spectrum, static_cast<int>(cfg.fft_size));
    for (Index n = 0; n < cfg.window_len; ++n) {
      num(t * cfg.hop + n) += window(n) * frame[static_cast<size_t>(n)];
      den(t * cfg.hop + n) += window(n) * window(n);
    }
  }

  Vector out(out_len);
  for (Index i = 0; i < out_len; ++i) {
    const Index p = i + pad;
    out(i) = den(p) > 0.0 ? num(p) / den(p) : 0.0;
  }
  return out;
}

/// Marries separated magnitudes to the mixture's phases (and framing).
inline Spectrogram phase_transfer(const Matrix& clean_mag, const Spectrogram& noisy) {
  check_spectrogram(noisy);
  check_dims(clean_mag.rows() == noisy.bins() && clean_mag.cols() == noisy.frames(),
             "clean magnitudes must match the mixture spectrogram shape");
  check_data(clean_mag, "clean_mag");
  Spectrogram out = noisy;
  out.magnitudes = clean_mag;
  return out;
}

struct SnrMix {
  Vector mixture;
  Vector scaled_noise;
  double noise_scale = 0.0;
};

/// Scales `noise` so that 10*log10(|s|^2 / |n|^2) equals `snr_db`, then adds.
inline SnrMix mix_at_snr(const Vector& speech, const Vector& noise, double snr_db) {
  check_dims(speech.size() == noise.size(), "speech and noise must have equal length");
  check_value(speech.allFinite() && noise.allFinite(), "signals must be finite");
  const double speech_energy = speech.squaredNorm();
  const double noise_energy = noise.squaredNorm();
  check_value(noise_energy > 0.0, "noise must not be all zero");
  check_value(speech_energy > 0.0, "speech must not be all zero");

  SnrMix out;
  out.noise_scale = std::sqrt(speech_energy / (noise_energy * std::pow(10.0, snr_db / 10.0)));
  out.scaled_noise = out.noise_scale * noise;
  out.mixture = speech + out.scaled_noise;
  return out;
}

}  // namespace mdnmf
