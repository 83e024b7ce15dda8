#pragma once

// MFCC front end: pre-emphasis -> framing -> window -> |FFT|^2 -> mel
// filterbank -> log -> orthonormal DCT-II, keeping the leading coefficients.

#include <unsupported/Eigen/FFT>

#include <cmath>
#include <complex>
#include <numbers>
#include <string>
#include <vector>

#include "avdf/audio.hpp"
#include "avdf/error.hpp"
#include "avdf/features.hpp"
#include "avdf/tensor.hpp"

namespace avdf {

enum class WindowType { Hann, Hamming, Rectangular };

struct MfccConfig {
  double frame_length = 0.025;  // seconds
  double hop = 0.010;           // seconds
  std::size_t fft_size = 512;
  std::size_t mel_filters = 26;
  std::size_t coefficients = 13;
  double pre_emphasis = 0.97;
  double log_floor = 1e-10;
  double low_hz = 0.0;
  double high_hz = 0.0;  // 0 selects Nyquist
  WindowType window = WindowType::Hann;

  std::size_t frame_samples(std::uint32_t rate) const {
    return static_cast<std::size_t>(std::lround(frame_length * rate));
  }
  std::size_t hop_samples(std::uint32_t rate) const { return static_cast<std::size_t>(std::lround(hop * rate)); }

  void validate(std::uint32_t rate) const {
    if (rate == 0) throw ConfigError("mfcc: sample_rate must be positive");
    if (frame_samples(rate) == 0 || hop_samples(rate) == 0) throw ConfigError("mfcc: frame_length and hop must cover >= 1 sample");
    if (fft_size < frame_samples(rate)) {
      throw ConfigError("mfcc: fft_size " + std::to_string(fft_size) + " smaller than frame of " +
                        std::to_string(frame_samples(rate)) + " samples");
    }
    if (coefficients == 0 || coefficients > mel_filters) throw ConfigError("mfcc: coefficients must be in [1, mel_filters]");
    if (!(log_floor > 0.0)) throw ConfigError("mfcc: log_floor must be positive");
    const double nyquist = rate / 2.0;
    if (low_hz < 0.0 || upper_hz(rate) > nyquist || low_hz >= upper_hz(rate)) {
      throw ConfigError("mfcc: filterbank edges must satisfy 0 <= low < high <= Nyquist");
    }
  }

  double upper_hz(std::uint32_t rate) const { return high_hz > 0.0 ? high_hz : rate / 2.0; }
};

inline double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
inline double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

inline std::vector<double> analysis_window(WindowType type, std::size_t n) {
  std::vector<double> w(n, 1.0);
  if (n < 2 || type == WindowType::Rectangular) return w;
  const double denom = static_cast<double>(n - 1);
  for (std::size_t i = 0; i < n; ++i) {
    const double c = std::cos(2.0 * std::numbers::pi * static_cast<double>(i) / denom);
    w[i] = type == WindowType::Hann ? 0.5 - 0.5 * c : 0.54 - 0.46 * c;
  }
  return w;
}

// Triangular filters on evenly spaced mel centres; weights are evaluated at
// each bin's exact frequency. Returns [mel_filters, fft_size/2 + 1].
inline Tensor mel_filterbank(const MfccConfig& cfg, std::uint32_t rate) {
  const std::size_t bins = cfg.fft_size / 2 + 1;
  const double lo = hz_to_mel(cfg.low_hz), hi = hz_to_mel(cfg.upper_hz(rate));
  std::vector<double> edges(cfg.mel_filters + 2);
  for (std::size_t i = 0; i < edges.size(); ++i) {
    edges[i] = mel_to_hz(lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(cfg.mel_filters + 1));
  }
  Tensor fb(Shape{cfg.mel_filters, bins});
  for (std::size_t m = 0; m < cfg.mel_filters; ++m) {
    const double left = edges[m], centre = edges[m + 1], right = edges[m + 2];
    for (std::size_t k = 0; k < bins; ++k) {
      const double f = static_cast<double>(k) * rate / static_cast<double>(cfg.fft_size);
      double w = 0.0;
      if (f > left && f <= centre) w = (f - left) / (centre - left);
      else if (f > centre && f < right) w = (right - f) / (right - centre);
      fb.at(m, k) = w;
    }
  }
  return fb;
}

inline std::size_t mfcc_frame_count(std::size_t samples, std::size_t frame, std::size_t hop) {
  return samples < frame ? 0 : 1 + (samples - frame) / hop;
}

// Per-frame mel filterbank energies [T, mel_filters] before the log.
inline Tensor mel_energies(const AudioClip& clip, const MfccConfig& cfg) {
  cfg.validate(clip.sample_rate);
  const std::size_t frame = cfg.frame_samples(clip.sample_rate);
  const std::size_t hop = cfg.hop_samples(clip.sample_rate);
  const std::size_t T = mfcc_frame_count(clip.samples.size(), frame, hop);
  if (T == 0) {
    throw InputError(InputErrorCode::TooShort, "mfcc: clip of " + std::to_string(clip.samples.size()) +
                                                   " samples is shorter than one frame (" + std::to_string(frame) + ")");
  }
  for (double s : clip.samples)
    if (!std::isfinite(s)) throw InputError(InputErrorCode::NonFinite, "mfcc: non-finite audio sample");

  std::vector<double> emph(clip.samples.size());
  emph[0] = clip.samples[0];
  for (std::size_t i = 1; i < emph.size(); ++i) emph[i] = clip.samples[i] - cfg.pre_emphasis * clip.samples[i - 1];

  const std::vector<double> window = analysis_window(cfg.window, frame);
  const Tensor fb = mel_filterbank(cfg, clip.sample_rate);
  const std::size_t bins = cfg.fft_size / 2 + 1;

  Eigen::FFT<double> fft;
  std::vector<double> buf(cfg.fft_size);
  std::vector<std::complex<double>> spec;
  std::vector<double> power(bins);
  Tensor out(Shape{T, cfg.mel_filters});
  for (std::size_t t = 0; t < T; ++t) {
    std::fill(buf.begin(), buf.end(), 0.0);
    for (std::size_t i = 0; i < frame; ++i) buf[i] = emph[t * hop + i] * window[i];
    fft.fwd(spec, buf);
    for (std::size_t k = 0; k < bins; ++k) power[k] = std::norm(spec[k]) / static_cast<double>(cfg.fft_size);
    for (std::size_t m = 0; m < cfg.mel_filters; ++m) {
      double e = 0.0;
      for (std::size_t k = 0; k < bins; ++k) e += fb.at(m, k) * power[k];
      out.at(t, m) = e;
    }
  }
  return out;
}

// Orthonormal DCT-II of each row of log(max(E, floor)), truncated.
inline Tensor log_mel_to_cepstrum(const Tensor& energies, const MfccConfig& cfg) {
  const std::size_t T = energies.dim(0), M = energies.dim(1), K = cfg.coefficients;
  Tensor basis(Shape{K, M});
  for (std::size_t k = 0; k < K; ++k) {
    const double s = k == 0 ? std::sqrt(1.0 / M) : std::sqrt(2.0 / M);
    for (std::size_t n = 0; n < M; ++n) {
      basis.at(k, n) = s * std::cos(std::numbers::pi * static_cast<double>(k) * (2.0 * n + 1.0) / (2.0 * M));
    }
  }
  Tensor out(Shape{T, K});
  std::vector<double> logs(M);
  for (std::size_t t = 0; t < T; ++t) {
    for (std::size_t m = 0; m < M; ++m) logs[m] = std::log(std::max(energies.at(t, m), cfg.log_floor));
    for (std::size_t k = 0; k < K; ++k) {
      double c = 0.0;
      for (std::size_t m = 0; m < M; ++m) c += basis.at(k, m) * logs[m];
      out.at(t, k) = c;
    }
  }
  return out;
}

inline SpeechFeatureSequence mfcc(const AudioClip& clip, const MfccConfig& cfg = {}) {
  return SpeechFeatureSequence{log_mel_to_cepstrum(mel_energies(clip, cfg), cfg), cfg.hop};
}

}  // namespace avdf
