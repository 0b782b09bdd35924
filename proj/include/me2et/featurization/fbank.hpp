#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "me2et/error.hpp"
#include "me2et/featurization/patches.hpp"

namespace me2et::feat {

struct FbankConfig {
  std::size_t bins = 128;
  double window_s = 0.025;
  double hop_s = 0.010;
  double log_floor = 1e-12;
};

// HTK mel scale.
inline double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
inline double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

struct FrameGeometry {
  std::size_t window = 0;
  std::size_t hop = 0;
  std::size_t fft_size = 0;
};

inline FrameGeometry frame_geometry(double sample_rate, const FbankConfig& cfg = {}) {
  FrameGeometry g;
  g.window = static_cast<std::size_t>(std::lround(cfg.window_s * sample_rate));
  g.hop = static_cast<std::size_t>(std::lround(cfg.hop_s * sample_rate));
  g.fft_size = 1;
  while (g.fft_size < g.window) g.fft_size <<= 1;
  return g;
}

inline std::size_t fbank_frame_count(std::size_t samples, double sample_rate, const FbankConfig& cfg = {}) {
  const auto g = frame_geometry(sample_rate, cfg);
  if (samples < g.window) return 0;
  return 1 + (samples - g.window) / g.hop;
}

namespace detail {

// In-place iterative radix-2 FFT; size must be a power of two.
inline void fft(std::vector<std::complex<double>>& a) {
  const std::size_t n = a.size();
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const double ang = -2.0 * std::numbers::pi / static_cast<double>(len);
    const std::complex<double> wlen(std::cos(ang), std::sin(ang));
    for (std::size_t i = 0; i < n; i += len) {
      std::complex<double> w(1.0, 0.0);
      for (std::size_t k = 0; k < len / 2; ++k) {
        const auto u = a[i + k];
        const auto v = a[i + k + len / 2] * w;
        a[i + k] = u + v;
        a[i + k + len / 2] = u - v;
        w *= wlen;
      }
    }
  }
}

}  // namespace detail

// Triangular filters on F+2 mel-equispaced edges from 0 Hz to Nyquist,
// weights evaluated in the mel domain at each FFT bin. Row f holds fft/2+1 weights.
inline std::vector<std::vector<double>> mel_filterbank(std::size_t bins, std::size_t fft_size, double sample_rate) {
  const double mel_hi = hz_to_mel(sample_rate / 2.0);
  std::vector<double> edges(bins + 2);
  for (std::size_t i = 0; i < edges.size(); ++i) edges[i] = mel_hi * static_cast<double>(i) / static_cast<double>(bins + 1);
  const std::size_t spectrum = fft_size / 2 + 1;
  std::vector<std::vector<double>> weights(bins, std::vector<double>(spectrum, 0.0));
  for (std::size_t k = 0; k < spectrum; ++k) {
    const double mel = hz_to_mel(sample_rate * static_cast<double>(k) / static_cast<double>(fft_size));
    for (std::size_t f = 0; f < bins; ++f) {
      const double lo = edges[f], mid = edges[f + 1], hi = edges[f + 2];
      if (mel > lo && mel <= mid) weights[f][k] = (mel - lo) / (mid - lo);
      else if (mel > mid && mel < hi) weights[f][k] = (hi - mel) / (hi - mid);
    }
  }
  return weights;
}

// 25 ms Hamming frames every 10 ms, |DFT|^2, mel filterbank, natural log
// floored at cfg.log_floor. Frames are zero-padded to the next power of two.
template <class T>
Spectrogram<T> log_mel_fbank(std::span<const T> waveform, double sample_rate, const FbankConfig& cfg = {}) {
  if (sample_rate < 8000) throw ValidationError("fbank: sample rate " + std::to_string(sample_rate) + " Hz is below 8000");
  const auto g = frame_geometry(sample_rate, cfg);
  if (waveform.size() < g.window) {
    throw ValidationError("fbank: waveform of " + std::to_string(waveform.size()) +
                          " samples is shorter than one window of " + std::to_string(g.window));
  }
  const std::size_t frames = 1 + (waveform.size() - g.window) / g.hop;
  const auto filters = mel_filterbank(cfg.bins, g.fft_size, sample_rate);
  std::vector<double> window(g.window);
  for (std::size_t i = 0; i < g.window; ++i)
    window[i] = 0.54 - 0.46 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(g.window - 1));

  Spectrogram<T> spec;
  spec.bins = cfg.bins;
  spec.frames = frames;
  spec.frame_hop_s = static_cast<double>(g.hop) / sample_rate;
  spec.values.assign(cfg.bins * frames, T{0});
  std::vector<std::complex<double>> buf(g.fft_size);
  std::vector<double> power(g.fft_size / 2 + 1);
  for (std::size_t t = 0; t < frames; ++t) {
    std::fill(buf.begin(), buf.end(), std::complex<double>(0.0, 0.0));
    for (std::size_t i = 0; i < g.window; ++i) buf[i] = static_cast<double>(waveform[t * g.hop + i]) * window[i];
    detail::fft(buf);
    for (std::size_t k = 0; k < power.size(); ++k) power[k] = std::norm(buf[k]);
    for (std::size_t f = 0; f < cfg.bins; ++f) {
      double energy = 0.0;
      for (std::size_t k = 0; k < power.size(); ++k) energy += filters[f][k] * power[k];
      spec.values[f * frames + t] = static_cast<T>(std::log(std::max(energy, cfg.log_floor)));
    }
  }
  return spec;
}

}  // namespace me2et::feat
