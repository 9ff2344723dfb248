// Copyright 2026 The prefnet Authors
// SPDX-License-Identifier: Apache-2.0

#include "prefnet/audio/features.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "prefnet/audio/resample.hpp"
#include "prefnet/core/error.hpp"

namespace prefnet::audio {

namespace {

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

const std::vector<double>& hann_window() {
  static const std::vector<double> w = [] {
    std::vector<double> v(kFftSize);
    for (std::size_t i = 0; i < kFftSize; ++i) {
      v[i] = 0.5 - 0.5 * std::cos(2 * std::numbers::pi * static_cast<double>(i) / kFftSize);
    }
    return v;
  }();
  return w;
}

// Maps a padded coordinate onto the signal by mirror reflection about the
// end samples (edge samples are not repeated). Repeated folding covers
// clips shorter than the pad.
std::size_t reflect_index(long i, std::size_t n) {
  if (n == 1) return 0;
  const long period = 2 * (static_cast<long>(n) - 1);
  long r = i % period;
  if (r < 0) r += period;
  return static_cast<std::size_t>(r < static_cast<long>(n) ? r : period - r);
}

// The plan is created once (static initialisation is serialised); executing
// it on caller-owned arrays is thread-safe.
class RealFft {
 public:
  RealFft() {
    double* in = fftw_alloc_real(kFftSize);
    fftw_complex* out = fftw_alloc_complex(kSpectrumBins);
    plan_ = fftw_plan_dft_r2c_1d(static_cast<int>(kFftSize), in, out, FFTW_ESTIMATE);
    fftw_free(in);
    fftw_free(out);
  }
  RealFft(const RealFft&) = delete;
  RealFft& operator=(const RealFft&) = delete;

  void run(double* in, fftw_complex* out) const { fftw_execute_dft_r2c(plan_, in, out); }

 private:
  fftw_plan plan_;
};

const RealFft& real_fft() {
  static const RealFft fft;
  return fft;
}

}  // namespace

std::size_t frame_count(std::size_t n_samples) { return 1 + n_samples / kHop; }

std::vector<double> stft_power(std::span<const double> samples) {
  if (samples.empty()) throw ValidationError("stft: empty clip");
  if (samples.size() < kHop) {
    throw ValidationError("stft: clip has " + std::to_string(samples.size()) +
                          " samples, need at least one hop (" + std::to_string(kHop) + ")");
  }
  const std::size_t n = samples.size();
  const std::size_t frames = frame_count(n);
  const auto& window = hann_window();
  const auto& fft = real_fft();
  constexpr long pad = static_cast<long>(kFftSize / 2);

  double* in = fftw_alloc_real(kFftSize);
  fftw_complex* out = fftw_alloc_complex(kSpectrumBins);
  std::vector<double> power(frames * kSpectrumBins);
  for (std::size_t t = 0; t < frames; ++t) {
    const long start = static_cast<long>(t * kHop) - pad;
    for (std::size_t i = 0; i < kFftSize; ++i) {
      const long s = start + static_cast<long>(i);
      const double x = (s >= 0 && s < static_cast<long>(n)) ? samples[static_cast<std::size_t>(s)]
                                                            : samples[reflect_index(s, n)];
      in[i] = x * window[i];
    }
    fft.run(in, out);
    double* row = power.data() + t * kSpectrumBins;
    for (std::size_t k = 0; k < kSpectrumBins; ++k) row[k] = out[k][0] * out[k][0] + out[k][1] * out[k][1];
  }
  fftw_free(in);
  fftw_free(out);
  return power;
}

const std::vector<double>& mel_filterbank() {
  static const std::vector<double> bank = [] {
    std::vector<double> m(kMelBins * kSpectrumBins, 0.0);
    const double lo = hz_to_mel(kMelFmin), hi = hz_to_mel(kMelFmax);
    std::vector<double> edges(kMelBins + 2);
    for (std::size_t i = 0; i < edges.size(); ++i) {
      edges[i] = mel_to_hz(lo + (hi - lo) * static_cast<double>(i) / (kMelBins + 1));
    }
    const double bin_hz = static_cast<double>(32000) / kFftSize;
    for (std::size_t b = 0; b < kMelBins; ++b) {
      const double left = edges[b], centre = edges[b + 1], right = edges[b + 2];
      double peak = 0;
      for (std::size_t k = 0; k < kSpectrumBins; ++k) {
        const double f = bin_hz * static_cast<double>(k);
        const double w = std::max(0.0, std::min((f - left) / (centre - left), (right - f) / (right - centre)));
        m[b * kSpectrumBins + k] = w;
        peak = std::max(peak, w);
      }
      for (std::size_t k = 0; k < kSpectrumBins; ++k) m[b * kSpectrumBins + k] /= peak;
    }
    return m;
  }();
  return bank;
}

std::uint64_t dsp_config_hash() {
  // FNV-1a over a canonical description of the front end.
  const std::string desc =
      "sr=32000;n_fft=1024;hop=320;window=hann-periodic;center=reflect;mel=64;fmin=50;"
      "fmax=14000;scale=htk;norm=peak;log=10log10;floor=1e-10;resampler=kaiser8.6x64";
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : desc) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

LogMelSpectrogram logmel(const AudioClip& clip) {
  if (clip.sample_rate != kModelRate) {
    throw ValidationError("logmel: clip '" + clip.source_id + "' is at " +
                          std::to_string(clip.sample_rate) + " Hz; resample to 32000 Hz first");
  }
  const auto power = stft_power(clip.samples);
  const auto& bank = mel_filterbank();
  LogMelSpectrogram spec;
  spec.frames = power.size() / kSpectrumBins;
  spec.config_hash = dsp_config_hash();
  spec.values.resize(spec.frames * kMelBins);
  for (std::size_t t = 0; t < spec.frames; ++t) {
    const double* p = power.data() + t * kSpectrumBins;
    for (std::size_t b = 0; b < kMelBins; ++b) {
      const double* w = bank.data() + b * kSpectrumBins;
      double e = 0;
      for (std::size_t k = 0; k < kSpectrumBins; ++k) e += w[k] * p[k];
      spec.values[t * kMelBins + b] = 10.0 * std::log10(std::max(e, kPowerFloor));
    }
  }
  return spec;
}

LogMelSpectrogram featurize_file(const std::filesystem::path& wav) {
  auto clip = load_wav(wav);
  const double seconds = clip.duration_seconds();
  if (seconds < 1.0 || seconds > 60.0) {
    throw ValidationError(wav.string() + ": duration " + std::to_string(seconds) +
                          " s outside [1, 60] s");
  }
  return logmel(resample_to_32k(clip));
}

}  // namespace prefnet::audio
