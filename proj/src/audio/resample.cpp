// Copyright 2026 The prefnet Authors
// SPDX-License-Identifier: Apache-2.0

#include "prefnet/audio/resample.hpp"

#include <array>
#include <cmath>
#include <numbers>
#include <vector>

#include "prefnet/core/error.hpp"

namespace prefnet::audio {

namespace {

constexpr int kUp = 320;    // 32000 / gcd
constexpr int kDown = 441;  // 44100 / gcd
constexpr int kTaps = 64;
constexpr int kHalf = kTaps / 2;
constexpr double kBeta = 8.6;
// Cutoff as a fraction of the input sample rate: 94% of the output Nyquist.
constexpr double kCutoff = 0.94 * 0.5 * kModelRate / kSourceRate;

using PhaseTable = std::vector<std::array<double, kTaps>>;

// tap j of phase p weights input sample floor(t) - (kHalf - 1) + j, where
// t = m * kDown / kUp and p = (m * kDown) mod kUp.
const PhaseTable& phase_table() {
  static const PhaseTable table = [] {
    PhaseTable t(kUp);
    const double i0_beta = std::cyl_bessel_i(0.0, kBeta);
    for (int p = 0; p < kUp; ++p) {
      const double frac = static_cast<double>(p) / kUp;
      double total = 0;
      for (int j = 0; j < kTaps; ++j) {
        const double tau = frac + (kHalf - 1) - j;  // distance from the output instant
        const double r = tau / kHalf;
        const double window = std::abs(r) >= 1 ? 0.0
                                               : std::cyl_bessel_i(0.0, kBeta * std::sqrt(1 - r * r)) /
                                                     i0_beta;
        const double x = 2 * kCutoff * tau;
        const double sinc = x == 0 ? 1.0 : std::sin(std::numbers::pi * x) / (std::numbers::pi * x);
        t[p][j] = 2 * kCutoff * sinc * window;
        total += t[p][j];
      }
      for (auto& h : t[p]) h /= total;
    }
    return t;
  }();
  return table;
}

}  // namespace

AudioClip resample_to_32k(const AudioClip& clip) {
  if (clip.sample_rate == kModelRate) return clip;
  if (clip.sample_rate != kSourceRate) {
    throw ValidationError("resample: unsupported sample rate " + std::to_string(clip.sample_rate) +
                          " Hz (supported: 44100, 32000)");
  }
  const auto& table = phase_table();
  const std::size_t n = clip.samples.size();
  const std::size_t out_len = static_cast<std::size_t>(std::llround(static_cast<double>(n) * kUp / kDown));
  AudioClip out;
  out.sample_rate = kModelRate;
  out.source_id = clip.source_id;
  out.samples.resize(out_len);
  const long last = static_cast<long>(n) - 1;
  for (std::size_t m = 0; m < out_len; ++m) {
    const std::size_t pos = m * kDown;
    const long base = static_cast<long>(pos / kUp) - (kHalf - 1);
    const auto& h = table[pos % kUp];
    double acc = 0;
    if (base >= 0 && base + kTaps - 1 <= last) {
      const double* x = clip.samples.data() + base;
      for (int j = 0; j < kTaps; ++j) acc += h[j] * x[j];
    } else {
      for (int j = 0; j < kTaps; ++j) {
        const long i = base + j;
        if (i >= 0 && i <= last) acc += h[j] * clip.samples[static_cast<std::size_t>(i)];
      }
    }
    out.samples[m] = acc;
  }
  return out;
}

}  // namespace prefnet::audio
