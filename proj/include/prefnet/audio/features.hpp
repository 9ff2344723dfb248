// Copyright 2026 The prefnet Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "prefnet/audio/wav.hpp"

namespace prefnet::audio {

inline constexpr std::size_t kFftSize = 1024;   // 32 ms at 32 kHz
inline constexpr std::size_t kHop = 320;        // 10 ms at 32 kHz
inline constexpr std::size_t kSpectrumBins = kFftSize / 2 + 1;
inline constexpr std::size_t kMelBins = 64;
inline constexpr double kMelFmin = 50.0;
inline constexpr double kMelFmax = 14000.0;
inline constexpr double kPowerFloor = 1e-10;
inline constexpr double kLogFloorDb = -100.0;  // 10 * log10(kPowerFloor)
inline constexpr double kFrameRate = 100.0;

/// frames x 64 log-power matrix, row-major (one row per frame).
struct LogMelSpectrogram {
  std::size_t frames = 0;
  std::vector<double> values;
  double frame_rate = kFrameRate;
  std::uint64_t config_hash = 0;

  double at(std::size_t frame, std::size_t bin) const { return values[frame * kMelBins + bin]; }
  bool operator==(const LogMelSpectrogram&) const = default;
};

/// 1 + floor(n / 320).
std::size_t frame_count(std::size_t n_samples);

/// frames x 513 squared-magnitude spectrogram: periodic Hann window of 1024,
/// hop 320, input centre-padded by 512 on each side with reflection.
/// Requires at least one hop of samples.
std::vector<double> stft_power(std::span<const double> samples);

/// 64 x 513 HTK-mel triangular filterbank over 50..14000 Hz, each row scaled
/// to a peak of 1.
const std::vector<double>& mel_filterbank();

/// Hash identifying the front-end parameters above.
std::uint64_t dsp_config_hash();

/// Log-mel features of a 32 kHz clip: 10*log10(max(mel * power, 1e-10)).
LogMelSpectrogram logmel(const AudioClip& clip);

/// Loads, resamples when needed, and featurizes one WAV file. Clips must last
/// between 1 s and 60 s.
LogMelSpectrogram featurize_file(const std::filesystem::path& wav);

}  // namespace prefnet::audio
