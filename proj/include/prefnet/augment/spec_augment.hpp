// Copyright 2026 The prefnet Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <random>
#include <span>
#include <vector>

#include "prefnet/audio/features.hpp"

namespace prefnet::augment {

struct AugmentConfig {
  int stripes_per_axis = 2;
  int max_time_width = 64;   // frames
  int max_freq_width = 4;    // mel bins
  double fill_value = audio::kLogFloorDb;
  bool enabled = true;

  /// Throws ValidationError when a field is out of range.
  void validate() const;
};

enum class Axis { Time, Frequency };

/// One masked band: frames [start, start+width) or bins [start, start+width).
struct Stripe {
  Axis axis;
  std::size_t start;
  std::size_t width;
  bool operator==(const Stripe&) const = default;
};

/// Draws the time stripes, then the frequency stripes. Each width is uniform
/// over the integers [0, max], clamped to the axis length; each start is
/// uniform over the offsets that keep the stripe inside the axis.
std::vector<Stripe> draw_stripes(std::size_t frames, const AugmentConfig& cfg, std::mt19937_64& rng);

/// Writes `fill` into every stripe of a frames x 64 row-major matrix.
template <typename T>
void apply_stripes(std::span<T> values, std::size_t frames, const std::vector<Stripe>& stripes, T fill) {
  for (const auto& s : stripes) {
    if (s.axis == Axis::Time) {
      for (std::size_t t = s.start; t < s.start + s.width; ++t)
        for (std::size_t b = 0; b < audio::kMelBins; ++b) values[t * audio::kMelBins + b] = fill;
    } else {
      for (std::size_t t = 0; t < frames; ++t)
        for (std::size_t b = s.start; b < s.start + s.width; ++b) values[t * audio::kMelBins + b] = fill;
    }
  }
}

/// Returns a masked copy; the input is not modified. A disabled config or
/// zero stripes returns an identical copy without consuming randomness.
audio::LogMelSpectrogram spec_augment(const audio::LogMelSpectrogram& spec, const AugmentConfig& cfg,
                                      std::mt19937_64& rng);

}  // namespace prefnet::augment
