// Copyright 2026 The prefnet Authors
// SPDX-License-Identifier: Apache-2.0

#include "prefnet/augment/spec_augment.hpp"

#include <algorithm>
#include <string>

#include "prefnet/core/error.hpp"

namespace prefnet::augment {

void AugmentConfig::validate() const {
  if (stripes_per_axis < 0) throw ValidationError("augment: stripes_per_axis must be >= 0");
  if (max_time_width < 1) throw ValidationError("augment: max_time_width must be >= 1");
  if (max_freq_width < 0 || max_freq_width > static_cast<int>(audio::kMelBins)) {
    throw ValidationError("augment: max_freq_width must lie in [0, 64], got " + std::to_string(max_freq_width));
  }
}

std::vector<Stripe> draw_stripes(std::size_t frames, const AugmentConfig& cfg, std::mt19937_64& rng) {
  cfg.validate();
  std::vector<Stripe> out;
  if (!cfg.enabled || frames == 0) return out;
  auto draw = [&](Axis axis, std::size_t extent, int max_width) {
    for (int i = 0; i < cfg.stripes_per_axis; ++i) {
      std::uniform_int_distribution<std::size_t> w(0, static_cast<std::size_t>(max_width));
      const std::size_t width = std::min(w(rng), extent);
      std::uniform_int_distribution<std::size_t> s(0, extent - width);
      out.push_back({axis, s(rng), width});
    }
  };
  draw(Axis::Time, frames, cfg.max_time_width);
  draw(Axis::Frequency, audio::kMelBins, cfg.max_freq_width);
  return out;
}

audio::LogMelSpectrogram spec_augment(const audio::LogMelSpectrogram& spec, const AugmentConfig& cfg,
                                      std::mt19937_64& rng) {
  auto out = spec;
  const auto stripes = draw_stripes(spec.frames, cfg, rng);
  apply_stripes<double>(out.values, out.frames, stripes, cfg.fill_value);
  return out;
}

}  // namespace prefnet::augment
