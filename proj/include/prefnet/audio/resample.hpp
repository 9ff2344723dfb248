// Copyright 2026 The prefnet Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "prefnet/audio/wav.hpp"

namespace prefnet::audio {

inline constexpr int kModelRate = 32000;
inline constexpr int kSourceRate = 44100;

/// Converts a 44.1 kHz clip to 32 kHz with a polyphase windowed-sinc filter
/// (320 phases, 64 Kaiser-windowed taps each, unity DC gain per phase).
/// Output length is round(n * 320 / 441). A 32 kHz clip is returned as is.
/// Any other rate raises ValidationError.
AudioClip resample_to_32k(const AudioClip& clip);

}  // namespace prefnet::audio
