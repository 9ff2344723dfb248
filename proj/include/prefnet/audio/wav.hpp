// Copyright 2026 The prefnet Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace prefnet::audio {

/// Mono audio in [-1, 1].
struct AudioClip {
  std::vector<double> samples;
  int sample_rate = 0;
  std::string source_id;

  double duration_seconds() const {
    return sample_rate > 0 ? static_cast<double>(samples.size()) / sample_rate : 0.0;
  }
};

/// Decodes a RIFF/WAVE byte buffer. Accepts PCM 16-bit and IEEE float
/// 32-bit (plain or WAVE_FORMAT_EXTENSIBLE), any channel count; channels are
/// averaged. Integer samples are scaled by 1/32768 and float samples are
/// clamped to [-1, 1]. Throws FormatError naming the offending field.
AudioClip decode_wav(const std::string& bytes, std::string source_id = {});
AudioClip load_wav(const std::filesystem::path& path);

/// Encodes mono 16-bit PCM with round-to-nearest and saturation.
std::string encode_wav_pcm16(std::span<const double> samples, int sample_rate);
void write_wav_pcm16(const std::filesystem::path& path, std::span<const double> samples,
                     int sample_rate);

}  // namespace prefnet::audio
