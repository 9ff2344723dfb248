// Copyright 2026 The prefnet Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <string>

#include "prefnet/audio/features.hpp"

namespace prefnet::audio {

// Feature cache layout, little-endian:
//   "LMEL" | version u32 | frames u32 | bins u32 (=64) | frame_rate f32 |
//   config_hash u64 | frames*64 f32 row-major
inline constexpr std::uint32_t kFeatureCacheVersion = 1;

/// Values are stored as f32, so encode(decode(encode(x))) == encode(x) and
/// decode returns exactly the f32-rounded matrix.
std::string encode_feature_cache(const LogMelSpectrogram& spec);
LogMelSpectrogram decode_feature_cache(const std::string& bytes);

void write_feature_cache(const std::filesystem::path& path, const LogMelSpectrogram& spec);
LogMelSpectrogram read_feature_cache(const std::filesystem::path& path);

/// Cache file name for a clip id: "song01__dev3__max.wav" -> "song01__dev3__max.lmel".
std::filesystem::path cache_path_for(const std::filesystem::path& cache_dir, const std::string& clip_id);

}  // namespace prefnet::audio
