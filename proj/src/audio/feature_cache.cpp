// Copyright 2026 The prefnet Authors
// SPDX-License-Identifier: Apache-2.0

#include "prefnet/audio/feature_cache.hpp"

#include <bit>

#include "prefnet/core/checkpoint.hpp"
#include "prefnet/core/error.hpp"

namespace prefnet::audio {

namespace {

void put(std::string& out, std::uint64_t v, int bytes) {
  for (int i = 0; i < bytes; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint64_t get(const std::string& b, std::size_t& pos, int bytes, const char* field) {
  if (b.size() - pos < static_cast<std::size_t>(bytes)) {
    throw FormatError(std::string("feature cache truncated while reading ") + field);
  }
  std::uint64_t v = 0;
  for (int i = 0; i < bytes; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(b[pos + i])) << (8 * i);
  pos += bytes;
  return v;
}

}  // namespace

std::string encode_feature_cache(const LogMelSpectrogram& spec) {
  if (spec.values.size() != spec.frames * kMelBins) {
    throw ShapeError("feature cache: " + std::to_string(spec.values.size()) + " values for " +
                     std::to_string(spec.frames) + " frames x 64 bins");
  }
  std::string out = "LMEL";
  put(out, kFeatureCacheVersion, 4);
  put(out, spec.frames, 4);
  put(out, kMelBins, 4);
  put(out, std::bit_cast<std::uint32_t>(static_cast<float>(spec.frame_rate)), 4);
  put(out, spec.config_hash, 8);
  out.reserve(out.size() + spec.values.size() * 4);
  for (double v : spec.values) put(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)), 4);
  return out;
}

LogMelSpectrogram decode_feature_cache(const std::string& bytes) {
  if (bytes.size() < 4 || bytes.compare(0, 4, "LMEL") != 0) {
    throw FormatError("feature cache: bad magic (expected LMEL)");
  }
  std::size_t pos = 4;
  const auto version = get(bytes, pos, 4, "version");
  if (version != kFeatureCacheVersion) {
    throw FormatError("feature cache: unsupported version " + std::to_string(version));
  }
  LogMelSpectrogram spec;
  spec.frames = get(bytes, pos, 4, "frames");
  const auto bins = get(bytes, pos, 4, "bins");
  if (bins != kMelBins) throw FormatError("feature cache: bins = " + std::to_string(bins) + ", expected 64");
  spec.frame_rate = std::bit_cast<float>(static_cast<std::uint32_t>(get(bytes, pos, 4, "frame_rate")));
  spec.config_hash = get(bytes, pos, 8, "config_hash");
  if ((bytes.size() - pos) != spec.frames * kMelBins * 4) {
    throw FormatError("feature cache: payload holds " + std::to_string(bytes.size() - pos) +
                      " bytes, header implies " + std::to_string(spec.frames * kMelBins * 4));
  }
  spec.values.resize(spec.frames * kMelBins);
  for (auto& v : spec.values) v = std::bit_cast<float>(static_cast<std::uint32_t>(get(bytes, pos, 4, "value")));
  return spec;
}

void write_feature_cache(const std::filesystem::path& path, const LogMelSpectrogram& spec) {
  atomic_write_file(path, encode_feature_cache(spec));
}

LogMelSpectrogram read_feature_cache(const std::filesystem::path& path) {
  try {
    return decode_feature_cache(read_file(path));
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

std::filesystem::path cache_path_for(const std::filesystem::path& cache_dir, const std::string& clip_id) {
  return cache_dir / std::filesystem::path(clip_id).replace_extension(".lmel");
}

}  // namespace prefnet::audio
