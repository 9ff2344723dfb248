// Copyright 2026 The prefnet Authors
// SPDX-License-Identifier: Apache-2.0

#include "prefnet/audio/wav.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>

#include "prefnet/core/checkpoint.hpp"
#include "prefnet/core/error.hpp"

namespace prefnet::audio {

namespace {

constexpr std::uint16_t kFormatPcm = 1;
constexpr std::uint16_t kFormatFloat = 3;
constexpr std::uint16_t kFormatExtensible = 0xFFFE;

std::uint32_t le32(const std::string& b, std::size_t at) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(b[at + i])) << (8 * i);
  return v;
}

std::uint16_t le16(const std::string& b, std::size_t at) {
  return static_cast<std::uint16_t>(static_cast<unsigned char>(b[at]) |
                                    (static_cast<unsigned char>(b[at + 1]) << 8));
}

void append_le(std::string& out, std::uint32_t v, int bytes) {
  for (int i = 0; i < bytes; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

struct FmtChunk {
  std::uint16_t format = 0;
  std::uint16_t channels = 0;
  std::uint32_t sample_rate = 0;
  std::uint16_t bits = 0;
};

}  // namespace

AudioClip decode_wav(const std::string& bytes, std::string source_id) {
  const std::string where = source_id.empty() ? "wav" : source_id;
  if (bytes.size() < 12 || bytes.compare(0, 4, "RIFF") != 0) {
    throw FormatError(where + ": RIFF magic missing");
  }
  if (bytes.compare(8, 4, "WAVE") != 0) throw FormatError(where + ": RIFF form type is not WAVE");

  FmtChunk fmt;
  bool have_fmt = false;
  std::size_t data_at = 0, data_size = 0;
  bool have_data = false;
  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const std::string id = bytes.substr(pos, 4);
    const std::size_t size = le32(bytes, pos + 4);
    const std::size_t body = pos + 8;
    if (id == "fmt ") {
      if (size < 16 || body + size > bytes.size()) throw FormatError(where + ": fmt chunk truncated");
      fmt.format = le16(bytes, body);
      fmt.channels = le16(bytes, body + 2);
      fmt.sample_rate = le32(bytes, body + 4);
      fmt.bits = le16(bytes, body + 14);
      if (fmt.format == kFormatExtensible) {
        if (size < 40) throw FormatError(where + ": extensible fmt chunk truncated");
        fmt.format = le16(bytes, body + 24);  // first two bytes of the subformat GUID
      }
      have_fmt = true;
    } else if (id == "data") {
      data_at = body;
      // Some writers leave the data size at 0 or oversize it when streaming.
      data_size = std::min(size, bytes.size() - body);
      have_data = true;
    }
    pos = body + size + (size & 1);
  }
  if (!have_fmt) throw FormatError(where + ": fmt chunk missing");
  if (!have_data) throw FormatError(where + ": data chunk missing");
  if (fmt.channels == 0) throw FormatError(where + ": channel count is 0");
  if (fmt.sample_rate == 0) throw FormatError(where + ": sample_rate is 0");

  std::size_t width = 0;
  if (fmt.format == kFormatPcm && fmt.bits == 16) {
    width = 2;
  } else if (fmt.format == kFormatFloat && fmt.bits == 32) {
    width = 4;
  } else {
    throw FormatError(where + ": unsupported codec (format tag " + std::to_string(fmt.format) +
                      ", bits_per_sample " + std::to_string(fmt.bits) +
                      "); expected PCM 16-bit or float 32-bit");
  }
  const std::size_t frame_bytes = width * fmt.channels;
  const std::size_t frames = data_size / frame_bytes;

  AudioClip clip;
  clip.sample_rate = static_cast<int>(fmt.sample_rate);
  clip.source_id = std::move(source_id);
  clip.samples.resize(frames);
  for (std::size_t f = 0; f < frames; ++f) {
    double acc = 0;
    for (std::size_t c = 0; c < fmt.channels; ++c) {
      const std::size_t at = data_at + f * frame_bytes + c * width;
      if (width == 2) {
        acc += static_cast<std::int16_t>(le16(bytes, at)) / 32768.0;
      } else {
        const float v = std::bit_cast<float>(le32(bytes, at));
        if (!std::isfinite(v)) {
          throw FormatError(where + ": non-finite sample at frame " + std::to_string(f));
        }
        acc += std::clamp(static_cast<double>(v), -1.0, 1.0);
      }
    }
    clip.samples[f] = acc / fmt.channels;
  }
  return clip;
}

AudioClip load_wav(const std::filesystem::path& path) {
  return decode_wav(read_file(path), path.filename().string());
}

std::string encode_wav_pcm16(std::span<const double> samples, int sample_rate) {
  const std::uint32_t data_bytes = static_cast<std::uint32_t>(samples.size() * 2);
  std::string out = "RIFF";
  append_le(out, 36 + data_bytes, 4);
  out += "WAVEfmt ";
  append_le(out, 16, 4);
  append_le(out, kFormatPcm, 2);
  append_le(out, 1, 2);
  append_le(out, static_cast<std::uint32_t>(sample_rate), 4);
  append_le(out, static_cast<std::uint32_t>(sample_rate) * 2, 4);
  append_le(out, 2, 2);
  append_le(out, 16, 2);
  out += "data";
  append_le(out, data_bytes, 4);
  for (double s : samples) {
    const long q = std::lround(std::clamp(s * 32768.0, -32768.0, 32767.0));
    append_le(out, static_cast<std::uint16_t>(static_cast<std::int16_t>(q)), 2);
  }
  return out;
}

void write_wav_pcm16(const std::filesystem::path& path, std::span<const double> samples,
                     int sample_rate) {
  atomic_write_file(path, encode_wav_pcm16(samples, sample_rate));
}

}  // namespace prefnet::audio
