// Copyright 2026 The prefnet Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <variant>
#include <vector>

#include "prefnet/core/nn.hpp"

namespace prefnet {

// Checkpoint layout, all integers little-endian:
//   "PREF" | version u32 | count u32 |
//   count x ( name_len u16 | name utf-8 | dtype u8 (0=f32, 1=f64) |
//             rank u8 | rank x extent u32 | raw values )

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct StoredTensor {
  std::string name;
  Shape shape;
  std::variant<std::vector<float>, std::vector<double>> values;

  bool operator==(const StoredTensor&) const = default;
};

std::string encode_checkpoint(const std::vector<StoredTensor>& tensors);
std::vector<StoredTensor> decode_checkpoint(const std::string& bytes);

/// Atomic write: the file appears complete or not at all.
void write_checkpoint(const std::filesystem::path& path, const std::vector<StoredTensor>& tensors);
std::vector<StoredTensor> read_checkpoint(const std::filesystem::path& path);

/// Copies parameters and buffers out, in ParameterList order.
template <typename T>
std::vector<StoredTensor> snapshot(const ParameterList<T>& list);

/// Copies stored values into the matching tensors in place, converting
/// precision when needed. Every entry of `list` must be present with the
/// same shape.
template <typename T>
void restore(const ParameterList<T>& list, const std::vector<StoredTensor>& stored);

/// Writes `contents` to `path` through a sibling temporary and rename.
void atomic_write_file(const std::filesystem::path& path, const std::string& contents);
std::string read_file(const std::filesystem::path& path);

}  // namespace prefnet
