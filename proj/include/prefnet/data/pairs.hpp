// Copyright 2026 The prefnet Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace prefnet::data {

/// Clip file names follow "<song>__<device>__<volume>.wav".
struct ClipName {
  std::string song_id;
  std::string device_id;
  std::string volume;
};

std::optional<ClipName> parse_clip_name(const std::string& file_name);
std::string clip_file_name(const std::string& song, const std::string& device, const std::string& volume);

/// All device recordings of one song at one volume.
struct ClipGroup {
  std::string song_id;
  std::string volume;
  std::vector<std::string> clip_ids;  // sorted file names
};

/// Groups the parseable .wav names in `dir` by (song, volume), sorted by
/// volume then song. Names that do not follow the convention are ignored.
std::vector<ClipGroup> catalog_from_directory(const std::filesystem::path& dir);
std::vector<ClipGroup> catalog_from_names(const std::vector<std::string>& file_names);

/// One presented comparison; clip order is fixed at construction.
struct PairSpec {
  std::string pair_id;
  std::string song_id;
  std::string volume;
  std::string clip_a_id;
  std::string clip_b_id;
  int questionnaire_id = 0;
  bool swapped = false;  // true when clip A is the later clip in sorted order
};

/// Forms every unordered pair of clips in each group and randomises the
/// presentation order. Within a volume, each song's pairs are shuffled and
/// dealt two at a time into questionnaires, so with 5 devices each volume
/// yields 5 questionnaires of 2 pairs per song. Questionnaire ids are
/// numbered consecutively across volumes in catalog order. Every group must
/// hold exactly `devices` clips.
std::vector<PairSpec> build_pairs(const std::vector<ClipGroup>& groups, std::uint64_t seed,
                                  std::size_t devices = 5);

/// Number of distinct questionnaire ids in `pairs`.
int questionnaire_count(const std::vector<PairSpec>& pairs);

}  // namespace prefnet::data
