// Copyright 2026 The prefnet Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "prefnet/audio/features.hpp"
#include "prefnet/augment/spec_augment.hpp"
#include "prefnet/core/tensor.hpp"
#include "prefnet/data/corpus.hpp"
#include "prefnet/data/subject.hpp"
#include "prefnet/data/synth.hpp"

namespace prefnet::train {

/// Log-mel features for every clip a corpus refers to. Clips shorter than the
/// longest are padded with the log floor so every input has frames() rows.
class FeatureBank {
 public:
  void add(const std::string& clip_id, const audio::LogMelSpectrogram& spec);
  bool contains(const std::string& clip_id) const { return index_.contains(clip_id); }
  std::size_t index(const std::string& clip_id) const;
  std::size_t size() const { return values_.size(); }
  std::size_t frames() const { return frames_; }
  std::size_t clip_frames(std::size_t i) const { return values_[i].size() / audio::kMelBins; }
  const std::string& clip_id(std::size_t i) const { return ids_[i]; }

  /// Copies clip `i` into `out` (frames() x 64), padding with the log floor.
  void copy_padded(std::size_t i, std::span<float> out) const;

 private:
  std::map<std::string, std::size_t> index_;
  std::vector<std::string> ids_;
  std::vector<std::vector<float>> values_;
  std::size_t frames_ = 0;
};

/// Features for the clips of `records`, read from `cache_dir` when present and
/// otherwise computed from `audio_dir` and written to the cache (when given).
/// Clips are processed on up to `jobs` threads.
FeatureBank load_features(const std::vector<data::PreferenceRecord>& records, const std::filesystem::path& audio_dir,
                          const std::filesystem::path& cache_dir, std::size_t jobs = 1);
/// Same for an explicit list of clip file names (duplicates are ignored).
FeatureBank load_features(const std::vector<std::string>& clip_ids, const std::filesystem::path& audio_dir,
                          const std::filesystem::path& cache_dir, std::size_t jobs = 1);

/// Features of in-memory clips at `sample_rate` (44100 or 32000).
FeatureBank featurize_clips(const std::vector<data::SynthClip>& clips, int sample_rate, std::size_t jobs = 1);

/// One comparison: indices into the feature bank and subject table.
struct PairExample {
  std::size_t clip_a = 0;
  std::size_t clip_b = 0;
  std::size_t subject = 0;
  int label = 0;  // 0: first clip preferred, 1: second clip preferred
};

/// Features, masked subject vectors and the index maps between them.
struct TrainingData {
  FeatureBank clips;
  std::vector<std::string> subject_ids;
  std::vector<data::SubjectVector> subject_vectors;
  std::map<std::string, std::size_t> subject_index;

  static TrainingData build(FeatureBank clips, const std::vector<data::SubjectInfo>& subjects,
                            data::FeatureMask mask);

  /// Examples in record order: for every record, or only for records whose
  /// subject is listed in `subject_ids`.
  std::vector<PairExample> examples(const std::vector<data::PreferenceRecord>& records) const;
  std::vector<PairExample> examples(const std::vector<data::PreferenceRecord>& records,
                                    const std::vector<std::string>& subject_ids) const;
};

struct Batch {
  Tensor<float> specs;     // [2B,1,frames,64], interleaved (a0, b0, a1, b1, ...)
  Tensor<float> subjects;  // [2B,6], each pair's row repeated
  std::vector<int> labels;
};

/// Assembles examples[order[i]] for every i. When `augment` is given, each
/// clip copy gets independently drawn stripes from `rng`.
Batch make_batch(const TrainingData& data, std::span<const PairExample> examples,
                 std::span<const std::size_t> order, const augment::AugmentConfig* augment = nullptr,
                 std::mt19937_64* rng = nullptr);

}  // namespace prefnet::train
