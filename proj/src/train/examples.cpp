// Copyright 2026 The prefnet Authors
// SPDX-License-Identifier: Apache-2.0

#include "prefnet/train/examples.hpp"

#include <algorithm>
#include <set>

#include "prefnet/audio/feature_cache.hpp"
#include "prefnet/audio/resample.hpp"
#include "prefnet/core/error.hpp"
#include "prefnet/core/parallel.hpp"

namespace prefnet::train {

void FeatureBank::add(const std::string& clip_id, const audio::LogMelSpectrogram& spec) {
  if (index_.contains(clip_id)) throw ValidationError("feature bank: duplicate clip '" + clip_id + "'");
  if (spec.frames == 0 || spec.values.size() != spec.frames * audio::kMelBins) {
    throw ShapeError("feature bank: clip '" + clip_id + "' has malformed features");
  }
  index_.emplace(clip_id, values_.size());
  ids_.push_back(clip_id);
  values_.emplace_back(spec.values.begin(), spec.values.end());
  frames_ = std::max(frames_, spec.frames);
}

std::size_t FeatureBank::index(const std::string& clip_id) const {
  auto it = index_.find(clip_id);
  if (it == index_.end()) throw ValidationError("no features for clip '" + clip_id + "'");
  return it->second;
}

void FeatureBank::copy_padded(std::size_t i, std::span<float> out) const {
  const auto& v = values_[i];
  std::copy(v.begin(), v.end(), out.begin());
  std::fill(out.begin() + static_cast<std::ptrdiff_t>(v.size()), out.begin() + frames_ * audio::kMelBins,
            static_cast<float>(audio::kLogFloorDb));
}

FeatureBank load_features(const std::vector<data::PreferenceRecord>& records, const std::filesystem::path& audio_dir,
                          const std::filesystem::path& cache_dir, std::size_t jobs) {
  std::set<std::string> unique;
  for (const auto& r : records) {
    unique.insert(r.clip_a_id);
    unique.insert(r.clip_b_id);
  }
  return load_features(std::vector<std::string>(unique.begin(), unique.end()), audio_dir, cache_dir, jobs);
}

FeatureBank load_features(const std::vector<std::string>& clip_ids, const std::filesystem::path& audio_dir,
                          const std::filesystem::path& cache_dir, std::size_t jobs) {
  const std::set<std::string> unique(clip_ids.begin(), clip_ids.end());
  const std::vector<std::string> ids(unique.begin(), unique.end());
  std::vector<audio::LogMelSpectrogram> specs(ids.size());
  if (!cache_dir.empty()) std::filesystem::create_directories(cache_dir);

  parallel_for(ids.size(), jobs, [&](std::size_t i) {
    if (!cache_dir.empty()) {
      const auto cached = audio::cache_path_for(cache_dir, ids[i]);
      if (std::filesystem::exists(cached)) {
        auto spec = audio::read_feature_cache(cached);
        if (spec.config_hash == audio::dsp_config_hash()) {
          specs[i] = std::move(spec);
          return;
        }
      }
    }
    specs[i] = audio::featurize_file(audio_dir / ids[i]);
    if (!cache_dir.empty()) audio::write_feature_cache(audio::cache_path_for(cache_dir, ids[i]), specs[i]);
  });

  FeatureBank bank;
  for (std::size_t i = 0; i < ids.size(); ++i) bank.add(ids[i], specs[i]);
  return bank;
}

FeatureBank featurize_clips(const std::vector<data::SynthClip>& clips, int sample_rate, std::size_t jobs) {
  std::vector<audio::LogMelSpectrogram> specs(clips.size());
  parallel_for(clips.size(), jobs, [&](std::size_t i) {
    specs[i] = audio::logmel(audio::resample_to_32k({clips[i].samples, sample_rate, clips[i].clip_id}));
  });
  FeatureBank bank;
  for (std::size_t i = 0; i < clips.size(); ++i) bank.add(clips[i].clip_id, specs[i]);
  return bank;
}

TrainingData TrainingData::build(FeatureBank clips, const std::vector<data::SubjectInfo>& subjects,
                                 data::FeatureMask mask) {
  TrainingData d;
  d.clips = std::move(clips);
  for (const auto& s : subjects) {
    d.subject_index.emplace(s.subject_id, d.subject_ids.size());
    d.subject_ids.push_back(s.subject_id);
    d.subject_vectors.push_back(data::subject_vector(s, mask));
  }
  return d;
}

std::vector<PairExample> TrainingData::examples(const std::vector<data::PreferenceRecord>& records) const {
  return examples(records, subject_ids);
}

std::vector<PairExample> TrainingData::examples(const std::vector<data::PreferenceRecord>& records,
                                                const std::vector<std::string>& subject_ids) const {
  const std::set<std::string> wanted(subject_ids.begin(), subject_ids.end());
  std::vector<PairExample> out;
  for (const auto& r : records) {
    if (!wanted.contains(r.subject_id)) continue;
    auto it = subject_index.find(r.subject_id);
    if (it == subject_index.end()) throw ValidationError("record " + r.record_id + ": unknown subject");
    out.push_back({clips.index(r.clip_a_id), clips.index(r.clip_b_id), it->second,
                   data::preference_label(r.translated_score)});
  }
  return out;
}

Batch make_batch(const TrainingData& data, std::span<const PairExample> examples, std::span<const std::size_t> order,
                 const augment::AugmentConfig* augment, std::mt19937_64* rng) {
  if (augment && !rng) throw ValidationError("make_batch: augmentation needs a random generator");
  const std::size_t frames = data.clips.frames();
  const std::size_t per_clip = frames * audio::kMelBins;
  const std::size_t n = order.size();
  std::vector<float> specs(2 * n * per_clip);
  std::vector<float> subjects(2 * n * data::kSubjectDim);
  Batch batch;
  batch.labels.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& ex = examples[order[i]];
    const std::size_t clip[2] = {ex.clip_a, ex.clip_b};
    for (std::size_t side = 0; side < 2; ++side) {
      std::span<float> dst(specs.data() + (2 * i + side) * per_clip, per_clip);
      data.clips.copy_padded(clip[side], dst);
      if (augment && augment->enabled) {
        const std::size_t own = data.clips.clip_frames(clip[side]);
        augment::apply_stripes(dst, own, augment::draw_stripes(own, *augment, *rng),
                               static_cast<float>(augment->fill_value));
      }
      const auto& sv = data.subject_vectors[ex.subject];
      std::copy(sv.begin(), sv.end(), subjects.begin() + static_cast<std::ptrdiff_t>((2 * i + side) * data::kSubjectDim));
    }
    batch.labels.push_back(ex.label);
  }
  batch.specs = Tensor<float>({2 * n, 1, frames, audio::kMelBins}, std::move(specs));
  batch.subjects = Tensor<float>({2 * n, data::kSubjectDim}, std::move(subjects));
  return batch;
}

}  // namespace prefnet::train
