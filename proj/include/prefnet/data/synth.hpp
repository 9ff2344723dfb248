// Copyright 2026 The prefnet Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "prefnet/data/corpus.hpp"

namespace prefnet::data {

enum class SynthMode {
  Agnostic,  // every listener ranks devices the same way
  Personal,  // two equal taste clusters that disagree on half of the pairs
};

SynthMode parse_synth_mode(const std::string& name);

struct SynthConfig {
  int subjects = 12;
  int songs = 7;
  int devices = 5;  // 2..8
  std::vector<std::string> volumes{"max"};
  SynthMode mode = SynthMode::Personal;
  std::uint64_t seed = 1;
  double clip_seconds = 1.0;
  int sample_rate = 44100;
  double label_noise = 0.0;  // probability of flipping a preference

  void validate() const;
};

/// Device character: `noise` adds broadband hiss, `brightness` raises the
/// high-frequency rolloff.
struct DeviceTraits {
  int noise;
  int brightness;
};

DeviceTraits device_traits(int device_index);

/// Latent appeal of a device to a listener of taste `taste` (+1 or -1):
/// hiss always hurts, brightness helps or hurts depending on taste.
double device_utility(int device_index, int taste);

struct SynthClip {
  std::string clip_id;
  std::vector<double> samples;
};

struct SynthCorpus {
  Corpus corpus;
  std::vector<SynthClip> clips;
};

/// Fully deterministic for a given config. Every subject answers every pair
/// produced by build_pairs over the generated catalog. Subjects carry
/// "synth_taste" (+1/-1) in their extra fields; taste alternates along the
/// age order, so age-sorted folds mix both clusters. Cluster +1 uses low-impedance
/// high-sensitivity earbuds, cluster -1 high-impedance studio headphones.
SynthCorpus synth_generate(const SynthConfig& cfg);

/// Writes <dir>/corpus.jsonl and <dir>/audio/<clip>.wav.
void write_synth(const std::filesystem::path& dir, const SynthCorpus& synth, int sample_rate);

/// Best accuracy any predictor that ignores the listener can reach on
/// `records`: for each unordered clip pair, the majority answer.
double subject_blind_ceiling(const std::vector<PreferenceRecord>& records);

}  // namespace prefnet::data
