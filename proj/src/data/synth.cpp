// Copyright 2026 The prefnet Authors
// SPDX-License-Identifier: Apache-2.0

#include "prefnet/data/synth.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <numeric>
#include <random>

#include "prefnet/audio/wav.hpp"
#include "prefnet/core/error.hpp"
#include "prefnet/data/pairs.hpp"

namespace prefnet::data {

namespace {

constexpr std::array<DeviceTraits, 8> kDevices{{{0, 0}, {0, 1}, {0, 2}, {1, 0}, {1, 1}, {0, 3}, {1, 2}, {1, 3}}};
constexpr std::array<double, 4> kRolloffHz{1500, 4000, 9000, 14000};
constexpr double kNoiseStd = 0.05;
constexpr int kNotesPerSecond = 4;

std::mt19937_64 stream(std::uint64_t seed, std::initializer_list<std::uint32_t> tags) {
  std::vector<std::uint32_t> words{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)};
  words.insert(words.end(), tags.begin(), tags.end());
  std::seed_seq seq(words.begin(), words.end());
  return std::mt19937_64(seq);
}

struct Note {
  double f0;
  std::vector<double> phases;
};

// A song is a fixed sequence of harmonic notes; every device plays the same
// notes through its own rolloff and hiss.
std::vector<double> render_clip(const std::vector<Note>& notes, const DeviceTraits& dev, double gain,
                                const SynthConfig& cfg, std::mt19937_64& noise_rng) {
  const std::size_t n = static_cast<std::size_t>(std::llround(cfg.clip_seconds * cfg.sample_rate));
  const std::size_t note_len = static_cast<std::size_t>(cfg.sample_rate / kNotesPerSecond);
  const double fc = kRolloffHz[static_cast<std::size_t>(dev.brightness)];
  std::vector<double> out(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& note = notes[(i / note_len) % notes.size()];
    const double t = static_cast<double>(i) / cfg.sample_rate;
    double acc = 0;
    for (std::size_t k = 1; k <= note.phases.size(); ++k) {
      const double f = note.f0 * static_cast<double>(k);
      const double rolloff = 1.0 / (1.0 + std::pow(f / fc, 4));
      acc += rolloff / static_cast<double>(k) * std::sin(2 * std::numbers::pi * f * t + note.phases[k - 1]);
    }
    out[i] = gain * 0.15 * acc;
  }
  std::normal_distribution<double> hiss(0.0, kNoiseStd * dev.noise);
  for (auto& s : out) {
    if (dev.noise > 0) s += gain * hiss(noise_rng);
    s = std::clamp(s, -1.0, 1.0);
  }
  return out;
}

SubjectInfo make_subject(int index, int age, int taste, std::mt19937_64& rng) {
  SubjectInfo s;
  char id[16];
  std::snprintf(id, sizeof id, "s%03d", index);
  s.subject_id = id;
  s.age = age;
  s.gender = std::bernoulli_distribution(0.2)(rng) ? 1 : 0;
  if (taste > 0) {
    s.impedance = std::uniform_int_distribution<int>(16, 32)(rng);
    s.sensitivity = std::uniform_int_distribution<int>(105, 115)(rng);
    s.freq_low = std::uniform_int_distribution<int>(15, 20)(rng);
    s.freq_high = 20000;
    s.equipment_label = "synthetic earbud E" + std::to_string(std::uniform_int_distribution<int>(1, 9)(rng));
  } else {
    s.impedance = std::uniform_int_distribution<int>(150, 300)(rng);
    s.sensitivity = std::uniform_int_distribution<int>(92, 100)(rng);
    s.freq_low = std::uniform_int_distribution<int>(5, 10)(rng);
    s.freq_high = 20000;
    s.equipment_label = "synthetic studio headphone H" + std::to_string(std::uniform_int_distribution<int>(1, 9)(rng));
  }
  s.extra = {{"synth_taste", taste}};
  return s;
}

}  // namespace

SynthMode parse_synth_mode(const std::string& name) {
  if (name == "agnostic") return SynthMode::Agnostic;
  if (name == "personal") return SynthMode::Personal;
  throw ValidationError("unknown synth mode '" + name + "' (valid: agnostic, personal)");
}

void SynthConfig::validate() const {
  if (subjects < 1) throw ValidationError("synth: subjects must be >= 1");
  if (songs < 1) throw ValidationError("synth: songs must be >= 1");
  if (devices < 2 || devices > static_cast<int>(kDevices.size())) {
    throw ValidationError("synth: devices must lie in [2, 8]");
  }
  if (volumes.empty()) throw ValidationError("synth: at least one volume required");
  if (clip_seconds < 1.0 || clip_seconds > 60.0) throw ValidationError("synth: clip_seconds must lie in [1, 60]");
  if (sample_rate != 44100 && sample_rate != 32000) throw ValidationError("synth: sample_rate must be 44100 or 32000");
  if (label_noise < 0 || label_noise > 0.5) throw ValidationError("synth: label_noise must lie in [0, 0.5]");
}

DeviceTraits device_traits(int device_index) {
  if (device_index < 0 || device_index >= static_cast<int>(kDevices.size())) {
    throw ValidationError("device index " + std::to_string(device_index) + " outside [0, 8)");
  }
  return kDevices[static_cast<std::size_t>(device_index)];
}

double device_utility(int device_index, int taste) {
  const auto d = device_traits(device_index);
  return -1.5 * d.noise + taste * d.brightness;
}

SynthCorpus synth_generate(const SynthConfig& cfg) {
  cfg.validate();
  SynthCorpus out;

  // Audio.
  std::vector<std::string> names;
  std::map<std::string, int> device_of;
  for (int song = 0; song < cfg.songs; ++song) {
    auto song_rng = stream(cfg.seed, {1, static_cast<std::uint32_t>(song)});
    std::vector<Note> notes(kNotesPerSecond * 2);
    for (auto& note : notes) {
      note.f0 = std::uniform_real_distribution<double>(150.0, 450.0)(song_rng);
      const std::size_t partials = static_cast<std::size_t>(std::min(14000.0, 0.45 * cfg.sample_rate) / note.f0);
      note.phases.resize(partials);
      for (auto& p : note.phases) p = std::uniform_real_distribution<double>(0, 2 * std::numbers::pi)(song_rng);
    }
    char song_id[16];
    std::snprintf(song_id, sizeof song_id, "song%02d", song + 1);
    for (std::size_t v = 0; v < cfg.volumes.size(); ++v) {
      const double gain = cfg.volumes[v] == "normal" ? 0.5 : 1.0;
      for (int d = 0; d < cfg.devices; ++d) {
        auto noise_rng = stream(cfg.seed, {2, static_cast<std::uint32_t>(song), static_cast<std::uint32_t>(v),
                                           static_cast<std::uint32_t>(d)});
        const auto id = clip_file_name(song_id, "dev" + std::to_string(d + 1), cfg.volumes[v]);
        out.clips.push_back({id, render_clip(notes, device_traits(d), gain, cfg, noise_rng)});
        names.push_back(id);
        device_of[id] = d;
      }
    }
  }

  // Listeners: two equal clusters. Taste alternates along the age order that
  // make_folds uses, so every cross-validation fold holds both clusters.
  auto subj_rng = stream(cfg.seed, {3});
  const auto n_subjects = static_cast<std::size_t>(cfg.subjects);
  std::vector<int> ages(n_subjects);
  for (auto& a : ages) a = std::uniform_int_distribution<int>(20, 45)(subj_rng);
  std::vector<std::size_t> by_age(n_subjects);
  std::iota(by_age.begin(), by_age.end(), 0);
  std::stable_sort(by_age.begin(), by_age.end(), [&](std::size_t a, std::size_t b) { return ages[a] < ages[b]; });
  const int first = std::bernoulli_distribution(0.5)(subj_rng) ? 1 : -1;
  std::vector<int> tastes(n_subjects);
  for (std::size_t r = 0; r < n_subjects; ++r) tastes[by_age[r]] = r % 2 == 0 ? first : -first;
  for (std::size_t i = 0; i < n_subjects; ++i) {
    out.corpus.subjects.push_back(make_subject(static_cast<int>(i) + 1, ages[i], tastes[i], subj_rng));
  }

  // Answers.
  const auto pairs = build_pairs(catalog_from_names(names), cfg.seed, static_cast<std::size_t>(cfg.devices));
  auto answer_rng = stream(cfg.seed, {4});
  for (std::size_t si = 0; si < out.corpus.subjects.size(); ++si) {
    const auto& subject = out.corpus.subjects[si];
    const int taste = cfg.mode == SynthMode::Personal ? tastes[si] : 1;
    for (const auto& p : pairs) {
      const double gap = device_utility(device_of.at(p.clip_b_id), taste) - device_utility(device_of.at(p.clip_a_id), taste);
      bool prefer_b = gap > 0;
      if (cfg.label_noise > 0 && std::bernoulli_distribution(cfg.label_noise)(answer_rng)) prefer_b = !prefer_b;
      const int magnitude = std::abs(gap) >= 1.5 ? 2 : 1;
      PreferenceRecord r;
      r.record_id = subject.subject_id + "/" + p.pair_id;
      r.subject_id = subject.subject_id;
      r.song_id = p.song_id;
      r.volume = p.volume;
      r.clip_a_id = p.clip_a_id;
      r.clip_b_id = p.clip_b_id;
      r.translated_score = prefer_b ? magnitude : -magnitude;
      r.raw_score = r.translated_score + 3;
      r.questionnaire_id = p.questionnaire_id;
      out.corpus.records.push_back(std::move(r));
    }
  }
  return out;
}

void write_synth(const std::filesystem::path& dir, const SynthCorpus& synth, int sample_rate) {
  std::filesystem::create_directories(dir / "audio");
  for (const auto& c : synth.clips) audio::write_wav_pcm16(dir / "audio" / c.clip_id, c.samples, sample_rate);
  write_corpus(dir / "corpus.jsonl", synth.corpus);
}

double subject_blind_ceiling(const std::vector<PreferenceRecord>& records) {
  // (first clip, second clip) in sorted order -> votes for the first, votes for the second
  std::map<std::pair<std::string, std::string>, std::pair<std::size_t, std::size_t>> votes;
  std::size_t total = 0;
  for (const auto& r : records) {
    if (r.translated_score == 0) continue;
    const auto winner = r.translated_score < 0 ? r.clip_a_id : r.clip_b_id;
    const auto key = std::minmax(r.clip_a_id, r.clip_b_id);
    auto& v = votes[{key.first, key.second}];
    (winner == key.first ? v.first : v.second)++;
    ++total;
  }
  if (total == 0) return 0.0;
  std::size_t best = 0;
  for (const auto& [key, v] : votes) best += std::max(v.first, v.second);
  return static_cast<double>(best) / static_cast<double>(total);
}

}  // namespace prefnet::data
