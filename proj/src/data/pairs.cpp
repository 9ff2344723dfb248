// Copyright 2026 The prefnet Authors
// SPDX-License-Identifier: Apache-2.0

#include "prefnet/data/pairs.hpp"

#include <algorithm>
#include <map>
#include <set>

#include "prefnet/core/error.hpp"

namespace prefnet::data {

std::optional<ClipName> parse_clip_name(const std::string& file_name) {
  const std::filesystem::path p(file_name);
  if (p.extension() != ".wav") return std::nullopt;
  const std::string stem = p.stem().string();
  const auto a = stem.find("__");
  if (a == std::string::npos || a == 0) return std::nullopt;
  const auto b = stem.find("__", a + 2);
  if (b == std::string::npos || b == a + 2 || b + 2 >= stem.size()) return std::nullopt;
  if (stem.find("__", b + 2) != std::string::npos) return std::nullopt;
  return ClipName{stem.substr(0, a), stem.substr(a + 2, b - a - 2), stem.substr(b + 2)};
}

std::string clip_file_name(const std::string& song, const std::string& device, const std::string& volume) {
  return song + "__" + device + "__" + volume + ".wav";
}

std::vector<ClipGroup> catalog_from_names(const std::vector<std::string>& file_names) {
  std::map<std::pair<std::string, std::string>, std::vector<std::string>> groups;  // (volume, song)
  for (const auto& f : file_names) {
    if (auto n = parse_clip_name(f)) groups[{n->volume, n->song_id}].push_back(f);
  }
  std::vector<ClipGroup> out;
  for (auto& [key, clips] : groups) {
    std::sort(clips.begin(), clips.end());
    out.push_back({key.second, key.first, std::move(clips)});
  }
  return out;
}

std::vector<ClipGroup> catalog_from_directory(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw ValidationError("audio directory not found: " + dir.string());
  std::vector<std::string> names;
  for (const auto& e : std::filesystem::directory_iterator(dir)) {
    if (e.is_regular_file()) names.push_back(e.path().filename().string());
  }
  return catalog_from_names(names);
}

std::vector<PairSpec> build_pairs(const std::vector<ClipGroup>& groups, std::uint64_t seed, std::size_t devices) {
  if (devices < 2) throw ValidationError("build_pairs: need at least 2 devices");
  std::mt19937_64 rng(seed);
  std::vector<std::string> volumes;
  for (const auto& g : groups) {
    if (g.clip_ids.size() != devices) {
      throw ValidationError("build_pairs: song '" + g.song_id + "' at volume '" + g.volume + "' has " +
                            std::to_string(g.clip_ids.size()) + " clips, expected " + std::to_string(devices));
    }
    if (std::set<std::string>(g.clip_ids.begin(), g.clip_ids.end()).size() != devices) {
      throw ValidationError("build_pairs: duplicate clip in song '" + g.song_id + "'");
    }
    if (std::find(volumes.begin(), volumes.end(), g.volume) == volumes.end()) volumes.push_back(g.volume);
  }
  const std::size_t per_group = devices * (devices - 1) / 2;
  const int per_volume = static_cast<int>((per_group + 1) / 2);

  std::vector<PairSpec> out;
  int q_base = 0;
  for (const auto& volume : volumes) {
    for (const auto& g : groups) {
      if (g.volume != volume) continue;
      std::vector<PairSpec> pairs;
      for (std::size_t i = 0; i < devices; ++i) {
        for (std::size_t j = i + 1; j < devices; ++j) {
          PairSpec p;
          p.song_id = g.song_id;
          p.volume = g.volume;
          p.swapped = std::bernoulli_distribution(0.5)(rng);
          p.clip_a_id = p.swapped ? g.clip_ids[j] : g.clip_ids[i];
          p.clip_b_id = p.swapped ? g.clip_ids[i] : g.clip_ids[j];
          pairs.push_back(std::move(p));
        }
      }
      std::shuffle(pairs.begin(), pairs.end(), rng);
      for (std::size_t k = 0; k < pairs.size(); ++k) {
        pairs[k].questionnaire_id = q_base + static_cast<int>(k / 2);
        pairs[k].pair_id = g.volume + "/" + g.song_id + "/" + std::to_string(k);
        out.push_back(std::move(pairs[k]));
      }
    }
    q_base += per_volume;
  }
  // Questionnaire-major order; within a questionnaire, songs in catalog order.
  std::stable_sort(out.begin(), out.end(),
                   [](const PairSpec& a, const PairSpec& b) { return a.questionnaire_id < b.questionnaire_id; });
  return out;
}

int questionnaire_count(const std::vector<PairSpec>& pairs) {
  std::set<int> ids;
  for (const auto& p : pairs) ids.insert(p.questionnaire_id);
  return static_cast<int>(ids.size());
}

}  // namespace prefnet::data
