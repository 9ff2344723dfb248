// Copyright 2026 The prefnet Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <string>
#include <string_view>

#include "json.hpp"

namespace prefnet::data {

inline constexpr double kMissing = -1.0;
inline constexpr std::size_t kSubjectDim = 6;

using SubjectVector = std::array<double, kSubjectDim>;

/// One listener. Numeric fields hold -1 when unknown; gender is 0 (male),
/// 1 (female) or -1 (unknown).
struct SubjectInfo {
  std::string subject_id;
  double age = kMissing;
  int gender = -1;
  double impedance = kMissing;    // ohms
  double freq_low = kMissing;     // Hz
  double freq_high = kMissing;    // Hz
  double sensitivity = kMissing;  // dB
  std::string equipment_label;
  nlohmann::json extra = nlohmann::json::object();  // unknown fields, kept verbatim

  /// Number of the four equipment specs that are missing.
  int missing_specs() const;
  bool operator==(const SubjectInfo&) const = default;
};

/// Subsets of the subject vector that are kept; the rest read as -1.
enum class FeatureMask { All, AgeGender, AllSpecs, ImpdSensit, FreqResponses };

FeatureMask parse_feature_mask(std::string_view name);
std::string_view feature_mask_name(FeatureMask mask);

/// (age, gender, impedance, freq_low, freq_high, sensitivity) with the
/// entries outside `mask` replaced by -1.
SubjectVector subject_vector(const SubjectInfo& s, FeatureMask mask = FeatureMask::All);

}  // namespace prefnet::data
