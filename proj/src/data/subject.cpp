// Copyright 2026 The prefnet Authors
// SPDX-License-Identifier: Apache-2.0

#include "prefnet/data/subject.hpp"

#include "prefnet/core/error.hpp"

namespace prefnet::data {

namespace {

constexpr std::array<std::pair<FeatureMask, std::string_view>, 5> kMaskNames{{
    {FeatureMask::All, "all"},
    {FeatureMask::AgeGender, "age_gender"},
    {FeatureMask::AllSpecs, "all_specs"},
    {FeatureMask::ImpdSensit, "impd_sensit"},
    {FeatureMask::FreqResponses, "freq_responses"},
}};

// Which of the six entries each mask keeps.
std::array<bool, kSubjectDim> kept(FeatureMask mask) {
  switch (mask) {
    case FeatureMask::All: return {true, true, true, true, true, true};
    case FeatureMask::AgeGender: return {true, true, false, false, false, false};
    case FeatureMask::AllSpecs: return {false, false, true, true, true, true};
    case FeatureMask::ImpdSensit: return {false, false, true, false, false, true};
    case FeatureMask::FreqResponses: return {false, false, false, true, true, false};
  }
  return {};
}

}  // namespace

int SubjectInfo::missing_specs() const {
  int n = 0;
  for (double v : {impedance, freq_low, freq_high, sensitivity}) n += v == kMissing;
  return n;
}

FeatureMask parse_feature_mask(std::string_view name) {
  for (const auto& [mask, text] : kMaskNames) {
    if (text == name) return mask;
  }
  std::string valid;
  for (const auto& [mask, text] : kMaskNames) valid += (valid.empty() ? "" : ", ") + std::string(text);
  throw ValidationError("unknown feature mask '" + std::string(name) + "' (valid: " + valid + ")");
}

std::string_view feature_mask_name(FeatureMask mask) {
  for (const auto& [m, text] : kMaskNames) {
    if (m == mask) return text;
  }
  return "?";
}

SubjectVector subject_vector(const SubjectInfo& s, FeatureMask mask) {
  const SubjectVector raw{s.age, static_cast<double>(s.gender), s.impedance, s.freq_low, s.freq_high,
                          s.sensitivity};
  const auto keep = kept(mask);
  SubjectVector out;
  for (std::size_t i = 0; i < kSubjectDim; ++i) out[i] = keep[i] ? raw[i] : kMissing;
  return out;
}

}  // namespace prefnet::data
