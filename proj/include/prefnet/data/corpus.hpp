// Copyright 2026 The prefnet Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <istream>
#include <map>
#include <string>
#include <vector>

#include "prefnet/data/subject.hpp"

namespace prefnet::data {

/// One answered pair. raw_score 1..5 where 1-2 favour clip A, 3 is no
/// preference and 4-5 favour clip B; translated_score = raw_score - 3.
struct PreferenceRecord {
  std::string record_id;
  std::string subject_id;
  std::string song_id;
  std::string volume;  // "max" | "normal"
  std::string clip_a_id;
  std::string clip_b_id;
  int raw_score = 3;
  int translated_score = 0;
  int questionnaire_id = 0;
  nlohmann::json extra = nlohmann::json::object();

  bool operator==(const PreferenceRecord&) const = default;
};

/// 1..5 -> -2..2. Anything else raises ValidationError.
int translate_score(int raw);

/// Class index used for training: 0 when clip A is preferred (negative
/// translated score), 1 when clip B is. Throws for a zero score.
int preference_label(int translated_score);

struct Corpus {
  std::vector<SubjectInfo> subjects;
  std::vector<PreferenceRecord> records;

  const SubjectInfo& subject(const std::string& id) const;
  bool operator==(const Corpus&) const = default;
};

/// JSONL: one object per line tagged {"kind": "subject"|"record"}.
/// Subjects are written first, then records, each in container order.
/// Unknown fields are preserved. Parse failures raise FormatError and value
/// violations ValidationError, both prefixed with "<source>:<line>:".
Corpus parse_corpus(std::istream& in, const std::string& source = "corpus");
Corpus read_corpus(const std::filesystem::path& path);
std::string format_corpus(const Corpus& corpus);
void write_corpus(const std::filesystem::path& path, const Corpus& corpus);

nlohmann::json subject_to_json(const SubjectInfo& s);
nlohmann::json record_to_json(const PreferenceRecord& r);

struct ExclusionReport {
  std::size_t subjects_in = 0;
  std::vector<std::string> excluded_subjects;  // > 2 of 4 specs missing
  std::size_t records_in = 0;
  std::size_t records_of_excluded_subjects = 0;
  std::size_t records_no_preference = 0;  // translated score 0 among surviving subjects
  std::size_t records_kept = 0;
  std::size_t kept_strong = 0;  // |score| == 2
  std::size_t kept_weak = 0;    // |score| == 1

  nlohmann::json to_json() const;
};

struct FilterResult {
  Corpus corpus;
  ExclusionReport report;
};

/// Drops subjects with more than two of the four equipment specs missing,
/// their records, and every record with a zero translated score.
FilterResult filter_corpus(const Corpus& corpus);

}  // namespace prefnet::data
