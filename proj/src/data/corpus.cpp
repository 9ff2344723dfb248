// Copyright 2026 The prefnet Authors
// SPDX-License-Identifier: Apache-2.0

#include "prefnet/data/corpus.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "prefnet/core/checkpoint.hpp"
#include "prefnet/core/error.hpp"

namespace prefnet::data {

using nlohmann::json;

namespace {

const std::set<std::string> kSubjectKeys{"kind",      "subject_id", "age",       "gender",
                                         "impedance", "freq_low",   "freq_high", "sensitivity",
                                         "equipment_label"};
const std::set<std::string> kRecordKeys{"kind",      "record_id", "subject_id",       "song_id",
                                        "volume",    "clip_a_id", "clip_b_id",        "raw_score",
                                        "translated_score", "questionnaire_id"};

// Field access with line-numbered diagnostics.
class LineReader {
 public:
  LineReader(const json& obj, std::string where) : obj_(obj), where_(std::move(where)) {}

  const json& field(const char* key) const {
    auto it = obj_.find(key);
    if (it == obj_.end()) throw FormatError(where_ + " missing field '" + key + "'");
    return *it;
  }

  std::string string(const char* key) const {
    const auto& v = field(key);
    if (!v.is_string()) throw FormatError(where_ + " field '" + key + "' must be a string");
    return v.get<std::string>();
  }

  double number(const char* key) const {
    const auto& v = field(key);
    if (!v.is_number()) throw FormatError(where_ + " field '" + key + "' must be a number");
    return v.get<double>();
  }

  int integer(const char* key) const {
    const auto& v = field(key);
    if (!v.is_number_integer()) throw FormatError(where_ + " field '" + key + "' must be an integer");
    return v.get<int>();
  }

  json extras(const std::set<std::string>& known) const {
    json e = json::object();
    for (auto it = obj_.begin(); it != obj_.end(); ++it) {
      if (!known.count(it.key())) e[it.key()] = it.value();
    }
    return e;
  }

  [[noreturn]] void invalid(const std::string& what) const { throw ValidationError(where_ + " " + what); }

 private:
  const json& obj_;
  std::string where_;
};

SubjectInfo parse_subject(const LineReader& r) {
  SubjectInfo s;
  s.subject_id = r.string("subject_id");
  s.age = r.number("age");
  s.gender = r.integer("gender");
  s.impedance = r.number("impedance");
  s.freq_low = r.number("freq_low");
  s.freq_high = r.number("freq_high");
  s.sensitivity = r.number("sensitivity");
  s.equipment_label = r.string("equipment_label");
  s.extra = r.extras(kSubjectKeys);
  if (s.subject_id.empty()) r.invalid("subject_id must not be empty");
  if (s.age != kMissing && s.age < 0) r.invalid("age must be >= 0 or -1");
  if (s.gender < -1 || s.gender > 1) r.invalid("gender must be 0, 1 or -1");
  for (double v : {s.impedance, s.freq_low, s.freq_high, s.sensitivity}) {
    if (v != kMissing && v < 0) r.invalid("equipment specs must be >= 0 or -1");
  }
  return s;
}

PreferenceRecord parse_record(const LineReader& r) {
  PreferenceRecord p;
  p.record_id = r.string("record_id");
  p.subject_id = r.string("subject_id");
  p.song_id = r.string("song_id");
  p.volume = r.string("volume");
  p.clip_a_id = r.string("clip_a_id");
  p.clip_b_id = r.string("clip_b_id");
  p.raw_score = r.integer("raw_score");
  p.translated_score = r.integer("translated_score");
  p.questionnaire_id = r.integer("questionnaire_id");
  p.extra = r.extras(kRecordKeys);
  if (p.raw_score < 1 || p.raw_score > 5) r.invalid("raw_score " + std::to_string(p.raw_score) + " outside 1..5");
  if (p.translated_score != p.raw_score - 3) {
    r.invalid("translated_score " + std::to_string(p.translated_score) + " != raw_score - 3");
  }
  if (p.clip_a_id == p.clip_b_id) r.invalid("clip_a_id and clip_b_id are identical");
  return p;
}

}  // namespace

int translate_score(int raw) {
  if (raw < 1 || raw > 5) throw ValidationError("score " + std::to_string(raw) + " outside 1..5");
  return raw - 3;
}

int preference_label(int translated_score) {
  if (translated_score == 0) throw ValidationError("no-preference answers carry no label");
  return translated_score < 0 ? 0 : 1;
}

const SubjectInfo& Corpus::subject(const std::string& id) const {
  for (const auto& s : subjects) {
    if (s.subject_id == id) return s;
  }
  throw ValidationError("unknown subject '" + id + "'");
}

json subject_to_json(const SubjectInfo& s) {
  json j = {{"kind", "subject"},         {"subject_id", s.subject_id}, {"age", s.age},
            {"gender", s.gender},        {"impedance", s.impedance},   {"freq_low", s.freq_low},
            {"freq_high", s.freq_high},  {"sensitivity", s.sensitivity},
            {"equipment_label", s.equipment_label}};
  for (auto it = s.extra.begin(); it != s.extra.end(); ++it) j[it.key()] = it.value();
  return j;
}

json record_to_json(const PreferenceRecord& r) {
  json j = {{"kind", "record"},
            {"record_id", r.record_id},
            {"subject_id", r.subject_id},
            {"song_id", r.song_id},
            {"volume", r.volume},
            {"clip_a_id", r.clip_a_id},
            {"clip_b_id", r.clip_b_id},
            {"raw_score", r.raw_score},
            {"translated_score", r.translated_score},
            {"questionnaire_id", r.questionnaire_id}};
  for (auto it = r.extra.begin(); it != r.extra.end(); ++it) j[it.key()] = it.value();
  return j;
}

Corpus parse_corpus(std::istream& in, const std::string& source) {
  Corpus c;
  std::set<std::string> subject_ids;
  std::vector<std::size_t> record_lines;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = source + ":" + std::to_string(lineno) + ":";
    json obj;
    try {
      obj = json::parse(line);
    } catch (const json::parse_error& e) {
      throw FormatError(where + " invalid JSON (" + e.what() + ")");
    }
    if (!obj.is_object()) throw FormatError(where + " expected a JSON object");
    const LineReader r(obj, where);
    const auto kind = r.string("kind");
    if (kind == "subject") {
      auto s = parse_subject(r);
      if (!subject_ids.insert(s.subject_id).second) r.invalid("duplicate subject_id '" + s.subject_id + "'");
      c.subjects.push_back(std::move(s));
    } else if (kind == "record") {
      c.records.push_back(parse_record(r));
      record_lines.push_back(lineno);
    } else {
      throw FormatError(where + " unknown kind '" + kind + "'");
    }
  }
  for (std::size_t i = 0; i < c.records.size(); ++i) {
    if (!subject_ids.count(c.records[i].subject_id)) {
      throw ValidationError(source + ":" + std::to_string(record_lines[i]) + ": record refers to unknown subject '" +
                            c.records[i].subject_id + "'");
    }
  }
  return c;
}

Corpus read_corpus(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw Error("cannot open corpus " + path.string());
  return parse_corpus(f, path.string());
}

std::string format_corpus(const Corpus& corpus) {
  std::string out;
  for (const auto& s : corpus.subjects) out += subject_to_json(s).dump() + "\n";
  for (const auto& r : corpus.records) out += record_to_json(r).dump() + "\n";
  return out;
}

void write_corpus(const std::filesystem::path& path, const Corpus& corpus) {
  atomic_write_file(path, format_corpus(corpus));
}

json ExclusionReport::to_json() const {
  return {{"subjects_in", subjects_in},
          {"subjects_excluded", excluded_subjects},
          {"subjects_kept", subjects_in - excluded_subjects.size()},
          {"records_in", records_in},
          {"records_of_excluded_subjects", records_of_excluded_subjects},
          {"records_no_preference", records_no_preference},
          {"records_kept", records_kept},
          {"kept_abs2", kept_strong},
          {"kept_abs1", kept_weak}};
}

FilterResult filter_corpus(const Corpus& corpus) {
  FilterResult out;
  auto& rep = out.report;
  rep.subjects_in = corpus.subjects.size();
  rep.records_in = corpus.records.size();
  std::set<std::string> dropped;
  for (const auto& s : corpus.subjects) {
    if (s.missing_specs() > 2) {
      dropped.insert(s.subject_id);
      rep.excluded_subjects.push_back(s.subject_id);
    } else {
      out.corpus.subjects.push_back(s);
    }
  }
  for (const auto& r : corpus.records) {
    if (dropped.count(r.subject_id)) {
      ++rep.records_of_excluded_subjects;
    } else if (r.translated_score == 0) {
      ++rep.records_no_preference;
    } else {
      out.corpus.records.push_back(r);
      (std::abs(r.translated_score) == 2 ? rep.kept_strong : rep.kept_weak)++;
    }
  }
  rep.records_kept = out.corpus.records.size();
  return out;
}

}  // namespace prefnet::data
