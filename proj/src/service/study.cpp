// Copyright 2026 The prefnet Authors
// SPDX-License-Identifier: Apache-2.0

#include "prefnet/service/study.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <chrono>
#include <cstdio>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <mutex>
#include <random>

namespace prefnet::service {

using nlohmann::json;

namespace {

std::string now_iso8601() {
  const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string new_session_id() {
  static std::mutex m;
  static std::random_device rd;
  std::lock_guard lock(m);
  char buf[33];
  for (int i = 0; i < 4; ++i) std::snprintf(buf + 8 * i, 9, "%08x", rd());
  return buf;
}

json pair_to_json(const data::PairSpec& p) {
  return {{"pair_id", p.pair_id},     {"song_id", p.song_id},     {"volume", p.volume},
          {"clip_a_id", p.clip_a_id}, {"clip_b_id", p.clip_b_id}, {"swapped", p.swapped}};
}

data::PairSpec pair_from_json(const json& j, int questionnaire_id) {
  data::PairSpec p;
  p.pair_id = j.at("pair_id").get<std::string>();
  p.song_id = j.at("song_id").get<std::string>();
  p.volume = j.at("volume").get<std::string>();
  p.clip_a_id = j.at("clip_a_id").get<std::string>();
  p.clip_b_id = j.at("clip_b_id").get<std::string>();
  p.swapped = j.at("swapped").get<bool>();
  p.questionnaire_id = questionnaire_id;
  return p;
}

// Reads an optional non-negative number; absent, null or -1 means unknown.
double optional_spec(const json& payload, const char* key, std::vector<std::string>& bad) {
  if (!payload.contains(key) || payload[key].is_null()) return data::kMissing;
  const auto& v = payload[key];
  if (!v.is_number() || (v.get<double>() < 0 && v.get<double>() != data::kMissing)) {
    bad.emplace_back(key);
    return data::kMissing;
  }
  return v.get<double>();
}

}  // namespace

std::size_t Session::cursor() const {
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    if (!answered.contains(pairs[i].pair_id)) return i;
  }
  return pairs.size();
}

data::SubjectInfo parse_intake(const json& payload) {
  if (!payload.is_object()) throw StudyError(400, "intake payload must be a JSON object");
  std::vector<std::string> bad;
  data::SubjectInfo s;
  if (payload.contains("age") && payload["age"].is_number() && payload["age"].get<double>() >= 0 &&
      payload["age"].get<double>() < 150) {
    s.age = payload["age"].get<double>();
  } else {
    bad.emplace_back("age");
  }
  if (payload.contains("gender") && payload["gender"].is_number_integer() && payload["gender"].get<int>() >= -1 &&
      payload["gender"].get<int>() <= 1) {
    s.gender = payload["gender"].get<int>();
  } else {
    bad.emplace_back("gender");
  }
  if (!payload.contains("equipment_label") || payload["equipment_label"].is_null()) {
    s.equipment_label.clear();
  } else if (payload["equipment_label"].is_string()) {
    s.equipment_label = payload["equipment_label"].get<std::string>();
  } else {
    bad.emplace_back("equipment_label");
  }
  s.impedance = optional_spec(payload, "impedance", bad);
  s.freq_low = optional_spec(payload, "freq_low", bad);
  s.freq_high = optional_spec(payload, "freq_high", bad);
  s.sensitivity = optional_spec(payload, "sensitivity", bad);
  if (!bad.empty()) {
    std::string list;
    for (const auto& f : bad) list += (list.empty() ? "" : ", ") + f;
    throw StudyError(400, "invalid intake fields: " + list, bad);
  }
  return s;
}

ListeningStudy::ListeningStudy(std::vector<data::PairSpec> pairs, std::filesystem::path log_path)
    : log_path_(std::move(log_path)) {
  for (auto& p : pairs) questionnaires_[p.questionnaire_id].push_back(std::move(p));
  if (questionnaires_.empty()) throw ValidationError("listening study: no questionnaires");
  for (const auto& [id, qs] : questionnaires_) {
    if (qs.size() != kPairsPerQuestionnaire) {
      throw ValidationError("listening study: questionnaire " + std::to_string(id) + " has " +
                            std::to_string(qs.size()) + " pairs, expected 14");
    }
    counts_[id] = 0;
  }
  if (log_path_.has_parent_path()) std::filesystem::create_directories(log_path_.parent_path());
  replay();
  log_fd_ = ::open(log_path_.c_str(), O_WRONLY | O_CREAT | O_APPEND | O_CLOEXEC, 0644);
  if (log_fd_ < 0) throw Error("cannot open event log " + log_path_.string() + ": " + std::strerror(errno));
}

ListeningStudy::~ListeningStudy() {
  if (log_fd_ >= 0) ::close(log_fd_);
}

void ListeningStudy::replay() {
  std::ifstream in(log_path_, std::ios::binary);
  if (!in) return;
  std::string line;
  std::size_t line_no = 0;
  std::uintmax_t good_end = 0;  // byte offset just past the last complete event
  while (std::getline(in, line)) {
    ++line_no;
    const bool complete = !in.eof();
    if (line.empty() && complete) {
      good_end += 1;
      continue;
    }
    const auto e = json::parse(line, nullptr, false);
    if (e.is_discarded() || !complete) {
      // A torn final line is a write that was never acknowledged; drop it so
      // the next append starts on a fresh line.
      if (!complete || in.peek() == std::char_traits<char>::eof()) {
        in.close();
        std::filesystem::resize_file(log_path_, good_end);
        return;
      }
      throw FormatError(log_path_.string() + ":" + std::to_string(line_no) + ": malformed event");
    }
    good_end += line.size() + 1;
    try {
      const auto type = e.at("event").get<std::string>();
      if (type == "session") {
        Session s;
        s.session_id = e.at("session_id").get<std::string>();
        s.questionnaire_id = e.at("questionnaire_id").get<int>();
        s.created_at = e.at("created_at").get<std::string>();
        s.subject = parse_intake(e.at("subject"));
        for (const auto& p : e.at("pairs")) s.pairs.push_back(pair_from_json(p, s.questionnaire_id));
        apply_session(std::move(s));
      } else if (type == "answer") {
        const auto id = e.at("session_id").get<std::string>();
        find(id);
        apply_answer(id, e.at("pair_id").get<std::string>(), e.at("raw_score").get<int>());
      } else {
        throw FormatError("unknown event '" + type + "'");
      }
    } catch (const json::exception& ex) {
      throw FormatError(log_path_.string() + ":" + std::to_string(line_no) + ": " + ex.what());
    } catch (const StudyError& ex) {
      throw FormatError(log_path_.string() + ":" + std::to_string(line_no) + ": " + ex.what());
    }
  }
}

void ListeningStudy::append(const json& event) {
  const std::string line = event.dump() + "\n";
  std::size_t done = 0;
  while (done < line.size()) {
    const auto n = ::write(log_fd_, line.data() + done, line.size() - done);
    if (n < 0) {
      if (errno == EINTR) continue;
      throw Error("event log write failed: " + std::string(std::strerror(errno)));
    }
    done += static_cast<std::size_t>(n);
  }
  if (::fsync(log_fd_) != 0) throw Error("event log fsync failed: " + std::string(std::strerror(errno)));
}

void ListeningStudy::apply_session(Session s) {
  if (by_id_.contains(s.session_id)) throw StudyError(409, "duplicate session " + s.session_id);
  if (!counts_.contains(s.questionnaire_id)) {
    throw StudyError(400, "unknown questionnaire " + std::to_string(s.questionnaire_id));
  }
  ++counts_[s.questionnaire_id];
  by_id_.emplace(s.session_id, sessions_.size());
  sessions_.push_back(std::move(s));
}

namespace {

void check_answer(const Session& s, const std::string& pair_id, int raw_score) {
  if (raw_score < 1 || raw_score > 5) {
    throw StudyError(400, "raw_score " + std::to_string(raw_score) + " outside 1..5", {"raw_score"});
  }
  if (s.answered.contains(pair_id)) throw StudyError(409, "pair " + pair_id + " already answered");
  const bool known =
      std::any_of(s.pairs.begin(), s.pairs.end(), [&](const data::PairSpec& p) { return p.pair_id == pair_id; });
  if (!known) throw StudyError(404, "pair " + pair_id + " is not part of this session");
  const auto& current = s.pairs[s.cursor()].pair_id;
  if (current != pair_id) {
    throw StudyError(409, "pair " + pair_id + " is not the current pair (expected " + current + ")");
  }
}

}  // namespace

void ListeningStudy::apply_answer(const std::string& session_id, const std::string& pair_id, int raw_score) {
  auto& s = sessions_[by_id_.at(session_id)];
  check_answer(s, pair_id, raw_score);
  s.answered.emplace(pair_id, raw_score);
}

const Session& ListeningStudy::find(const std::string& session_id) const {
  auto it = by_id_.find(session_id);
  if (it == by_id_.end()) throw StudyError(404, "unknown session " + session_id);
  return sessions_[it->second];
}

std::string ListeningStudy::create_session(const json& payload) {
  Session s;
  s.subject = parse_intake(payload);
  s.session_id = new_session_id();
  s.created_at = now_iso8601();
  std::unique_lock lock(mutex_);
  // Least-used questionnaire; ties go to the lowest id.
  int best = counts_.begin()->first;
  for (const auto& [id, n] : counts_) {
    if (n < counts_.at(best)) best = id;
  }
  s.questionnaire_id = best;
  s.pairs = questionnaires_.at(best);
  json pairs = json::array();
  for (const auto& p : s.pairs) pairs.push_back(pair_to_json(p));
  json subject = data::subject_to_json(s.subject);
  subject.erase("kind");
  subject.erase("subject_id");
  append({{"event", "session"},
          {"session_id", s.session_id},
          {"questionnaire_id", s.questionnaire_id},
          {"created_at", s.created_at},
          {"subject", subject},
          {"pairs", pairs}});
  std::string id = s.session_id;
  apply_session(std::move(s));
  return id;
}

NextPair ListeningStudy::next_pair(const std::string& session_id) const {
  std::shared_lock lock(mutex_);
  const auto& s = find(session_id);
  NextPair n;
  n.total = s.pairs.size();
  n.index = s.cursor();
  if (n.index < s.pairs.size()) n.pair = s.pairs[n.index];
  return n;
}

Ack ListeningStudy::submit_answer(const std::string& session_id, const std::string& pair_id, int raw_score) {
  std::unique_lock lock(mutex_);
  // Check before logging so a rejected answer never reaches the log.
  check_answer(find(session_id), pair_id, raw_score);
  append({{"event", "answer"},
          {"session_id", session_id},
          {"pair_id", pair_id},
          {"raw_score", raw_score},
          {"at", now_iso8601()}});
  apply_answer(session_id, pair_id, raw_score);
  const auto& s = find(session_id);
  return {s.answered.size(), s.pairs.size() - s.answered.size()};
}

data::Corpus ListeningStudy::export_corpus() const {
  std::shared_lock lock(mutex_);
  data::Corpus c;
  for (std::size_t i = 0; i < sessions_.size(); ++i) {
    const auto& s = sessions_[i];
    char id[16];
    std::snprintf(id, sizeof id, "p%04zu", i + 1);
    data::SubjectInfo subject = s.subject;
    subject.subject_id = id;
    c.subjects.push_back(subject);
    for (const auto& p : s.pairs) {
      auto it = s.answered.find(p.pair_id);
      if (it == s.answered.end()) continue;
      data::PreferenceRecord r;
      r.record_id = std::string(id) + "/" + p.pair_id;
      r.subject_id = id;
      r.song_id = p.song_id;
      r.volume = p.volume;
      r.clip_a_id = p.clip_a_id;
      r.clip_b_id = p.clip_b_id;
      r.raw_score = it->second;
      r.translated_score = data::translate_score(it->second);
      r.questionnaire_id = s.questionnaire_id;
      c.records.push_back(std::move(r));
    }
  }
  return c;
}

std::map<int, std::size_t> ListeningStudy::assignment_counts() const {
  std::shared_lock lock(mutex_);
  return counts_;
}

std::size_t ListeningStudy::session_count() const {
  std::shared_lock lock(mutex_);
  return sessions_.size();
}

}  // namespace prefnet::service
