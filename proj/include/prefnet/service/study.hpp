// Copyright 2026 The prefnet Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <shared_mutex>
#include <string>
#include <vector>

#include "json.hpp"
#include "prefnet/core/error.hpp"
#include "prefnet/data/corpus.hpp"
#include "prefnet/data/pairs.hpp"

namespace prefnet::service {

inline constexpr std::size_t kPairsPerQuestionnaire = 14;

/// A request the study refuses; `status` is the HTTP status to answer with.
class StudyError : public Error {
 public:
  StudyError(int status, const std::string& what, std::vector<std::string> fields = {})
      : Error(what), status_(status), fields_(std::move(fields)) {}
  int status() const { return status_; }
  const std::vector<std::string>& fields() const { return fields_; }

 private:
  int status_;
  std::vector<std::string> fields_;
};

struct Session {
  std::string session_id;
  data::SubjectInfo subject;
  int questionnaire_id = 0;
  std::vector<data::PairSpec> pairs;  // presentation order, clip order fixed
  std::map<std::string, int> answered;  // pair_id -> raw score
  std::string created_at;

  /// Index of the first unanswered pair, or pairs.size() when done.
  std::size_t cursor() const;
};

/// What the subject is asked next.
struct NextPair {
  std::optional<data::PairSpec> pair;  // empty when every pair is answered
  std::size_t index = 0;               // 0-based position of `pair`
  std::size_t total = 0;
};

struct Ack {
  std::size_t answered = 0;
  std::size_t remaining = 0;
};

/// The questionnaire protocol with an append-only event log. Every accepted
/// session and answer is written and fsync'd before the call returns, and
/// the log is replayed when the study is opened, so acknowledged work
/// survives a crash. Safe for concurrent use.
class ListeningStudy {
 public:
  /// `pairs` come from build_pairs; every questionnaire must hold 14 pairs.
  /// Replays `log_path` if it exists and creates it otherwise.
  ListeningStudy(std::vector<data::PairSpec> pairs, std::filesystem::path log_path);
  ~ListeningStudy();
  ListeningStudy(const ListeningStudy&) = delete;
  ListeningStudy& operator=(const ListeningStudy&) = delete;

  /// Validates the intake payload (age, gender, equipment_label and the four
  /// optional specs impedance, freq_low, freq_high, sensitivity; absent,
  /// null or -1 specs are stored as -1) and assigns the least-used
  /// questionnaire.
  std::string create_session(const nlohmann::json& payload);

  NextPair next_pair(const std::string& session_id) const;

  /// Accepts `raw_score` (1..5) for the session's current pair.
  Ack submit_answer(const std::string& session_id, const std::string& pair_id, int raw_score);

  /// All subjects in session order and every answered pair, as a corpus.
  data::Corpus export_corpus() const;

  /// Sessions assigned to each questionnaire id.
  std::map<int, std::size_t> assignment_counts() const;
  std::size_t session_count() const;

 private:
  void replay();
  void append(const nlohmann::json& event);
  void apply_session(Session s);
  void apply_answer(const std::string& session_id, const std::string& pair_id, int raw_score);
  const Session& find(const std::string& session_id) const;

  std::map<int, std::vector<data::PairSpec>> questionnaires_;
  std::filesystem::path log_path_;
  int log_fd_ = -1;
  mutable std::shared_mutex mutex_;
  std::vector<Session> sessions_;  // creation order
  std::map<std::string, std::size_t> by_id_;
  std::map<int, std::size_t> counts_;
};

/// Parses the intake payload; throws StudyError(400) naming every bad field.
data::SubjectInfo parse_intake(const nlohmann::json& payload);

}  // namespace prefnet::service
