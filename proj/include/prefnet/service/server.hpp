// Copyright 2026 The prefnet Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <memory>
#include <string>

#include "prefnet/service/study.hpp"

namespace prefnet::service {

/// HTTP+JSON front of a ListeningStudy:
///   POST /api/sessions               intake -> session id and first pair
///   GET  /api/sessions/{id}/next     current pair, or done
///   POST /api/sessions/{id}/answers  {"pair_id", "raw_score"}
///   GET  /api/export                 corpus JSONL
///   GET  /audio/{file}               WAV files from the audio directory
/// Refusals answer {"error", "fields"} with status 400, 404 or 409.
class StudyServer {
 public:
  StudyServer(ListeningStudy& study, std::filesystem::path audio_dir);
  ~StudyServer();
  StudyServer(const StudyServer&) = delete;
  StudyServer& operator=(const StudyServer&) = delete;

  /// Binds `host:port` (port 0 picks a free port) and returns the bound port.
  int bind(const std::string& host, int port);
  /// Serves until stop() is called. Requires a successful bind().
  void run();
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace prefnet::service
