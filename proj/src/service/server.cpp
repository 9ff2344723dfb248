// Copyright 2026 The prefnet Authors
// SPDX-License-Identifier: Apache-2.0

#include "prefnet/service/server.hpp"

#include <fstream>
#include <sstream>

#include "httplib.h"

namespace prefnet::service {

using nlohmann::json;

namespace {

constexpr const char* kJson = "application/json";

json next_json(const NextPair& n) {
  json j = {{"done", !n.pair.has_value()}, {"total", n.total}, {"answered", n.index}};
  if (n.pair) {
    const auto& p = *n.pair;
    j["position"] = n.index + 1;
    j["pair"] = {{"pair_id", p.pair_id},
                 {"song_id", p.song_id},
                 {"volume", p.volume},
                 {"clip_a_url", "/audio/" + p.clip_a_id},
                 {"clip_b_url", "/audio/" + p.clip_b_id},
                 {"swapped", p.swapped}};
  }
  return j;
}

void reply(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), kJson);
}

void refuse(httplib::Response& res, const StudyError& e) {
  reply(res, e.status(), {{"error", e.what()}, {"fields", e.fields()}});
}

json parse_body(const httplib::Request& req) {
  auto j = json::parse(req.body, nullptr, false);
  if (j.is_discarded() || !j.is_object()) throw StudyError(400, "request body must be a JSON object");
  return j;
}

// Runs `fn`, turning refusals into their status and anything else into 500.
template <typename Fn>
void guarded(httplib::Response& res, Fn&& fn) {
  try {
    fn();
  } catch (const StudyError& e) {
    refuse(res, e);
  } catch (const std::exception& e) {
    reply(res, 500, {{"error", e.what()}, {"fields", json::array()}});
  }
}

bool safe_file_name(const std::string& name) {
  return !name.empty() && name.find('/') == std::string::npos && name.find('\\') == std::string::npos &&
         name.find("..") == std::string::npos && name.size() > 4 && name.ends_with(".wav");
}

}  // namespace

struct StudyServer::Impl {
  Impl(ListeningStudy& s, std::filesystem::path dir) : study(s), audio_dir(std::move(dir)) {}
  ListeningStudy& study;
  std::filesystem::path audio_dir;
  httplib::Server http;
};

StudyServer::StudyServer(ListeningStudy& study, std::filesystem::path audio_dir)
    : impl_(std::make_unique<Impl>(study, std::move(audio_dir))) {
  auto& http = impl_->http;
  auto* impl = impl_.get();

  http.Post("/api/sessions", [impl](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      const auto id = impl->study.create_session(parse_body(req));
      const auto next = impl->study.next_pair(id);
      reply(res, 201, {{"session_id", id}, {"next", next_json(next)}});
    });
  });

  http.Get(R"(/api/sessions/([0-9a-f]+)/next)", [impl](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] { reply(res, 200, next_json(impl->study.next_pair(req.matches[1]))); });
  });

  http.Post(R"(/api/sessions/([0-9a-f]+)/answers)", [impl](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      const auto body = parse_body(req);
      std::vector<std::string> bad;
      if (!body.contains("pair_id") || !body["pair_id"].is_string()) bad.emplace_back("pair_id");
      if (!body.contains("raw_score") || !body["raw_score"].is_number_integer()) bad.emplace_back("raw_score");
      if (!bad.empty()) throw StudyError(400, "answer needs a string pair_id and an integer raw_score", bad);
      const std::string id = req.matches[1];
      const auto ack =
          impl->study.submit_answer(id, body["pair_id"].get<std::string>(), body["raw_score"].get<int>());
      reply(res, 200,
            {{"answered", ack.answered}, {"remaining", ack.remaining}, {"next", next_json(impl->study.next_pair(id))}});
    });
  });

  http.Get("/api/export", [impl](const httplib::Request&, httplib::Response& res) {
    guarded(res, [&] {
      res.status = 200;
      res.set_content(data::format_corpus(impl->study.export_corpus()), "application/x-ndjson");
    });
  });

  http.Get(R"(/audio/([^/]+))", [impl](const httplib::Request& req, httplib::Response& res) {
    const std::string name = req.matches[1];
    std::ifstream in;
    if (safe_file_name(name)) in.open(impl->audio_dir / name, std::ios::binary);
    if (!in.is_open()) {
      reply(res, 404, {{"error", "no such audio file"}, {"fields", json::array()}});
      return;
    }
    std::ostringstream buf;
    buf << in.rdbuf();
    res.status = 200;
    res.set_content(buf.str(), "audio/wav");
  });
}

StudyServer::~StudyServer() { stop(); }

int StudyServer::bind(const std::string& host, int port) {
  if (port == 0) {
    const int bound = impl_->http.bind_to_any_port(host);
    if (bound <= 0) throw Error("cannot bind " + host);
    return bound;
  }
  if (!impl_->http.bind_to_port(host, port)) throw Error("cannot bind " + host + ":" + std::to_string(port));
  return port;
}

void StudyServer::run() {
  if (!impl_->http.listen_after_bind()) throw Error("server stopped with an error");
}

void StudyServer::stop() {
  if (impl_) impl_->http.stop();
}

}  // namespace prefnet::service
