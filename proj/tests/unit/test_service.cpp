#include <climits>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <thread>

#include "doctest.h"
#include "httplib.h"
#include "prefnet/service/server.hpp"
#include "prefnet/service/study.hpp"

using namespace prefnet;
using namespace prefnet::service;
using nlohmann::json;

namespace {

std::vector<data::PairSpec> seven_song_pairs() {
  std::vector<std::string> names;
  for (int song = 1; song <= 7; ++song) {
    for (int dev = 1; dev <= 5; ++dev) {
      names.push_back(data::clip_file_name("song0" + std::to_string(song), "dev" + std::to_string(dev), "max"));
    }
  }
  return data::build_pairs(data::catalog_from_names(names), 3);
}

std::filesystem::path fresh_log(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / "prefnet_service_test";
  std::filesystem::create_directories(dir);
  const auto path = dir / name;
  std::filesystem::remove(path);
  return path;
}

json intake(int age = 27) {
  return {{"age", age},       {"gender", 1},       {"equipment_label", "Acme E2"}, {"impedance", 32},
          {"freq_low", 20},   {"freq_high", 20000}, {"sensitivity", 105}};
}

// Answers the current pair of `id` with `score` and returns the ack.
Ack answer_current(ListeningStudy& study, const std::string& id, int score) {
  const auto next = study.next_pair(id);
  REQUIRE(next.pair.has_value());
  return study.submit_answer(id, next.pair->pair_id, score);
}

}  // namespace

TEST_CASE("intake validation") {
  const auto s = parse_intake(intake());
  CHECK(s.age == 27);
  CHECK(s.impedance == 32);
  CHECK(s.equipment_label == "Acme E2");

  json blank = {{"age", 30}, {"gender", 0}, {"impedance", nullptr}, {"sensitivity", -1}};
  const auto b = parse_intake(blank);
  CHECK(b.impedance == -1);
  CHECK(b.freq_low == -1);
  CHECK(b.freq_high == -1);
  CHECK(b.sensitivity == -1);
  CHECK(b.missing_specs() == 4);

  try {
    parse_intake({{"age", -3}, {"gender", 0}});
    FAIL("negative age accepted");
  } catch (const StudyError& e) {
    CHECK(e.status() == 400);
    CHECK(e.fields() == std::vector<std::string>{"age"});
  }
  try {
    parse_intake({{"gender", "x"}, {"sensitivity", -5}, {"age", 20}});
    FAIL("bad fields accepted");
  } catch (const StudyError& e) {
    CHECK(e.fields() == std::vector<std::string>{"gender", "sensitivity"});
  }
  CHECK_THROWS_AS(parse_intake(json::array()), StudyError);
}

TEST_CASE("questionnaires must hold 14 pairs") {
  auto pairs = seven_song_pairs();
  pairs.pop_back();
  CHECK_THROWS_AS(ListeningStudy(pairs, fresh_log("short.log")), ValidationError);
}

TEST_CASE("session flow") {
  ListeningStudy study(seven_song_pairs(), fresh_log("flow.log"));
  const auto id = study.create_session(intake());

  const auto first = study.next_pair(id);
  REQUIRE(first.pair.has_value());
  CHECK(first.index == 0);
  CHECK(first.total == 14);
  CHECK(study.next_pair(id).pair->pair_id == first.pair->pair_id);

  std::map<std::string, int> per_song;
  std::set<std::string> seen;
  for (int i = 0; i < 14; ++i) {
    const auto next = study.next_pair(id);
    REQUIRE(next.pair.has_value());
    CHECK(next.index == static_cast<std::size_t>(i));
    ++per_song[next.pair->song_id];
    seen.insert(next.pair->pair_id);
    const auto ack = study.submit_answer(id, next.pair->pair_id, 1 + i % 5);
    CHECK(ack.answered == static_cast<std::size_t>(i + 1));
    CHECK(ack.remaining == static_cast<std::size_t>(13 - i));
  }
  CHECK(seen.size() == 14);
  CHECK(per_song.size() == 7);
  for (const auto& [song, n] : per_song) CHECK(n == 2);
  const auto done = study.next_pair(id);
  CHECK_FALSE(done.pair.has_value());
  CHECK(done.index == 14);
}

TEST_CASE("answer refusals") {
  ListeningStudy study(seven_song_pairs(), fresh_log("refusals.log"));
  const auto id = study.create_session(intake());
  const auto first = *study.next_pair(id).pair;

  auto status_of = [&](auto&& fn) {
    try {
      fn();
    } catch (const StudyError& e) {
      return e.status();
    }
    return 200;
  };
  CHECK(status_of([&] { study.submit_answer(id, first.pair_id, 6); }) == 400);
  CHECK(status_of([&] { study.submit_answer(id, first.pair_id, 0); }) == 400);
  CHECK(status_of([&] { study.submit_answer("feedbeef", first.pair_id, 2); }) == 404);
  CHECK(status_of([&] { study.next_pair("feedbeef"); }) == 404);
  CHECK(status_of([&] { study.submit_answer(id, "max/song99/0", 2); }) == 404);

  // Skipping ahead is refused. The first session gets questionnaire 0,
  // which opens the questionnaire-major pair list.
  const auto pairs = seven_song_pairs();
  REQUIRE(pairs[0].pair_id == first.pair_id);
  const auto later = pairs[1].pair_id;
  CHECK(status_of([&] { study.submit_answer(id, later, 2); }) == 409);

  CHECK(status_of([&] { study.submit_answer(id, first.pair_id, 2); }) == 200);
  CHECK(status_of([&] { study.submit_answer(id, first.pair_id, 4); }) == 409);
  CHECK(study.next_pair(id).index == 1);
}

TEST_CASE("questionnaire assignment stays balanced") {
  ListeningStudy study(seven_song_pairs(), fresh_log("balance.log"));
  REQUIRE(study.assignment_counts().size() == 5);
  for (int n = 1; n <= 23; ++n) {
    study.create_session(intake(20 + n));
    std::size_t lo = SIZE_MAX, hi = 0;
    for (const auto& [q, c] : study.assignment_counts()) {
      lo = std::min(lo, c);
      hi = std::max(hi, c);
    }
    CHECK(hi - lo <= 1);
  }
  CHECK(study.session_count() == 23);
}

TEST_CASE("export") {
  SUBCASE("no sessions gives an empty, loadable corpus") {
    ListeningStudy study(seven_song_pairs(), fresh_log("empty.log"));
    const auto c = study.export_corpus();
    CHECK(c.subjects.empty());
    CHECK(c.records.empty());
    std::istringstream in(data::format_corpus(c));
    CHECK(data::parse_corpus(in) == c);
  }
  SUBCASE("one completed session gives one subject and 14 records") {
    ListeningStudy study(seven_song_pairs(), fresh_log("one.log"));
    const auto id = study.create_session(intake());
    for (int i = 0; i < 14; ++i) answer_current(study, id, i == 0 ? 2 : 5);
    const auto c = study.export_corpus();
    REQUIRE(c.subjects.size() == 1);
    REQUIRE(c.records.size() == 14);
    CHECK(c.records[0].raw_score == 2);
    CHECK(c.records[0].translated_score == -1);
    for (const auto& r : c.records) {
      CHECK(r.subject_id == c.subjects[0].subject_id);
      CHECK(r.questionnaire_id == c.records[0].questionnaire_id);
    }
  }
  SUBCASE("mixed fixture survives the corpus reader and exclusion filter") {
    ListeningStudy study(seven_song_pairs(), fresh_log("mixed.log"));
    const auto full = study.create_session(intake());
    json no_specs = {{"age", 41}, {"gender", 0}};
    const auto blank = study.create_session(no_specs);
    const auto other = study.create_session(intake(33));
    for (int i = 0; i < 14; ++i) answer_current(study, full, i < 4 ? 3 : 1);
    for (int i = 0; i < 5; ++i) answer_current(study, blank, 4);
    for (int i = 0; i < 3; ++i) answer_current(study, other, 5);

    const auto exported = study.export_corpus();
    CHECK(exported.subjects.size() == 3);
    CHECK(exported.records.size() == 22);
    const auto path = fresh_log("mixed_export.jsonl");
    data::write_corpus(path, exported);
    const auto loaded = data::read_corpus(path);
    CHECK(loaded == exported);
    const auto filtered = data::filter_corpus(loaded);
    CHECK(filtered.report.excluded_subjects.size() == 1);
    CHECK(filtered.report.records_of_excluded_subjects == 5);
    CHECK(filtered.report.records_no_preference == 4);
    CHECK(filtered.report.records_kept == 13);
  }
}

TEST_CASE("the event log survives restarts") {
  const auto log = fresh_log("restart.log");
  std::string id;
  std::string exported;
  {
    ListeningStudy study(seven_song_pairs(), log);
    id = study.create_session(intake());
    for (int i = 0; i < 7; ++i) answer_current(study, id, 1 + i % 5);
    exported = data::format_corpus(study.export_corpus());
  }
  {
    ListeningStudy study(seven_song_pairs(), log);
    CHECK(study.next_pair(id).index == 7);
    CHECK(data::format_corpus(study.export_corpus()) == exported);
    for (int i = 7; i < 14; ++i) answer_current(study, id, 2);
  }
  {
    // A torn final write is dropped and later appends start on a new line.
    std::ofstream(log, std::ios::app) << R"({"event":"answer","session_id":")";
    ListeningStudy study(seven_song_pairs(), log);
    CHECK_FALSE(study.next_pair(id).pair.has_value());
    study.create_session(intake(50));
  }
  {
    ListeningStudy study(seven_song_pairs(), log);
    CHECK(study.session_count() == 2);
    CHECK(study.export_corpus().records.size() == 14);
  }
  {
    const auto bad = fresh_log("corrupt.log");
    std::ofstream(bad) << "not json\n{}\n";
    CHECK_THROWS_AS(ListeningStudy(seven_song_pairs(), bad), FormatError);
  }
}

TEST_CASE("HTTP interface") {
  const auto audio = std::filesystem::temp_directory_path() / "prefnet_service_audio";
  std::filesystem::create_directories(audio);
  std::ofstream(audio / "song01__dev1__max.wav", std::ios::binary) << "RIFFdata";

  ListeningStudy study(seven_song_pairs(), fresh_log("http.log"));
  StudyServer server(study, audio);
  const int port = server.bind("127.0.0.1", 0);
  std::thread runner([&] { server.run(); });
  httplib::Client client("127.0.0.1", port);

  auto post = [&](const std::string& path, const json& body) {
    auto r = client.Post(path, body.dump(), "application/json");
    REQUIRE(r);
    return std::make_pair(r->status, json::parse(r->body));
  };

  auto [created_status, created] = post("/api/sessions", intake());
  CHECK(created_status == 201);
  const std::string id = created["session_id"];
  CHECK(created["next"]["position"] == 1);
  CHECK(created["next"]["total"] == 14);
  CHECK(created["next"]["pair"]["clip_a_url"].get<std::string>().starts_with("/audio/"));

  auto [bad_status, bad] = post("/api/sessions", {{"age", -1}, {"gender", 0}});
  CHECK(bad_status == 400);
  CHECK(bad["fields"] == json::array({"age"}));
  CHECK(client.Post("/api/sessions", "{oops", "application/json")->status == 400);

  const std::string first = created["next"]["pair"]["pair_id"];
  CHECK(post("/api/sessions/" + id + "/answers", {{"pair_id", first}, {"raw_score", 6}}).first == 400);
  CHECK(post("/api/sessions/" + id + "/answers", {{"pair_id", first}}).first == 400);
  CHECK(post("/api/sessions/abc123/answers", {{"pair_id", first}, {"raw_score", 2}}).first == 404);
  CHECK(client.Get("/api/sessions/abc123/next")->status == 404);

  json next = created["next"];
  for (int i = 0; i < 14; ++i) {
    auto again = client.Get("/api/sessions/" + id + "/next");
    REQUIRE(again);
    CHECK(json::parse(again->body) == next);
    auto [status, ack] = post("/api/sessions/" + id + "/answers", {{"pair_id", next["pair"]["pair_id"]}, {"raw_score", 5}});
    CHECK(status == 200);
    CHECK(ack["answered"] == i + 1);
    next = ack["next"];
  }
  CHECK(next["done"] == true);
  CHECK(post("/api/sessions/" + id + "/answers", {{"pair_id", first}, {"raw_score", 2}}).first == 409);

  auto exported = client.Get("/api/export");
  REQUIRE(exported);
  CHECK(exported->status == 200);
  std::istringstream in(exported->body);
  const auto corpus = data::parse_corpus(in);
  CHECK(corpus.subjects.size() == 1);
  CHECK(corpus.records.size() == 14);

  auto wav = client.Get("/audio/song01__dev1__max.wav");
  REQUIRE(wav);
  CHECK(wav->status == 200);
  CHECK(wav->body == "RIFFdata");
  CHECK(client.Get("/audio/missing.wav")->status == 404);
  CHECK(client.Get("/audio/..%2Fhttp.log")->status == 404);

  server.stop();
  runner.join();
}
