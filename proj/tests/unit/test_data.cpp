#include <algorithm>
#include <cmath>
#include <map>
#include <random>
#include <set>
#include <sstream>

#include "doctest.h"
#include "prefnet/core/error.hpp"
#include "prefnet/data/corpus.hpp"
#include "prefnet/data/folds.hpp"
#include "prefnet/data/pairs.hpp"
#include "prefnet/data/subject.hpp"
#include "prefnet/data/synth.hpp"

using namespace prefnet;
using namespace prefnet::data;

namespace {

SubjectInfo subject(std::string id, double age, int missing = 0) {
  SubjectInfo s;
  s.subject_id = std::move(id);
  s.age = age;
  s.gender = 0;
  s.impedance = missing > 0 ? -1 : 32;
  s.freq_low = missing > 1 ? -1 : 20;
  s.freq_high = missing > 2 ? -1 : 20000;
  s.sensitivity = missing > 3 ? -1 : 105;
  s.equipment_label = "model " + s.subject_id;
  return s;
}

PreferenceRecord record(const std::string& subject_id, int raw, int n) {
  PreferenceRecord r;
  r.record_id = subject_id + "-" + std::to_string(n);
  r.subject_id = subject_id;
  r.song_id = "song01";
  r.volume = "max";
  r.clip_a_id = "song01__dev1__max.wav";
  r.clip_b_id = "song01__dev2__max.wav";
  r.raw_score = raw;
  r.translated_score = raw - 3;
  return r;
}

std::vector<ClipGroup> catalog(int songs, int devices, const std::vector<std::string>& volumes) {
  std::vector<std::string> names;
  for (const auto& v : volumes)
    for (int s = 1; s <= songs; ++s)
      for (int d = 1; d <= devices; ++d) names.push_back(clip_file_name("song0" + std::to_string(s), "dev" + std::to_string(d), v));
  return catalog_from_names(names);
}

}  // namespace

TEST_CASE("subject_vector") {
  SubjectInfo s;
  s.age = 25;
  s.gender = 0;
  s.impedance = 32;
  s.freq_low = 20;
  s.freq_high = 20000;
  s.sensitivity = 105;
  CHECK(subject_vector(s) == SubjectVector{25, 0, 32, 20, 20000, 105});
  CHECK(subject_vector(s, parse_feature_mask("age_gender")) == SubjectVector{25, 0, -1, -1, -1, -1});
  CHECK(subject_vector(s, parse_feature_mask("all_specs")) == SubjectVector{-1, -1, 32, 20, 20000, 105});
  CHECK(subject_vector(s, parse_feature_mask("impd_sensit")) == SubjectVector{-1, -1, 32, -1, -1, 105});
  CHECK(subject_vector(s, parse_feature_mask("freq_responses")) == SubjectVector{-1, -1, -1, 20, 20000, -1});
  s.impedance = -1;
  CHECK(subject_vector(s)[2] == -1);
  CHECK_THROWS_WITH_AS(parse_feature_mask("everything"), doctest::Contains("age_gender"), ValidationError);
  for (auto name : {"all", "age_gender", "all_specs", "impd_sensit", "freq_responses"}) {
    CHECK(feature_mask_name(parse_feature_mask(name)) == name);
  }
}

TEST_CASE("translate_score") {
  CHECK(translate_score(1) == -2);
  CHECK(translate_score(3) == 0);
  CHECK(translate_score(5) == 2);
  std::set<int> image;
  for (int r = 1; r <= 5; ++r) {
    image.insert(translate_score(r));
    CHECK(translate_score(6 - r) == -translate_score(r));
  }
  CHECK(image == std::set<int>{-2, -1, 0, 1, 2});
  CHECK_THROWS_AS(translate_score(0), ValidationError);
  CHECK_THROWS_AS(translate_score(6), ValidationError);
  CHECK(preference_label(-2) == 0);
  CHECK(preference_label(1) == 1);
  CHECK_THROWS_AS(preference_label(0), ValidationError);
}

TEST_CASE("filter_corpus") {
  SUBCASE("spec and no-preference rules") {
    Corpus c;
    c.subjects = {subject("a", 20, 0), subject("b", 21, 2), subject("c", 22, 3), subject("d", 23, 4)};
    int n = 0;
    for (const auto& id : {"a", "b", "c", "d"})
      for (int raw : {1, 2, 3, 4, 5}) c.records.push_back(record(id, raw, n++));
    const auto [kept, rep] = filter_corpus(c);
    // a and b survive (0 and 2 of 4 missing), c and d do not.
    CHECK(rep.excluded_subjects == std::vector<std::string>{"c", "d"});
    REQUIRE(kept.subjects.size() == 2);
    CHECK(rep.records_in == 20);
    CHECK(rep.records_of_excluded_subjects == 10);
    CHECK(rep.records_no_preference == 2);
    CHECK(rep.records_kept == 8);
    CHECK(rep.kept_strong == 4);
    CHECK(rep.kept_weak == 4);
    for (const auto& r : kept.records) CHECK(r.translated_score != 0);
  }
  SUBCASE("tally-shaped fixture splits kept answers by magnitude") {
    Corpus c;
    for (int i = 0; i < 23; ++i) c.subjects.push_back(subject("k" + std::to_string(i), 20 + i, i % 3));
    for (int i = 0; i < 8; ++i) c.subjects.push_back(subject("x" + std::to_string(i), 30 + i, 3 + i % 2));
    // 2000 informative answers among kept subjects: 936 strong, 1064 weak,
    // plus no-preference answers and answers from excluded subjects.
    int n = 0;
    for (int i = 0; i < 2000; ++i) {
      const int raw = i < 936 ? (i % 2 ? 1 : 5) : (i % 2 ? 2 : 4);
      c.records.push_back(record("k" + std::to_string(i % 23), raw, n++));
    }
    for (int i = 0; i < 500; ++i) c.records.push_back(record("k" + std::to_string(i % 23), 3, n++));
    for (int i = 0; i < 356; ++i) c.records.push_back(record("x" + std::to_string(i % 8), 1 + i % 5, n++));
    const auto [kept, rep] = filter_corpus(c);
    CHECK(rep.records_in == 2856);
    CHECK(kept.subjects.size() == 23);
    CHECK(rep.records_kept == 2000);
    CHECK(rep.kept_strong == 936);
    CHECK(rep.kept_weak == 1064);
  }
}

TEST_CASE("clip names and catalog") {
  auto n = parse_clip_name("song01__dev3__max.wav");
  REQUIRE(n);
  CHECK(n->song_id == "song01");
  CHECK(n->device_id == "dev3");
  CHECK(n->volume == "max");
  CHECK_FALSE(parse_clip_name("song01__dev3.wav"));
  CHECK_FALSE(parse_clip_name("song01__dev3__max.mp3"));
  CHECK_FALSE(parse_clip_name("a__b__c__d.wav"));
  const auto groups = catalog(2, 5, {"normal", "max"});
  REQUIRE(groups.size() == 4);
  CHECK(groups[0].volume == "max");
  CHECK(groups[0].clip_ids.size() == 5);
}

TEST_CASE("build_pairs") {
  SUBCASE("one song of five clips forms ten pairs") {
    const auto pairs = build_pairs(catalog(1, 5, {"max"}), 1);
    CHECK(pairs.size() == 10);
    std::set<std::pair<std::string, std::string>> unordered;
    for (const auto& p : pairs) unordered.insert(std::minmax(p.clip_a_id, p.clip_b_id));
    CHECK(unordered.size() == 10);
  }
  SUBCASE("seven songs and two volumes") {
    const auto pairs = build_pairs(catalog(7, 5, {"max", "normal"}), 7);
    CHECK(pairs.size() == 140);
    std::map<std::string, int> per_volume;
    std::map<int, std::map<std::string, int>> songs_per_q;
    std::map<int, std::set<std::string>> volumes_per_q;
    std::size_t swapped = 0;
    for (const auto& p : pairs) {
      per_volume[p.volume]++;
      songs_per_q[p.questionnaire_id][p.song_id]++;
      volumes_per_q[p.questionnaire_id].insert(p.volume);
      const auto a = parse_clip_name(p.clip_a_id), b = parse_clip_name(p.clip_b_id);
      CHECK(a->song_id == p.song_id);
      CHECK(b->song_id == p.song_id);
      CHECK(a->volume == b->volume);
      CHECK(a->device_id != b->device_id);
      swapped += p.swapped;
    }
    CHECK(per_volume["max"] == 70);
    CHECK(per_volume["normal"] == 70);
    CHECK(questionnaire_count(pairs) == 10);
    for (const auto& [q, songs] : songs_per_q) {
      CHECK(songs.size() == 7);
      int total = 0;
      for (const auto& [song, count] : songs) {
        CHECK(count == 2);
        total += count;
      }
      CHECK(total == 14);
      CHECK(volumes_per_q[q].size() == 1);
    }
    // Presentation order is randomised: both orders occur.
    CHECK(swapped > 30);
    CHECK(swapped < 110);
    CHECK(pairs.size() == build_pairs(catalog(7, 5, {"max", "normal"}), 7).size());
    const auto again = build_pairs(catalog(7, 5, {"max", "normal"}), 7);
    for (std::size_t i = 0; i < pairs.size(); ++i) CHECK(pairs[i].clip_a_id == again[i].clip_a_id);
  }
  SUBCASE("wrong clip count is rejected") {
    CHECK_THROWS_AS(build_pairs(catalog(1, 4, {"max"}), 1), ValidationError);
  }
}

TEST_CASE("make_folds") {
  std::vector<SubjectInfo> subjects;
  std::mt19937_64 rng(2);
  for (int i = 0; i < 23; ++i) subjects.push_back(subject("s" + std::to_string(100 + i), std::uniform_int_distribution<int>(21, 46)(rng)));
  const auto plan = make_folds(subjects);
  CHECK(plan.sizes() == std::vector<std::size_t>{4, 4, 3, 3, 3, 3, 3});

  SUBCASE("folds are contiguous in age order") {
    std::vector<std::pair<double, std::string>> sorted;
    for (const auto& s : subjects) sorted.push_back({s.age, s.subject_id});
    std::sort(sorted.begin(), sorted.end());
    std::size_t pos = 0;
    for (const auto& fold : plan.folds)
      for (const auto& id : fold) CHECK(id == sorted[pos++].second);
  }
  SUBCASE("permutation invariant") {
    auto shuffled = subjects;
    std::shuffle(shuffled.begin(), shuffled.end(), rng);
    CHECK(make_folds(shuffled).folds == plan.folds);
  }
  SUBCASE("rotations partition the subjects without leakage") {
    for (int k = 0; k < 7; ++k) {
      const auto r = rotation(plan, k);
      CHECK(r.val_fold == (k + 1) % 7);
      std::set<std::string> test(r.test.begin(), r.test.end()), val(r.val.begin(), r.val.end()),
          train(r.train.begin(), r.train.end());
      std::set<std::string> all = test;
      all.insert(val.begin(), val.end());
      all.insert(train.begin(), train.end());
      CHECK(all.size() == 23);
      CHECK(test.size() + val.size() + train.size() == 23);
    }
    CHECK(rotation(plan, 6).val_fold == 0);
  }
  SUBCASE("too few subjects") {
    subjects.resize(7);
    CHECK_THROWS_AS(make_folds(subjects), ValidationError);
  }
}

TEST_CASE("corpus JSONL") {
  Corpus c;
  c.subjects = {subject("a", 25), subject("b", 31, 2)};
  c.subjects[0].extra = {{"headphone_brand", "Acme"}, {"notes", {1, 2}}};
  c.records = {record("a", 2, 0), record("b", 5, 1)};
  c.records[1].extra = {{"latency_ms", 812}};
  c.records[1].questionnaire_id = 4;

  SUBCASE("round trip is lossless") {
    std::istringstream in(format_corpus(c));
    CHECK(parse_corpus(in) == c);
    const auto path = std::filesystem::temp_directory_path() / "prefnet_corpus.jsonl";
    write_corpus(path, c);
    CHECK(read_corpus(path) == c);
    std::filesystem::remove(path);
  }
  SUBCASE("missing raw_score is reported at its line") {
    auto text = format_corpus(c);
    auto lines = std::vector<std::string>{};
    std::istringstream split(text);
    for (std::string l; std::getline(split, l);) lines.push_back(l);
    auto j = nlohmann::json::parse(lines[2]);
    j.erase("raw_score");
    lines[2] = j.dump();
    std::string joined;
    for (const auto& l : lines) joined += l + "\n";
    std::istringstream in(joined);
    CHECK_THROWS_WITH_AS(parse_corpus(in, "c.jsonl"), doctest::Contains("c.jsonl:3: missing field 'raw_score'"), FormatError);
  }
  SUBCASE("out-of-range score is a validation error") {
    auto bad = c;
    bad.records[0].raw_score = 6;
    bad.records[0].translated_score = 3;
    std::istringstream in(format_corpus(bad));
    CHECK_THROWS_WITH_AS(parse_corpus(in, "c.jsonl"), doctest::Contains("c.jsonl:3:"), ValidationError);
  }
  SUBCASE("inconsistent translation and dangling subjects") {
    auto bad = c;
    bad.records[0].translated_score = 1;
    std::istringstream in(format_corpus(bad));
    CHECK_THROWS_AS(parse_corpus(in), ValidationError);
    auto dangling = c;
    dangling.records[0].subject_id = "zz";
    std::istringstream in2(format_corpus(dangling));
    CHECK_THROWS_WITH_AS(parse_corpus(in2), doctest::Contains("zz"), ValidationError);
  }
  SUBCASE("garbage lines") {
    std::istringstream in("{\"kind\":\"subject\"\n");
    CHECK_THROWS_AS(parse_corpus(in), FormatError);
    std::istringstream in2("{\"kind\":\"alien\"}\n");
    CHECK_THROWS_AS(parse_corpus(in2), FormatError);
  }
}

TEST_CASE("synthetic generator") {
  SynthConfig cfg;
  cfg.subjects = 12;
  cfg.songs = 2;
  cfg.seed = 5;

  SUBCASE("deterministic per seed") {
    const auto a = synth_generate(cfg), b = synth_generate(cfg);
    CHECK(a.corpus == b.corpus);
    REQUIRE(a.clips.size() == 10);
    for (std::size_t i = 0; i < a.clips.size(); ++i) CHECK(a.clips[i].samples == b.clips[i].samples);
    CHECK(a.clips[0].samples.size() == 44100);
    CHECK(a.corpus.records.size() == 12 * 2 * 10);
    cfg.seed = 6;
    CHECK_FALSE(synth_generate(cfg).corpus == a.corpus);
  }
  SUBCASE("agnostic labels are perfectly predictable from audio") {
    cfg.mode = SynthMode::Agnostic;
    const auto s = synth_generate(cfg);
    CHECK(subject_blind_ceiling(s.corpus.records) == 1.0);
  }
  SUBCASE("opposed clusters cap subject-blind accuracy at 3/4") {
    const auto s = synth_generate(cfg);
    CHECK(subject_blind_ceiling(s.corpus.records) == doctest::Approx(0.75).epsilon(1e-12));
    // An oracle that knows each listener's taste is always right.
    std::map<std::string, int> taste;
    for (const auto& sub : s.corpus.subjects) taste[sub.subject_id] = sub.extra.at("synth_taste").get<int>();
    std::size_t correct = 0;
    for (const auto& r : s.corpus.records) {
      auto dev = [](const std::string& clip) { return std::stoi(parse_clip_name(clip)->device_id.substr(3)) - 1; };
      const bool b_better = device_utility(dev(r.clip_b_id), taste[r.subject_id]) >
                            device_utility(dev(r.clip_a_id), taste[r.subject_id]);
      correct += (r.translated_score > 0) == b_better;
    }
    CHECK(correct == s.corpus.records.size());
    int plus = 0;
    for (const auto& [id, t] : taste) plus += t > 0;
    CHECK(plus == 6);
  }
  SUBCASE("label noise matches its design rate") {
    cfg.songs = 7;
    cfg.label_noise = 0.2;
    const auto noisy = synth_generate(cfg);
    cfg.label_noise = 0;
    const auto clean = synth_generate(cfg);
    REQUIRE(noisy.corpus.records.size() == 840);
    std::size_t flipped = 0;
    for (std::size_t i = 0; i < 840; ++i) {
      flipped += (noisy.corpus.records[i].translated_score > 0) != (clean.corpus.records[i].translated_score > 0);
    }
    const double n = 840, p = 0.2, sigma = std::sqrt(n * p * (1 - p));
    CHECK(std::abs(flipped - n * p) <= 3 * sigma);
  }
  SUBCASE("written corpus reloads and every subject keeps full specs") {
    const auto s = synth_generate(cfg);
    const auto dir = std::filesystem::temp_directory_path() / "prefnet_synth_test";
    std::filesystem::remove_all(dir);
    write_synth(dir, s, cfg.sample_rate);
    CHECK(read_corpus(dir / "corpus.jsonl") == s.corpus);
    CHECK(catalog_from_directory(dir / "audio").size() == 2);
    CHECK(filter_corpus(s.corpus).report.excluded_subjects.empty());
    std::filesystem::remove_all(dir);
  }
}
