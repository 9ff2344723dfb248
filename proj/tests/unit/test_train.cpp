#include <cmath>
#include <numeric>
#include <random>

#include "doctest.h"
#include "prefnet/core/error.hpp"
#include "prefnet/train/analysis.hpp"
#include "prefnet/train/cv.hpp"

using namespace prefnet;
using namespace prefnet::train;

namespace {

audio::LogMelSpectrogram ramp_spec(std::size_t frames, float offset) {
  audio::LogMelSpectrogram s;
  s.frames = frames;
  s.values.resize(frames * audio::kMelBins);
  for (std::size_t i = 0; i < s.values.size(); ++i) s.values[i] = offset + static_cast<float>(i % 97) * 0.25f;
  return s;
}

data::SubjectInfo subject(const std::string& id, int age) {
  data::SubjectInfo s;
  s.subject_id = id;
  s.age = age;
  s.impedance = 32;
  s.freq_low = 20;
  s.freq_high = 20000;
  s.sensitivity = 100;
  return s;
}

TrainingData two_clip_data() {
  FeatureBank bank;
  bank.add("short.wav", ramp_spec(20, -40));
  bank.add("long.wav", ramp_spec(30, -20));
  return TrainingData::build(std::move(bank), {subject("s1", 30)}, data::FeatureMask::All);
}

// A small personal synthetic corpus with its features, shared by the slower cases.
struct Fixture {
  data::SynthCorpus synth;
  TrainingData data;
};

const Fixture& fixture() {
  static const Fixture f = [] {
    data::SynthConfig sc;
    sc.subjects = 8;
    sc.songs = 1;
    sc.devices = 3;
    sc.seed = 5;
    Fixture out{data::synth_generate(sc), {}};
    out.data = TrainingData::build(featurize_clips(out.synth.clips, sc.sample_rate), out.synth.corpus.subjects,
                                   data::FeatureMask::All);
    return out;
  }();
  return f;
}

model::ModelConfig tiny(model::Variant v) {
  model::ModelConfig c;
  c.variant = v;
  c.encoder.widths = {4, 4, 4, 4};
  c.mlp_hidden = 16;
  c.subject_hidden = 8;
  c.parallel_dim = 3;
  return c;
}

TrainConfig quick(std::size_t epochs) {
  TrainConfig c;
  c.max_epochs = epochs;
  c.batch_size = 8;
  c.lr0 = 1e-3;
  return c;
}

}  // namespace

TEST_CASE("learning rate decays geometrically per epoch") {
  TrainConfig c;
  CHECK(learning_rate(c, 0) == doctest::Approx(5e-4).epsilon(1e-12));
  // 5e-4 * 0.95^3 = 4.286875e-4
  CHECK(learning_rate(c, 3) == doctest::Approx(4.286875e-4).epsilon(1e-12));
  c.lr_decay = 1.0;
  CHECK(learning_rate(c, 40) == doctest::Approx(5e-4).epsilon(1e-12));
}

TEST_CASE("train config validates and round-trips") {
  TrainConfig c;
  c.lr0 = 2e-3;
  c.batch_size = 16;
  c.augment.enabled = false;
  const auto back = TrainConfig::from_json(c.to_json());
  CHECK(back.lr0 == c.lr0);
  CHECK(back.batch_size == 16);
  CHECK_FALSE(back.augment.enabled);

  c.lr_decay = 1.5;
  CHECK_THROWS_AS(c.validate(), ValidationError);
  c = TrainConfig{};
  c.batch_size = 0;
  CHECK_THROWS_AS(c.validate(), ValidationError);
  CHECK_THROWS_AS(TrainConfig::from_json(nlohmann::json{{"lr0", 1}}), FormatError);
}

TEST_CASE("early stopping") {
  SUBCASE("a flat loss stops after patience + 1 epochs") {
    EarlyStopping s(10);
    std::size_t epochs = 0;
    while (!s.should_stop() && epochs < 50) {
      s.observe(1.0);
      ++epochs;
    }
    CHECK(epochs == 11);
    CHECK(s.best_epoch() == 0);
  }
  SUBCASE("a strictly improving loss runs to the epoch limit") {
    EarlyStopping s(10);
    std::size_t epochs = 0;
    while (!s.should_stop() && epochs < 50) {
      s.observe(1.0 / static_cast<double>(epochs + 1));
      ++epochs;
    }
    CHECK(epochs == 50);
    CHECK(s.best_epoch() == 49);
  }
  SUBCASE("the counter resets on improvement") {
    EarlyStopping s(2);
    CHECK(s.observe(3.0));
    CHECK_FALSE(s.observe(3.0));
    CHECK(s.observe(2.0));
    CHECK_FALSE(s.observe(2.5));
    CHECK_FALSE(s.should_stop());
    CHECK_FALSE(s.observe(2.0));
    CHECK(s.should_stop());
    CHECK(s.best_loss() == 2.0);
    CHECK(s.best_epoch() == 2);
  }
}

TEST_CASE("accuracy") {
  CHECK(prediction_correct({0.3, 0.7}, 1));
  CHECK_FALSE(prediction_correct({0.3, 0.7}, 0));
  CHECK_FALSE(prediction_correct({0.5, 0.5}, 0));
  CHECK_FALSE(prediction_correct({0.5, 0.5}, 1));
  CHECK(accuracy({{0.9, 0.1}, {0.2, 0.8}, {0.6, 0.4}, {0.4, 0.6}}, {0, 1, 0, 0}) == 0.75);
  CHECK(accuracy({{0.9, 0.1}, {0.2, 0.8}}, {0, 1}) == 1.0);
  CHECK_THROWS_AS(accuracy({}, {}), ValidationError);
  CHECK_THROWS_AS(accuracy({{0.9, 0.1}}, {0, 1}), ValidationError);
}

TEST_CASE("summaries") {
  const std::vector<double> one{0.8};
  CHECK(summarize(one).mean == 0.8);
  CHECK(summarize(one).std == 0.0);
  const std::vector<double> v{1, 2, 3, 4};
  CHECK(summarize(v).mean == 2.5);
  CHECK(summarize(v).std == doctest::Approx(std::sqrt(1.25)).epsilon(1e-15));
  CHECK_THROWS_AS(summarize(std::vector<double>{}), ValidationError);
}

TEST_CASE("overall accuracy weights folds by question count (published table)") {
  const std::vector<std::size_t> questions{403, 269, 318, 215, 289, 305, 201};
  const std::vector<double> ao{.8029, .7836, .7843, .6742, .7569, .7761, .8316};
  const std::vector<double> asl{.8056, .7946, .7808, .6670, .7670, .7864, .8420};
  auto folds = [&](const std::vector<double>& means) {
    std::vector<FoldResult> out;
    for (std::size_t k = 0; k < means.size(); ++k) {
      FoldResult f;
      f.fold = static_cast<int>(k);
      f.n_questions = questions[k];
      f.mean = means[k];
      out.push_back(f);
    }
    return out;
  };
  CHECK(std::abs(weighted_overall(folds(ao)) - 0.7756) < 5e-4);
  CHECK(std::abs(weighted_overall(folds(asl)) - 0.7804) < 5e-4);
  CHECK_THROWS_AS(weighted_overall({}), ValidationError);
}

TEST_CASE("run seeds are distinct per base seed and run") {
  CHECK(run_seed(1, 0) == 1000);
  CHECK(run_seed(1, 20) == 1020);
  CHECK(run_seed(2, 0) == 2000);
  CHECK(run_seed(1, 20) != run_seed(2, 0));
}

TEST_CASE("fold leakage is detected") {
  data::Rotation r;
  r.test = {"a"};
  r.val = {"b"};
  r.train = {"c", "d"};
  CHECK_NOTHROW(check_disjoint(r));
  r.train.push_back("a");
  CHECK_THROWS_WITH_AS(check_disjoint(r), doctest::Contains("fold leakage"), Error);
  r.train.pop_back();
  r.val.push_back("a");
  CHECK_THROWS_WITH_AS(check_disjoint(r), doctest::Contains("fold leakage"), Error);
}

TEST_CASE("feature bank") {
  FeatureBank bank;
  bank.add("a", ramp_spec(20, 0));
  CHECK_THROWS_AS(bank.add("a", ramp_spec(20, 0)), ValidationError);
  audio::LogMelSpectrogram bad;
  bad.frames = 3;
  bad.values.resize(10);
  CHECK_THROWS_AS(bank.add("b", bad), ShapeError);
  CHECK_THROWS_WITH_AS(bank.index("zzz"), doctest::Contains("no features"), ValidationError);
  CHECK(bank.frames() == 20);
}

TEST_CASE("batches pad short clips with the log floor and interleave pairs") {
  const auto data = two_clip_data();
  const std::vector<PairExample> ex{{0, 1, 0, 1}, {1, 0, 0, 0}};
  const std::vector<std::size_t> order{1, 0};
  const auto b = make_batch(data, ex, order);
  REQUIRE(b.specs.shape() == Shape{4, 1, 30, 64});
  REQUIRE(b.subjects.shape() == Shape{4, 6});
  CHECK(b.labels == std::vector<int>{0, 1});

  const auto shortv = ramp_spec(20, -40).values;
  const auto longv = ramp_spec(30, -20).values;
  const auto v = b.specs.data();
  const std::size_t per = 30 * 64;
  // Row order: pair order[0] = (long, short), then pair order[1] = (short, long).
  for (std::size_t i = 0; i < per; ++i) {
    CHECK(v[i] == longv[i]);
    const float expect_short = i < shortv.size() ? shortv[i] : -100.0f;
    CHECK(v[per + i] == expect_short);
    CHECK(v[2 * per + i] == expect_short);
    CHECK(v[3 * per + i] == longv[i]);
  }
  const auto s = b.subjects.data();
  for (std::size_t r = 0; r < 4; ++r) CHECK(s[r * 6] == 30.0f);
}

TEST_CASE("augmentation only touches batches built for training") {
  const auto data = two_clip_data();
  const std::vector<PairExample> ex{{0, 1, 0, 1}};
  const std::vector<std::size_t> order{0};
  augment::AugmentConfig aug;
  aug.max_time_width = 8;
  const auto plain = make_batch(data, ex, order);
  std::mt19937_64 rng(3);
  const auto noisy = make_batch(data, ex, order, &aug, &rng);
  std::size_t changed = 0;
  for (std::size_t i = 0; i < plain.specs.numel(); ++i) changed += plain.specs.data()[i] != noisy.specs.data()[i];
  CHECK(changed > 0);
  // Stripes stay inside each clip's own frames: the padded tail of the short clip is untouched.
  const auto v = noisy.specs.data();
  for (std::size_t i = 20 * 64; i < 30 * 64; ++i) CHECK(v[i] == -100.0f);

  aug.enabled = false;
  const auto off = make_batch(data, ex, order, &aug, &rng);
  for (std::size_t i = 0; i < plain.specs.numel(); ++i) CHECK(off.specs.data()[i] == plain.specs.data()[i]);
  CHECK_THROWS_AS(make_batch(data, ex, order, &aug, nullptr), ValidationError);
}

TEST_CASE("weight product analysis") {
  SUBCASE("identity first layer and unit output layer give unit influence") {
    const std::vector<double> w1{1, 0, 0, 0, 1, 0, 0, 0, 1};
    const std::vector<double> w2{1, 1, 1};
    CHECK(weight_product_magnitudes(w1, w2, 3, 3) == std::vector<double>{1, 1, 1});
  }
  SUBCASE("matches a loop oracle") {
    std::mt19937_64 rng(9);
    std::normal_distribution<double> n;
    const std::size_t h = 7, d = 5;
    std::vector<double> w1(h * d), w2(h);
    for (auto& x : w1) x = n(rng);
    for (auto& x : w2) x = n(rng);
    const auto got = weight_product_magnitudes(w1, w2, h, d);
    for (std::size_t j = 0; j < d; ++j) {
      long double acc = 0;
      for (std::size_t i = 0; i < h; ++i) acc += static_cast<long double>(w1[i * d + j]) * w2[i];
      CHECK(std::abs(got[j] - static_cast<double>(std::fabs(acc))) <= 1e-12);
    }
    CHECK_THROWS_AS(weight_product_magnitudes(w1, w2, h, d + 1), ShapeError);
  }
  SUBCASE("applies to a network's last block") {
    model::ModelConfig cfg = tiny(model::Variant::ASL);
    model::PreferenceNet<float> net(cfg, 4);
    const auto params = snapshot(net.parameters());
    const auto plain = analyze_last_mlp(params, cfg);
    CHECK(plain.influence.size() == cfg.encoder.embedding_dim() + 6);
    CHECK(plain.audio_dim == cfg.encoder.embedding_dim());
    CHECK_FALSE(plain.bn_folded);
    const auto folded = analyze_last_mlp(params, cfg, true);
    CHECK(folded.bn_folded);
    // Fresh BN: gamma 1, running var 1, so folding only divides by sqrt(1 + eps).
    for (std::size_t i = 0; i < plain.influence.size(); ++i) {
      CHECK(folded.influence[i] == doctest::Approx(plain.influence[i] / std::sqrt(1 + 1e-5)).epsilon(1e-9));
    }
    const auto csv = influence_csv(plain);
    CHECK(csv.rfind("index,mean_abs_weight,block\n0,", 0) == 0);
    CHECK(csv.find(",subject\n") != std::string::npos);
    CHECK_THROWS_AS(analyze_last_mlp(params, tiny(model::Variant::AO)), ShapeError);
  }
  SUBCASE("full-size head has 518 inputs with a 6-wide subject block") {
    model::ModelConfig cfg;
    cfg.variant = model::Variant::ASL;
    CHECK(cfg.head_input_dim() == 518);
    CHECK(cfg.head_input_dim() - cfg.encoder.embedding_dim() == 6);
  }
}

TEST_CASE("training keeps the best validation checkpoint") {
  const auto& f = fixture();
  const auto plan = data::make_folds(f.synth.corpus.subjects);
  const auto rot = data::rotation(plan, 0);
  const auto tr = f.data.examples(f.synth.corpus.records, rot.train);
  const auto va = f.data.examples(f.synth.corpus.records, rot.val);
  model::PreferenceNet<float> net(tiny(model::Variant::ASL), 11);
  std::vector<EpochLog> seen;
  const auto result = train_model(net, quick(4), f.data, tr, va, [&](const EpochLog& e) { seen.push_back(e); });
  REQUIRE(result.history.size() == 4);
  CHECK(seen.size() == 4);
  for (const auto& e : result.history) CHECK(result.best_val_loss <= e.val_loss);
  CHECK(result.history[result.best_epoch - 1].val_loss == result.best_val_loss);
  CHECK(result.history[1].lr == doctest::Approx(1e-3 * 0.95).epsilon(1e-12));
  // The restored network reproduces the best validation loss.
  CHECK(mean_loss(net, f.data, va, 8) == doctest::Approx(result.best_val_loss).epsilon(1e-9));
  CHECK_THROWS_AS(train_model(net, quick(1), f.data, {}, va), ValidationError);
}

TEST_CASE("prediction is deterministic and batch-size independent") {
  const auto& f = fixture();
  const auto all = f.data.examples(f.synth.corpus.records);
  model::PreferenceNet<float> net(tiny(model::Variant::AO), 2);
  const auto a = predict(net, f.data, all, 5);
  const auto b = predict(net, f.data, all, 64);
  REQUIRE(a.size() == all.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i][0] == doctest::Approx(b[i][0]).epsilon(1e-6));
    CHECK(a[i][0] + a[i][1] == doctest::Approx(1.0).epsilon(1e-6));
  }
}

TEST_CASE("cross-validation results do not depend on the number of jobs") {
  const auto& f = fixture();
  CvConfig cv;
  cv.runs = 2;
  cv.folds = {2, 5};
  auto tc = quick(2);
  const auto one = run_cv(f.synth.corpus, f.data, tiny(model::Variant::AO), tc, cv);
  cv.jobs = 3;
  std::size_t cells = 0;
  const auto three =
      run_cv(f.synth.corpus, f.data, tiny(model::Variant::AO), tc, cv, [&](const CellProgress&) { ++cells; });
  CHECK(cells == 4);
  REQUIRE(one.folds.size() == 2);
  CHECK(one.folds[0].fold == 2);
  CHECK(one.folds[1].fold == 5);
  for (std::size_t k = 0; k < 2; ++k) {
    CHECK(one.folds[k].accuracies == three.folds[k].accuracies);
    CHECK(one.folds[k].best_epochs == three.folds[k].best_epochs);
    CHECK(one.folds[k].n_questions > 0);
  }
  CHECK(one.overall == three.overall);
  const auto j = one.to_json();
  CHECK(j["folds"][0]["fold"] == 3);
  CHECK(j["folds"][0]["accuracies"].size() == 2);

  cv.folds = {7};
  CHECK_THROWS_AS(run_cv(f.synth.corpus, f.data, tiny(model::Variant::AO), tc, cv), ValidationError);
}
