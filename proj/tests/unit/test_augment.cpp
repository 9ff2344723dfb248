#include <random>

#include "doctest.h"
#include "prefnet/augment/spec_augment.hpp"
#include "prefnet/core/error.hpp"

using namespace prefnet;
using namespace prefnet::augment;

namespace {

// Values in [-80, 0) never coincide with the -100 fill.
audio::LogMelSpectrogram fixture(std::size_t frames, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> d(-80, 0);
  audio::LogMelSpectrogram s;
  s.frames = frames;
  s.values.resize(frames * 64);
  for (auto& v : s.values) v = d(rng);
  return s;
}

struct MaskCount {
  std::size_t full_rows = 0;  // frequency bins filled across every frame
  std::size_t full_cols = 0;  // frames filled across every bin
  bool others_untouched = true;
};

// Independent scan: classifies entries by comparison with the input only.
MaskCount scan(const audio::LogMelSpectrogram& in, const audio::LogMelSpectrogram& out) {
  MaskCount c;
  std::vector<bool> row_full(64, true), col_full(in.frames, true);
  for (std::size_t t = 0; t < in.frames; ++t)
    for (std::size_t b = 0; b < 64; ++b) {
      const double o = out.at(t, b);
      if (o != -100.0) {
        row_full[b] = false;
        col_full[t] = false;
        if (o != in.at(t, b)) c.others_untouched = false;
      }
    }
  for (bool f : row_full) c.full_rows += f;
  for (bool f : col_full) c.full_cols += f;
  return c;
}

}  // namespace

TEST_CASE("zero stripes or disabled config is the identity") {
  const auto in = fixture(300, 1);
  std::mt19937_64 rng(0);
  AugmentConfig none;
  none.stripes_per_axis = 0;
  CHECK(spec_augment(in, none, rng) == in);
  AugmentConfig off;
  off.enabled = false;
  CHECK(spec_augment(in, off, rng) == in);
}

TEST_CASE("mask extents respect the configured maxima") {
  const auto in = fixture(400, 2);
  AugmentConfig cfg;
  for (std::uint64_t seed = 0; seed < 500; ++seed) {
    std::mt19937_64 rng(seed);
    auto out = spec_augment(in, cfg, rng);
    const auto c = scan(in, out);
    CHECK(c.full_rows <= 8);
    CHECK(c.full_cols <= 128);
    CHECK(c.others_untouched);
  }
}

TEST_CASE("stripes stay inside the spectrogram") {
  AugmentConfig cfg;
  for (std::size_t frames : {1u, 10u, 64u, 101u, 1001u}) {
    std::mt19937_64 rng(frames);
    for (int i = 0; i < 200; ++i) {
      const auto stripes = draw_stripes(frames, cfg, rng);
      REQUIRE(stripes.size() == 4);
      for (const auto& s : stripes) {
        const std::size_t extent = s.axis == Axis::Time ? frames : 64;
        const std::size_t max = s.axis == Axis::Time ? 64 : 4;
        CHECK(s.width <= max);
        CHECK(s.start + s.width <= extent);
      }
    }
  }
}

TEST_CASE("input is not mutated and seeds are reproducible") {
  const auto in = fixture(200, 3);
  const auto copy = in;
  AugmentConfig cfg;
  std::mt19937_64 a(42), b(42);
  auto out_a = spec_augment(in, cfg, a);
  auto out_b = spec_augment(in, cfg, b);
  CHECK(in == copy);
  CHECK(out_a == out_b);
  std::mt19937_64 c(42);
  std::mt19937_64 d(42);
  CHECK(draw_stripes(200, cfg, c) == draw_stripes(200, cfg, d));
}

TEST_CASE("fill value is configurable") {
  auto in = fixture(50, 4);
  AugmentConfig cfg;
  cfg.fill_value = 0.5;
  cfg.max_freq_width = 64;
  std::mt19937_64 rng(9);
  auto out = spec_augment(in, cfg, rng);
  std::size_t filled = 0;
  for (double v : out.values) filled += v == 0.5;
  CHECK(filled > 0);
}

TEST_CASE("invalid configs are rejected") {
  std::mt19937_64 rng(0);
  AugmentConfig bad;
  bad.max_freq_width = 65;
  CHECK_THROWS_AS(draw_stripes(10, bad, rng), ValidationError);
  bad = {};
  bad.max_time_width = 0;
  CHECK_THROWS_AS(draw_stripes(10, bad, rng), ValidationError);
  bad = {};
  bad.stripes_per_axis = -1;
  CHECK_THROWS_AS(draw_stripes(10, bad, rng), ValidationError);
}
