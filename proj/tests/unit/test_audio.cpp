#include <cmath>
#include <numbers>
#include <random>

#include "doctest.h"
#include "prefnet/audio/feature_cache.hpp"
#include "prefnet/audio/features.hpp"
#include "prefnet/audio/resample.hpp"
#include "prefnet/audio/wav.hpp"
#include "prefnet/core/error.hpp"

using namespace prefnet;
using namespace prefnet::audio;

namespace {

std::vector<double> sine(double freq, double amp, int rate, std::size_t n) {
  std::vector<double> v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = amp * std::sin(2 * std::numbers::pi * freq * i / rate);
  return v;
}

// Builds a WAV header by hand so the decoder is checked against an
// independent writer.
std::string handmade_wav(std::uint16_t format, std::uint16_t channels, std::uint16_t bits,
                         const std::string& payload, std::uint32_t rate = 44100) {
  auto le = [](std::string& s, std::uint32_t v, int n) {
    for (int i = 0; i < n; ++i) s.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  };
  std::string s = "RIFF";
  le(s, 36 + payload.size(), 4);
  s += "WAVEfmt ";
  le(s, 16, 4);
  le(s, format, 2);
  le(s, channels, 2);
  le(s, rate, 4);
  le(s, rate * channels * bits / 8, 4);
  le(s, channels * bits / 8, 2);
  le(s, bits, 2);
  s += "data";
  le(s, payload.size(), 4);
  return s + payload;
}

std::string f32le(std::initializer_list<float> xs) {
  std::string s;
  for (float x : xs) {
    const auto u = std::bit_cast<std::uint32_t>(x);
    for (int i = 0; i < 4; ++i) s.push_back(static_cast<char>((u >> (8 * i)) & 0xff));
  }
  return s;
}

double rms(std::span<const double> v) {
  double acc = 0;
  for (double x : v) acc += x * x;
  return std::sqrt(acc / v.size());
}

}  // namespace

TEST_CASE("wav decoding") {
  SUBCASE("16-bit full scale maps to 32767/32768") {
    const std::string payload{'\xff', '\x7f', '\x00', '\x80'};
    auto clip = decode_wav(handmade_wav(1, 1, 16, payload));
    REQUIRE(clip.samples.size() == 2);
    CHECK(clip.samples[0] == 32767.0 / 32768.0);
    CHECK(clip.samples[1] == -1.0);
    CHECK(clip.sample_rate == 44100);
  }
  SUBCASE("stereo float frames are averaged") {
    auto clip = decode_wav(handmade_wav(3, 2, 32, f32le({0.5f, -0.5f, 0.25f, 0.75f})));
    REQUIRE(clip.samples.size() == 2);
    CHECK(clip.samples[0] == 0.0);
    CHECK(clip.samples[1] == 0.5);
  }
  SUBCASE("written sine round trips") {
    const auto s = sine(440, 0.8, 44100, 44100);
    auto path = std::filesystem::temp_directory_path() / "prefnet_sine.wav";
    write_wav_pcm16(path, s, 44100);
    auto clip = load_wav(path);
    std::filesystem::remove(path);
    CHECK(clip.samples.size() == 44100);
    double peak = 0;
    for (double x : clip.samples) peak = std::max(peak, std::abs(x));
    CHECK(std::abs(peak - 0.8) < 1e-3);
  }
  SUBCASE("malformed headers name the field") {
    CHECK_THROWS_WITH_AS(decode_wav("RIFX0000WAVE"), doctest::Contains("RIFF"), FormatError);
    CHECK_THROWS_WITH_AS(decode_wav(handmade_wav(1, 1, 24, std::string(6, '\0'))),
                         doctest::Contains("bits_per_sample 24"), FormatError);
    auto no_data = handmade_wav(1, 1, 16, "");
    no_data.resize(36);
    CHECK_THROWS_WITH_AS(decode_wav(no_data), doctest::Contains("data chunk"), FormatError);
  }
}

TEST_CASE("resample_to_32k") {
  SUBCASE("one second keeps its duration") {
    AudioClip c{std::vector<double>(44100, 0.0), 44100, "x"};
    CHECK(resample_to_32k(c).samples.size() == 32000);
    c.samples.resize(1000);
    CHECK(resample_to_32k(c).samples.size() == 726);  // round(1000*320/441) = round(725.62)
  }
  SUBCASE("32 kHz passes through") {
    AudioClip c{sine(100, 0.5, 32000, 500), 32000, "x"};
    CHECK(resample_to_32k(c).samples == c.samples);
  }
  SUBCASE("unsupported rate lists supported ones") {
    AudioClip c{std::vector<double>(10), 48000, "x"};
    CHECK_THROWS_WITH_AS(resample_to_32k(c), doctest::Contains("44100"), ValidationError);
  }
  SUBCASE("DC is preserved away from the edges") {
    AudioClip c{std::vector<double>(44100, 0.3), 44100, "x"};
    auto out = resample_to_32k(c);
    for (std::size_t i = 64; i + 64 < out.samples.size(); ++i) CHECK(std::abs(out.samples[i] - 0.3) < 1e-3);
  }
  SUBCASE("passband tones keep frequency and amplitude") {
    for (double f : {1000.0, 8000.0}) {
      AudioClip c{sine(f, 0.5, 44100, 44100), 44100, "x"};
      auto out = resample_to_32k(c);
      std::span<const double> mid(out.samples.data() + 1000, 30000);
      const double gain_db = 20 * std::log10(rms(mid) * std::sqrt(2.0) / 0.5);
      INFO("f=" << f << " gain " << gain_db);
      CHECK(std::abs(gain_db) < 0.5);
      auto power = stft_power(out.samples);
      const std::size_t expect = static_cast<std::size_t>(std::lround(f * 1024 / 32000));
      for (std::size_t t = 1; t + 1 < power.size() / kSpectrumBins; ++t) {
        auto row = power.begin() + t * kSpectrumBins;
        CHECK(static_cast<std::size_t>(std::max_element(row, row + kSpectrumBins) - row) == expect);
      }
    }
  }
}

TEST_CASE("stft_power") {
  SUBCASE("frame count formula") {
    for (std::size_t n : {320u, 321u, 400u, 639u, 640u, 1024u, 5000u, 32000u}) {
      std::vector<double> x(n, 0.1);
      CHECK(stft_power(x).size() / kSpectrumBins == 1 + n / 320);
    }
    CHECK(frame_count(320000) == 1001);
  }
  SUBCASE("silence gives zeros") {
    for (double p : stft_power(std::vector<double>(3200, 0.0))) CHECK(p == 0.0);
  }
  SUBCASE("1 kHz sine peaks at bin 32") {
    auto argmax_per_frame = [](const std::vector<double>& power) {
      std::vector<long> out;
      for (std::size_t t = 0; t < power.size() / kSpectrumBins; ++t) {
        auto row = power.begin() + t * kSpectrumBins;
        out.push_back(std::max_element(row, row + kSpectrumBins) - row);
      }
      return out;
    };
    // Cosine phase with the last sample on a crest: reflection padding
    // continues the tone exactly, so every frame is a clean tone.
    std::vector<double> cosine(32001);
    for (std::size_t i = 0; i < cosine.size(); ++i) cosine[i] = std::cos(2 * std::numbers::pi * 1000 * i / 32000);
    for (long bin : argmax_per_frame(stft_power(cosine))) CHECK(bin == 32);
    // Zero phase: the mirrored edge frames are not a pure tone, interior
    // frames are.
    const auto bins = argmax_per_frame(stft_power(sine(1000, 1.0, 32000, 32000)));
    for (std::size_t t = 2; t + 2 < bins.size(); ++t) CHECK(bins[t] == 32);
  }
  SUBCASE("power scales quadratically") {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> d(-0.4, 0.4);
    std::vector<double> x(4000), y(4000);
    for (std::size_t i = 0; i < x.size(); ++i) {
      x[i] = d(rng);
      y[i] = 0.7 * x[i];
    }
    auto px = stft_power(x), py = stft_power(y);
    for (std::size_t i = 0; i < px.size(); ++i) {
      CHECK(std::abs(py[i] - 0.49 * px[i]) <= 1e-9 * std::max(px[i] * 0.49, 1e-300));
    }
  }
  SUBCASE("too short or empty clips are rejected") {
    CHECK_THROWS_AS(stft_power(std::vector<double>{}), ValidationError);
    CHECK_THROWS_AS(stft_power(std::vector<double>(100)), ValidationError);
  }
}

TEST_CASE("mel_filterbank") {
  const auto& m = mel_filterbank();
  REQUIRE(m.size() == 64 * 513);
  std::size_t prev_first = 0, prev_last = 0;
  for (std::size_t b = 0; b < 64; ++b) {
    double peak = 0;
    std::size_t first = 513, last = 0;
    for (std::size_t k = 0; k < 513; ++k) {
      const double w = m[b * 513 + k];
      CHECK(w >= 0);
      peak = std::max(peak, w);
      if (w > 0) {
        first = std::min(first, k);
        last = k;
      }
    }
    CHECK(peak == 1.0);
    CHECK(first < 513);
    CHECK(first >= prev_first);
    CHECK(last >= prev_last);
    prev_first = first;
    prev_last = last;
  }
  // Every FFT bin strictly inside 50 Hz..14 kHz is covered by some filter.
  for (std::size_t k = 0; k < 513; ++k) {
    const double f = k * 31.25;
    if (f <= 50 || f >= 14000) continue;
    double col = 0;
    for (std::size_t b = 0; b < 64; ++b) col += m[b * 513 + k];
    CHECK(col > 0);
  }
}

TEST_CASE("logmel") {
  SUBCASE("ten seconds of silence") {
    AudioClip c{std::vector<double>(320000, 0.0), 32000, "silence"};
    auto s = logmel(c);
    CHECK(s.frames == 1001);
    CHECK(s.values.size() == 1001 * 64);
    for (double v : s.values) CHECK(v == -100.0);
    CHECK(s.config_hash == dsp_config_hash());
  }
  SUBCASE("doubling amplitude adds 20*log10(2) dB") {
    std::mt19937_64 rng(5);
    std::normal_distribution<double> d(0, 0.1);
    AudioClip a{std::vector<double>(16000), 32000, "a"};
    for (auto& x : a.samples) x = d(rng);
    AudioClip b = a;
    for (auto& x : b.samples) x *= 2;
    auto la = logmel(a), lb = logmel(b);
    const double shift = 20 * std::log10(2.0);
    std::size_t checked = 0;
    for (std::size_t i = 0; i < la.values.size(); ++i) {
      if (la.values[i] <= -99.0) continue;
      CHECK(std::abs(lb.values[i] - la.values[i] - shift) < 1e-6);
      ++checked;
    }
    CHECK(checked > 1000);
  }
  SUBCASE("no entry below the floor") {
    AudioClip c{sine(3000, 1e-7, 32000, 32000), 32000, "quiet"};
    for (double v : logmel(c).values) CHECK(v >= -100.0);
  }
  SUBCASE("wrong rate is rejected") {
    AudioClip c{std::vector<double>(44100), 44100, "x"};
    CHECK_THROWS_AS(logmel(c), ValidationError);
  }
}

TEST_CASE("featurize_file and the feature cache") {
  const auto dir = std::filesystem::temp_directory_path() / "prefnet_audio_test";
  std::filesystem::create_directories(dir);
  const auto wav = dir / "song01__dev1__max.wav";
  write_wav_pcm16(wav, sine(1000, 0.5, 44100, 44100), 44100);
  auto spec = featurize_file(wav);
  CHECK(spec.frames == 101);

  const auto bytes = encode_feature_cache(spec);
  CHECK(bytes.substr(0, 4) == "LMEL");
  CHECK(bytes.size() == 28 + 101 * 64 * 4);
  auto back = decode_feature_cache(bytes);
  CHECK(encode_feature_cache(back) == bytes);
  CHECK(back.frames == spec.frames);
  CHECK(back.config_hash == spec.config_hash);
  CHECK(back.frame_rate == 100.0);
  for (std::size_t i = 0; i < spec.values.size(); ++i) {
    CHECK(back.values[i] == static_cast<double>(static_cast<float>(spec.values[i])));
  }

  const auto cache = cache_path_for(dir, "song01__dev1__max.wav");
  CHECK(cache.filename() == "song01__dev1__max.lmel");
  write_feature_cache(cache, spec);
  CHECK(read_feature_cache(cache) == back);

  CHECK_THROWS_AS(decode_feature_cache("LMEX"), FormatError);
  CHECK_THROWS_AS(decode_feature_cache(bytes.substr(0, bytes.size() - 2)), FormatError);
  CHECK_THROWS_AS(decode_feature_cache(bytes + "abcd"), FormatError);

  const auto short_wav = dir / "short.wav";
  write_wav_pcm16(short_wav, std::vector<double>(20000, 0.0), 44100);
  CHECK_THROWS_AS(featurize_file(short_wav), ValidationError);
  std::filesystem::remove_all(dir);
}
