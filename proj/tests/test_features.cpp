#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstring>
#include <filesystem>

#include "ergl/features.hpp"
#include "ergl/rng.hpp"

using namespace ergl;

namespace {

AudioClip make_clip(std::vector<float> samples, int sr = kCanonicalRate) {
  AudioClip c;
  c.samples = std::move(samples);
  c.sample_rate = sr;
  c.clip_id = "test";
  return c;
}

// brute-force frame count: slide the window until it no longer fits
int64_t naive_frame_count(int64_t len, int win, int hop) {
  int64_t t = 0;
  while (t * hop + win <= len) ++t;
  return t;
}

std::filesystem::path tmp_path(const std::string& name) {
  return std::filesystem::temp_directory_path() / name;
}

}  // namespace

TEST_CASE("frame count matches the sliding-window oracle") {
  // 10 s at 32 kHz: frames t with t*320 + 1024 <= 320000, i.e. t = 0..996
  CHECK(stft_frame_count(320000) == 997);
  CHECK(stft_frame_count(1024) == 1);
  Rng rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    int64_t len = 1024 + rng.randint(0, 200000);
    CHECK(stft_frame_count(len) == naive_frame_count(len, 1024, 320));
  }
  CHECK_THROWS_AS(stft_frame_count(1023), InputError);
}

TEST_CASE("stft of silence is exactly zero") {
  auto clip = make_clip(std::vector<float>(4096, 0.0f));
  auto spec = stft(clip);
  CHECK(spec.frames == stft_frame_count(4096));
  CHECK(spec.bins == 513);
  for (const auto& v : spec.values) CHECK(std::abs(v) == 0.0);

  auto feat = log_mel(clip);
  for (float v : feat.values) CHECK(v == doctest::Approx(std::log(1e-10)));
}

TEST_CASE("bin-centered sine peaks in the predicted bin") {
  Rng rng(11);
  for (int trial = 0; trial < 5; ++trial) {
    auto bin = static_cast<int>(rng.randint(8, 500));
    double freq = bin * static_cast<double>(kCanonicalRate) / 1024.0;
    std::vector<float> samples(8192);
    for (size_t i = 0; i < samples.size(); ++i)
      samples[i] = static_cast<float>(0.5 * std::sin(2.0 * M_PI * freq * i / kCanonicalRate));
    auto spec = stft(make_clip(std::move(samples)));
    for (int64_t t = 0; t < spec.frames; ++t) {
      int64_t peak = 0;
      double best = -1.0;
      for (int64_t k = 0; k < spec.bins; ++k) {
        double mag = std::abs(spec.at(t, k));
        if (mag > best) {
          best = mag;
          peak = k;
        }
      }
      CHECK(peak == bin);
    }
  }
}

TEST_CASE("Parseval identity on a noise frame") {
  Rng rng(17);
  std::vector<float> samples(1024);
  for (auto& s : samples) s = static_cast<float>(rng.uniform(-0.9, 0.9));
  auto clip = make_clip(samples);
  auto spec = stft(clip);
  REQUIRE(spec.frames == 1);

  auto window = hamming_window(1024);
  double time_energy = 0.0;
  for (int i = 0; i < 1024; ++i) {
    double v =
        static_cast<double>(samples[static_cast<size_t>(i)]) * window[static_cast<size_t>(i)];
    time_energy += v * v;
  }
  // full-spectrum energy reconstructed from the one-sided bins
  double freq_energy = std::norm(spec.at(0, 0)) + std::norm(spec.at(0, 512));
  for (int k = 1; k < 512; ++k) freq_energy += 2.0 * std::norm(spec.at(0, k));

  CHECK(freq_energy == doctest::Approx(1024.0 * time_energy).epsilon(1e-6));
}

TEST_CASE("mel scale formula") {
  CHECK(hz_to_mel(1000.0) == doctest::Approx(999.99).epsilon(1e-4));
  CHECK(mel_to_hz(hz_to_mel(440.0)) == doctest::Approx(440.0).epsilon(1e-9));
  CHECK(hz_to_mel(0.0) == 0.0);
}

TEST_CASE("mel filterbank shape and structure") {
  auto fb = mel_filterbank(kCanonicalRate);
  REQUIRE(fb.size() == 64u * 513u);

  double prev_center = -1.0;
  for (int m = 0; m < 64; ++m) {
    double row_sum = 0.0;
    double center = 0.0, peak = -1.0;
    for (int k = 0; k < 513; ++k) {
      double w = fb[static_cast<size_t>(m) * 513 + k];
      CHECK(w >= 0.0);
      row_sum += w;
      if (w > peak) {
        peak = w;
        center = k * static_cast<double>(kCanonicalRate) / 1024.0;
      }
    }
    CHECK(row_sum > 0.0);
    CHECK(center > prev_center);
    prev_center = center;
  }

  CHECK_THROWS_AS(mel_filterbank(kCanonicalRate, 1024, 400), ConfigError);
  CHECK_THROWS_AS(mel_filterbank(kCanonicalRate, 1024, 64, 0.0, 20000.0), ConfigError);
}

TEST_CASE("filterbank areas are locked") {
  // row sums of the canonical 32 kHz filterbank; frozen from a reference run
  auto fb = mel_filterbank(kCanonicalRate);
  auto area = [&](int m) {
    double s = 0.0;
    for (int k = 0; k < 513; ++k) s += fb[static_cast<size_t>(m) * 513 + k];
    return s;
  };
  CHECK(area(0) == doctest::Approx(1.1447547920100625).epsilon(1e-12));
  CHECK(area(1) == doctest::Approx(1.1783516599054749).epsilon(1e-12));
  CHECK(area(32) == doctest::Approx(5.4772469301041262).epsilon(1e-12));
  CHECK(area(63) == doctest::Approx(24.841513591719448).epsilon(1e-12));
}

TEST_CASE("log_mel is deterministic and monotone in signal gain") {
  Rng rng(23);
  std::vector<float> samples(6400);
  for (auto& s : samples) s = static_cast<float>(rng.uniform(-0.4, 0.4));

  auto f1 = log_mel(make_clip(samples));
  auto f2 = log_mel(make_clip(samples));
  REQUIRE(f1.values.size() == f2.values.size());
  CHECK(std::memcmp(f1.values.data(), f2.values.data(), f1.values.size() * sizeof(float)) == 0);

  std::vector<float> louder(samples);
  for (auto& s : louder) s *= 2.0f;
  auto f3 = log_mel(make_clip(louder));
  for (size_t i = 0; i < f1.values.size(); ++i) CHECK(f3.values[i] >= f1.values[i]);
}

TEST_CASE("log_mel resamples to the canonical rate") {
  std::vector<float> samples(16000, 0.1f);
  auto feat = log_mel(make_clip(std::move(samples), 16000));
  // linear resampling of 16000 samples at ratio 2 gives 31999 samples
  CHECK(feat.frames == stft_frame_count(31999));
  CHECK(feat.mel_bins == 64);
}

TEST_CASE("feature cache round trip is bitwise") {
  Rng rng(29);
  LogMelFeature f;
  f.frames = 7;
  f.mel_bins = 64;
  f.values.resize(7 * 64);
  for (auto& v : f.values) v = static_cast<float>(rng.normal());

  auto path = tmp_path("ergl_feat_test.bin");
  save_feature(path.string(), f);
  auto g = load_feature(path.string());
  CHECK(g.frames == f.frames);
  CHECK(g.mel_bins == f.mel_bins);
  CHECK(std::memcmp(g.values.data(), f.values.data(), f.values.size() * sizeof(float)) == 0);

  // truncated payload must not load
  std::filesystem::resize_file(path, 40);
  CHECK_THROWS_AS(load_feature(path.string()), FormatError);
  std::filesystem::remove(path);
}

TEST_CASE("wav io round trip and error paths") {
  Rng rng(31);
  std::vector<float> samples(2000);
  for (auto& s : samples) s = static_cast<float>(rng.uniform(-0.8, 0.8));

  auto path = tmp_path("ergl_wav_test.wav");
  write_wav(path.string(), samples, 32000);
  auto clip = read_wav(path.string());
  CHECK(clip.sample_rate == 32000);
  REQUIRE(clip.samples.size() == samples.size());
  for (size_t i = 0; i < samples.size(); ++i)
    CHECK(clip.samples[i] == doctest::Approx(samples[i]).epsilon(1e-3));
  std::filesystem::remove(path);

  CHECK_THROWS_AS(read_wav("/nonexistent/clip.wav"), InputError);
}

TEST_CASE("linear resampler") {
  AudioClip clip = make_clip({0.0f, 1.0f, 0.0f, -1.0f}, 16000);
  auto same = resample_linear(clip, 16000);
  CHECK(same.samples == clip.samples);

  auto up = resample_linear(clip, 32000);
  CHECK(up.sample_rate == 32000);
  CHECK(up.samples.size() == 7);
  CHECK(up.samples[1] == doctest::Approx(0.5));  // midpoint of 0 and 1
}
