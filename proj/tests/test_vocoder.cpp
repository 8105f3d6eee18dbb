#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <fstream>

#include "sing/evaluation.hpp"
#include "sing/rng.hpp"
#include "sing/vocoder.hpp"
#include "test_util.hpp"

using namespace sing;

namespace {

constexpr double kTau = 6.283185307179586;

Waveform sine_wave(double freq, double amp, double seconds,
                   double rate = 16000.0) {
  Waveform w;
  w.sample_rate = rate;
  w.samples.resize(static_cast<std::size_t>(seconds * rate));
  for (std::size_t n = 0; n < w.samples.size(); ++n)
    w.samples[n] = amp * std::sin(kTau * freq * n / rate);
  return w;
}

// Harmonic stack with a decaying spectral envelope.
Waveform harmonic_wave(double f0, double seconds) {
  Waveform w;
  w.sample_rate = 16000.0;
  w.samples.resize(static_cast<std::size_t>(seconds * 16000.0));
  for (std::size_t n = 0; n < w.samples.size(); ++n) {
    double v = 0;
    for (int k = 1; k <= 8; ++k)
      v += std::pow(0.7, k - 1) *
           std::sin(kTau * f0 * k * n / 16000.0 + 0.7 * k * k);
    w.samples[n] = 0.25 * v;
  }
  return w;
}

double mcd_first_mceps(const FeatureMatrix& a, const FeatureMatrix& b) {
  const int t = std::min(a.t, b.t);
  FeatureMatrix ma(t, kNumMcep), mb(t, kNumMcep);
  for (int i = 0; i < t; ++i)
    for (int d = 0; d < kNumMcep; ++d) {
      ma.at(i, d) = a.at(i, d);
      mb.at(i, d) = b.at(i, d);
    }
  return mcd_db(ma, mb);
}

}  // namespace

TEST_CASE("frame count follows the analysis geometry") {
  AnalysisConfig cfg;
  for (int extra : {0, 1, 79, 80, 400}) {
    Waveform w;
    w.samples.assign(cfg.window + extra, 0.1);
    const AnalysisResult r = analyze(w, cfg);
    CHECK(r.features.t == extra / cfg.hop_samples() + 1);
    CHECK(static_cast<int>(r.f0.size()) == r.features.t);
  }
}

TEST_CASE("too-short waveform is rejected") {
  AnalysisConfig cfg;
  Waveform w;
  w.samples.assign(cfg.window - 1, 0.0);
  CHECK_THROWS_AS(analyze(w, cfg), ValidationError);
}

TEST_CASE("220 Hz tone: f0 within 3% on at least 95% of voiced frames") {
  AnalysisConfig cfg;
  const AnalysisResult r = analyze(sine_wave(220.0, 0.6, 1.0), cfg);
  int voiced = 0, close = 0;
  for (int t = 0; t < r.features.t; ++t) {
    if (r.features.at(t, kNumMcep + kNumBap) > 0.5f) {
      ++voiced;
      if (std::abs(r.f0[t] - 220.0) <= 0.03 * 220.0) ++close;
    }
  }
  CHECK(voiced >= static_cast<int>(0.95 * r.features.t));
  CHECK(close >= static_cast<int>(0.95 * voiced));
}

TEST_CASE("f0 and vuv are consistent") {
  AnalysisConfig cfg;
  Rng rng(3);
  Waveform w = sine_wave(180.0, 0.4, 0.5);
  for (std::size_t n = w.samples.size() - 2000; n < w.samples.size(); ++n)
    w.samples[n] = 0.05 * rng.normal();
  const AnalysisResult r = analyze(w, cfg);
  for (int t = 0; t < r.features.t; ++t) {
    const bool voiced = r.features.at(t, kNumMcep + kNumBap) > 0.5f;
    CHECK((r.f0[t] > 0) == voiced);
  }
}

TEST_CASE("digital silence is unvoiced everywhere") {
  AnalysisConfig cfg;
  Waveform w;
  w.samples.assign(8000, 0.0);
  const AnalysisResult r = analyze(w, cfg);
  for (int t = 0; t < r.features.t; ++t) {
    CHECK(r.f0[t] == 0.0);
    CHECK(r.features.at(t, kNumMcep + kNumBap) == 0.0f);
  }
}

TEST_CASE("white noise: high mean band aperiodicity") {
  AnalysisConfig cfg;
  Rng rng(1);
  Waveform w;
  w.sample_rate = 16000;
  w.samples.resize(16000);
  for (auto& s : w.samples) s = 0.3 * rng.normal();
  const AnalysisResult r = analyze(w, cfg);
  double mean_bap = 0;
  for (int t = 0; t < r.features.t; ++t)
    for (int b = 0; b < kNumBap; ++b)
      mean_bap += r.features.at(t, kNumMcep + b);
  mean_bap /= r.features.t * kNumBap;
  CHECK(mean_bap > 0.5);
}

TEST_CASE("analyze -> synthesize -> analyze keeps the pitch") {
  AnalysisConfig cfg;
  const AnalysisResult a = analyze(sine_wave(220.0, 0.6, 1.0), cfg);
  const Waveform syn = synthesize(a.features, a.f0, cfg, 42);
  const AnalysisResult b = analyze(syn, cfg);
  CHECK(b.features.t == a.features.t);
  int close = 0, voiced = 0;
  for (int t = 0; t < b.features.t; ++t) {
    if (b.f0[t] > 0) {
      ++voiced;
      if (std::abs(b.f0[t] - 220.0) <= 0.03 * 220.0) ++close;
    }
  }
  CHECK(voiced >= static_cast<int>(0.9 * b.features.t));
  CHECK(close >= static_cast<int>(0.95 * voiced));
}

TEST_CASE("round-trip MCD below 8 dB on harmonic tones") {
  AnalysisConfig cfg;
  for (const Waveform& w :
       {sine_wave(220.0, 0.6, 1.0), harmonic_wave(180.0, 1.0)}) {
    const AnalysisResult a = analyze(w, cfg);
    const Waveform syn = synthesize(a.features, a.f0, cfg, 9);
    const AnalysisResult b = analyze(syn, cfg);
    CHECK(mcd_first_mceps(a.features, b.features) < 8.0);
  }
}

TEST_CASE("all-unvoiced features synthesize to pitch-free audio") {
  AnalysisConfig cfg;
  const int t_total = 100;
  FeatureMatrix f(t_total, kFeatureDim);
  for (int t = 0; t < t_total; ++t) {
    f.at(t, 0) = -3.0f;  // flat mid-level envelope
    for (int b = 0; b < kNumBap; ++b) f.at(t, kNumMcep + b) = 1.0f;
    f.at(t, kNumMcep + kNumBap) = 0.0f;
  }
  const std::vector<double> f0(t_total, 0.0);
  const Waveform w = synthesize(f, f0, cfg, 5);
  const AnalysisResult r = analyze(w, cfg);
  int voiced = 0;
  for (int t = 0; t < r.features.t; ++t)
    if (r.f0[t] > 0) ++voiced;
  CHECK(voiced <= r.features.t / 20);
}

TEST_CASE("constant features with f0=200 give a 5 ms period") {
  AnalysisConfig cfg;
  const int t_total = 100;
  FeatureMatrix f(t_total, kFeatureDim);
  for (int t = 0; t < t_total; ++t) {
    f.at(t, 0) = -1.0f;
    for (int b = 0; b < kNumBap; ++b) f.at(t, kNumMcep + b) = 0.05f;
    f.at(t, kNumMcep + kNumBap) = 1.0f;
  }
  const std::vector<double> f0(t_total, 200.0);
  const Waveform w = synthesize(f, f0, cfg, 3);
  const AnalysisResult r = analyze(w, cfg);
  double mean_f0 = 0;
  int voiced = 0;
  for (int t = 2; t < r.features.t - 2; ++t)
    if (r.f0[t] > 0) {
      mean_f0 += r.f0[t];
      ++voiced;
    }
  REQUIRE(voiced > 0);
  mean_f0 /= voiced;
  // 5 ms period within 3%
  CHECK(std::abs(16000.0 / mean_f0 - 80.0) <= 0.03 * 80.0);
}

TEST_CASE("synthesis output stays within headroom and duration bounds") {
  AnalysisConfig cfg;
  const AnalysisResult a = analyze(harmonic_wave(160.0, 0.6), cfg);
  const Waveform syn = synthesize(a.features, a.f0, cfg, 11);
  double peak = 0;
  for (double s : syn.samples) peak = std::max(peak, std::abs(s));
  CHECK(peak <= 0.99);
  CHECK(static_cast<long>(syn.samples.size()) ==
        static_cast<long>(a.features.t - 1) * cfg.hop_samples() + cfg.window);
}

TEST_CASE("synthesis is deterministic given the seed") {
  AnalysisConfig cfg;
  const AnalysisResult a = analyze(harmonic_wave(200.0, 0.4), cfg);
  const Waveform s1 = synthesize(a.features, a.f0, cfg, 77);
  const Waveform s2 = synthesize(a.features, a.f0, cfg, 77);
  CHECK(s1.samples == s2.samples);

  // The seed only drives the noise component, so compare on unvoiced
  // (noise-only) material.
  FeatureMatrix f(40, kFeatureDim);
  for (int t = 0; t < f.t; ++t) {
    f.at(t, 0) = -3.0f;
    for (int b = 0; b < kNumBap; ++b) f.at(t, kNumMcep + b) = 1.0f;
  }
  const std::vector<double> no_f0(f.t, 0.0);
  const Waveform n1 = synthesize(f, no_f0, cfg, 77);
  const Waveform n2 = synthesize(f, no_f0, cfg, 78);
  CHECK(n1.samples != n2.samples);
}

TEST_CASE("synthesize validates its inputs") {
  AnalysisConfig cfg;
  FeatureMatrix bad(10, kFeatureDim - 1);
  CHECK_THROWS_AS(synthesize(bad, std::vector<double>(10, 0.0), cfg, 0),
                  ShapeError);
  FeatureMatrix ok(10, kFeatureDim);
  CHECK_THROWS_AS(synthesize(ok, std::vector<double>(9, 0.0), cfg, 0),
                  ShapeError);
}

TEST_CASE("wav round trip and rejection of other encodings") {
  sing::test::TempDir dir("wav");
  const Waveform w = sine_wave(440.0, 0.25, 0.05);
  write_wav(w, dir.file("a.wav"));
  const Waveform back = read_wav(dir.file("a.wav"));
  CHECK(back.sample_rate == w.sample_rate);
  REQUIRE(back.samples.size() == w.samples.size());
  double worst = 0;
  for (std::size_t i = 0; i < w.samples.size(); ++i)
    worst = std::max(worst, std::abs(w.samples[i] - back.samples[i]));
  CHECK(worst < 1.0 / 32000.0);

  // Flip the format tag to float PCM and expect rejection.
  std::ifstream in(dir.file("a.wav"), std::ios::binary);
  std::string bytes((std::istreambuf_iterator<char>(in)),
                    std::istreambuf_iterator<char>());
  in.close();
  bytes[20] = 3;
  std::ofstream out(dir.file("b.wav"), std::ios::binary);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  out.close();
  CHECK_THROWS_AS(read_wav(dir.file("b.wav")), FormatError);
  CHECK_THROWS_AS(read_wav(dir.file("missing.wav")), Error);
}
