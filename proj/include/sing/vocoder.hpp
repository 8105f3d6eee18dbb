#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sing/featio.hpp"

namespace sing {

struct Waveform {
  std::vector<double> samples;  // [-1, 1]
  double sample_rate = 16000.0;

  double duration_s() const { return samples.size() / sample_rate; }
};

struct AnalysisConfig {
  double sample_rate = 16000.0;
  double frame_hop_s = 0.005;
  int window = 400;     // samples
  int fft_size = 512;   // power of two, >= window
  int mel_bands = 40;
  int n_mcep = kNumMcep;
  int n_bap = kNumBap;
  double f0_min = 50.0;
  double f0_max = 600.0;
  double voicing_threshold = 0.3;  // autocorrelation peak clarity

  int hop_samples() const;
  int feature_dim() const { return n_mcep + n_bap + 1; }
  void validate() const;
};

struct AnalysisResult {
  FeatureMatrix features;   // T x (n_mcep + n_bap + 1)
  std::vector<double> f0;   // Hz, 0 where unvoiced
};

// Frame-wise analysis: mel-cepstra as the orthonormal DCT-II of log
// mel-band energies, band aperiodicity as the noise-to-total power ratio in
// four log-spaced bands, and f0 from the normalized autocorrelation peak.
// T = floor((len - window)/hop) + 1; shorter input is an error.
AnalysisResult analyze(const Waveform& wave, const AnalysisConfig& cfg);

// Harmonic sinusoid bank plus per-band filtered noise. Unvoiced frames are
// noise-only. Output is peak-normalized to at most 0.99 and spans
// (T-1)*hop + window samples so re-analysis is frame-aligned.
Waveform synthesize(const FeatureMatrix& features,
                    const std::vector<double>& f0, const AnalysisConfig& cfg,
                    std::uint64_t noise_seed);

// RIFF PCM 16-bit mono only; anything else is rejected.
Waveform read_wav(const std::string& path);
void write_wav(const Waveform& wave, const std::string& path);

}  // namespace sing
