#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "sing/dataset.hpp"
#include "sing/inference.hpp"

namespace sing {

// ---------------------------------------------------------------------------
// mel-cepstral distance
// ---------------------------------------------------------------------------

// MC = (10*sqrt(2)/ln 10) * (1/T) * sum_t sqrt(sum_i (C_ti - C'_ti)^2)
// over exactly kNumMcep coefficients per frame.
double mcd_db(const FeatureMatrix& reference, const FeatureMatrix& generated);

// First kNumMcep dimensions of a full feature matrix.
FeatureMatrix mcep_slice(const FeatureMatrix& full);

struct McdReport {
  struct Song {
    std::string song_id;
    double mcd_db = 0;
    int frames = 0;
  };
  std::vector<Song> songs;
  double mean_mcd_db = 0;
  std::string model_label;
};

// Synthesizes every song of the chosen split with its own conditions and
// identity, then reports MCD against the stored features.
McdReport evaluate_mcd(const SynthesisContext& ctx, const Dataset& ds,
                       bool held_out_split, std::uint64_t noise_seed_base,
                       const std::string& model_label);

std::string mcd_report_to_json(const McdReport& report);

// ---------------------------------------------------------------------------
// exact Wasserstein-1 between equal-size 1-D empirical distributions
// ---------------------------------------------------------------------------

// The monotone (sorted) coupling is optimal in one dimension, so this is the
// exact distance: mean |sort(x) - sort(y)|.
double wasserstein1_empirical(std::vector<double> x, std::vector<double> y);

// ---------------------------------------------------------------------------
// critic-vs-oracle probe
// ---------------------------------------------------------------------------

struct W1ProbeConfig {
  int hidden = 16;
  int steps = 400;
  double lr = 1e-3;
  double clip_c = 0.1;
  std::uint64_t seed = 1;
};

struct W1ProbeResult {
  double estimated_gap = 0;  // mean critic output difference after training
  double oracle_w1 = 0;
};

// Trains a tiny clipped dense critic on the two sample sets and reports the
// learned real/fake gap alongside the exact distance.
W1ProbeResult critic_w1_probe(std::span<const double> x,
                              std::span<const double> y,
                              const W1ProbeConfig& cfg);

// Spearman rank correlation with average ranks on ties.
double spearman(std::span<const double> a, std::span<const double> b);

// ---------------------------------------------------------------------------
// listening-test stimulus export
// ---------------------------------------------------------------------------

struct ListeningModel {
  std::string label;
  SynthesisContext ctx;
};

struct StimulusRow {
  std::string file;
  std::string song;
  std::string model;
  std::string source_singer;
  std::string target_singer;
  std::string condition;
};

// Six conditions per model: for each gender one song as-is, one with a
// same-gender identity swap, one with a cross-gender swap. Files are named
// by a hash so listeners cannot read the condition off the name; the
// returned manifest is the only mapping back.
std::vector<StimulusRow> export_listening_test(
    const std::vector<ListeningModel>& models, const Dataset& ds,
    const AnalysisConfig& vocoder_cfg, const std::string& out_dir,
    std::uint64_t seed);

std::string stimulus_manifest_csv(const std::vector<StimulusRow>& rows);

}  // namespace sing
