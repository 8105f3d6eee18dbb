#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "sing/featio.hpp"

namespace sing {

// On-disk dataset layout: one directory with manifest.json, one features
// container (<song>.gsf) and one conditions container (<song>.cond.gsf,
// dims [phoneme_id, f0_hz, vuv]) per song.

struct SongEntry {
  std::string song_id;
  std::string singer_id;
  int frames = 0;
  std::string features_file;
  std::string conditions_file;
  bool held_out = false;
};

struct DatasetManifest {
  double hop_s = 0.005;
  std::vector<std::string> feature_dims;
  PhonemeVocab vocab;
  SingerTable singers;
  std::vector<SongEntry> songs;
  NormStats norm;
};

void save_manifest(const DatasetManifest& m, const std::string& dir);
DatasetManifest load_manifest(const std::string& dir);

// Frame-level conditioning inputs for one song.
struct SongConditions {
  std::vector<int> phoneme_ids;
  std::vector<double> f0_hz;  // 0 where unvoiced
  std::vector<float> vuv;

  int frames() const { return static_cast<int>(phoneme_ids.size()); }
};

FeatureMatrix conditions_to_matrix(const SongConditions& c, double hop_s,
                                   const std::string& song_id,
                                   const std::string& singer_id);
SongConditions matrix_to_conditions(const FeatureMatrix& m);

struct LoadedSong {
  SongEntry entry;
  FeatureMatrix features;  // raw feature scale
  SongConditions conditions;
};

struct Dataset {
  std::string dir;
  DatasetManifest manifest;
  std::vector<LoadedSong> songs;

  std::vector<const LoadedSong*> split(bool held_out) const;
  const LoadedSong* find_song(const std::string& song_id) const;
};

Dataset load_dataset(const std::string& dir);

// ---------------------------------------------------------------------------
// synthetic data
// ---------------------------------------------------------------------------

struct SynthDataConfig {
  std::uint64_t seed = 7;
  int n_singers = 2;
  int n_phonemes = 5;  // includes the silence label
  int n_songs = 10;
  int frames_per_song = 512;
  double hop_s = 0.005;
  int held_out_every = 5;  // every Nth song held out, 0 disables
};

struct SynthDataStats {
  double mean_template_distance = 0;  // per-dimension RMS between templates
  double noise_std = 0;
};

// Deterministic toy corpus: each (singer, voiced phoneme) pair owns a
// distinct feature template, the f0 contour follows a per-singer base pitch,
// and frames add small i.i.d. noise. Writes the dataset into out_dir and
// returns separation stats.
SynthDataStats generate_synthetic_dataset(const SynthDataConfig& cfg,
                                          const std::string& out_dir);

// Gender tags for the NUS-48E corpus folder names, "U" for anything else.
std::string default_gender_for_singer(const std::string& singer_id);

}  // namespace sing
