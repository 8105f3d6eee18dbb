#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sing/dataset.hpp"
#include "sing/model.hpp"
#include "sing/vocoder.hpp"

namespace sing {

// Frame-level conditioning plus the singer identity, the unit voice change
// operates on.
struct FullConditions {
  SongConditions frames;
  int singer_index = 0;
};

// Only the singer identity changes; phonemes, f0, vuv and (seeded) noise are
// untouched.
FullConditions voice_change(const FullConditions& cond, int target_singer,
                            int n_singers);

struct SynthesisContext {
  const ModelParams* params = nullptr;
  const GeneratorConfig* gen_cfg = nullptr;
  const PhonemeVocab* vocab = nullptr;
  int n_singers = 0;
  const NormStats* norm = nullptr;
  double hop_s = 0.005;
  int block_hop = kDefaultBlockHop;  // block_len/2 for exact overlap-add
};

// Full-song feature synthesis: conditions are padded to the block grid with
// silence, cut into 50%-overlapping blocks, streamed through the generator
// with carried states, merged by triangular overlap-add, trimmed, and
// denormalized. The voiced-flag dimension is rounded to {0,1}.
FeatureMatrix synthesize_features(const SynthesisContext& ctx,
                                  const FullConditions& cond,
                                  std::uint64_t noise_seed,
                                  const std::string& song_id = "",
                                  const std::string& singer_id = "");

// synthesize_features followed by the vocoder, driven by the input f0
// contour.
Waveform synthesize_song(const SynthesisContext& ctx,
                         const FullConditions& cond,
                         const AnalysisConfig& vocoder_cfg,
                         std::uint64_t seed, const std::string& song_id = "");

// Stable per-song noise seed.
std::uint64_t song_noise_seed(const std::string& song_id, std::uint64_t base);

// Splits a channels-by-frames tensor into zero-padded blocks on the
// make_blocks grid.
std::vector<nn::Tensor> cut_tensor_blocks(const nn::Tensor& full,
                                          int block_len, int hop);

}  // namespace sing
