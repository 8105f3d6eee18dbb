#include "sing/inference.hpp"

#include <algorithm>
#include <cmath>

namespace sing {

using nn::Tensor;

FullConditions voice_change(const FullConditions& cond, int target_singer,
                            int n_singers) {
  if (target_singer < 0 || target_singer >= n_singers)
    throw ValidationError("voice_change: target singer out of range");
  FullConditions out = cond;
  out.singer_index = target_singer;
  return out;
}

std::uint64_t song_noise_seed(const std::string& song_id, std::uint64_t base) {
  // FNV-1a over the song id, mixed with the base seed.
  std::uint64_t h = 14695981039346656037ull ^ base;
  for (unsigned char c : song_id) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

std::vector<nn::Tensor> cut_tensor_blocks(const nn::Tensor& full,
                                          int block_len, int hop) {
  if (hop <= 0 || hop > block_len)
    throw ValidationError("cut_tensor_blocks: bad block geometry");
  const int n = block_count(full.len, block_len, hop);
  std::vector<Tensor> blocks;
  blocks.reserve(n);
  for (int b = 0; b < n; ++b) {
    Tensor blk(full.ch, block_len);
    const int start = b * hop;
    const int lim = std::min(block_len, full.len - start);
    for (int c = 0; c < full.ch; ++c)
      for (int t = 0; t < lim; ++t) blk.at(c, t) = full.at(c, start + t);
    blocks.push_back(std::move(blk));
  }
  return blocks;
}

FeatureMatrix synthesize_features(const SynthesisContext& ctx,
                                  const FullConditions& cond,
                                  std::uint64_t noise_seed,
                                  const std::string& song_id,
                                  const std::string& singer_id) {
  if (!ctx.params || !ctx.gen_cfg || !ctx.vocab)
    throw Error("synthesize_features: incomplete context");
  if (!ctx.norm || ctx.norm->dims() == 0)
    throw ValidationError("synthesize_features: missing normalization stats");
  const GeneratorConfig& cfg = *ctx.gen_cfg;
  if (ctx.norm->dims() != cfg.out_dims)
    throw ShapeError("synthesize_features: norm stats dimension mismatch");
  const int t_src = cond.frames.frames();
  if (t_src < 1)
    throw ValidationError("synthesize_features: empty conditions");

  const int block_len = cfg.block_len;
  const int hop = ctx.block_hop;
  const int n_blocks = block_count(t_src, block_len, hop);
  const int t_pad = (n_blocks - 1) * hop + block_len;

  // Pad the conditioning streams with silence to the block grid, then
  // assemble the whole conditioning tensor in one go so noise is a single
  // seeded stream.
  SongConditions padded = cond.frames;
  padded.phoneme_ids.resize(t_pad, ctx.vocab->silence_id);
  padded.f0_hz.resize(t_pad, 0.0);
  padded.vuv.resize(t_pad, 0.0f);
  const Tensor full_cond = assemble_condition(
      padded.phoneme_ids, padded.f0_hz, padded.vuv, cond.singer_index,
      ctx.vocab->size(), ctx.n_singers, cfg.noise_channels, noise_seed);
  std::vector<Tensor> cond_blocks =
      cut_tensor_blocks(full_cond, block_len, hop);

  // Stream in chunks with carried states to bound tape memory.
  constexpr std::size_t kChunk = 4;
  BlockSequence seq;
  seq.block_len = block_len;
  seq.hop = hop;
  seq.pad_frames = t_pad - t_src;
  seq.song_id = song_id;
  GenState state;
  for (std::size_t at = 0; at < cond_blocks.size(); at += kChunk) {
    std::vector<Tensor> chunk(
        cond_blocks.begin() + at,
        cond_blocks.begin() +
            std::min(cond_blocks.size(), at + kChunk));
    GeneratorOutput out = generator_forward(*ctx.params, cfg, chunk,
                                            state.empty() ? nullptr : &state);
    state = std::move(out.state);
    for (auto& blk : out.blocks)
      seq.blocks.push_back(tensor_to_features(blk, ctx.hop_s, {}));
  }

  const FeatureMatrix merged = overlap_add(seq);
  FeatureMatrix out = denormalize(merged, *ctx.norm);
  out.hop_s = ctx.hop_s;
  out.dim_labels = default_dim_labels();
  out.song_id = song_id;
  out.singer_id = singer_id;
  // The voiced flag is a hard {0,1} dimension; threshold at the raw-scale
  // midpoint.
  const int vuv_dim = out.d - 1;
  const double mid = 0.5 * (ctx.norm->min[vuv_dim] + ctx.norm->max[vuv_dim]);
  for (int t = 0; t < out.t; ++t)
    out.at(t, vuv_dim) = out.at(t, vuv_dim) >= mid ? 1.0f : 0.0f;
  return out;
}

Waveform synthesize_song(const SynthesisContext& ctx,
                         const FullConditions& cond,
                         const AnalysisConfig& vocoder_cfg,
                         std::uint64_t seed, const std::string& song_id) {
  const FeatureMatrix features = synthesize_features(ctx, cond, seed, song_id);
  return synthesize(features, cond.frames.f0_hz, vocoder_cfg,
                    seed ^ 0x9e3779b97f4a7c15ull);
}

}  // namespace sing
