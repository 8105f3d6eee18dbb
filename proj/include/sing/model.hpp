#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "sing/featio.hpp"
#include "sing/optim.hpp"
#include "sing/tape.hpp"

namespace sing {

// ---------------------------------------------------------------------------
// conditioning
// ---------------------------------------------------------------------------

// Reference pitch for the log-f0 condition channel; the channel stores
// log2(f0/kF0Ref)/2 clamped to [-1,1] (two octaves either way), 0 when
// unvoiced.
inline constexpr double kF0RefHz = 220.0;
inline constexpr int kDefaultNoiseChannels = 4;

// Channel layout of a condition block over T frames:
//   [0,P)        phoneme one-hot
//   [P]          normalized log-f0
//   [P+1]        voiced flag
//   [P+2,P+2+S)  singer one-hot, constant over time
//   [P+2+S,...)  noise channels, i.i.d. standard normal
nn::Tensor assemble_condition(std::span<const int> phoneme_ids,
                              std::span<const double> f0_hz,
                              std::span<const float> vuv, int singer_index,
                              int n_phonemes, int n_singers,
                              int noise_channels, std::uint64_t noise_seed);

// The critic never sees the noise channels.
nn::Tensor condition_without_noise(const nn::Tensor& cond, int noise_channels);

int condition_channels(int n_phonemes, int n_singers, int noise_channels);

// ---------------------------------------------------------------------------
// configs
// ---------------------------------------------------------------------------

struct ConvLstmLayerSpec {
  int channels = 0;      // hidden/state channels
  int kernel = 3;        // input-to-state kernel width
  int stride = 2;        // input-to-state stride
  int state_kernel = 3;  // state-to-state kernel width, odd
  bool transposed = false;
};

struct GeneratorConfig {
  std::vector<ConvLstmLayerSpec> encoder;
  std::vector<ConvLstmLayerSpec> decoder;
  int cond_channels = 0;
  int noise_channels = kDefaultNoiseChannels;
  int out_dims = kFeatureDim;
  int block_len = kDefaultBlockLen;

  void validate() const;
};

struct CriticConfig {
  std::vector<ConvLstmLayerSpec> encoder;
  int in_channels = 0;  // feature dims + condition channels minus noise
  int block_len = kDefaultBlockLen;

  void validate() const;
};

// Encoder halves the block length per layer (kernel 3, stride 2); the
// decoder mirrors it with stride-2 transposed convolutions (kernel 4 for an
// exact doubling). enc_channels defaults to [32,64,128,256,512].
GeneratorConfig default_generator_config(int n_phonemes, int n_singers,
                                         std::vector<int> enc_channels = {},
                                         int block_len = kDefaultBlockLen,
                                         int noise_channels = kDefaultNoiseChannels,
                                         int out_dims = kFeatureDim);
CriticConfig critic_config_for(const GeneratorConfig& gen, int n_phonemes,
                               int n_singers);

// ---------------------------------------------------------------------------
// parameters
// ---------------------------------------------------------------------------

struct ParamSpec {
  std::string name;
  int ch = 0;
  int len = 0;
  enum class Init { kGlorot, kZero, kOne } init = Init::kGlorot;
  int fan_in = 0;   // kGlorot only
  int fan_out = 0;
};

using ModelLayout = std::vector<ParamSpec>;

ModelLayout model_layout(const GeneratorConfig& gen, const CriticConfig& critic);

struct ModelParams {
  nn::ParamMap tensors;

  const nn::Tensor& at(const std::string& name) const;
  nn::Tensor& at(const std::string& name);
};

ModelParams init_params(std::uint64_t seed, const GeneratorConfig& gen,
                        const CriticConfig& critic);
void validate_params(const ModelParams& params, const ModelLayout& layout);

inline bool is_generator_param(const std::string& name) {
  return name.rfind("gen.", 0) == 0;
}
inline bool is_critic_param(const std::string& name) {
  return name.rfind("critic.", 0) == 0;
}

// ---------------------------------------------------------------------------
// ConvLSTM cell
// ---------------------------------------------------------------------------

struct ConvLstmState {
  nn::Tensor h;
  nn::Tensor c;
};

struct ConvLstmWeights {
  ConvLstmLayerSpec spec;
  // Gate order i, f, g, o.
  nn::Tensor wx[4];
  nn::Tensor wh[4];
  nn::Tensor b[4];
};

// One cell step:
//   i = sig(Wxi*x + Whi*h + bi)    f = sig(Wxf*x + Whf*h + bf)
//   g = tanh(Wxg*x + Whg*h + bg)   o = sig(Wxo*x + Who*h + bo)
//   c' = f.c + i.g                 h' = o.tanh(c')
// prev == nullptr means zero initial state (the state convolutions drop out).
ConvLstmState convlstm_cell(const nn::Tensor& x, const ConvLstmState* prev,
                            const ConvLstmWeights& w);

// ---------------------------------------------------------------------------
// graphs and eager forwards
// ---------------------------------------------------------------------------

struct ParamBinding {
  std::map<std::string, nn::VId> ids;

  static ParamBinding bind(nn::Tape& tape, const ModelParams& params,
                           const std::function<bool(const std::string&)>& grad_pred);
  nn::VId at(const std::string& name) const;
  nn::GradMap collect(const nn::Tape& tape) const;
};

struct GenState {
  std::vector<nn::Tensor> h;  // encoder layers then decoder layers
  std::vector<nn::Tensor> c;

  bool empty() const { return h.empty(); }
};

struct GenGraph {
  std::vector<nn::VId> outputs;  // out_dims x block_len, tanh-bounded
  std::vector<nn::VId> final_h;
  std::vector<nn::VId> final_c;
};

// Runs the encoder-decoder over consecutive condition blocks; every layer's
// state from block n seeds block n+1 within the graph. init_state values
// enter as constants (detached).
GenGraph generator_graph(nn::Tape& tape, const ParamBinding& bind,
                         const GeneratorConfig& cfg,
                         const std::vector<nn::VId>& cond_blocks,
                         const GenState* init_state);

nn::VId critic_graph(nn::Tape& tape, const ParamBinding& bind,
                     const CriticConfig& cfg, nn::VId input_block);

struct GeneratorOutput {
  std::vector<nn::Tensor> blocks;
  GenState state;
};

GeneratorOutput generator_forward(const ModelParams& params,
                                  const GeneratorConfig& cfg,
                                  const std::vector<nn::Tensor>& cond_blocks,
                                  const GenState* init_state);

double critic_forward(const ModelParams& params, const CriticConfig& cfg,
                      const nn::Tensor& input_block);

// Critic input: feature block stacked channel-wise with its noise-free
// condition.
nn::Tensor critic_input(const nn::Tensor& feature_block,
                        const nn::Tensor& cond, int noise_channels);

// ---------------------------------------------------------------------------
// feature <-> tensor conversion
// ---------------------------------------------------------------------------

nn::Tensor features_to_tensor(const FeatureMatrix& block);
FeatureMatrix tensor_to_features(const nn::Tensor& t, double hop_s,
                                 const std::vector<std::string>& dim_labels);

// ---------------------------------------------------------------------------
// tensor-section container (checkpoint family)
// ---------------------------------------------------------------------------

// Same magic+JSON+payload family as the feature container, with named
// float64 sections so parameter round trips are bit-exact.
void save_tensor_sections(const std::string& path, const nn::ParamMap& tensors,
                          const std::string& meta_json);
void load_tensor_sections(const std::string& path, nn::ParamMap& tensors,
                          std::string& meta_json);

}  // namespace sing
