#include "sing/model.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

#include <json.hpp>

#include "sing/rng.hpp"

namespace sing {

using nn::Tape;
using nn::Tensor;
using nn::VId;
using nlohmann::json;

// ---------------------------------------------------------------------------
// conditioning
// ---------------------------------------------------------------------------

int condition_channels(int n_phonemes, int n_singers, int noise_channels) {
  return n_phonemes + n_singers + 2 + noise_channels;
}

nn::Tensor assemble_condition(std::span<const int> phoneme_ids,
                              std::span<const double> f0_hz,
                              std::span<const float> vuv, int singer_index,
                              int n_phonemes, int n_singers,
                              int noise_channels, std::uint64_t noise_seed) {
  const int t_len = static_cast<int>(phoneme_ids.size());
  if (t_len == 0) throw ValidationError("assemble_condition: empty frames");
  if (f0_hz.size() != phoneme_ids.size() || vuv.size() != phoneme_ids.size())
    throw ShapeError("assemble_condition: sequence length mismatch");
  if (singer_index < 0 || singer_index >= n_singers)
    throw ValidationError("assemble_condition: singer index out of range");

  Tensor cond(condition_channels(n_phonemes, n_singers, noise_channels),
              t_len);
  for (int t = 0; t < t_len; ++t) {
    const int p = phoneme_ids[t];
    if (p < 0 || p >= n_phonemes)
      throw ValidationError("assemble_condition: phoneme id out of range");
    cond.at(p, t) = 1.0;
    const double f0 = f0_hz[t];
    if (f0 < 0) throw ValidationError("assemble_condition: negative f0");
    cond.at(n_phonemes, t) =
        f0 > 0 ? std::clamp(std::log2(f0 / kF0RefHz) / 2.0, -1.0, 1.0) : 0.0;
    cond.at(n_phonemes + 1, t) = vuv[t];
    cond.at(n_phonemes + 2 + singer_index, t) = 1.0;
  }
  // Frame-major noise so a prefix of the conditions carries a prefix of the
  // noise stream.
  Rng rng(noise_seed);
  const int noise_base = n_phonemes + n_singers + 2;
  for (int t = 0; t < t_len; ++t)
    for (int nz = 0; nz < noise_channels; ++nz)
      cond.at(noise_base + nz, t) = rng.normal();
  return cond;
}

nn::Tensor condition_without_noise(const nn::Tensor& cond,
                                   int noise_channels) {
  if (cond.ch <= noise_channels)
    throw ShapeError("condition_without_noise: too few channels");
  Tensor out(cond.ch - noise_channels, cond.len);
  std::copy(cond.v.begin(), cond.v.begin() + out.v.size(), out.v.begin());
  return out;
}

// ---------------------------------------------------------------------------
// configs
// ---------------------------------------------------------------------------

void GeneratorConfig::validate() const {
  if (encoder.empty() || decoder.size() != encoder.size())
    throw ValidationError("generator config: encoder/decoder size mismatch");
  if (cond_channels <= noise_channels)
    throw ValidationError("generator config: bad channel counts");
  int t = block_len;
  for (const auto& l : encoder) {
    if (l.transposed) throw ValidationError("generator config: encoder layer marked transposed");
    if (l.state_kernel % 2 == 0)
      throw ValidationError("generator config: state kernels must be odd");
    if (t % l.stride != 0)
      throw ValidationError("generator config: block length not divisible by strides");
    t /= l.stride;
    if (t < 1) throw ValidationError("generator config: block too short for depth");
  }
  for (const auto& l : decoder) {
    if (!l.transposed) throw ValidationError("generator config: decoder layer not transposed");
    if (l.state_kernel % 2 == 0)
      throw ValidationError("generator config: state kernels must be odd");
    t *= l.stride;
  }
  if (t != block_len)
    throw ValidationError("generator config: decoder does not restore the block length");
}

void CriticConfig::validate() const {
  if (encoder.empty()) throw ValidationError("critic config: no layers");
  if (in_channels < 1) throw ValidationError("critic config: bad channel count");
}

GeneratorConfig default_generator_config(int n_phonemes, int n_singers,
                                         std::vector<int> enc_channels,
                                         int block_len, int noise_channels,
                                         int out_dims) {
  if (enc_channels.empty()) enc_channels = {32, 64, 128, 256, 512};
  GeneratorConfig cfg;
  cfg.cond_channels =
      condition_channels(n_phonemes, n_singers, noise_channels);
  cfg.noise_channels = noise_channels;
  cfg.out_dims = out_dims;
  cfg.block_len = block_len;
  for (int c : enc_channels) cfg.encoder.push_back({c, 3, 2, 3, false});
  // Mirror of the encoder; kernel 4 so (T-1)*2 + 4 - 2 doubles exactly.
  const int n = static_cast<int>(enc_channels.size());
  for (int i = 0; i < n; ++i) {
    const int c = i + 1 < n ? enc_channels[n - 2 - i] : enc_channels[0];
    cfg.decoder.push_back({c, 4, 2, 3, true});
  }
  cfg.validate();
  return cfg;
}

CriticConfig critic_config_for(const GeneratorConfig& gen, int n_phonemes,
                               int n_singers) {
  CriticConfig cfg;
  cfg.encoder = gen.encoder;
  cfg.in_channels = gen.out_dims + n_phonemes + n_singers + 2;
  cfg.block_len = gen.block_len;
  cfg.validate();
  return cfg;
}

// ---------------------------------------------------------------------------
// layout and initialization
// ---------------------------------------------------------------------------

namespace {

const char* kGateNames[4] = {"i", "f", "g", "o"};

void push_layer_specs(ModelLayout& layout, const std::string& prefix,
                      const ConvLstmLayerSpec& l, int in_ch) {
  for (int g = 0; g < 4; ++g) {
    ParamSpec wx;
    wx.name = prefix + ".wx_" + kGateNames[g];
    if (l.transposed) {
      wx.ch = in_ch;
      wx.len = l.channels * l.kernel;
    } else {
      wx.ch = l.channels;
      wx.len = in_ch * l.kernel;
    }
    wx.init = ParamSpec::Init::kGlorot;
    wx.fan_in = in_ch * l.kernel;
    wx.fan_out = l.channels * l.kernel;
    layout.push_back(wx);

    ParamSpec wh;
    wh.name = prefix + ".wh_" + kGateNames[g];
    wh.ch = l.channels;
    wh.len = l.channels * l.state_kernel;
    wh.init = ParamSpec::Init::kGlorot;
    wh.fan_in = l.channels * l.state_kernel;
    wh.fan_out = l.channels * l.state_kernel;
    layout.push_back(wh);

    ParamSpec b;
    b.name = prefix + ".b_" + kGateNames[g];
    b.ch = l.channels;
    b.len = 1;
    // Forget gate starts open so early training keeps its memory.
    b.init = g == 1 ? ParamSpec::Init::kOne : ParamSpec::Init::kZero;
    layout.push_back(b);
  }
}

void push_head_specs(ModelLayout& layout, const std::string& prefix,
                     int in_ch, int out_ch) {
  ParamSpec w;
  w.name = prefix + ".w";
  w.ch = out_ch;
  w.len = in_ch;
  w.init = ParamSpec::Init::kGlorot;
  w.fan_in = in_ch;
  w.fan_out = out_ch;
  layout.push_back(w);
  ParamSpec b;
  b.name = prefix + ".b";
  b.ch = out_ch;
  b.len = 1;
  b.init = ParamSpec::Init::kZero;
  layout.push_back(b);
}

int generator_layer_in_channels(const GeneratorConfig& cfg, bool decoder,
                                int index) {
  if (!decoder)
    return index == 0 ? cfg.cond_channels : cfg.encoder[index - 1].channels;
  const int n = static_cast<int>(cfg.encoder.size());
  if (index == 0) return cfg.encoder[n - 1].channels;
  return cfg.decoder[index - 1].channels + cfg.encoder[n - 1 - index].channels;
}

}  // namespace

ModelLayout model_layout(const GeneratorConfig& gen,
                         const CriticConfig& critic) {
  gen.validate();
  critic.validate();
  ModelLayout layout;
  for (std::size_t i = 0; i < gen.encoder.size(); ++i)
    push_layer_specs(layout, "gen.enc" + std::to_string(i), gen.encoder[i],
                     generator_layer_in_channels(gen, false, static_cast<int>(i)));
  for (std::size_t i = 0; i < gen.decoder.size(); ++i)
    push_layer_specs(layout, "gen.dec" + std::to_string(i), gen.decoder[i],
                     generator_layer_in_channels(gen, true, static_cast<int>(i)));
  push_head_specs(layout, "gen.head", gen.decoder.back().channels,
                  gen.out_dims);
  int in_ch = critic.in_channels;
  for (std::size_t i = 0; i < critic.encoder.size(); ++i) {
    push_layer_specs(layout, "critic.enc" + std::to_string(i),
                     critic.encoder[i], in_ch);
    in_ch = critic.encoder[i].channels;
  }
  push_head_specs(layout, "critic.head", in_ch, 1);
  return layout;
}

const nn::Tensor& ModelParams::at(const std::string& name) const {
  auto it = tensors.find(name);
  if (it == tensors.end()) throw Error("missing parameter: " + name);
  return it->second;
}

nn::Tensor& ModelParams::at(const std::string& name) {
  auto it = tensors.find(name);
  if (it == tensors.end()) throw Error("missing parameter: " + name);
  return it->second;
}

ModelParams init_params(std::uint64_t seed, const GeneratorConfig& gen,
                        const CriticConfig& critic) {
  const ModelLayout layout = model_layout(gen, critic);
  ModelParams params;
  Rng rng(seed);
  for (const auto& spec : layout) {
    Tensor t(spec.ch, spec.len);
    switch (spec.init) {
      case ParamSpec::Init::kGlorot: {
        const double bound = std::sqrt(6.0 / (spec.fan_in + spec.fan_out));
        for (double& x : t.v) x = rng.uniform(-bound, bound);
        break;
      }
      case ParamSpec::Init::kZero:
        break;
      case ParamSpec::Init::kOne:
        t.fill(1.0);
        break;
    }
    params.tensors.emplace(spec.name, std::move(t));
  }
  return params;
}

void validate_params(const ModelParams& params, const ModelLayout& layout) {
  if (params.tensors.size() != layout.size())
    throw ShapeError("params: expected " + std::to_string(layout.size()) +
                     " tensors, got " + std::to_string(params.tensors.size()));
  for (const auto& spec : layout) {
    auto it = params.tensors.find(spec.name);
    if (it == params.tensors.end())
      throw ShapeError("params: missing tensor " + spec.name);
    if (it->second.ch != spec.ch || it->second.len != spec.len)
      throw ShapeError("params: shape mismatch for " + spec.name +
                       " (expected " + std::to_string(spec.ch) + "x" +
                       std::to_string(spec.len) + ", got " +
                       std::to_string(it->second.ch) + "x" +
                       std::to_string(it->second.len) + ")");
  }
}

// ---------------------------------------------------------------------------
// graphs
// ---------------------------------------------------------------------------

ParamBinding ParamBinding::bind(
    nn::Tape& tape, const ModelParams& params,
    const std::function<bool(const std::string&)>& grad_pred) {
  ParamBinding b;
  for (const auto& [name, tensor] : params.tensors)
    b.ids.emplace(name, tape.leaf(tensor, grad_pred && grad_pred(name)));
  return b;
}

VId ParamBinding::at(const std::string& name) const {
  auto it = ids.find(name);
  if (it == ids.end()) throw Error("unbound parameter: " + name);
  return it->second;
}

nn::GradMap ParamBinding::collect(const nn::Tape& tape) const {
  nn::GradMap grads;
  for (const auto& [name, id] : ids) {
    const Tensor& g = tape.grad(id);
    if (g.ch == 0) continue;
    grads.emplace(name, g);
  }
  return grads;
}

namespace {

struct CellIds {
  VId wx[4], wh[4], b[4];
};

CellIds gather_cell_ids(const ParamBinding& bind, const std::string& prefix) {
  CellIds ids;
  for (int g = 0; g < 4; ++g) {
    ids.wx[g] = bind.at(prefix + ".wx_" + kGateNames[g]);
    ids.wh[g] = bind.at(prefix + ".wh_" + kGateNames[g]);
    ids.b[g] = bind.at(prefix + ".b_" + kGateNames[g]);
  }
  return ids;
}

// One ConvLSTM step on the tape. h_prev/c_prev may be kNoId (zero state);
// convolving a zero state contributes nothing, so those terms are skipped.
std::pair<VId, VId> cell_graph(Tape& tape, const ConvLstmLayerSpec& spec,
                               const CellIds& ids, VId x, VId h_prev,
                               VId c_prev) {
  const int state_pad = (spec.state_kernel - 1) / 2;
  const int x_pad = spec.transposed ? (spec.kernel - spec.stride) / 2
                                    : (spec.kernel - 1) / 2;
  VId gates[4];
  for (int g = 0; g < 4; ++g) {
    VId pre = spec.transposed
                  ? tape.conv1d_transpose(x, ids.wx[g], ids.b[g], spec.kernel,
                                          spec.stride, x_pad)
                  : tape.conv1d(x, ids.wx[g], ids.b[g], spec.kernel,
                                spec.stride, x_pad);
    if (h_prev != nn::kNoId) {
      VId hh = tape.conv1d(h_prev, ids.wh[g], nn::kNoId, spec.state_kernel, 1,
                           state_pad);
      pre = tape.add(pre, hh);
    }
    gates[g] = pre;
  }
  const VId i = tape.sigmoid(gates[0]);
  const VId f = tape.sigmoid(gates[1]);
  const VId g = tape.tanh(gates[2]);
  const VId o = tape.sigmoid(gates[3]);
  VId c_new = tape.mul(i, g);
  if (c_prev != nn::kNoId) c_new = tape.add(tape.mul(f, c_prev), c_new);
  const VId h_new = tape.mul(o, tape.tanh(c_new));
  return {h_new, c_new};
}

}  // namespace

ConvLstmState convlstm_cell(const nn::Tensor& x, const ConvLstmState* prev,
                            const ConvLstmWeights& w) {
  Tape tape(false);
  ParamBinding bind;
  for (int g = 0; g < 4; ++g) {
    bind.ids.emplace(std::string("cell.wx_") + kGateNames[g],
                     tape.leaf(w.wx[g]));
    bind.ids.emplace(std::string("cell.wh_") + kGateNames[g],
                     tape.leaf(w.wh[g]));
    bind.ids.emplace(std::string("cell.b_") + kGateNames[g],
                     tape.leaf(w.b[g]));
  }
  const CellIds ids = gather_cell_ids(bind, "cell");
  VId h_prev = nn::kNoId, c_prev = nn::kNoId;
  if (prev) {
    if (!prev->h.same_shape(prev->c))
      throw ShapeError("convlstm_cell: state shape mismatch");
    h_prev = tape.leaf(prev->h);
    c_prev = tape.leaf(prev->c);
  }
  const VId x_id = tape.leaf(x);
  auto [h, c] = cell_graph(tape, w.spec, ids, x_id, h_prev, c_prev);
  return {tape.val(h), tape.val(c)};
}

GenGraph generator_graph(nn::Tape& tape, const ParamBinding& bind,
                         const GeneratorConfig& cfg,
                         const std::vector<nn::VId>& cond_blocks,
                         const GenState* init_state) {
  cfg.validate();
  const int n_enc = static_cast<int>(cfg.encoder.size());
  const int n_layers = 2 * n_enc;
  std::vector<VId> h(n_layers, nn::kNoId), c(n_layers, nn::kNoId);
  if (init_state && !init_state->empty()) {
    if (static_cast<int>(init_state->h.size()) != n_layers)
      throw ShapeError("generator_graph: state layer count mismatch");
    for (int l = 0; l < n_layers; ++l) {
      h[l] = tape.leaf(init_state->h[l]);
      c[l] = tape.leaf(init_state->c[l]);
    }
  }

  std::vector<CellIds> enc_ids, dec_ids;
  for (int l = 0; l < n_enc; ++l) {
    enc_ids.push_back(gather_cell_ids(bind, "gen.enc" + std::to_string(l)));
    dec_ids.push_back(gather_cell_ids(bind, "gen.dec" + std::to_string(l)));
  }
  const VId head_w = bind.at("gen.head.w");
  const VId head_b = bind.at("gen.head.b");

  GenGraph out;
  for (VId cond : cond_blocks) {
    if (tape.val(cond).ch != cfg.cond_channels)
      throw ShapeError("generator_graph: condition channel mismatch");
    if (tape.val(cond).len != cfg.block_len)
      throw ShapeError("generator_graph: condition length mismatch");
    std::vector<VId> enc_out(n_enc);
    VId x = cond;
    for (int l = 0; l < n_enc; ++l) {
      auto [hn, cn] = cell_graph(tape, cfg.encoder[l], enc_ids[l], x, h[l], c[l]);
      h[l] = hn;
      c[l] = cn;
      enc_out[l] = hn;
      x = hn;
    }
    for (int l = 0; l < n_enc; ++l) {
      if (l > 0) x = tape.concat_ch(x, enc_out[n_enc - 1 - l]);
      auto [hn, cn] =
          cell_graph(tape, cfg.decoder[l], dec_ids[l], x, h[n_enc + l],
                     c[n_enc + l]);
      h[n_enc + l] = hn;
      c[n_enc + l] = cn;
      x = hn;
    }
    out.outputs.push_back(tape.tanh(tape.conv1d(x, head_w, head_b, 1, 1, 0)));
  }
  out.final_h = h;
  out.final_c = c;
  return out;
}

nn::VId critic_graph(nn::Tape& tape, const ParamBinding& bind,
                     const CriticConfig& cfg, nn::VId input_block) {
  cfg.validate();
  if (tape.val(input_block).ch != cfg.in_channels)
    throw ShapeError("critic_graph: input channel mismatch");
  VId x = input_block;
  for (std::size_t l = 0; l < cfg.encoder.size(); ++l) {
    const CellIds ids = gather_cell_ids(bind, "critic.enc" + std::to_string(l));
    auto [hn, cn] =
        cell_graph(tape, cfg.encoder[l], ids, x, nn::kNoId, nn::kNoId);
    (void)cn;
    x = hn;
  }
  const VId pooled = tape.global_avg_time(x);
  return tape.conv1d(pooled, bind.at("critic.head.w"), bind.at("critic.head.b"),
                     1, 1, 0);
}

GeneratorOutput generator_forward(const ModelParams& params,
                                  const GeneratorConfig& cfg,
                                  const std::vector<nn::Tensor>& cond_blocks,
                                  const GenState* init_state) {
  Tape tape(false);
  const ParamBinding bind = ParamBinding::bind(tape, params, nullptr);
  std::vector<VId> cond_ids;
  cond_ids.reserve(cond_blocks.size());
  for (const auto& blk : cond_blocks) cond_ids.push_back(tape.leaf(blk));
  const GenGraph graph = generator_graph(tape, bind, cfg, cond_ids, init_state);
  GeneratorOutput out;
  for (VId id : graph.outputs) out.blocks.push_back(tape.val(id));
  for (VId id : graph.final_h) out.state.h.push_back(tape.val(id));
  for (VId id : graph.final_c) out.state.c.push_back(tape.val(id));
  return out;
}

double critic_forward(const ModelParams& params, const CriticConfig& cfg,
                      const nn::Tensor& input_block) {
  Tape tape(false);
  const ParamBinding bind = ParamBinding::bind(tape, params, nullptr);
  const VId score = critic_graph(tape, bind, cfg, tape.leaf(input_block));
  return tape.val(score).scalar_value();
}

nn::Tensor critic_input(const nn::Tensor& feature_block,
                        const nn::Tensor& cond, int noise_channels) {
  const Tensor stripped = condition_without_noise(cond, noise_channels);
  if (stripped.len != feature_block.len)
    throw ShapeError("critic_input: length mismatch");
  Tensor out(feature_block.ch + stripped.ch, feature_block.len);
  std::copy(feature_block.v.begin(), feature_block.v.end(), out.v.begin());
  std::copy(stripped.v.begin(), stripped.v.end(),
            out.v.begin() + feature_block.v.size());
  return out;
}

// ---------------------------------------------------------------------------
// feature <-> tensor conversion
// ---------------------------------------------------------------------------

nn::Tensor features_to_tensor(const FeatureMatrix& block) {
  Tensor t(block.d, block.t);
  for (int f = 0; f < block.t; ++f)
    for (int d = 0; d < block.d; ++d) t.at(d, f) = block.at(f, d);
  return t;
}

FeatureMatrix tensor_to_features(const nn::Tensor& t, double hop_s,
                                 const std::vector<std::string>& dim_labels) {
  FeatureMatrix m(t.len, t.ch);
  m.hop_s = hop_s;
  m.dim_labels = dim_labels;
  for (int f = 0; f < t.len; ++f)
    for (int d = 0; d < t.ch; ++d)
      m.at(f, d) = static_cast<float>(t.at(d, f));
  return m;
}

// ---------------------------------------------------------------------------
// tensor-section container
// ---------------------------------------------------------------------------

namespace {

constexpr char kSectionMagic[4] = {'G', 'S', 'P', '1'};

void put_u32le(std::vector<std::uint8_t>& out, std::uint32_t x) {
  out.push_back(x & 0xff);
  out.push_back((x >> 8) & 0xff);
  out.push_back((x >> 16) & 0xff);
  out.push_back((x >> 24) & 0xff);
}

std::uint32_t get_u32le(const std::uint8_t* p) {
  return static_cast<std::uint32_t>(p[0]) | (p[1] << 8) | (p[2] << 16) |
         (static_cast<std::uint32_t>(p[3]) << 24);
}

}  // namespace

void save_tensor_sections(const std::string& path, const nn::ParamMap& tensors,
                          const std::string& meta_json) {
  json sections = json::array();
  std::size_t payload_count = 0;
  for (const auto& [name, t] : tensors) {
    sections.push_back({{"name", name}, {"ch", t.ch}, {"len", t.len}});
    payload_count += t.v.size();
  }
  json header = {{"dtype", "float64"},
                 {"sections", sections},
                 {"meta", json::parse(meta_json.empty() ? "{}" : meta_json)}};
  const std::string hs = header.dump();

  std::vector<std::uint8_t> out;
  out.reserve(8 + hs.size() + payload_count * 8);
  out.insert(out.end(), kSectionMagic, kSectionMagic + 4);
  put_u32le(out, static_cast<std::uint32_t>(hs.size()));
  out.insert(out.end(), hs.begin(), hs.end());
  for (const auto& [name, t] : tensors) {
    for (double d : t.v) {
      const std::uint64_t bits = std::bit_cast<std::uint64_t>(d);
      put_u32le(out, static_cast<std::uint32_t>(bits & 0xffffffffu));
      put_u32le(out, static_cast<std::uint32_t>(bits >> 32));
    }
  }
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw Error("cannot open for writing: " + path);
  f.write(reinterpret_cast<const char*>(out.data()),
          static_cast<std::streamsize>(out.size()));
  if (!f) throw Error("write failed: " + path);
}

void load_tensor_sections(const std::string& path, nn::ParamMap& tensors,
                          std::string& meta_json) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open: " + path);
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  if (bytes.size() < 8 || std::memcmp(bytes.data(), kSectionMagic, 4) != 0)
    throw FormatError("checkpoint: bad magic");
  const std::uint32_t hlen = get_u32le(bytes.data() + 4);
  if (bytes.size() < 8 + static_cast<std::size_t>(hlen))
    throw FormatError("checkpoint: truncated header");
  json header;
  try {
    header = json::parse(bytes.begin() + 8, bytes.begin() + 8 + hlen);
  } catch (const json::exception& e) {
    throw FormatError(std::string("checkpoint: bad header: ") + e.what());
  }
  if (header.value("dtype", "") != "float64")
    throw FormatError("checkpoint: unsupported dtype");
  std::size_t payload_count = 0;
  for (const auto& s : header.at("sections"))
    payload_count += static_cast<std::size_t>(s.at("ch").get<int>()) *
                     s.at("len").get<int>();
  if (bytes.size() - 8 - hlen != payload_count * 8)
    throw FormatError("checkpoint: payload size mismatch");

  tensors.clear();
  const std::uint8_t* p = bytes.data() + 8 + hlen;
  for (const auto& s : header.at("sections")) {
    Tensor t(s.at("ch").get<int>(), s.at("len").get<int>());
    for (double& d : t.v) {
      const std::uint64_t lo = get_u32le(p);
      const std::uint64_t hi = get_u32le(p + 4);
      d = std::bit_cast<double>(lo | (hi << 32));
      p += 8;
    }
    tensors.emplace(s.at("name").get<std::string>(), std::move(t));
  }
  meta_json = header.at("meta").dump();
}

}  // namespace sing
