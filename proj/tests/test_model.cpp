#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "sing/model.hpp"
#include "sing/rng.hpp"
#include "test_util.hpp"

using namespace sing;
using nn::Tensor;

namespace {

Tensor random_tensor(int ch, int len, Rng& rng, double scale = 1.0) {
  Tensor t(ch, len);
  for (double& x : t.v) x = rng.uniform(-scale, scale);
  return t;
}

GeneratorConfig tiny_gen() {
  return default_generator_config(3, 2, {4, 6}, 8);
}

struct CondInputs {
  std::vector<int> ids;
  std::vector<double> f0;
  std::vector<float> vuv;
};

CondInputs flat_conditions(int t, int id, double f0) {
  CondInputs c;
  c.ids.assign(t, id);
  c.f0.assign(t, f0);
  c.vuv.assign(t, f0 > 0 ? 1.0f : 0.0f);
  return c;
}

}  // namespace

TEST_CASE("assemble_condition lays out one-hots, f0 and noise") {
  const auto in = flat_conditions(4, 1, 0.0);
  const Tensor cond = assemble_condition(in.ids, in.f0, in.vuv, 0, 3, 2, 4, 7);
  CHECK(cond.ch == condition_channels(3, 2, 4));
  CHECK(cond.len == 4);
  for (int t = 0; t < 4; ++t) {
    CHECK(cond.at(0, t) == 0.0);
    CHECK(cond.at(1, t) == 1.0);  // phoneme 1
    CHECK(cond.at(2, t) == 0.0);
    CHECK(cond.at(3, t) == 0.0);  // f0 channel, unvoiced
    CHECK(cond.at(4, t) == 0.0);  // vuv
    CHECK(cond.at(5, t) == 1.0);  // singer 0
    CHECK(cond.at(6, t) == 0.0);
  }

  // f0 at the reference pitch maps to zero with vuv set.
  auto voiced = flat_conditions(4, 1, kF0RefHz);
  const Tensor c2 = assemble_condition(voiced.ids, voiced.f0, voiced.vuv, 1, 3,
                                       2, 4, 7);
  for (int t = 0; t < 4; ++t) {
    CHECK(c2.at(3, t) == 0.0);
    CHECK(c2.at(4, t) == 1.0);
    CHECK(c2.at(6, t) == 1.0);
  }

  // One octave up is +0.5; clamped beyond two octaves.
  auto high = flat_conditions(1, 0, kF0RefHz * 2);
  const Tensor c3 =
      assemble_condition(high.ids, high.f0, high.vuv, 0, 3, 2, 4, 7);
  CHECK(c3.at(3, 0) == doctest::Approx(0.5));
  auto extreme = flat_conditions(1, 0, kF0RefHz * 32);
  const Tensor c4 =
      assemble_condition(extreme.ids, extreme.f0, extreme.vuv, 0, 3, 2, 4, 7);
  CHECK(c4.at(3, 0) == 1.0);
}

TEST_CASE("assemble_condition validates ranges and is seed-deterministic") {
  auto in = flat_conditions(4, 1, 100.0);
  CHECK_THROWS_AS(
      assemble_condition(in.ids, in.f0, in.vuv, 2, 3, 2, 4, 7),
      ValidationError);
  in.ids[2] = 3;
  CHECK_THROWS_AS(
      assemble_condition(in.ids, in.f0, in.vuv, 0, 3, 2, 4, 7),
      ValidationError);
  in.ids[2] = 0;

  const Tensor a = assemble_condition(in.ids, in.f0, in.vuv, 0, 3, 2, 4, 9);
  const Tensor b = assemble_condition(in.ids, in.f0, in.vuv, 0, 3, 2, 4, 9);
  const Tensor c = assemble_condition(in.ids, in.f0, in.vuv, 0, 3, 2, 4, 10);
  CHECK(a.v == b.v);
  CHECK(a.v != c.v);

  // Noise strips cleanly.
  const Tensor stripped = condition_without_noise(a, 4);
  CHECK(stripped.ch == a.ch - 4);
  for (int ch = 0; ch < stripped.ch; ++ch)
    for (int t = 0; t < a.len; ++t) CHECK(stripped.at(ch, t) == a.at(ch, t));
}

TEST_CASE("condition invariants hold on random input") {
  Rng rng(5);
  for (int trial = 0; trial < 10; ++trial) {
    const int t_len = 1 + static_cast<int>(rng.integer(40));
    const int P = 2 + static_cast<int>(rng.integer(6));
    const int S = 1 + static_cast<int>(rng.integer(5));
    CondInputs in;
    for (int t = 0; t < t_len; ++t) {
      in.ids.push_back(static_cast<int>(rng.integer(P)));
      const bool voiced = rng.uniform() < 0.7;
      in.f0.push_back(voiced ? rng.uniform(40.0, 2000.0) : 0.0);
      in.vuv.push_back(voiced ? 1.0f : 0.0f);
    }
    const int singer = static_cast<int>(rng.integer(S));
    const Tensor cond =
        assemble_condition(in.ids, in.f0, in.vuv, singer, P, S, 4, trial);
    for (int t = 0; t < t_len; ++t) {
      double phoneme_sum = 0, singer_sum = 0;
      for (int p = 0; p < P; ++p) phoneme_sum += cond.at(p, t);
      for (int s = 0; s < S; ++s) singer_sum += cond.at(P + 2 + s, t);
      CHECK(phoneme_sum == 1.0);
      CHECK(singer_sum == 1.0);
      CHECK(cond.at(P + 2 + singer, t) == 1.0);
      CHECK(std::abs(cond.at(P, t)) <= 1.0);
    }
  }
}

TEST_CASE("generator output shape and tanh bound") {
  const GeneratorConfig cfg = tiny_gen();
  const CriticConfig critic = critic_config_for(cfg, 3, 2);
  const ModelParams params = init_params(11, cfg, critic);
  Rng rng(3);
  const std::vector<Tensor> conds = {
      random_tensor(cfg.cond_channels, cfg.block_len, rng)};
  const GeneratorOutput out = generator_forward(params, cfg, conds, nullptr);
  REQUIRE(out.blocks.size() == 1);
  CHECK(out.blocks[0].ch == cfg.out_dims);
  CHECK(out.blocks[0].len == cfg.block_len);
  for (double v : out.blocks[0].v) CHECK(std::abs(v) < 1.0);

  // Encoder states halve the length per layer; decoder states restore it.
  REQUIRE(out.state.h.size() == 4);
  CHECK(out.state.h[0].len == cfg.block_len / 2);
  CHECK(out.state.h[1].len == cfg.block_len / 4);
  CHECK(out.state.h[2].len == cfg.block_len / 2);
  CHECK(out.state.h[3].len == cfg.block_len);
}

TEST_CASE("state carry-over changes the second block") {
  const GeneratorConfig cfg = tiny_gen();
  const CriticConfig critic = critic_config_for(cfg, 3, 2);
  const ModelParams params = init_params(12, cfg, critic);
  Rng rng(4);
  const Tensor cond = random_tensor(cfg.cond_channels, cfg.block_len, rng);
  const std::vector<Tensor> twice = {cond, cond};

  const GeneratorOutput seq = generator_forward(params, cfg, twice, nullptr);
  const GeneratorOutput fresh = generator_forward(params, cfg, {cond}, nullptr);
  // Identical conditions, but block 2 sees carried state.
  double diff = 0;
  for (std::size_t i = 0; i < seq.blocks[1].v.size(); ++i)
    diff = std::max(diff,
                    std::abs(seq.blocks[1].v[i] - fresh.blocks[0].v[i]));
  CHECK(diff > 1e-6);
  // Block 1 equals the fresh run exactly.
  CHECK(seq.blocks[0].v == fresh.blocks[0].v);
}

TEST_CASE("generator is causal across blocks") {
  const GeneratorConfig cfg = tiny_gen();
  const CriticConfig critic = critic_config_for(cfg, 3, 2);
  const ModelParams params = init_params(13, cfg, critic);
  Rng rng(6);
  std::vector<Tensor> conds;
  for (int b = 0; b < 3; ++b)
    conds.push_back(random_tensor(cfg.cond_channels, cfg.block_len, rng));
  const GeneratorOutput base = generator_forward(params, cfg, conds, nullptr);

  auto perturbed = conds;
  perturbed[2].at(0, 3) += 0.5;
  const GeneratorOutput mod = generator_forward(params, cfg, perturbed, nullptr);
  CHECK(base.blocks[0].v == mod.blocks[0].v);
  CHECK(base.blocks[1].v == mod.blocks[1].v);
  CHECK(base.blocks[2].v != mod.blocks[2].v);
}

// ---------------------------------------------------------------------------
// independent straight-line forward trace
// ---------------------------------------------------------------------------

namespace {

// Naive re-implementations, written independently of the tape kernels.
Tensor trace_conv(const Tensor& x, const Tensor& w, const Tensor* b, int k,
                  int s, int p) {
  const int cout = w.ch;
  Tensor out(cout, (x.len + 2 * p - k) / s + 1);
  for (int co = 0; co < cout; ++co)
    for (int t = 0; t < out.len; ++t) {
      double acc = b ? b->at(co, 0) : 0.0;
      for (int ci = 0; ci < x.ch; ++ci)
        for (int j = 0; j < k; ++j) {
          const int idx = t * s + j - p;
          if (idx >= 0 && idx < x.len)
            acc += x.at(ci, idx) * w.at(co, ci * k + j);
        }
      out.at(co, t) = acc;
    }
  return out;
}

Tensor trace_tconv(const Tensor& x, const Tensor& w, const Tensor* b, int k,
                   int s, int p) {
  const int cout = w.len / k;
  Tensor out(cout, (x.len - 1) * s + k - 2 * p);
  for (int ci = 0; ci < x.ch; ++ci)
    for (int t = 0; t < x.len; ++t)
      for (int co = 0; co < cout; ++co)
        for (int j = 0; j < k; ++j) {
          const int u = t * s + j - p;
          if (u >= 0 && u < out.len)
            out.at(co, u) += x.at(ci, t) * w.at(ci, co * k + j);
        }
  if (b)
    for (int co = 0; co < cout; ++co)
      for (int u = 0; u < out.len; ++u) out.at(co, u) += b->at(co, 0);
  return out;
}

Tensor map_unary(const Tensor& x, double (*fn)(double)) {
  Tensor out(x.ch, x.len);
  for (std::size_t i = 0; i < x.v.size(); ++i) out.v[i] = fn(x.v[i]);
  return out;
}

double sigmoid_fn(double v) { return 1.0 / (1.0 + std::exp(-v)); }

struct TraceState {
  Tensor h, c;
  bool has = false;
};

Tensor trace_cell(const ModelParams& params, const std::string& prefix,
                  const ConvLstmLayerSpec& spec, const Tensor& x,
                  TraceState& state) {
  const char* g[4] = {"i", "f", "g", "o"};
  Tensor pre[4];
  for (int i = 0; i < 4; ++i) {
    const Tensor& wx = params.at(prefix + ".wx_" + g[i]);
    const Tensor& wh = params.at(prefix + ".wh_" + g[i]);
    const Tensor& b = params.at(prefix + ".b_" + g[i]);
    pre[i] = spec.transposed
                 ? trace_tconv(x, wx, &b, spec.kernel, spec.stride,
                               (spec.kernel - spec.stride) / 2)
                 : trace_conv(x, wx, &b, spec.kernel, spec.stride,
                              (spec.kernel - 1) / 2);
    if (state.has) {
      const Tensor hh = trace_conv(state.h, wh, nullptr, spec.state_kernel, 1,
                                   (spec.state_kernel - 1) / 2);
      for (std::size_t n = 0; n < pre[i].v.size(); ++n)
        pre[i].v[n] += hh.v[n];
    }
  }
  const Tensor i_g = map_unary(pre[0], sigmoid_fn);
  const Tensor f_g = map_unary(pre[1], sigmoid_fn);
  const Tensor g_g = map_unary(pre[2], std::tanh);
  const Tensor o_g = map_unary(pre[3], sigmoid_fn);
  Tensor c_new(i_g.ch, i_g.len);
  for (std::size_t n = 0; n < c_new.v.size(); ++n) {
    c_new.v[n] = i_g.v[n] * g_g.v[n];
    if (state.has) c_new.v[n] += f_g.v[n] * state.c.v[n];
  }
  Tensor h_new(i_g.ch, i_g.len);
  for (std::size_t n = 0; n < h_new.v.size(); ++n)
    h_new.v[n] = o_g.v[n] * std::tanh(c_new.v[n]);
  state.h = h_new;
  state.c = c_new;
  state.has = true;
  return h_new;
}

}  // namespace

TEST_CASE("generator matches an independent straight-line forward trace") {
  const GeneratorConfig cfg = tiny_gen();
  const CriticConfig critic = critic_config_for(cfg, 3, 2);
  const ModelParams params = init_params(21, cfg, critic);
  Rng rng(8);
  std::vector<Tensor> conds;
  for (int b = 0; b < 2; ++b)
    conds.push_back(random_tensor(cfg.cond_channels, cfg.block_len, rng));

  const GeneratorOutput got = generator_forward(params, cfg, conds, nullptr);

  // Straight-line trace with per-layer persistent states.
  std::vector<TraceState> states(4);
  std::vector<Tensor> outputs;
  for (const Tensor& cond : conds) {
    Tensor e0 = trace_cell(params, "gen.enc0", cfg.encoder[0], cond, states[0]);
    Tensor e1 = trace_cell(params, "gen.enc1", cfg.encoder[1], e0, states[1]);
    Tensor d0 = trace_cell(params, "gen.dec0", cfg.decoder[0], e1, states[2]);
    Tensor cat(d0.ch + e0.ch, d0.len);
    std::copy(d0.v.begin(), d0.v.end(), cat.v.begin());
    std::copy(e0.v.begin(), e0.v.end(), cat.v.begin() + d0.v.size());
    Tensor d1 = trace_cell(params, "gen.dec1", cfg.decoder[1], cat, states[3]);
    Tensor head = trace_conv(d1, params.at("gen.head.w"),
                             &params.at("gen.head.b"), 1, 1, 0);
    outputs.push_back(map_unary(head, std::tanh));
  }

  for (int b = 0; b < 2; ++b) {
    REQUIRE(got.blocks[b].same_shape(outputs[b]));
    double worst = 0;
    for (std::size_t i = 0; i < outputs[b].v.size(); ++i)
      worst = std::max(worst,
                       std::abs(outputs[b].v[i] - got.blocks[b].v[i]));
    CHECK(worst < 1e-10);
  }
}

// ---------------------------------------------------------------------------
// critic
// ---------------------------------------------------------------------------

TEST_CASE("critic with zero weights scores zero; head is linear") {
  const GeneratorConfig cfg = tiny_gen();
  const CriticConfig critic = critic_config_for(cfg, 3, 2);
  ModelParams params = init_params(31, cfg, critic);
  Rng rng(9);
  const Tensor input = random_tensor(critic.in_channels, cfg.block_len, rng);

  ModelParams zeroed = params;
  for (auto& [name, t] : zeroed.tensors)
    if (is_critic_param(name)) t.fill(0.0);
  CHECK(critic_forward(zeroed, critic, input) == 0.0);

  const double base = critic_forward(params, critic, input);
  ModelParams scaled = params;
  for (double& v : scaled.at("critic.head.w").v) v *= 3.0;
  for (double& v : scaled.at("critic.head.b").v) v *= 3.0;
  CHECK(critic_forward(scaled, critic, input) ==
        doctest::Approx(3.0 * base).epsilon(1e-12));
}

TEST_CASE("critic input stacks features with the noise-free condition") {
  const GeneratorConfig cfg = tiny_gen();
  Rng rng(10);
  const Tensor feat = random_tensor(cfg.out_dims, cfg.block_len, rng);
  const Tensor cond = random_tensor(cfg.cond_channels, cfg.block_len, rng);
  const Tensor input = critic_input(feat, cond, cfg.noise_channels);
  CHECK(input.ch == cfg.out_dims + cfg.cond_channels - cfg.noise_channels);
  CHECK(input.at(0, 0) == feat.at(0, 0));
  CHECK(input.at(cfg.out_dims, 0) == cond.at(0, 0));
}

// ---------------------------------------------------------------------------
// parameters and checkpoint container
// ---------------------------------------------------------------------------

TEST_CASE("init_params is deterministic, seed-sensitive and bounded") {
  const GeneratorConfig cfg = tiny_gen();
  const CriticConfig critic = critic_config_for(cfg, 3, 2);
  const ModelParams a = init_params(5, cfg, critic);
  const ModelParams b = init_params(5, cfg, critic);
  const ModelParams c = init_params(6, cfg, critic);

  bool all_equal = true, any_diff = false;
  for (const auto& [name, t] : a.tensors) {
    if (t.v != b.tensors.at(name).v) all_equal = false;
    if (t.v != c.tensors.at(name).v) any_diff = true;
  }
  CHECK(all_equal);
  CHECK(any_diff);

  const ModelLayout layout = model_layout(cfg, critic);
  validate_params(a, layout);
  for (const auto& spec : layout) {
    const Tensor& t = a.at(spec.name);
    if (spec.init == ParamSpec::Init::kGlorot) {
      const double bound = std::sqrt(6.0 / (spec.fan_in + spec.fan_out));
      for (double v : t.v) CHECK(std::abs(v) <= bound);
    } else if (spec.init == ParamSpec::Init::kOne) {
      for (double v : t.v) CHECK(v == 1.0);
    } else {
      for (double v : t.v) CHECK(v == 0.0);
    }
  }
}

TEST_CASE("tensor sections round trip bit-exactly and reject corruption") {
  sing::test::TempDir dir("sections");
  const GeneratorConfig cfg = tiny_gen();
  const CriticConfig critic = critic_config_for(cfg, 3, 2);
  const ModelParams params = init_params(77, cfg, critic);

  save_tensor_sections(dir.file("p.ckpt"), params.tensors, "{\"k\":1}");
  nn::ParamMap loaded;
  std::string meta;
  load_tensor_sections(dir.file("p.ckpt"), loaded, meta);
  REQUIRE(loaded.size() == params.tensors.size());
  for (const auto& [name, t] : params.tensors) CHECK(loaded.at(name).v == t.v);
  CHECK(meta.find("\"k\"") != std::string::npos);

  // Shape mismatch against a different layout is reported explicitly.
  const GeneratorConfig other = default_generator_config(3, 2, {4, 8}, 8);
  const ModelLayout other_layout =
      model_layout(other, critic_config_for(other, 3, 2));
  ModelParams as_params;
  as_params.tensors = loaded;
  CHECK_THROWS_AS(validate_params(as_params, other_layout), ShapeError);

  // Corrupt magic.
  std::ifstream in(dir.file("p.ckpt"), std::ios::binary);
  std::string bytes((std::istreambuf_iterator<char>(in)),
                    std::istreambuf_iterator<char>());
  in.close();
  bytes[0] = 'X';
  std::ofstream out(dir.file("bad.ckpt"), std::ios::binary);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  out.close();
  nn::ParamMap dummy;
  CHECK_THROWS_AS(load_tensor_sections(dir.file("bad.ckpt"), dummy, meta),
                  FormatError);
}

TEST_CASE("feature/tensor conversion round trips") {
  Rng rng(12);
  FeatureMatrix m(6, 4);
  m.dim_labels = {"a", "b", "c", "d"};
  for (auto& v : m.values) v = static_cast<float>(rng.uniform(-1, 1));
  const Tensor t = features_to_tensor(m);
  CHECK(t.ch == 4);
  CHECK(t.len == 6);
  const FeatureMatrix back = tensor_to_features(t, m.hop_s, m.dim_labels);
  CHECK(back.values == m.values);
}
