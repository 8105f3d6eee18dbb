#include "sing/selfcheck.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>

#include "sing/evaluation.hpp"
#include "sing/model.hpp"
#include "sing/rng.hpp"
#include "sing/tape.hpp"

namespace sing::check {

using nn::GradMap;
using nn::ParamMap;
using nn::Tensor;
using nn::VId;

namespace {

Tensor random_tensor(int ch, int len, Rng& rng, double scale = 1.0) {
  Tensor t(ch, len);
  for (double& x : t.v) x = rng.uniform(-scale, scale);
  return t;
}

// Loss evaluator over a parameter map; fills analytic gradients when asked.
using CaseFn = std::function<double(const ParamMap&, GradMap*)>;

struct FdCase {
  std::string name;
  ParamMap params;
  CaseFn run;
  double tolerance = 1e-4;
  int sample_coords = 0;  // 0 = every coordinate
};

// Relative error with a floored denominator; below the floor the comparison
// degrades to an absolute one, matching the noise floor of central
// differences at eps=1e-5.
double rel_err(double a, double n) {
  return std::abs(a - n) / std::max({1e-4, std::abs(a), std::abs(n)});
}

GradCheckRow run_case(FdCase& c, Rng& rng) {
  GradCheckRow row;
  row.name = c.name;
  row.tolerance = c.tolerance;
  GradMap grads;
  c.run(c.params, &grads);

  constexpr double kEps = 1e-5;
  double worst = 0;
  int checked = 0;
  for (auto& [name, tensor] : c.params) {
    // Parameters the forward pass never touches (the critic's state kernels
    // and forget gate run zero-state single steps) carry a zero gradient.
    const Tensor zero(tensor.ch, tensor.len);
    auto git = grads.find(name);
    const Tensor& g =
        git != grads.end() && git->second.ch != 0 ? git->second : zero;
    const std::size_t count = tensor.v.size();
    std::vector<std::size_t> coords;
    if (c.sample_coords > 0 && count > static_cast<std::size_t>(c.sample_coords)) {
      for (int k = 0; k < c.sample_coords; ++k)
        coords.push_back(rng.integer(count));
    } else {
      coords.resize(count);
      for (std::size_t i = 0; i < count; ++i) coords[i] = i;
    }
    for (std::size_t idx : coords) {
      const double saved = tensor.v[idx];
      tensor.v[idx] = saved + kEps;
      const double up = c.run(c.params, nullptr);
      tensor.v[idx] = saved - kEps;
      const double down = c.run(c.params, nullptr);
      tensor.v[idx] = saved;
      const double numeric = (up - down) / (2 * kEps);
      worst = std::max(worst, rel_err(g.v[idx], numeric));
      ++checked;
    }
  }
  row.max_rel_err = worst;
  row.coords_checked = checked;
  row.pass = worst < c.tolerance;
  return row;
}

// Scalar loss <out, coeffs> keeps every output coordinate in play.
VId weighted_sum(nn::Tape& tape, VId out, const Tensor& coeffs) {
  return tape.sum(tape.mul(out, tape.leaf(coeffs)));
}

FdCase make_conv_case(Rng& rng, bool transposed) {
  FdCase c;
  c.name = transposed ? "conv1d_transpose" : "conv1d";
  const int cin = 3, cout = 4, k = 3, stride = 2, pad = 1, t_in = 12;
  c.params.emplace("x", random_tensor(cin, t_in, rng));
  c.params.emplace("w", transposed ? random_tensor(cin, cout * k, rng)
                                   : random_tensor(cout, cin * k, rng));
  c.params.emplace("b", random_tensor(cout, 1, rng));
  const int t_out = transposed
                        ? nn::conv1d_transpose_out_len(t_in, k, stride, pad)
                        : nn::conv1d_out_len(t_in, k, stride, pad);
  Tensor coeffs = random_tensor(cout, t_out, rng);
  for (double& x : coeffs.v) x = x < 0 ? x - 0.5 : x + 0.5;
  c.run = [=](const ParamMap& p, GradMap* grads) {
    nn::Tape tape(true);
    const VId x = tape.leaf(p.at("x"), grads != nullptr);
    const VId w = tape.leaf(p.at("w"), grads != nullptr);
    const VId b = tape.leaf(p.at("b"), grads != nullptr);
    const VId out = transposed
                        ? tape.conv1d_transpose(x, w, b, k, stride, pad)
                        : tape.conv1d(x, w, b, k, stride, pad);
    const VId loss = weighted_sum(tape, out, coeffs);
    if (grads) {
      tape.backward(loss);
      grads->emplace("x", tape.grad(x));
      grads->emplace("w", tape.grad(w));
      grads->emplace("b", tape.grad(b));
    }
    return tape.val(loss).scalar_value();
  };
  return c;
}

FdCase make_cell_case(Rng& rng) {
  FdCase c;
  c.name = "convlstm_cell";
  const int cin = 3, ch = 4, k = 3, stride = 2, t_in = 12;
  const int t_out = nn::conv1d_out_len(t_in, k, stride, 1);
  const char* gates[4] = {"i", "f", "g", "o"};
  for (int g = 0; g < 4; ++g) {
    c.params.emplace(std::string("wx_") + gates[g],
                     random_tensor(ch, cin * k, rng, 0.5));
    c.params.emplace(std::string("wh_") + gates[g],
                     random_tensor(ch, ch * 3, rng, 0.5));
    c.params.emplace(std::string("b_") + gates[g],
                     random_tensor(ch, 1, rng, 0.5));
  }
  c.params.emplace("x", random_tensor(cin, t_in, rng));
  c.params.emplace("h0", random_tensor(ch, t_out, rng, 0.9));
  c.params.emplace("c0", random_tensor(ch, t_out, rng));
  const Tensor r1 = random_tensor(ch, t_out, rng);
  const Tensor r2 = random_tensor(ch, t_out, rng);
  c.run = [=](const ParamMap& p, GradMap* grads) {
    nn::Tape tape(true);
    const bool want = grads != nullptr;
    std::map<std::string, VId> ids;
    for (const auto& [name, t] : p) ids.emplace(name, tape.leaf(t, want));
    ConvLstmLayerSpec spec{ch, k, stride, 3, false};
    VId pre[4];
    for (int g = 0; g < 4; ++g) {
      pre[g] = tape.add(
          tape.conv1d(ids.at("x"), ids.at(std::string("wx_") + gates[g]),
                      ids.at(std::string("b_") + gates[g]), k, stride, 1),
          tape.conv1d(ids.at("h0"), ids.at(std::string("wh_") + gates[g]),
                      nn::kNoId, 3, 1, 1));
    }
    const VId i = tape.sigmoid(pre[0]);
    const VId f = tape.sigmoid(pre[1]);
    const VId g2 = tape.tanh(pre[2]);
    const VId o = tape.sigmoid(pre[3]);
    const VId cn = tape.add(tape.mul(f, ids.at("c0")), tape.mul(i, g2));
    const VId hn = tape.mul(o, tape.tanh(cn));
    const VId loss =
        tape.add(weighted_sum(tape, hn, r1), weighted_sum(tape, cn, r2));
    if (grads) {
      tape.backward(loss);
      for (const auto& [name, id] : ids) grads->emplace(name, tape.grad(id));
    }
    return tape.val(loss).scalar_value();
  };
  return c;
}

struct TinyModel {
  GeneratorConfig gen;
  CriticConfig critic;
};

TinyModel tiny_model() {
  TinyModel m;
  m.gen = default_generator_config(5, 2, {4, 6}, 8);
  m.gen.out_dims = 7;
  m.critic = critic_config_for(m.gen, 5, 2);
  return m;
}

FdCase make_generator_case(Rng& rng) {
  FdCase c;
  c.name = "generator (sampled)";
  c.tolerance = 1e-3;
  c.sample_coords = 4;  // per tensor; ~50 overall across the layer map
  const TinyModel m = tiny_model();
  const ModelParams init = init_params(rng.raw(), m.gen, m.critic);
  for (const auto& [name, t] : init.tensors)
    if (is_generator_param(name)) c.params.emplace(name, t);
  const int n_blocks = 2;
  std::vector<Tensor> conds;
  std::vector<Tensor> coeffs;
  for (int b = 0; b < n_blocks; ++b) {
    conds.push_back(random_tensor(m.gen.cond_channels, m.gen.block_len, rng));
    coeffs.push_back(random_tensor(m.gen.out_dims, m.gen.block_len, rng));
  }
  const GeneratorConfig gen = m.gen;
  c.run = [=](const ParamMap& p, GradMap* grads) {
    nn::Tape tape(true);
    ParamBinding bind;
    for (const auto& [name, t] : p)
      bind.ids.emplace(name, tape.leaf(t, grads != nullptr));
    std::vector<VId> cond_ids;
    for (const auto& t : conds) cond_ids.push_back(tape.leaf(t));
    const GenGraph graph = generator_graph(tape, bind, gen, cond_ids, nullptr);
    VId loss = weighted_sum(tape, graph.outputs[0], coeffs[0]);
    for (int b = 1; b < n_blocks; ++b)
      loss = tape.add(loss, weighted_sum(tape, graph.outputs[b], coeffs[b]));
    if (grads) {
      tape.backward(loss);
      for (const auto& [name, id] : bind.ids)
        grads->emplace(name, tape.grad(id));
    }
    return tape.val(loss).scalar_value();
  };
  return c;
}

FdCase make_critic_case(Rng& rng) {
  FdCase c;
  c.name = "critic";
  const TinyModel m = tiny_model();
  const ModelParams init = init_params(rng.raw() | 1, m.gen, m.critic);
  for (const auto& [name, t] : init.tensors)
    if (is_critic_param(name)) c.params.emplace(name, t);
  const Tensor input =
      random_tensor(m.critic.in_channels, m.gen.block_len, rng);
  const CriticConfig critic = m.critic;
  c.run = [=](const ParamMap& p, GradMap* grads) {
    nn::Tape tape(true);
    ParamBinding bind;
    for (const auto& [name, t] : p)
      bind.ids.emplace(name, tape.leaf(t, grads != nullptr));
    const VId score = critic_graph(tape, bind, critic, tape.leaf(input));
    if (grads) {
      tape.backward(score);
      for (const auto& [name, id] : bind.ids)
        grads->emplace(name, tape.grad(id));
    }
    return tape.val(score).scalar_value();
  };
  return c;
}

}  // namespace

GradCheckReport gradient_suite(std::uint64_t seed) {
  const auto t0 = std::chrono::steady_clock::now();
  Rng rng(seed);
  GradCheckReport report;
  {
    FdCase c = make_conv_case(rng, false);
    report.rows.push_back(run_case(c, rng));
  }
  {
    FdCase c = make_conv_case(rng, true);
    report.rows.push_back(run_case(c, rng));
  }
  {
    FdCase c = make_cell_case(rng);
    report.rows.push_back(run_case(c, rng));
  }
  {
    FdCase c = make_generator_case(rng);
    report.rows.push_back(run_case(c, rng));
  }
  {
    FdCase c = make_critic_case(rng);
    report.rows.push_back(run_case(c, rng));
  }
  report.seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
          .count();
  return report;
}

std::string format_gradcheck(const GradCheckReport& report) {
  std::string out =
      "operation                max rel err   tolerance  coords  status\n";
  char line[128];
  for (const auto& r : report.rows) {
    std::snprintf(line, sizeof(line), "%-24s %11.3e %11.0e %7d  %s\n",
                  r.name.c_str(), r.max_rel_err, r.tolerance,
                  r.coords_checked, r.pass ? "ok" : "FAIL");
    out += line;
  }
  std::snprintf(line, sizeof(line), "elapsed: %.1f s\n", report.seconds);
  out += line;
  return out;
}

// ---------------------------------------------------------------------------
// W1 probe sweep
// ---------------------------------------------------------------------------

bool W1ProbeReport::pass() const {
  if (spearman_corr < 0.9) return false;
  double smallest = 0;
  for (double g : gaps)
    if (g > 0 && (smallest == 0 || g < smallest)) smallest = g;
  if (smallest <= 0) return false;
  return std::abs(identical_gap) < 0.1 * smallest;
}

W1ProbeReport w1_probe_suite(std::uint64_t seed) {
  const auto t0 = std::chrono::steady_clock::now();
  W1ProbeReport report;
  report.shifts = {0.5, 1.0, 2.0, 4.0};
  const int n = 64;
  W1ProbeConfig cfg;
  cfg.seed = seed;
  const std::vector<double> zeros(n, 0.0);
  for (double shift : report.shifts) {
    const std::vector<double> shifted(n, shift);
    const W1ProbeResult res = critic_w1_probe(zeros, shifted, cfg);
    report.gaps.push_back(res.estimated_gap);
    report.oracles.push_back(res.oracle_w1);
  }
  report.identical_gap = critic_w1_probe(zeros, zeros, cfg).estimated_gap;
  report.spearman_corr = spearman(report.gaps, report.oracles);
  report.seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
          .count();
  return report;
}

std::string format_w1probe(const W1ProbeReport& report) {
  std::string out = "shift    critic gap    oracle W1\n";
  char line[128];
  for (std::size_t i = 0; i < report.shifts.size(); ++i) {
    std::snprintf(line, sizeof(line), "%5.2f %12.5f %12.5f\n",
                  report.shifts[i], report.gaps[i], report.oracles[i]);
    out += line;
  }
  std::snprintf(line, sizeof(line),
                "identical-distribution gap: %.3e\nspearman: %.3f\n"
                "elapsed: %.1f s\n",
                report.identical_gap, report.spearman_corr, report.seconds);
  out += line;
  return out;
}

}  // namespace sing::check
