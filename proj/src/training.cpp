#include "sing/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "sing/evaluation.hpp"
#include "sing/parallel.hpp"

namespace sing {

namespace fs = std::filesystem;
using nlohmann::json;
using nn::Tensor;
using nn::VId;

// ---------------------------------------------------------------------------
// losses
// ---------------------------------------------------------------------------

double wgan_critic_loss(std::span<const double> d_real,
                        std::span<const double> d_fake) {
  if (d_real.empty() || d_fake.empty())
    throw ValidationError("wgan_critic_loss: empty inputs");
  double mr = 0, mf = 0;
  for (double v : d_real) mr += v;
  for (double v : d_fake) mf += v;
  mr /= static_cast<double>(d_real.size());
  mf /= static_cast<double>(d_fake.size());
  return -(mr - mf);
}

double wgan_generator_loss(std::span<const double> d_fake) {
  if (d_fake.empty()) throw ValidationError("wgan_generator_loss: empty input");
  double mf = 0;
  for (double v : d_fake) mf += v;
  return -mf / static_cast<double>(d_fake.size());
}

GanLossPair gan_losses(std::span<const double> d_real,
                       std::span<const double> d_fake) {
  if (d_real.empty() || d_fake.empty())
    throw ValidationError("gan_losses: empty inputs");
  const auto checked = [](double p) {
    constexpr double kEps = 1e-7;
    if (!(p >= 0.0 && p <= 1.0))
      throw ValidationError("gan_losses: probability outside [0,1]");
    return std::clamp(p, kEps, 1.0 - kEps);
  };
  GanLossPair out;
  double acc = 0;
  for (double p : d_real) acc += std::log(checked(p));
  double accf = 0, accg = 0;
  for (double p : d_fake) {
    const double c = checked(p);
    accf += std::log(1.0 - c);
    accg += std::log(1.0 - c);
  }
  out.d_loss = -(acc / d_real.size() + accf / d_fake.size());
  out.g_loss = accg / d_fake.size();
  return out;
}

// ---------------------------------------------------------------------------
// checkpoints
// ---------------------------------------------------------------------------

void save_checkpoint(const std::string& path, const ModelParams& params,
                     const nn::RmsPropState& opt, const Rng& rng, int epoch,
                     long step) {
  nn::ParamMap sections = params.tensors;
  for (const auto& [name, t] : opt.v) sections.emplace("opt." + name, t);
  const json meta = {{"rng", rng.serialize()},
                     {"epoch", epoch},
                     {"step", step},
                     {"lr", opt.lr},
                     {"rho", opt.rho},
                     {"eps", opt.eps}};
  save_tensor_sections(path, sections, meta.dump());
}

CheckpointData load_checkpoint(const std::string& path) {
  nn::ParamMap sections;
  std::string meta_str;
  load_tensor_sections(path, sections, meta_str);
  CheckpointData data;
  for (auto& [name, t] : sections) {
    if (name.rfind("opt.", 0) == 0)
      data.opt_v.emplace(name.substr(4), std::move(t));
    else
      data.params.emplace(name, std::move(t));
  }
  try {
    const json meta = json::parse(meta_str);
    data.rng_state = meta.at("rng").get<std::string>();
    data.epoch = meta.at("epoch").get<int>();
    data.step = meta.at("step").get<long>();
  } catch (const json::exception& e) {
    throw FormatError(std::string("checkpoint meta: ") + e.what());
  }
  return data;
}

// ---------------------------------------------------------------------------
// trainer
// ---------------------------------------------------------------------------

namespace {

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

void check_finite(double loss, const char* what, int epoch, long step) {
  if (!std::isfinite(loss))
    throw NumericError(std::string(what) + " became non-finite at epoch " +
                       std::to_string(epoch) + ", step " +
                       std::to_string(step));
}

}  // namespace

Trainer::Trainer(const Dataset& ds, GeneratorConfig gen_cfg,
                 CriticConfig critic_cfg, TrainConfig cfg)
    : ds_(&ds),
      gen_cfg_(std::move(gen_cfg)),
      critic_cfg_(std::move(critic_cfg)),
      cfg_(cfg),
      rng_(cfg.seed) {
  gen_cfg_.validate();
  critic_cfg_.validate();
  if (cfg_.n_critic < 1 || cfg_.clip_c <= 0 || cfg_.blocks_per_segment < 1 ||
      cfg_.batch_size < 1)
    throw ValidationError("train config: bad values");
  opt_.lr = cfg_.lr;
  opt_.rho = cfg_.rho;
  opt_.eps = cfg_.eps;
  const auto train_split = ds.split(false);
  if (train_split.empty()) throw ValidationError("train: empty dataset");
  if (ds.manifest.norm.dims() != gen_cfg_.out_dims)
    throw ShapeError("train: norm stats do not match feature dims");

  const int L = gen_cfg_.block_len;
  const int hop = L / 2;
  const int P = ds.manifest.vocab.size();
  const int S = ds.manifest.singers.size();

  for (const LoadedSong* song : train_split) {
    PreparedSong prep;
    prep.song_index = static_cast<int>(songs_.size());
    prep.singer_index = ds.manifest.singers.index_of(song->entry.singer_id);
    if (prep.singer_index < 0)
      throw ValidationError("train: unknown singer " + song->entry.singer_id);

    const FeatureMatrix normed = normalize(song->features, ds.manifest.norm);
    const BlockSequence seq = make_blocks(normed, L, hop);
    const int t_pad = (static_cast<int>(seq.blocks.size()) - 1) * hop + L;

    SongConditions padded = song->conditions;
    padded.phoneme_ids.resize(t_pad, ds.manifest.vocab.silence_id);
    padded.f0_hz.resize(t_pad, 0.0);
    padded.vuv.resize(t_pad, 0.0f);
    Tensor full_cond = assemble_condition(
        padded.phoneme_ids, padded.f0_hz, padded.vuv, prep.singer_index, P, S,
        gen_cfg_.noise_channels, 0);
    // Noise is refilled per use; keep the deterministic part only.
    for (int c = full_cond.ch - gen_cfg_.noise_channels; c < full_cond.ch; ++c)
      for (int t = 0; t < full_cond.len; ++t) full_cond.at(c, t) = 0.0;

    prep.cond_base = cut_tensor_blocks(full_cond, L, hop);
    for (const auto& blk : seq.blocks)
      prep.real_blocks.push_back(features_to_tensor(blk));
    for (std::size_t b = 0; b < prep.cond_base.size(); ++b) {
      prep.cond_stripped.push_back(
          condition_without_noise(prep.cond_base[b], gen_cfg_.noise_channels));
      prep.real_critic_in.push_back(critic_input(
          prep.real_blocks[b], prep.cond_base[b], gen_cfg_.noise_channels));
    }
    prep.n_windows =
        (static_cast<int>(prep.real_blocks.size()) + cfg_.blocks_per_segment -
         1) /
        cfg_.blocks_per_segment;
    songs_.push_back(std::move(prep));
  }

  params_ = init_params(cfg_.seed, gen_cfg_, critic_cfg_);
}

void Trainer::restore(const std::string& checkpoint_path) {
  CheckpointData data = load_checkpoint(checkpoint_path);
  const ModelLayout layout = model_layout(gen_cfg_, critic_cfg_);
  ModelParams loaded;
  loaded.tensors = std::move(data.params);
  validate_params(loaded, layout);
  params_ = std::move(loaded);
  opt_.v = std::move(data.opt_v);
  rng_ = Rng::deserialize(data.rng_state);
  epoch_ = data.epoch;
  step_ = data.step;
}

std::vector<nn::Tensor> Trainer::noisy_conditions(
    const ElementTask& task) const {
  Rng noise(task.noise_seed);
  std::vector<Tensor> conds;
  conds.reserve(task.n_blocks);
  const int nz = gen_cfg_.noise_channels;
  for (int b = 0; b < task.n_blocks; ++b) {
    Tensor cond = task.song->cond_base[task.first_block + b];
    for (int c = cond.ch - nz; c < cond.ch; ++c)
      for (int t = 0; t < cond.len; ++t) cond.at(c, t) = noise.normal();
    conds.push_back(std::move(cond));
  }
  return conds;
}

void Trainer::critic_update(std::vector<ElementTask>& elems,
                            const std::vector<std::vector<nn::Tensor>>& fakes,
                            double* loss_out) {
  const bool wgan = cfg_.mode == TrainMode::kWgan;
  int total_blocks = 0;
  for (const auto& e : elems) total_blocks += e.n_blocks;
  const double inv_n = 1.0 / total_blocks;

  struct Result {
    nn::GradMap grads;
    std::vector<double> d_real, d_fake;
  };
  std::vector<Result> results(elems.size());

  parallel_for(static_cast<int>(elems.size()), cfg_.threads, [&](int i) {
    const ElementTask& task = elems[i];
    nn::Tape tape(true);
    const ParamBinding bind =
        ParamBinding::bind(tape, params_, is_critic_param);
    std::vector<VId> real_scores, fake_scores;
    for (int b = 0; b < task.n_blocks; ++b) {
      const int blk = task.first_block + b;
      real_scores.push_back(critic_graph(
          tape, bind, critic_cfg_,
          tape.leaf(task.song->real_critic_in[blk])));
      fake_scores.push_back(
          critic_graph(tape, bind, critic_cfg_, tape.leaf(fakes[i][b])));
    }
    std::vector<std::pair<VId, double>> seeds;
    Result& res = results[i];
    for (VId id : real_scores) {
      const double s = tape.val(id).scalar_value();
      res.d_real.push_back(s);
      // d/ds of -log(sigmoid(s)) is -(1 - sigmoid(s)).
      seeds.emplace_back(id, wgan ? -inv_n : -(1.0 - sigmoid(s)) * inv_n);
    }
    for (VId id : fake_scores) {
      const double s = tape.val(id).scalar_value();
      res.d_fake.push_back(s);
      // d/ds of -log(1 - sigmoid(s)) is sigmoid(s).
      seeds.emplace_back(id, wgan ? inv_n : sigmoid(s) * inv_n);
    }
    tape.backward(seeds);
    res.grads = bind.collect(tape);
  });

  nn::GradMap grads;
  std::vector<double> d_real, d_fake;
  for (const Result& r : results) {
    accumulate_grads(grads, r.grads);
    d_real.insert(d_real.end(), r.d_real.begin(), r.d_real.end());
    d_fake.insert(d_fake.end(), r.d_fake.begin(), r.d_fake.end());
  }
  rmsprop_step(params_.tensors, grads, opt_);
  if (wgan) {
    clip_weights(params_.tensors, cfg_.clip_c, is_critic_param);
    for (const auto& [name, t] : params_.tensors) {
      if (!is_critic_param(name)) continue;
      for (double x : t.v)
        if (std::abs(x) > cfg_.clip_c) ++clip_violations_;
    }
    *loss_out = wgan_critic_loss(d_real, d_fake);
  } else {
    for (double& v : d_real) v = sigmoid(v);
    for (double& v : d_fake) v = sigmoid(v);
    *loss_out = gan_losses(d_real, d_fake).d_loss;
  }
}

void Trainer::generator_update(std::vector<ElementTask>& elems,
                               double* loss_out) {
  const bool wgan = cfg_.mode == TrainMode::kWgan;
  int total_blocks = 0;
  for (auto& e : elems) {
    e.noise_seed = rng_.raw();
    total_blocks += e.n_blocks;
  }
  const double inv_n = 1.0 / total_blocks;

  struct Result {
    nn::GradMap grads;
    std::vector<double> d_fake;
    GenState new_state;
  };
  std::vector<Result> results(elems.size());

  parallel_for(static_cast<int>(elems.size()), cfg_.threads, [&](int i) {
    const ElementTask& task = elems[i];
    const std::vector<Tensor> conds = noisy_conditions(task);

    nn::Tape tape(true);
    const ParamBinding bind =
        ParamBinding::bind(tape, params_, is_generator_param);
    std::vector<VId> cond_ids;
    for (const auto& c : conds) cond_ids.push_back(tape.leaf(c));
    const GenGraph graph =
        generator_graph(tape, bind, gen_cfg_, cond_ids,
                        task.state.empty() ? nullptr : &task.state);

    std::vector<std::pair<VId, double>> seeds;
    Result& res = results[i];
    for (int b = 0; b < task.n_blocks; ++b) {
      const VId strip =
          tape.leaf(task.song->cond_stripped[task.first_block + b]);
      const VId score = critic_graph(tape, bind, critic_cfg_,
                                     tape.concat_ch(graph.outputs[b], strip));
      const double s = tape.val(score).scalar_value();
      res.d_fake.push_back(s);
      // wgan: d/ds of -s; gan (saturating): d/ds of log(1 - sigmoid(s)).
      seeds.emplace_back(score, wgan ? -inv_n : -sigmoid(s) * inv_n);
    }
    tape.backward(seeds);
    res.grads = bind.collect(tape);
    for (VId id : graph.final_h) res.new_state.h.push_back(tape.val(id));
    for (VId id : graph.final_c) res.new_state.c.push_back(tape.val(id));
  });

  nn::GradMap grads;
  std::vector<double> d_fake;
  for (std::size_t i = 0; i < results.size(); ++i) {
    accumulate_grads(grads, results[i].grads);
    d_fake.insert(d_fake.end(), results[i].d_fake.begin(),
                  results[i].d_fake.end());
    elems[i].state = std::move(results[i].new_state);
  }
  rmsprop_step(params_.tensors, grads, opt_);
  if (wgan) {
    *loss_out = wgan_generator_loss(d_fake);
  } else {
    double acc = 0;
    for (double v : d_fake)
      acc += std::log(std::clamp(1.0 - sigmoid(v), 1e-7, 1.0 - 1e-7));
    *loss_out = acc / static_cast<double>(d_fake.size());
  }
}

SynthesisContext Trainer::synthesis_context() const {
  SynthesisContext ctx;
  ctx.params = &params_;
  ctx.gen_cfg = &gen_cfg_;
  ctx.vocab = &ds_->manifest.vocab;
  ctx.n_singers = ds_->manifest.singers.size();
  ctx.norm = &ds_->manifest.norm;
  ctx.hop_s = ds_->manifest.hop_s;
  ctx.block_hop = gen_cfg_.block_len / 2;
  return ctx;
}

double Trainer::train_set_mcd() {
  const McdReport report =
      evaluate_mcd(synthesis_context(), *ds_, false, 0xeba1u, "train");
  return report.mean_mcd_db;
}

TrainLog Trainer::run(const std::string& run_dir) {
  TrainLog log;
  std::ofstream log_file;
  if (!run_dir.empty()) {
    fs::create_directories(fs::path(run_dir) / "checkpoints");
    fs::create_directories(fs::path(run_dir) / "reports");
    log_file.open(fs::path(run_dir) / "log.jsonl", std::ios::app);
  }
  const auto t0 = std::chrono::steady_clock::now();
  const auto wall = [&]() {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
        .count();
  };

  for (; epoch_ < cfg_.epochs; ) {
    // Deterministic song order per epoch.
    std::vector<int> order(songs_.size());
    for (std::size_t i = 0; i < order.size(); ++i)
      order[i] = static_cast<int>(i);
    rng_.shuffle(order);

    for (std::size_t at = 0; at < order.size(); at += cfg_.batch_size) {
      const std::size_t end =
          std::min(order.size(), at + cfg_.batch_size);
      std::vector<ElementTask> batch;
      int max_windows = 0;
      for (std::size_t i = at; i < end; ++i) {
        ElementTask task;
        task.song = &songs_[order[i]];
        max_windows = std::max(max_windows, task.song->n_windows);
        batch.push_back(std::move(task));
      }
      for (int w = 0; w < max_windows; ++w) {
        std::vector<ElementTask> elems;
        for (auto& task : batch) {
          const int total = static_cast<int>(task.song->real_blocks.size());
          const int first = w * cfg_.blocks_per_segment;
          if (first >= total) continue;
          ElementTask e = task;
          e.first_block = first;
          e.n_blocks = std::min(cfg_.blocks_per_segment, total - first);
          elems.push_back(std::move(e));
        }
        if (elems.empty()) continue;

        // The critic updates of one step share a fixed set of generator
        // outputs; noise is resampled for the generator update.
        std::vector<std::vector<Tensor>> fakes(elems.size());
        for (auto& e : elems) e.noise_seed = rng_.raw();
        parallel_for(static_cast<int>(elems.size()), cfg_.threads,
                     [&](int i) {
                       const ElementTask& task = elems[i];
                       const std::vector<Tensor> conds =
                           noisy_conditions(task);
                       const GeneratorOutput out = generator_forward(
                           params_, gen_cfg_, conds,
                           task.state.empty() ? nullptr : &task.state);
                       fakes[i].reserve(task.n_blocks);
                       for (int b = 0; b < task.n_blocks; ++b)
                         fakes[i].push_back(
                             critic_input(out.blocks[b], conds[b],
                                          gen_cfg_.noise_channels));
                     });

        double critic_loss = 0, gen_loss = 0;
        for (int k = 0; k < cfg_.n_critic; ++k)
          critic_update(elems, fakes, &critic_loss);
        generator_update(elems, &gen_loss);
        check_finite(critic_loss, "critic loss", epoch_, step_);
        check_finite(gen_loss, "generator loss", epoch_, step_);

        // Carry states (and only states) back into the batch slots.
        std::size_t ei = 0;
        for (auto& task : batch) {
          const int total = static_cast<int>(task.song->real_blocks.size());
          if (w * cfg_.blocks_per_segment >= total) continue;
          task.state = std::move(elems[ei++].state);
        }

        StepRecord rec{epoch_, step_, critic_loss, gen_loss, wall()};
        log.steps.push_back(rec);
        if (log_file) {
          const json j = {{"type", "step"},       {"epoch", rec.epoch},
                          {"step", rec.step},     {"critic_loss", rec.critic_loss},
                          {"gen_loss", rec.gen_loss}, {"wall_s", rec.wall_s}};
          log_file << j.dump() << "\n";
        }
        ++step_;
      }
    }

    ++epoch_;
    EpochRecord erec{epoch_, train_set_mcd(), wall()};
    log.epochs.push_back(erec);
    if (log_file) {
      const json j = {{"type", "epoch"},
                      {"epoch", erec.epoch},
                      {"train_mcd_db", erec.train_mcd_db},
                      {"wall_s", erec.wall_s}};
      log_file << j.dump() << "\n";
      log_file.flush();
    }
    if (!run_dir.empty()) {
      const fs::path ckpt_dir = fs::path(run_dir) / "checkpoints";
      save_checkpoint((ckpt_dir / "last.ckpt").string(), params_, opt_, rng_,
                      epoch_, step_);
      if (cfg_.checkpoint_every > 0 && epoch_ % cfg_.checkpoint_every == 0) {
        char name[32];
        std::snprintf(name, sizeof(name), "epoch_%04d.ckpt", epoch_);
        save_checkpoint((ckpt_dir / name).string(), params_, opt_, rng_,
                        epoch_, step_);
      }
    }
  }
  log.clip_violations = clip_violations_;
  return log;
}

}  // namespace sing
