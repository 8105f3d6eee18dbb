#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "sing/dataset.hpp"
#include "sing/inference.hpp"
#include "sing/model.hpp"
#include "sing/optim.hpp"
#include "sing/rng.hpp"

namespace sing {

enum class TrainMode { kWgan, kGan };

struct TrainConfig {
  TrainMode mode = TrainMode::kWgan;
  int n_critic = 5;
  double clip_c = 0.01;
  double lr = 5e-5;
  double rho = 0.9;
  double eps = 1e-8;
  int batch_size = 8;         // songs trained side by side
  int blocks_per_segment = 4; // truncation window for inter-block recurrence
  int epochs = 750;
  std::uint64_t seed = 0;
  int checkpoint_every = 50;  // numbered checkpoint cadence (epochs)
  int threads = 0;            // 0 = hardware concurrency
};

struct StepRecord {
  int epoch = 0;
  long step = 0;  // global, monotone
  double critic_loss = 0;
  double gen_loss = 0;
  double wall_s = 0;
};

struct EpochRecord {
  int epoch = 0;
  double train_mcd_db = 0;
  double wall_s = 0;
};

struct TrainLog {
  std::vector<StepRecord> steps;
  std::vector<EpochRecord> epochs;
  long clip_violations = 0;  // critic weights found outside [-c, c]
};

// ---------------------------------------------------------------------------
// adversarial losses
// ---------------------------------------------------------------------------

// Critic minimizes -(mean d_real - mean d_fake).
double wgan_critic_loss(std::span<const double> d_real,
                        std::span<const double> d_fake);

// Generator minimizes -mean d_fake.
double wgan_generator_loss(std::span<const double> d_fake);

struct GanLossPair {
  double d_loss = 0;
  double g_loss = 0;
};

// Saturating minimax losses over probabilities:
//   L_D = -mean(log d_real + log(1 - d_fake))
//   L_G =  mean(log(1 - d_fake))
// Inputs must lie in [0,1]; logs are clamped at 1e-7 from the edges.
GanLossPair gan_losses(std::span<const double> d_real,
                       std::span<const double> d_fake);

// ---------------------------------------------------------------------------
// checkpoints
// ---------------------------------------------------------------------------

struct CheckpointData {
  nn::ParamMap params;
  nn::ParamMap opt_v;
  std::string rng_state;
  int epoch = 0;
  long step = 0;
};

void save_checkpoint(const std::string& path, const ModelParams& params,
                     const nn::RmsPropState& opt, const Rng& rng, int epoch,
                     long step);
CheckpointData load_checkpoint(const std::string& path);

// ---------------------------------------------------------------------------
// trainer
// ---------------------------------------------------------------------------

// Alternating critic/generator updates over consecutive-block segments.
// Per step: n_critic critic updates on fresh generator outputs (weights
// clipped after each in wgan mode), then one generator update backpropagated
// through the whole segment. Layer states flow across segments of a song,
// detached at segment boundaries.
class Trainer {
 public:
  Trainer(const Dataset& ds, GeneratorConfig gen_cfg, CriticConfig critic_cfg,
          TrainConfig cfg);

  // Continue from a checkpoint written by run().
  void restore(const std::string& checkpoint_path);

  // Trains until cfg.epochs; writes log.jsonl and checkpoints/ into run_dir
  // unless it is empty. Returns the log of the epochs run by this call.
  TrainLog run(const std::string& run_dir);

  const ModelParams& params() const { return params_; }
  const GeneratorConfig& generator_config() const { return gen_cfg_; }
  const CriticConfig& critic_config() const { return critic_cfg_; }
  int epoch() const { return epoch_; }
  SynthesisContext synthesis_context() const;

 private:
  struct PreparedSong {
    int song_index = 0;
    int singer_index = 0;
    std::vector<nn::Tensor> real_blocks;      // normalized features, DxL
    std::vector<nn::Tensor> cond_base;        // condition blocks, noise zeroed
    std::vector<nn::Tensor> cond_stripped;    // condition minus noise
    std::vector<nn::Tensor> real_critic_in;   // critic input for real blocks
    int n_windows = 0;
  };

  struct ElementTask {
    const PreparedSong* song = nullptr;
    int first_block = 0;
    int n_blocks = 0;
    GenState state;  // carried across windows, detached
    std::uint64_t noise_seed = 0;
  };

  std::vector<nn::Tensor> noisy_conditions(const ElementTask& task) const;
  void critic_update(std::vector<ElementTask>& elems,
                     const std::vector<std::vector<nn::Tensor>>& fakes,
                     double* loss_out);
  void generator_update(std::vector<ElementTask>& elems, double* loss_out);
  double train_set_mcd();

  const Dataset* ds_;
  GeneratorConfig gen_cfg_;
  CriticConfig critic_cfg_;
  TrainConfig cfg_;
  std::vector<PreparedSong> songs_;
  ModelParams params_;
  nn::RmsPropState opt_;
  Rng rng_;
  int epoch_ = 0;
  long step_ = 0;
  long clip_violations_ = 0;
};

}  // namespace sing
