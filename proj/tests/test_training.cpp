#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "sing/dataset.hpp"
#include "sing/training.hpp"
#include "test_util.hpp"

using namespace sing;

namespace {

// Micro dataset shared across the heavier cases.
struct Fixture {
  sing::test::TempDir dir{"train"};
  Dataset ds;

  Fixture() {
    SynthDataConfig cfg;
    cfg.seed = 5;
    cfg.n_singers = 2;
    cfg.n_phonemes = 4;
    cfg.n_songs = 4;
    cfg.frames_per_song = 320;  // 4 blocks per song at 128/64
    cfg.held_out_every = 0;
    generate_synthetic_dataset(cfg, dir.str());
    ds = load_dataset(dir.str());
  }

  GeneratorConfig gen() const {
    return default_generator_config(ds.manifest.vocab.size(),
                                    ds.manifest.singers.size(), {4, 8});
  }
  CriticConfig critic(const GeneratorConfig& g) const {
    return critic_config_for(g, ds.manifest.vocab.size(),
                             ds.manifest.singers.size());
  }
  TrainConfig tc() const {
    TrainConfig t;
    t.epochs = 2;
    t.n_critic = 2;
    t.batch_size = 2;
    t.blocks_per_segment = 2;
    t.lr = 1e-4;
    t.seed = 3;
    t.checkpoint_every = 1;
    return t;
  }
};

}  // namespace

TEST_CASE("wgan critic loss values") {
  CHECK(wgan_critic_loss(std::vector<double>{0.5, 0.5},
                         std::vector<double>{0.5, 0.5}) == 0.0);
  CHECK(wgan_critic_loss(std::vector<double>{0.7},
                         std::vector<double>{0.3}) ==
        doctest::Approx(-0.4).epsilon(1e-12));
  // Translation invariance.
  const std::vector<double> r{0.2, 0.9, -0.3};
  const std::vector<double> f{0.1, -0.5, 0.4};
  std::vector<double> r2 = r, f2 = f;
  for (double& v : r2) v += 13.5;
  for (double& v : f2) v += 13.5;
  CHECK(wgan_critic_loss(r, f) ==
        doctest::Approx(wgan_critic_loss(r2, f2)).epsilon(1e-12));
  CHECK_THROWS_AS(wgan_critic_loss({}, f), ValidationError);
}

TEST_CASE("wgan generator loss values and monotonicity") {
  CHECK(wgan_generator_loss(std::vector<double>{0.0}) == 0.0);
  CHECK(wgan_generator_loss(std::vector<double>{0.3, 0.5}) ==
        doctest::Approx(-0.4).epsilon(1e-12));
  std::vector<double> f{0.1, 0.2, 0.3};
  const double before = wgan_generator_loss(f);
  f[1] += 0.5;
  CHECK(wgan_generator_loss(f) < before);
  CHECK_THROWS_AS(wgan_generator_loss({}), ValidationError);
}

TEST_CASE("gan losses at the symmetric point and in the limits") {
  const GanLossPair mid =
      gan_losses(std::vector<double>{0.5}, std::vector<double>{0.5});
  CHECK(mid.d_loss == doctest::Approx(2.0 * std::log(2.0)).epsilon(1e-9));
  const GanLossPair sharp = gan_losses(std::vector<double>{1.0 - 1e-9},
                                       std::vector<double>{1e-9});
  CHECK(sharp.d_loss < 1e-5);
  CHECK_THROWS_AS(
      gan_losses(std::vector<double>{1.2}, std::vector<double>{0.5}),
      ValidationError);
  CHECK_THROWS_AS(
      gan_losses(std::vector<double>{0.5}, std::vector<double>{-0.1}),
      ValidationError);
}

TEST_CASE("training is deterministic and respects the clip invariant") {
  Fixture fx;
  const GeneratorConfig gen = fx.gen();
  const CriticConfig critic = fx.critic(gen);

  Trainer a(fx.ds, gen, critic, fx.tc());
  const TrainLog log_a = a.run("");
  Trainer b(fx.ds, gen, critic, fx.tc());
  const TrainLog log_b = b.run("");

  REQUIRE(log_a.steps.size() == log_b.steps.size());
  REQUIRE(!log_a.steps.empty());
  for (std::size_t i = 0; i < log_a.steps.size(); ++i) {
    CHECK(log_a.steps[i].critic_loss == log_b.steps[i].critic_loss);
    CHECK(log_a.steps[i].gen_loss == log_b.steps[i].gen_loss);
    CHECK(log_a.steps[i].step == static_cast<long>(i));
    CHECK(std::isfinite(log_a.steps[i].critic_loss));
    CHECK(std::isfinite(log_a.steps[i].gen_loss));
  }
  CHECK(log_a.clip_violations == 0);

  // Critic weights end inside the clip box; generator weights are free.
  const TrainConfig tc = fx.tc();
  for (const auto& [name, t] : a.params().tensors) {
    if (!is_critic_param(name)) continue;
    for (double v : t.v) CHECK(std::abs(v) <= tc.clip_c);
  }

  // Different seed diverges.
  TrainConfig tc2 = fx.tc();
  tc2.seed = 4;
  Trainer c(fx.ds, gen, critic, tc2);
  const TrainLog log_c = c.run("");
  CHECK(log_a.steps.back().gen_loss != log_c.steps.back().gen_loss);
}

TEST_CASE("an epoch of updates moves every generator tensor") {
  Fixture fx;
  const GeneratorConfig gen = fx.gen();
  const CriticConfig critic = fx.critic(gen);
  TrainConfig tc = fx.tc();
  tc.epochs = 1;
  Trainer t(fx.ds, gen, critic, tc);
  const TrainLog log = t.run("");
  REQUIRE(!log.steps.empty());
  const ModelParams fresh = init_params(tc.seed, gen, critic);
  for (const auto& [name, tensor] : t.params().tensors) {
    if (!is_generator_param(name)) continue;
    CHECK(tensor.v != fresh.at(name).v);
  }
}

TEST_CASE("checkpoint resume reproduces the uninterrupted loss trajectory") {
  Fixture fx;
  const GeneratorConfig gen = fx.gen();
  const CriticConfig critic = fx.critic(gen);

  TrainConfig full_cfg = fx.tc();
  full_cfg.epochs = 4;
  Trainer full(fx.ds, gen, critic, full_cfg);
  const TrainLog full_log = full.run("");

  sing::test::TempDir run("resume");
  TrainConfig first_cfg = fx.tc();
  first_cfg.epochs = 1;
  Trainer first(fx.ds, gen, critic, first_cfg);
  first.run(run.str());

  TrainConfig rest_cfg = fx.tc();
  rest_cfg.epochs = 4;
  Trainer rest(fx.ds, gen, critic, rest_cfg);
  rest.restore((run.path() / "checkpoints" / "last.ckpt").string());
  CHECK(rest.epoch() == 1);
  const TrainLog rest_log = rest.run("");

  // The resumed run must replay the remaining steps exactly; compare at
  // least ten of them.
  const std::size_t skip = full_log.steps.size() / 4;
  REQUIRE(rest_log.steps.size() == full_log.steps.size() - skip);
  REQUIRE(rest_log.steps.size() >= 10);
  for (std::size_t i = 0; i < rest_log.steps.size(); ++i) {
    CHECK(rest_log.steps[i].critic_loss ==
          full_log.steps[skip + i].critic_loss);
    CHECK(rest_log.steps[i].gen_loss == full_log.steps[skip + i].gen_loss);
  }
  // Final parameters agree bit-exactly.
  for (const auto& [name, t] : full.params().tensors)
    CHECK(rest.params().at(name).v == t.v);
}

TEST_CASE("checkpoint files round trip optimizer state and rng") {
  Fixture fx;
  const GeneratorConfig gen = fx.gen();
  const CriticConfig critic = fx.critic(gen);
  sing::test::TempDir dir("ckpt");

  const ModelParams params = init_params(9, gen, critic);
  nn::RmsPropState opt;
  opt.lr = 0.125;
  opt.v.emplace("gen.head.w", params.at("gen.head.w"));
  Rng rng(123);
  rng.normal();
  save_checkpoint(dir.file("c.ckpt"), params, opt, rng, 7, 1234);

  const CheckpointData data = load_checkpoint(dir.file("c.ckpt"));
  CHECK(data.epoch == 7);
  CHECK(data.step == 1234);
  CHECK(data.params.size() == params.tensors.size());
  for (const auto& [name, t] : params.tensors)
    CHECK(data.params.at(name).v == t.v);
  CHECK(data.opt_v.at("gen.head.w").v == params.at("gen.head.w").v);
  Rng restored = Rng::deserialize(data.rng_state);
  CHECK(restored.raw() == rng.raw());
}

TEST_CASE("restoring into a mismatched model layout fails loudly") {
  Fixture fx;
  const GeneratorConfig gen = fx.gen();
  const CriticConfig critic = fx.critic(gen);
  sing::test::TempDir run("mismatch");
  TrainConfig tc = fx.tc();
  tc.epochs = 1;
  Trainer t(fx.ds, gen, critic, tc);
  t.run(run.str());

  const GeneratorConfig other =
      default_generator_config(fx.ds.manifest.vocab.size(),
                               fx.ds.manifest.singers.size(), {4, 16});
  Trainer wrong(fx.ds, other, fx.critic(other), tc);
  CHECK_THROWS_AS(
      wrong.restore((run.path() / "checkpoints" / "last.ckpt").string()),
      ShapeError);
}

TEST_CASE("training rejects an empty dataset") {
  Fixture fx;
  Dataset empty = fx.ds;
  for (auto& song : empty.songs) song.entry.held_out = true;
  const GeneratorConfig gen = fx.gen();
  CHECK_THROWS_AS(Trainer(empty, gen, fx.critic(gen), fx.tc()),
                  ValidationError);
}

TEST_CASE("gan mode trains without clipping and logs finite losses") {
  Fixture fx;
  const GeneratorConfig gen = fx.gen();
  const CriticConfig critic = fx.critic(gen);
  TrainConfig tc = fx.tc();
  tc.mode = TrainMode::kGan;
  tc.epochs = 1;
  Trainer t(fx.ds, gen, critic, tc);
  const TrainLog log = t.run("");
  REQUIRE(!log.steps.empty());
  for (const auto& s : log.steps) {
    CHECK(std::isfinite(s.critic_loss));
    CHECK(std::isfinite(s.gen_loss));
    CHECK(s.critic_loss > 0.0);  // -log terms
    CHECK(s.gen_loss < 0.0);     // log(1-d)
  }
}

TEST_CASE("run directory receives log and checkpoints") {
  Fixture fx;
  const GeneratorConfig gen = fx.gen();
  const CriticConfig critic = fx.critic(gen);
  sing::test::TempDir run("rundir");
  TrainConfig tc = fx.tc();
  tc.epochs = 2;
  tc.checkpoint_every = 2;
  Trainer t(fx.ds, gen, critic, tc);
  t.run(run.str());
  namespace fs = std::filesystem;
  CHECK(fs::exists(run.path() / "log.jsonl"));
  CHECK(fs::exists(run.path() / "checkpoints" / "last.ckpt"));
  CHECK(fs::exists(run.path() / "checkpoints" / "epoch_0002.ckpt"));
}
