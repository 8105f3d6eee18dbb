// Command-line front end for the synthesis pipeline: dataset preparation,
// training, synthesis, evaluation, stimulus export, and self-check suites.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "sing/dataset.hpp"
#include "sing/evaluation.hpp"
#include "sing/featio.hpp"
#include "sing/inference.hpp"
#include "sing/selfcheck.hpp"
#include "sing/training.hpp"
#include "sing/vocoder.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace sing;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitNumeric = 3;

struct EffectiveConfig {
  TrainConfig train;
  std::vector<int> enc_channels = {32, 64, 128, 256, 512};
  int block_len = kDefaultBlockLen;
  int noise_channels = kDefaultNoiseChannels;
  AnalysisConfig analysis;
  std::string data_dir;
};

void apply_json(EffectiveConfig& cfg, const json& j) {
  if (j.contains("train")) {
    const json& t = j.at("train");
    if (t.contains("mode")) {
      const std::string m = t.at("mode").get<std::string>();
      if (m == "wgan")
        cfg.train.mode = TrainMode::kWgan;
      else if (m == "gan")
        cfg.train.mode = TrainMode::kGan;
      else
        throw ParseError("config: mode must be wgan or gan");
    }
    if (t.contains("n_critic")) cfg.train.n_critic = t.at("n_critic");
    if (t.contains("clip_c")) cfg.train.clip_c = t.at("clip_c");
    if (t.contains("lr")) cfg.train.lr = t.at("lr");
    if (t.contains("rho")) cfg.train.rho = t.at("rho");
    if (t.contains("eps")) cfg.train.eps = t.at("eps");
    if (t.contains("batch_size")) cfg.train.batch_size = t.at("batch_size");
    if (t.contains("blocks_per_segment"))
      cfg.train.blocks_per_segment = t.at("blocks_per_segment");
    if (t.contains("epochs")) cfg.train.epochs = t.at("epochs");
    if (t.contains("seed")) cfg.train.seed = t.at("seed");
    if (t.contains("checkpoint_every"))
      cfg.train.checkpoint_every = t.at("checkpoint_every");
    if (t.contains("threads")) cfg.train.threads = t.at("threads");
  }
  if (j.contains("generator")) {
    const json& g = j.at("generator");
    if (g.contains("enc_channels"))
      cfg.enc_channels = g.at("enc_channels").get<std::vector<int>>();
    if (g.contains("block_len")) cfg.block_len = g.at("block_len");
    if (g.contains("noise_channels"))
      cfg.noise_channels = g.at("noise_channels");
  }
  if (j.contains("analysis")) {
    const json& a = j.at("analysis");
    if (a.contains("sample_rate"))
      cfg.analysis.sample_rate = a.at("sample_rate");
    if (a.contains("frame_hop_s"))
      cfg.analysis.frame_hop_s = a.at("frame_hop_s");
    if (a.contains("window")) cfg.analysis.window = a.at("window");
    if (a.contains("fft_size")) cfg.analysis.fft_size = a.at("fft_size");
    if (a.contains("mel_bands")) cfg.analysis.mel_bands = a.at("mel_bands");
    if (a.contains("f0_min")) cfg.analysis.f0_min = a.at("f0_min");
    if (a.contains("f0_max")) cfg.analysis.f0_max = a.at("f0_max");
  }
  if (j.contains("data_dir")) cfg.data_dir = j.at("data_dir");
}

json config_to_json(const EffectiveConfig& cfg) {
  return json{
      {"train",
       {{"mode", cfg.train.mode == TrainMode::kWgan ? "wgan" : "gan"},
        {"n_critic", cfg.train.n_critic},
        {"clip_c", cfg.train.clip_c},
        {"lr", cfg.train.lr},
        {"rho", cfg.train.rho},
        {"eps", cfg.train.eps},
        {"batch_size", cfg.train.batch_size},
        {"blocks_per_segment", cfg.train.blocks_per_segment},
        {"epochs", cfg.train.epochs},
        {"seed", cfg.train.seed},
        {"checkpoint_every", cfg.train.checkpoint_every},
        {"threads", cfg.train.threads}}},
      {"generator",
       {{"enc_channels", cfg.enc_channels},
        {"block_len", cfg.block_len},
        {"noise_channels", cfg.noise_channels}}},
      {"analysis",
       {{"sample_rate", cfg.analysis.sample_rate},
        {"frame_hop_s", cfg.analysis.frame_hop_s},
        {"window", cfg.analysis.window},
        {"fft_size", cfg.analysis.fft_size},
        {"mel_bands", cfg.analysis.mel_bands},
        {"f0_min", cfg.analysis.f0_min},
        {"f0_max", cfg.analysis.f0_max}}},
      {"data_dir", cfg.data_dir}};
}

EffectiveConfig load_run_config(const std::string& run_dir) {
  std::ifstream in(fs::path(run_dir) / "config.json");
  if (!in) throw Error("cannot open config.json in " + run_dir);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw FormatError(std::string("config.json: ") + e.what());
  }
  EffectiveConfig cfg;
  apply_json(cfg, j);
  return cfg;
}

GeneratorConfig generator_from(const EffectiveConfig& cfg,
                               const DatasetManifest& manifest) {
  return default_generator_config(manifest.vocab.size(),
                                  manifest.singers.size(), cfg.enc_channels,
                                  cfg.block_len, cfg.noise_channels);
}

struct LoadedRun {
  EffectiveConfig cfg;
  Dataset dataset;
  GeneratorConfig gen;
  CriticConfig critic;
  ModelParams params;
};

LoadedRun load_run(const std::string& run_dir, const std::string& data_dir) {
  LoadedRun run;
  run.cfg = load_run_config(run_dir);
  run.dataset = load_dataset(data_dir.empty() ? run.cfg.data_dir : data_dir);
  run.gen = generator_from(run.cfg, run.dataset.manifest);
  run.critic = critic_config_for(run.gen, run.dataset.manifest.vocab.size(),
                                 run.dataset.manifest.singers.size());
  const CheckpointData ckpt = load_checkpoint(
      (fs::path(run_dir) / "checkpoints" / "last.ckpt").string());
  run.params.tensors = ckpt.params;
  validate_params(run.params, model_layout(run.gen, run.critic));
  return run;
}

SynthesisContext context_for(const LoadedRun& run) {
  SynthesisContext ctx;
  ctx.params = &run.params;
  ctx.gen_cfg = &run.gen;
  ctx.vocab = &run.dataset.manifest.vocab;
  ctx.n_singers = run.dataset.manifest.singers.size();
  ctx.norm = &run.dataset.manifest.norm;
  ctx.hop_s = run.dataset.manifest.hop_s;
  ctx.block_hop = run.gen.block_len / 2;
  return ctx;
}

// ---------------------------------------------------------------------------
// prepare
// ---------------------------------------------------------------------------

int cmd_prepare(const std::string& corpus_dir, const std::string& out_dir,
                double rate, int held_out_every,
                const std::string& genders_file) {
  AnalysisConfig acfg;
  acfg.sample_rate = rate;
  acfg.validate();

  std::map<std::string, std::string> genders;
  if (!genders_file.empty()) {
    std::ifstream in(genders_file);
    if (!in) throw Error("cannot open genders file " + genders_file);
    json j;
    in >> j;
    for (auto& [k, v] : j.items()) genders[k] = v.get<std::string>();
  }

  struct Recording {
    std::string singer, song_id;
    fs::path wav, txt;
  };
  std::vector<Recording> recordings;
  for (const auto& singer_dir : fs::directory_iterator(corpus_dir)) {
    if (!singer_dir.is_directory()) continue;
    const fs::path sing_dir = singer_dir.path() / "sing";
    if (!fs::exists(sing_dir)) continue;
    for (const auto& f : fs::directory_iterator(sing_dir)) {
      if (f.path().extension() != ".wav") continue;
      Recording rec;
      rec.singer = singer_dir.path().filename().string();
      rec.song_id = rec.singer + "_" + f.path().stem().string();
      rec.wav = f.path();
      rec.txt = f.path();
      rec.txt.replace_extension(".txt");
      if (!fs::exists(rec.txt))
        throw Error("missing annotation for " + rec.wav.string());
      recordings.push_back(std::move(rec));
    }
  }
  if (recordings.empty()) throw Error("no recordings under " + corpus_dir);
  std::sort(recordings.begin(), recordings.end(),
            [](const Recording& a, const Recording& b) {
              return a.song_id < b.song_id;
            });

  // Pass 1: vocabulary over all annotations.
  std::vector<std::vector<PhoneSegment>> all_segments;
  for (const auto& rec : recordings) {
    std::ifstream in(rec.txt);
    std::string text((std::istreambuf_iterator<char>(in)),
                     std::istreambuf_iterator<char>());
    all_segments.push_back(parse_phone_annotations(text));
  }
  const PhonemeVocab vocab = build_phoneme_vocab(all_segments);

  fs::create_directories(out_dir);
  DatasetManifest manifest;
  manifest.hop_s = acfg.frame_hop_s;
  manifest.feature_dims = default_dim_labels();
  manifest.vocab = vocab;

  std::map<std::string, bool> seen_singer;
  std::vector<FeatureMatrix> features;
  for (std::size_t i = 0; i < recordings.size(); ++i) {
    const Recording& rec = recordings[i];
    if (!seen_singer.count(rec.singer)) {
      seen_singer[rec.singer] = true;
      const auto it = genders.find(rec.singer);
      manifest.singers.singers.push_back(
          {rec.singer, it != genders.end()
                           ? it->second
                           : default_gender_for_singer(rec.singer)});
    }
    const Waveform wave = read_wav(rec.wav.string());
    if (wave.sample_rate != acfg.sample_rate)
      throw FormatError(rec.wav.string() + ": expected " +
                        std::to_string(static_cast<int>(acfg.sample_rate)) +
                        " Hz, file has " +
                        std::to_string(static_cast<int>(wave.sample_rate)));
    const AnalysisResult analysis = analyze(wave, acfg);

    SongConditions cond;
    cond.phoneme_ids = frame_align(all_segments[i], vocab, acfg.frame_hop_s,
                                   analysis.features.t);
    cond.f0_hz = analysis.f0;
    cond.vuv.resize(analysis.features.t);
    for (int t = 0; t < analysis.features.t; ++t)
      cond.vuv[t] = analysis.features.at(t, kNumMcep + kNumBap);

    SongEntry entry;
    entry.song_id = rec.song_id;
    entry.singer_id = rec.singer;
    entry.frames = analysis.features.t;
    entry.features_file = rec.song_id + ".gsf";
    entry.conditions_file = rec.song_id + ".cond.gsf";
    entry.held_out =
        held_out_every > 0 &&
        (static_cast<int>(i) % held_out_every) == held_out_every - 1;
    manifest.songs.push_back(entry);

    FeatureMatrix feat = analysis.features;
    feat.song_id = rec.song_id;
    feat.singer_id = rec.singer;
    write_container(feat, (fs::path(out_dir) / entry.features_file).string());
    write_container(
        conditions_to_matrix(cond, acfg.frame_hop_s, rec.song_id, rec.singer),
        (fs::path(out_dir) / entry.conditions_file).string());
    features.push_back(std::move(feat));
    std::printf("prepared %s (%d frames)\n", rec.song_id.c_str(),
                entry.frames);
  }

  std::vector<const FeatureMatrix*> train;
  for (std::size_t i = 0; i < features.size(); ++i)
    if (!manifest.songs[i].held_out) train.push_back(&features[i]);
  if (train.empty()) train.push_back(&features[0]);
  manifest.norm = compute_norm_stats(train);
  save_manifest(manifest, out_dir);
  std::printf("wrote %zu songs to %s\n", manifest.songs.size(),
              out_dir.c_str());
  return kExitOk;
}

// ---------------------------------------------------------------------------

int cmd_train(const std::string& data_dir, const std::string& run_dir,
              const EffectiveConfig& cfg, bool resume) {
  const Dataset ds = load_dataset(data_dir);
  const GeneratorConfig gen = generator_from(cfg, ds.manifest);
  const CriticConfig critic = critic_config_for(
      gen, ds.manifest.vocab.size(), ds.manifest.singers.size());

  fs::create_directories(run_dir);
  {
    EffectiveConfig echo = cfg;
    echo.data_dir = data_dir;
    std::ofstream out(fs::path(run_dir) / "config.json", std::ios::trunc);
    out << config_to_json(echo).dump(2) << "\n";
  }

  Trainer trainer(ds, gen, critic, cfg.train);
  if (resume) {
    const fs::path last = fs::path(run_dir) / "checkpoints" / "last.ckpt";
    if (fs::exists(last)) {
      trainer.restore(last.string());
      std::printf("resumed from epoch %d\n", trainer.epoch());
    }
  }
  const TrainLog log = trainer.run(run_dir);
  if (!log.epochs.empty())
    std::printf("trained to epoch %d, final training-set MCD %.3f dB\n",
                trainer.epoch(), log.epochs.back().train_mcd_db);
  if (log.clip_violations != 0) {
    std::fprintf(stderr, "clip invariant violated %ld times\n",
                 log.clip_violations);
    return kExitNumeric;
  }
  return kExitOk;
}

// ---------------------------------------------------------------------------

int cmd_synth(const std::string& run_dir, const std::string& song_id,
              const std::string& target_singer, const std::string& out_path,
              const std::string& features_out, std::uint64_t seed) {
  const LoadedRun run = load_run(run_dir, "");
  const LoadedSong* song = run.dataset.find_song(song_id);
  if (!song) throw Error("unknown song: " + song_id);

  FullConditions cond;
  cond.frames = song->conditions;
  cond.singer_index =
      run.dataset.manifest.singers.index_of(song->entry.singer_id);
  std::string singer_label = song->entry.singer_id;
  if (!target_singer.empty()) {
    const int target = run.dataset.manifest.singers.index_of(target_singer);
    if (target < 0) throw Error("unknown singer: " + target_singer);
    cond = voice_change(cond, target, run.dataset.manifest.singers.size());
    singer_label = target_singer;
  }

  const SynthesisContext ctx = context_for(run);
  const std::uint64_t noise_seed = song_noise_seed(song_id, seed);
  if (!features_out.empty()) {
    const FeatureMatrix features =
        synthesize_features(ctx, cond, noise_seed, song_id, singer_label);
    write_container(features, features_out);
    std::printf("wrote %s (%d frames)\n", features_out.c_str(), features.t);
  }
  std::string wav_path = out_path;
  if (wav_path.empty()) {
    fs::create_directories(fs::path(run_dir) / "reports");
    wav_path = (fs::path(run_dir) / "reports" /
                (song_id + "_" + singer_label + ".wav"))
                   .string();
  }
  const Waveform wave =
      synthesize_song(ctx, cond, run.cfg.analysis, noise_seed, song_id);
  write_wav(wave, wav_path);
  std::printf("wrote %s (%.2f s)\n", wav_path.c_str(), wave.duration_s());
  return kExitOk;
}

// ---------------------------------------------------------------------------

int cmd_eval_mcd(const std::string& run_dir, const std::string& data_dir,
                 const std::string& split) {
  const LoadedRun run = load_run(run_dir, data_dir);
  const bool held_out = split == "held-out";
  const McdReport report =
      evaluate_mcd(context_for(run), run.dataset, held_out, 0xeba1u, split);
  const std::string out = mcd_report_to_json(report);
  fs::create_directories(fs::path(run_dir) / "reports");
  std::ofstream file(
      fs::path(run_dir) / "reports" / ("mcd_" + split + ".json"),
      std::ios::trunc);
  file << out << "\n";
  std::printf("%s\n", out.c_str());
  return kExitOk;
}

// ---------------------------------------------------------------------------

int cmd_export_listening(const std::vector<std::string>& run_dirs,
                         const std::string& out_dir, std::uint64_t seed) {
  std::vector<LoadedRun> runs;
  runs.reserve(run_dirs.size());
  for (const auto& dir : run_dirs) runs.push_back(load_run(dir, ""));
  std::vector<ListeningModel> models;
  for (std::size_t i = 0; i < runs.size(); ++i) {
    ListeningModel m;
    m.label = fs::path(run_dirs[i]).filename().string();
    if (m.label.empty())
      m.label = fs::path(run_dirs[i]).parent_path().filename().string();
    m.ctx = context_for(runs[i]);
    models.push_back(std::move(m));
  }
  const auto rows = export_listening_test(
      models, runs.front().dataset, runs.front().cfg.analysis, out_dir, seed);
  std::printf("%s", stimulus_manifest_csv(rows).c_str());
  std::printf("wrote %zu stimuli to %s\n", rows.size(), out_dir.c_str());
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Block-wise adversarial singing-voice synthesis pipeline"};
  app.require_subcommand(1);

  // prepare
  std::string corpus_dir, out_dir, genders_file;
  double rate = 16000.0;
  int held_out_every = 0;
  auto* prepare = app.add_subcommand(
      "prepare", "Analyze a corpus of wav+txt recordings into a dataset");
  prepare->add_option("corpus_dir", corpus_dir)->required();
  prepare->add_option("out_dir", out_dir)->required();
  prepare->add_option("--rate", rate, "Expected sample rate")
      ->capture_default_str();
  prepare
      ->add_option("--held-out-every", held_out_every,
                   "Hold out every Nth song (0 = none)")
      ->capture_default_str();
  prepare->add_option("--genders", genders_file,
                      "JSON file mapping singer id to M/F");

  // synthdata
  SynthDataConfig sd;
  std::string synth_out;
  auto* synthdata = app.add_subcommand(
      "synthdata", "Generate a deterministic synthetic dataset");
  synthdata->add_option("out_dir", synth_out)->required();
  synthdata->add_option("--seed", sd.seed)->capture_default_str();
  synthdata->add_option("--singers", sd.n_singers)->capture_default_str();
  synthdata->add_option("--phonemes", sd.n_phonemes)->capture_default_str();
  synthdata->add_option("--songs", sd.n_songs)->capture_default_str();
  synthdata->add_option("--frames", sd.frames_per_song)
      ->capture_default_str();
  synthdata->add_option("--held-out-every", sd.held_out_every)
      ->capture_default_str();

  // train
  std::string data_dir, run_dir, config_file, mode_flag;
  int epochs_flag = -1;
  std::int64_t seed_flag = -1;
  bool resume = false;
  auto* train = app.add_subcommand("train", "Train the adversarial model");
  train->add_option("data_dir", data_dir)->required();
  train->add_option("run_dir", run_dir)->required();
  train->add_option("--config", config_file, "JSON config file");
  train->add_option("--mode", mode_flag, "wgan or gan")
      ->check(CLI::IsMember({"wgan", "gan"}));
  train->add_option("--epochs", epochs_flag, "Override epoch count");
  train->add_option("--seed", seed_flag, "Override seed");
  train->add_flag("--resume", resume, "Continue from run_dir checkpoints");

  // synth
  std::string synth_run, song_id, target_singer, wav_out, feat_out;
  std::uint64_t synth_seed = 0;
  auto* synth = app.add_subcommand("synth", "Synthesize one song");
  synth->add_option("run_dir", synth_run)->required();
  synth->add_option("song_id", song_id)->required();
  synth->add_option("--singer", target_singer,
                    "Voice-change target singer id");
  synth->add_option("--out", wav_out, "Output wav path");
  synth->add_option("--features-out", feat_out, "Also write features (.gsf)");
  synth->add_option("--seed", synth_seed)->capture_default_str();

  // eval-mcd
  std::string eval_run, eval_data, split = "train";
  auto* eval = app.add_subcommand("eval-mcd", "Mel-cepstral distance report");
  eval->add_option("run_dir", eval_run)->required();
  eval->add_option("data_dir", eval_data)->required();
  eval->add_option("--split", split, "train or held-out")
      ->check(CLI::IsMember({"train", "held-out"}))
      ->capture_default_str();

  // export-listening
  std::vector<std::string> listen_args;
  std::uint64_t listen_seed = 0;
  auto* listen = app.add_subcommand(
      "export-listening", "Render blinded listening-test stimuli");
  listen
      ->add_option("dirs", listen_args,
                   "One or more run directories, then the output directory")
      ->required()
      ->expected(-2);
  listen->add_option("--seed", listen_seed)->capture_default_str();

  // self-check suites
  auto* gradcheck = app.add_subcommand(
      "gradcheck",
      "Finite-difference check of every differentiable operation");
  auto* w1probe = app.add_subcommand(
      "w1probe", "Clipped-critic gap vs the exact Wasserstein-1 oracle");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (prepare->parsed())
      return cmd_prepare(corpus_dir, out_dir, rate, held_out_every,
                         genders_file);
    if (synthdata->parsed()) {
      const SynthDataStats stats = generate_synthetic_dataset(sd, synth_out);
      std::printf(
          "wrote %d songs to %s (template separation %.3f, noise %.3f)\n",
          sd.n_songs, synth_out.c_str(), stats.mean_template_distance,
          stats.noise_std);
      if (stats.mean_template_distance <= 5.0 * stats.noise_std) {
        std::fprintf(stderr, "template separation below the noise floor\n");
        return kExitNumeric;
      }
      return kExitOk;
    }
    if (train->parsed()) {
      EffectiveConfig cfg;
      if (!config_file.empty()) {
        std::ifstream in(config_file);
        if (!in) throw Error("cannot open config " + config_file);
        json j;
        try {
          in >> j;
        } catch (const json::exception& e) {
          throw ParseError(std::string("config: ") + e.what());
        }
        apply_json(cfg, j);
      }
      if (!mode_flag.empty())
        cfg.train.mode =
            mode_flag == "wgan" ? TrainMode::kWgan : TrainMode::kGan;
      if (epochs_flag >= 0) cfg.train.epochs = epochs_flag;
      if (seed_flag >= 0)
        cfg.train.seed = static_cast<std::uint64_t>(seed_flag);
      return cmd_train(data_dir, run_dir, cfg, resume);
    }
    if (synth->parsed())
      return cmd_synth(synth_run, song_id, target_singer, wav_out, feat_out,
                       synth_seed);
    if (eval->parsed()) return cmd_eval_mcd(eval_run, eval_data, split);
    if (listen->parsed()) {
      if (listen_args.size() < 2)
        throw Error("export-listening needs run dirs and an output dir");
      const std::string dest = listen_args.back();
      listen_args.pop_back();
      return cmd_export_listening(listen_args, dest, listen_seed);
    }
    if (gradcheck->parsed()) {
      const auto report = check::gradient_suite();
      std::printf("%s", check::format_gradcheck(report).c_str());
      return report.pass() ? kExitOk : kExitNumeric;
    }
    if (w1probe->parsed()) {
      const auto report = check::w1_probe_suite();
      std::printf("%s", check::format_w1probe(report).c_str());
      return report.pass() ? kExitOk : kExitNumeric;
    }
  } catch (const NumericError& e) {
    std::fprintf(stderr, "numerical failure: %s\n", e.what());
    return kExitNumeric;
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitData;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitData;
  }
  return kExitUsage;
}
