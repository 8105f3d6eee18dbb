#include "sing/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>

#include <json.hpp>

#include "sing/optim.hpp"
#include "sing/parallel.hpp"
#include "sing/rng.hpp"
#include "sing/tape.hpp"

namespace sing {

namespace fs = std::filesystem;
using nlohmann::json;
using nn::Tensor;
using nn::VId;

// ---------------------------------------------------------------------------
// MCD
// ---------------------------------------------------------------------------

double mcd_db(const FeatureMatrix& reference, const FeatureMatrix& generated) {
  if (reference.t != generated.t || reference.d != generated.d)
    throw ShapeError("mcd: shape mismatch");
  if (reference.d != kNumMcep)
    throw ShapeError("mcd: expected exactly " + std::to_string(kNumMcep) +
                     " coefficients per frame");
  if (reference.t < 1) throw ShapeError("mcd: empty input");
  const double scale = 10.0 * std::sqrt(2.0) / std::log(10.0);
  double acc = 0.0;
  for (int t = 0; t < reference.t; ++t) {
    double d2 = 0.0;
    for (int i = 0; i < kNumMcep; ++i) {
      const double diff =
          static_cast<double>(reference.at(t, i)) - generated.at(t, i);
      d2 += diff * diff;
    }
    acc += std::sqrt(d2);
  }
  return scale * acc / reference.t;
}

FeatureMatrix mcep_slice(const FeatureMatrix& full) {
  if (full.d < kNumMcep) throw ShapeError("mcep_slice: too few dimensions");
  FeatureMatrix out(full.t, kNumMcep);
  out.hop_s = full.hop_s;
  out.song_id = full.song_id;
  out.singer_id = full.singer_id;
  for (int t = 0; t < full.t; ++t)
    for (int i = 0; i < kNumMcep; ++i) out.at(t, i) = full.at(t, i);
  return out;
}

McdReport evaluate_mcd(const SynthesisContext& ctx, const Dataset& ds,
                       bool held_out_split, std::uint64_t noise_seed_base,
                       const std::string& model_label) {
  McdReport report;
  report.model_label = model_label;
  const auto split = ds.split(held_out_split);
  if (split.empty())
    throw ValidationError("evaluate_mcd: split has no songs");
  report.songs.resize(split.size());
  parallel_for(static_cast<int>(split.size()), 0, [&](int i) {
    const LoadedSong* song = split[i];
    FullConditions cond;
    cond.frames = song->conditions;
    cond.singer_index = ds.manifest.singers.index_of(song->entry.singer_id);
    if (cond.singer_index < 0)
      throw ValidationError("evaluate_mcd: unknown singer " +
                            song->entry.singer_id);
    const FeatureMatrix synth = synthesize_features(
        ctx, cond, song_noise_seed(song->entry.song_id, noise_seed_base),
        song->entry.song_id, song->entry.singer_id);
    const double value = mcd_db(mcep_slice(song->features), mcep_slice(synth));
    report.songs[i] = {song->entry.song_id, value, synth.t};
  });
  double sum = 0.0;
  for (const auto& s : report.songs) sum += s.mcd_db;
  report.mean_mcd_db = sum / static_cast<double>(report.songs.size());
  return report;
}

std::string mcd_report_to_json(const McdReport& report) {
  json songs = json::array();
  for (const auto& s : report.songs)
    songs.push_back(
        {{"song_id", s.song_id}, {"mcd_db", s.mcd_db}, {"frames", s.frames}});
  const json j = {{"model", report.model_label},
                  {"songs", songs},
                  {"mean_mcd_db", report.mean_mcd_db}};
  return j.dump(2);
}

// ---------------------------------------------------------------------------
// Wasserstein-1
// ---------------------------------------------------------------------------

double wasserstein1_empirical(std::vector<double> x, std::vector<double> y) {
  if (x.empty() || x.size() != y.size())
    throw ShapeError("wasserstein1: sample counts must match and be >= 1");
  std::sort(x.begin(), x.end());
  std::sort(y.begin(), y.end());
  double acc = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) acc += std::abs(x[i] - y[i]);
  return acc / static_cast<double>(x.size());
}

// ---------------------------------------------------------------------------
// critic probe
// ---------------------------------------------------------------------------

namespace {

// x -> tanh(W1 x + b1) -> tanh(W2 h1 + b2) -> w3 . h2 + b3
VId probe_score(nn::Tape& tape, const std::map<std::string, VId>& p,
                double sample) {
  const VId x = tape.leaf(Tensor::scalar(sample));
  const VId h1 =
      tape.tanh(tape.conv1d(x, p.at("w1"), p.at("b1"), 1, 1, 0));
  const VId h2 =
      tape.tanh(tape.conv1d(h1, p.at("w2"), p.at("b2"), 1, 1, 0));
  return tape.conv1d(h2, p.at("w3"), p.at("b3"), 1, 1, 0);
}

}  // namespace

W1ProbeResult critic_w1_probe(std::span<const double> x,
                              std::span<const double> y,
                              const W1ProbeConfig& cfg) {
  if (x.empty() || x.size() != y.size())
    throw ShapeError("critic_w1_probe: sample counts must match");
  W1ProbeResult res;
  res.oracle_w1 = wasserstein1_empirical(std::vector<double>(x.begin(), x.end()),
                                         std::vector<double>(y.begin(), y.end()));

  Rng rng(cfg.seed);
  nn::ParamMap params;
  const int h = cfg.hidden;
  const auto glorot = [&](int ch, int len, int fin, int fout) {
    Tensor t(ch, len);
    const double bound = std::sqrt(6.0 / (fin + fout));
    for (double& v : t.v) v = rng.uniform(-bound, bound);
    return t;
  };
  params.emplace("w1", glorot(h, 1, 1, h));
  params.emplace("b1", Tensor(h, 1));
  params.emplace("w2", glorot(h, h, h, h));
  params.emplace("b2", Tensor(h, 1));
  params.emplace("w3", glorot(1, h, h, 1));
  params.emplace("b3", Tensor(1, 1));
  clip_weights(params, cfg.clip_c);

  nn::RmsPropState opt;
  opt.lr = cfg.lr;
  const double inv_n = 1.0 / static_cast<double>(x.size());

  for (int step = 0; step < cfg.steps; ++step) {
    nn::Tape tape(true);
    std::map<std::string, VId> ids;
    for (const auto& [name, t] : params) ids.emplace(name, tape.leaf(t, true));
    std::vector<std::pair<VId, double>> seeds;
    // Minimize -(mean D(x) - mean D(y)).
    for (double s : x) seeds.emplace_back(probe_score(tape, ids, s), -inv_n);
    for (double s : y) seeds.emplace_back(probe_score(tape, ids, s), inv_n);
    tape.backward(seeds);
    nn::GradMap grads;
    for (const auto& [name, id] : ids) {
      const Tensor& g = tape.grad(id);
      if (g.ch != 0) grads.emplace(name, g);
    }
    rmsprop_step(params, grads, opt);
    clip_weights(params, cfg.clip_c);
  }

  // Final gap with the trained critic.
  nn::Tape tape(false);
  std::map<std::string, VId> ids;
  for (const auto& [name, t] : params) ids.emplace(name, tape.leaf(t));
  double gx = 0.0, gy = 0.0;
  for (double s : x) gx += tape.val(probe_score(tape, ids, s)).scalar_value();
  for (double s : y) gy += tape.val(probe_score(tape, ids, s)).scalar_value();
  res.estimated_gap = (gx - gy) * inv_n;
  return res;
}

double spearman(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size() || a.size() < 2)
    throw ShapeError("spearman: need two equal-size lists");
  const auto ranks = [](std::span<const double> v) {
    const std::size_t n = v.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](std::size_t i, std::size_t j) { return v[i] < v[j]; });
    std::vector<double> r(n);
    std::size_t i = 0;
    while (i < n) {
      std::size_t j = i;
      while (j + 1 < n && v[order[j + 1]] == v[order[i]]) ++j;
      const double avg = (static_cast<double>(i) + j) / 2.0 + 1.0;
      for (std::size_t k = i; k <= j; ++k) r[order[k]] = avg;
      i = j + 1;
    }
    return r;
  };
  const auto ra = ranks(a);
  const auto rb = ranks(b);
  const double n = static_cast<double>(a.size());
  double ma = 0, mb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ma += ra[i];
    mb += rb[i];
  }
  ma /= n;
  mb /= n;
  double cov = 0, va = 0, vb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    cov += (ra[i] - ma) * (rb[i] - mb);
    va += (ra[i] - ma) * (ra[i] - ma);
    vb += (rb[i] - mb) * (rb[i] - mb);
  }
  if (va == 0 || vb == 0) return 0.0;
  return cov / std::sqrt(va * vb);
}

// ---------------------------------------------------------------------------
// listening-test export
// ---------------------------------------------------------------------------

namespace {

std::string blinded_name(const std::string& key) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : key) {
    h ^= c;
    h *= 1099511628211ull;
  }
  char buf[24];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(h));
  return std::string(buf) + ".wav";
}

struct GenderPick {
  const LoadedSong* song = nullptr;  // first song sung by this gender
  int source_index = -1;
  int same_gender_target = -1;
  int cross_gender_target = -1;
};

}  // namespace

std::vector<StimulusRow> export_listening_test(
    const std::vector<ListeningModel>& models, const Dataset& ds,
    const AnalysisConfig& vocoder_cfg, const std::string& out_dir,
    std::uint64_t seed) {
  if (models.empty())
    throw ValidationError("export_listening_test: need at least one model");
  const auto& singers = ds.manifest.singers.singers;
  const auto singers_of = [&](const std::string& g) {
    std::vector<int> out;
    for (std::size_t i = 0; i < singers.size(); ++i)
      if (singers[i].gender == g) out.push_back(static_cast<int>(i));
    return out;
  };
  const std::vector<std::string> genders = {"M", "F"};
  std::vector<GenderPick> picks(2);
  for (int g = 0; g < 2; ++g) {
    const auto own = singers_of(genders[g]);
    const auto other = singers_of(genders[1 - g]);
    if (own.empty() || other.empty())
      throw ValidationError(
          "export_listening_test: need at least one singer per gender");
    for (const auto& song : ds.songs) {
      const int idx = ds.manifest.singers.index_of(song.entry.singer_id);
      if (idx >= 0 && singers[idx].gender == genders[g]) {
        picks[g].song = &song;
        picks[g].source_index = idx;
        break;
      }
    }
    if (!picks[g].song)
      throw ValidationError("export_listening_test: no song for gender " +
                            genders[g]);
    // Same-gender target: the next singer of the same gender, or the source
    // itself when the gender has only one singer.
    picks[g].same_gender_target = picks[g].source_index;
    for (int idx : own) {
      if (idx != picks[g].source_index) {
        picks[g].same_gender_target = idx;
        break;
      }
    }
    picks[g].cross_gender_target = other.front();
  }

  fs::create_directories(out_dir);
  std::vector<StimulusRow> rows;
  for (const auto& model : models) {
    for (int g = 0; g < 2; ++g) {
      const GenderPick& pick = picks[g];
      const LoadedSong& song = *pick.song;
      struct Case {
        const char* condition;
        int target;
      };
      const Case cases[3] = {
          {g == 0 ? "nochange_m" : "nochange_f", pick.source_index},
          {g == 0 ? "samegender_m" : "samegender_f", pick.same_gender_target},
          {g == 0 ? "crossgender_m2f" : "crossgender_f2m",
           pick.cross_gender_target},
      };
      for (const Case& c : cases) {
        FullConditions cond;
        cond.frames = song.conditions;
        cond.singer_index = pick.source_index;
        cond = voice_change(cond, c.target,
                            static_cast<int>(singers.size()));
        const std::string key = model.label + "|" + song.entry.song_id + "|" +
                                c.condition + "|" +
                                singers[pick.source_index].id + "|" +
                                singers[c.target].id;
        const std::string file = blinded_name(key);
        const Waveform wave = synthesize_song(
            model.ctx, cond, vocoder_cfg,
            song_noise_seed(song.entry.song_id, seed), song.entry.song_id);
        write_wav(wave, (fs::path(out_dir) / file).string());
        rows.push_back({file, song.entry.song_id, model.label,
                        singers[pick.source_index].id, singers[c.target].id,
                        c.condition});
      }
    }
  }
  std::ofstream manifest(fs::path(out_dir) / "manifest.csv", std::ios::trunc);
  if (!manifest)
    throw Error("export_listening_test: cannot write manifest.csv");
  manifest << stimulus_manifest_csv(rows);
  return rows;
}

std::string stimulus_manifest_csv(const std::vector<StimulusRow>& rows) {
  std::string out = "file,song,model,source_singer,target_singer,condition\n";
  for (const auto& r : rows) {
    out += r.file + "," + r.song + "," + r.model + "," + r.source_singer +
           "," + r.target_singer + "," + r.condition + "\n";
  }
  return out;
}

}  // namespace sing
