#include "sing/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>

#include <json.hpp>

#include "sing/rng.hpp"

namespace sing {

namespace fs = std::filesystem;
using nlohmann::json;

void save_manifest(const DatasetManifest& m, const std::string& dir) {
  json j;
  j["format"] = "gsf-dataset-v1";
  j["hop_s"] = m.hop_s;
  j["feature_dims"] = m.feature_dims;
  j["phonemes"] = m.vocab.labels;
  json singers = json::array();
  for (const auto& s : m.singers.singers)
    singers.push_back({{"id", s.id}, {"gender", s.gender}});
  j["singers"] = singers;
  json songs = json::array();
  for (const auto& s : m.songs) {
    songs.push_back({{"song_id", s.song_id},
                     {"singer_id", s.singer_id},
                     {"frames", s.frames},
                     {"features", s.features_file},
                     {"conditions", s.conditions_file},
                     {"held_out", s.held_out}});
  }
  j["songs"] = songs;
  j["norm"] = {{"min", m.norm.min}, {"max", m.norm.max}};
  std::ofstream out(fs::path(dir) / "manifest.json", std::ios::trunc);
  if (!out) throw Error("cannot write manifest in " + dir);
  out << j.dump(2) << "\n";
}

DatasetManifest load_manifest(const std::string& dir) {
  std::ifstream in(fs::path(dir) / "manifest.json");
  if (!in) throw Error("cannot open manifest in " + dir);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw FormatError(std::string("manifest: ") + e.what());
  }
  DatasetManifest m;
  try {
    m.hop_s = j.at("hop_s").get<double>();
    m.feature_dims = j.at("feature_dims").get<std::vector<std::string>>();
    m.vocab.labels = j.at("phonemes").get<std::vector<std::string>>();
    for (int i = 0; i < static_cast<int>(m.vocab.labels.size()); ++i)
      m.vocab.index[m.vocab.labels[i]] = i;
    auto sil = m.vocab.index.find(kSilenceLabel);
    if (sil == m.vocab.index.end())
      throw FormatError("manifest: vocabulary lacks the silence label");
    m.vocab.silence_id = sil->second;
    for (const auto& s : j.at("singers"))
      m.singers.singers.push_back(
          {s.at("id").get<std::string>(), s.at("gender").get<std::string>()});
    for (const auto& s : j.at("songs")) {
      SongEntry e;
      e.song_id = s.at("song_id").get<std::string>();
      e.singer_id = s.at("singer_id").get<std::string>();
      e.frames = s.at("frames").get<int>();
      e.features_file = s.at("features").get<std::string>();
      e.conditions_file = s.at("conditions").get<std::string>();
      e.held_out = s.at("held_out").get<bool>();
      m.songs.push_back(std::move(e));
    }
    m.norm.min = j.at("norm").at("min").get<std::vector<double>>();
    m.norm.max = j.at("norm").at("max").get<std::vector<double>>();
  } catch (const json::exception& e) {
    throw FormatError(std::string("manifest: missing field: ") + e.what());
  }
  return m;
}

FeatureMatrix conditions_to_matrix(const SongConditions& c, double hop_s,
                                   const std::string& song_id,
                                   const std::string& singer_id) {
  const int t = c.frames();
  FeatureMatrix m(t, 3);
  m.hop_s = hop_s;
  m.dim_labels = {"phoneme_id", "f0_hz", "vuv"};
  m.song_id = song_id;
  m.singer_id = singer_id;
  for (int i = 0; i < t; ++i) {
    m.at(i, 0) = static_cast<float>(c.phoneme_ids[i]);
    m.at(i, 1) = static_cast<float>(c.f0_hz[i]);
    m.at(i, 2) = c.vuv[i];
  }
  return m;
}

SongConditions matrix_to_conditions(const FeatureMatrix& m) {
  if (m.d != 3) throw ShapeError("conditions container must have 3 dims");
  SongConditions c;
  c.phoneme_ids.resize(m.t);
  c.f0_hz.resize(m.t);
  c.vuv.resize(m.t);
  for (int i = 0; i < m.t; ++i) {
    c.phoneme_ids[i] = static_cast<int>(std::lround(m.at(i, 0)));
    c.f0_hz[i] = m.at(i, 1);
    c.vuv[i] = m.at(i, 2);
  }
  return c;
}

std::vector<const LoadedSong*> Dataset::split(bool held_out) const {
  std::vector<const LoadedSong*> out;
  for (const auto& s : songs)
    if (s.entry.held_out == held_out) out.push_back(&s);
  return out;
}

const LoadedSong* Dataset::find_song(const std::string& song_id) const {
  for (const auto& s : songs)
    if (s.entry.song_id == song_id) return &s;
  return nullptr;
}

Dataset load_dataset(const std::string& dir) {
  Dataset ds;
  ds.dir = dir;
  ds.manifest = load_manifest(dir);
  for (const auto& entry : ds.manifest.songs) {
    LoadedSong song;
    song.entry = entry;
    song.features = read_container((fs::path(dir) / entry.features_file).string());
    song.conditions = matrix_to_conditions(
        read_container((fs::path(dir) / entry.conditions_file).string()));
    if (song.features.t != song.conditions.frames())
      throw ValidationError("dataset: feature/condition frame mismatch for " +
                            entry.song_id);
    ds.songs.push_back(std::move(song));
  }
  return ds;
}

// ---------------------------------------------------------------------------
// synthetic data
// ---------------------------------------------------------------------------

namespace {

struct Template {
  std::vector<double> values;  // kFeatureDim-1 entries (all but vuv)
};

Template make_silence_template() {
  Template tpl;
  tpl.values.assign(kNumMcep + kNumBap, 0.0);
  tpl.values[0] = -2.0;  // low energy
  for (int i = 0; i < kNumBap; ++i) tpl.values[kNumMcep + i] = 1.0;
  return tpl;
}

Template make_voiced_template(Rng& rng) {
  Template tpl;
  tpl.values.resize(kNumMcep + kNumBap);
  tpl.values[0] = rng.uniform(1.0, 5.0);
  for (int i = 1; i < kNumMcep; ++i) {
    const double amp = 1.5 / (1.0 + i / 3.0);
    tpl.values[i] = rng.uniform(-amp, amp);
  }
  for (int i = 0; i < kNumBap; ++i)
    tpl.values[kNumMcep + i] = rng.uniform(0.05, 0.6);
  return tpl;
}

}  // namespace

std::string default_gender_for_singer(const std::string& singer_id) {
  static const std::map<std::string, std::string> genders = {
      {"ADIZ", "F"}, {"JLEE", "M"}, {"JTAN", "M"}, {"KENN", "M"},
      {"MCUR", "F"}, {"MPOL", "F"}, {"MPUR", "F"}, {"NJAT", "F"},
      {"PMAR", "F"}, {"SAMF", "M"}, {"VKOW", "M"}, {"ZHIY", "M"},
  };
  auto it = genders.find(singer_id);
  return it == genders.end() ? "U" : it->second;
}

SynthDataStats generate_synthetic_dataset(const SynthDataConfig& cfg,
                                          const std::string& out_dir) {
  if (cfg.n_singers < 1 || cfg.n_phonemes < 1 || cfg.n_songs < 1 ||
      cfg.frames_per_song < 1)
    throw ValidationError("generate_synthetic_dataset: counts must be >= 1");
  fs::create_directories(out_dir);

  const double noise_std = 0.02;
  Rng rng(cfg.seed);

  DatasetManifest manifest;
  manifest.hop_s = cfg.hop_s;
  manifest.feature_dims = default_dim_labels();

  // Vocabulary: "sil" plus voiced placeholders, via the ordinary builder so
  // ids match what annotation parsing would produce.
  std::vector<std::vector<PhoneSegment>> seed_segments(1);
  for (int p = 1; p < cfg.n_phonemes; ++p) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "ph%02d", p);
    seed_segments[0].push_back({p - 1.0, p + 0.0, buf});
  }
  if (cfg.n_phonemes == 1)
    seed_segments[0].push_back({0.0, 1.0, kSilenceLabel});
  manifest.vocab = build_phoneme_vocab(seed_segments);

  // Singers with alternating genders and gender-dependent base pitch.
  std::vector<double> base_f0(cfg.n_singers);
  for (int s = 0; s < cfg.n_singers; ++s) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "S%02d", s);
    const bool male = s % 2 == 0;
    manifest.singers.singers.push_back({buf, male ? "M" : "F"});
    base_f0[s] = male ? rng.uniform(100.0, 150.0) : rng.uniform(200.0, 300.0);
  }

  // One template per (singer, phoneme).
  const int P = manifest.vocab.size();
  std::vector<Template> templates(static_cast<std::size_t>(cfg.n_singers) * P);
  for (int s = 0; s < cfg.n_singers; ++s) {
    for (int p = 0; p < P; ++p) {
      templates[static_cast<std::size_t>(s) * P + p] =
          p == manifest.vocab.silence_id ? make_silence_template()
                                         : make_voiced_template(rng);
    }
  }

  // Songs: runs of random phonemes with silence sprinkled in, a short
  // crossfade at boundaries, additive noise, and a wobbling f0 line.
  std::vector<FeatureMatrix> features;
  std::vector<SongConditions> conditions;
  for (int song = 0; song < cfg.n_songs; ++song) {
    const int singer = song % cfg.n_singers;
    const int t_total = cfg.frames_per_song;
    std::vector<int> phoneme(t_total);
    int t = 0;
    while (t < t_total) {
      const bool silence = rng.uniform() < 0.2;
      int p;
      if (silence || P == 1) {
        p = manifest.vocab.silence_id;
      } else {
        p = static_cast<int>(rng.integer(P - 1));
        if (p >= manifest.vocab.silence_id) ++p;  // skip silence slot
      }
      const int run = 16 + static_cast<int>(rng.integer(33));
      for (int i = 0; i < run && t < t_total; ++i) phoneme[t++] = p;
    }

    const double phase = rng.uniform(0.0, 6.28318);
    SongConditions cond;
    cond.phoneme_ids = phoneme;
    cond.f0_hz.resize(t_total);
    cond.vuv.resize(t_total);
    FeatureMatrix feat(t_total, kFeatureDim);
    feat.hop_s = cfg.hop_s;
    feat.dim_labels = manifest.feature_dims;
    char song_name[32];
    std::snprintf(song_name, sizeof(song_name), "song_%03d", song);
    feat.song_id = song_name;
    feat.singer_id = manifest.singers.singers[singer].id;

    const int fade = 4;
    for (int i = 0; i < t_total; ++i) {
      const bool voiced = phoneme[i] != manifest.vocab.silence_id;
      cond.vuv[i] = voiced ? 1.0f : 0.0f;
      cond.f0_hz[i] = voiced
                          ? base_f0[singer] *
                                std::exp2(0.10 * std::sin(i / 97.0 * 6.28318) +
                                          0.05 * std::sin(i / 31.0 * 6.28318 +
                                                          phase))
                          : 0.0;

      // Blend templates across segment boundaries so trajectories stay smooth.
      const Template& cur =
          templates[static_cast<std::size_t>(singer) * P + phoneme[i]];
      int boundary = i;
      while (boundary > 0 && phoneme[boundary - 1] == phoneme[i]) --boundary;
      const int into = i - boundary;
      double mix = 1.0;
      const Template* prev = nullptr;
      if (boundary > 0 && into < fade) {
        prev = &templates[static_cast<std::size_t>(singer) * P +
                          phoneme[boundary - 1]];
        mix = (into + 1.0) / (fade + 1.0);
      }
      for (int k = 0; k < kNumMcep + kNumBap; ++k) {
        double x = cur.values[k];
        if (prev) x = mix * x + (1.0 - mix) * prev->values[k];
        x += noise_std * rng.normal();
        if (k >= kNumMcep) x = std::clamp(x, 1e-3, 1.0);  // aperiodicity range
        feat.at(i, k) = static_cast<float>(x);
      }
      feat.at(i, kNumMcep + kNumBap) = cond.vuv[i];
    }

    SongEntry entry;
    entry.song_id = song_name;
    entry.singer_id = feat.singer_id;
    entry.frames = t_total;
    entry.features_file = std::string(song_name) + ".gsf";
    entry.conditions_file = std::string(song_name) + ".cond.gsf";
    entry.held_out =
        cfg.held_out_every > 0 && (song % cfg.held_out_every) == cfg.held_out_every - 1;
    manifest.songs.push_back(entry);
    features.push_back(std::move(feat));
    conditions.push_back(std::move(cond));
  }

  std::vector<const FeatureMatrix*> train;
  for (std::size_t i = 0; i < features.size(); ++i)
    if (!manifest.songs[i].held_out) train.push_back(&features[i]);
  if (train.empty()) train.push_back(&features[0]);
  manifest.norm = compute_norm_stats(train);

  for (std::size_t i = 0; i < features.size(); ++i) {
    write_container(features[i],
                    (fs::path(out_dir) / manifest.songs[i].features_file).string());
    write_container(
        conditions_to_matrix(conditions[i], cfg.hop_s,
                             manifest.songs[i].song_id,
                             manifest.songs[i].singer_id),
        (fs::path(out_dir) / manifest.songs[i].conditions_file).string());
  }
  save_manifest(manifest, out_dir);

  // Separation self-check: per-dimension RMS distance between distinct
  // templates, to compare against the noise floor.
  SynthDataStats stats;
  stats.noise_std = noise_std;
  double sum = 0;
  int count = 0;
  const int dims = kNumMcep + kNumBap;
  for (std::size_t a = 0; a < templates.size(); ++a) {
    for (std::size_t b = a + 1; b < templates.size(); ++b) {
      double d2 = 0;
      for (int k = 0; k < dims; ++k) {
        const double diff = templates[a].values[k] - templates[b].values[k];
        d2 += diff * diff;
      }
      sum += std::sqrt(d2 / dims);
      ++count;
    }
  }
  stats.mean_template_distance = count ? sum / count : 0.0;
  return stats;
}

}  // namespace sing
