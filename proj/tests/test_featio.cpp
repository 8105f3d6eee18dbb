#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "sing/dataset.hpp"
#include "sing/featio.hpp"
#include "sing/rng.hpp"
#include "test_util.hpp"

using namespace sing;

namespace {

// 100-segment fixture; spot values are pinned below so a parser regression
// cannot slip through a matching serializer bug.
constexpr const char* kGoldenAnnotations = R"golden(
0.000 0.284 ah
0.284 0.633 ng
0.633 0.920 th
0.920 1.300 g
1.300 1.681 ng
1.681 1.842 s
1.842 2.297 m
2.297 2.349 iy
2.349 2.480 s
2.480 2.703 s
2.703 3.154 b
3.154 3.487 sh
3.487 3.713 n
3.713 3.880 uw
3.880 3.971 m
3.971 4.327 z
4.327 4.828 m
4.828 5.323 uw
5.323 5.570 l
5.570 5.703 l
5.703 5.936 sil
5.936 6.403 m
6.403 6.481 m
6.481 6.664 g
6.664 7.109 m
7.109 7.246 uw
7.246 7.505 t
7.505 7.618 uw
7.618 7.701 m
7.701 8.230 sil
8.230 8.480 uw
8.480 8.783 d
8.783 8.913 sh
8.913 9.345 d
9.345 9.804 l
9.804 10.184 m
10.184 10.441 n
10.441 10.783 uw
10.783 11.320 z
11.320 11.499 uw
11.499 11.864 g
11.864 12.108 ng
12.108 12.439 m
12.439 12.983 sil
12.983 13.410 iy
13.410 13.603 s
13.603 14.090 ah
14.090 14.223 sil
14.223 14.326 eh
14.326 14.395 sh
14.395 14.765 g
14.765 14.923 eh
14.923 14.966 r
14.966 15.184 m
15.184 15.262 n
15.262 15.791 th
15.791 16.007 t
16.007 16.252 sh
16.252 16.306 t
16.306 16.810 n
16.810 17.145 n
17.145 17.329 n
17.329 17.424 ah
17.424 17.762 r
17.762 17.946 g
17.946 18.012 d
18.012 18.412 sil
18.412 18.604 t
18.604 18.831 m
18.831 18.925 uw
18.925 19.468 r
19.468 19.711 ow
19.711 20.194 g
20.194 20.700 th
20.700 21.005 ng
21.005 21.168 sh
21.168 21.283 g
21.283 21.714 b
21.714 21.793 r
21.793 22.075 ah
22.075 22.378 s
22.378 22.587 th
22.587 22.843 eh
22.843 23.170 ng
23.170 23.665 m
23.665 23.941 n
23.941 24.109 uw
24.109 24.152 b
24.152 24.317 r
24.317 24.798 r
24.798 25.073 b
25.073 25.545 ng
25.545 26.064 t
26.064 26.138 ow
26.138 26.179 r
26.179 26.362 sil
26.362 26.703 th
26.703 27.164 m
27.164 27.509 b
27.509 27.897 d
)golden";

FeatureMatrix random_features(int t, int d, std::uint64_t seed,
                              double lo = -1.0, double hi = 1.0) {
  Rng rng(seed);
  FeatureMatrix m(t, d);
  m.dim_labels.resize(d, "dim");
  for (auto& v : m.values) v = static_cast<float>(rng.uniform(lo, hi));
  return m;
}

double max_abs_diff(const FeatureMatrix& a, const FeatureMatrix& b) {
  REQUIRE(a.t == b.t);
  REQUIRE(a.d == b.d);
  double worst = 0;
  for (std::size_t i = 0; i < a.values.size(); ++i)
    worst = std::max(worst, std::abs(static_cast<double>(a.values[i]) - b.values[i]));
  return worst;
}

}  // namespace

TEST_CASE("parse_phone_annotations maps fields directly") {
  const auto segs = parse_phone_annotations("0.00 0.32 sil\n0.32 0.61 ah");
  REQUIRE(segs.size() == 2);
  CHECK(segs[0].start == 0.00);
  CHECK(segs[0].end == 0.32);
  CHECK(segs[0].label == "sil");
  CHECK(segs[1].label == "ah");
}

TEST_CASE("parse rejects inverted, malformed and overlapping segments") {
  CHECK_THROWS_AS(parse_phone_annotations("0.5 0.4 ah"), ValidationError);
  CHECK_THROWS_AS(parse_phone_annotations("0.1 0.2"), ParseError);
  CHECK_THROWS_AS(parse_phone_annotations("0.1 0.2 ah extra"), ParseError);
  CHECK_THROWS_AS(parse_phone_annotations("0.1 x ah"), ParseError);
  CHECK_THROWS_AS(parse_phone_annotations("0.0 0.4 ah\n0.3 0.6 eh"),
                  ValidationError);
  CHECK_THROWS_AS(parse_phone_annotations("-0.2 0.4 ah"), ValidationError);
  // Error messages carry the line number.
  try {
    parse_phone_annotations("0.0 0.1 ah\n0.1 bad eh");
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(std::string(e.what()).find("line 2") != std::string::npos);
  }
}

TEST_CASE("golden annotation file parses and round-trips") {
  const auto segs = parse_phone_annotations(kGoldenAnnotations);
  REQUIRE(segs.size() == 100);
  CHECK(segs[0] == PhoneSegment{0.000, 0.284, "ah"});
  CHECK(segs[49] == PhoneSegment{14.326, 14.395, "sh"});
  CHECK(segs[99] == PhoneSegment{27.509, 27.897, "d"});
  const std::string once = format_phone_annotations(segs);
  const std::string twice = format_phone_annotations(parse_phone_annotations(once));
  CHECK(once == twice);
  CHECK(parse_phone_annotations(once) == segs);
}

TEST_CASE("phoneme vocabulary is sorted, deterministic and keeps silence") {
  std::vector<std::vector<PhoneSegment>> a = {
      {{0, 1, "ah"}, {1, 2, "sil"}}, {{0, 1, "b"}}};
  std::vector<std::vector<PhoneSegment>> b = {
      {{0, 1, "b"}}, {{0, 1, "sil"}, {1, 2, "ah"}}};
  const auto va = build_phoneme_vocab(a);
  const auto vb = build_phoneme_vocab(b);
  CHECK(va.labels == std::vector<std::string>{"ah", "b", "sil"});
  CHECK(va.labels == vb.labels);
  CHECK(va.index.at("ah") == 0);
  CHECK(va.index.at("b") == 1);
  CHECK(va.index.at("sil") == 2);
  CHECK(va.silence_id == 2);

  // Silence joins the vocabulary even when never annotated.
  const auto vc = build_phoneme_vocab({{{0, 1, "ah"}}});
  CHECK(vc.index.count("sil") == 1);

  CHECK_THROWS_AS(build_phoneme_vocab({}), ValidationError);
  CHECK_THROWS_AS(build_phoneme_vocab({{}, {}}), ValidationError);
}

TEST_CASE("frame_align samples frame centers with half-open segments") {
  const auto vocab = build_phoneme_vocab({{{0.0, 0.010, "ah"}}});
  const auto ids = frame_align({{0.0, 0.010, "ah"}}, vocab, 0.005, 3);
  // Centers at 0.0025, 0.0075, 0.0125.
  REQUIRE(ids.size() == 3);
  CHECK(ids[0] == vocab.index.at("ah"));
  CHECK(ids[1] == vocab.index.at("ah"));
  CHECK(ids[2] == vocab.silence_id);
}

TEST_CASE("frame_align maps empty lists to silence and ties to the later segment") {
  const auto vocab = build_phoneme_vocab({{{0, 1, "ah"}, {1, 2, "eh"}}});
  const auto empty = frame_align({}, vocab, 0.01, 2);
  CHECK(empty == std::vector<int>(2, vocab.silence_id));

  // hop 0.005: frame 1 center lands exactly on the 0.0075 boundary.
  const std::vector<PhoneSegment> segs = {{0.0, 0.0075, "ah"},
                                          {0.0075, 0.02, "eh"}};
  const auto ids = frame_align(segs, vocab, 0.005, 3);
  CHECK(ids[0] == vocab.index.at("ah"));
  CHECK(ids[1] == vocab.index.at("eh"));  // boundary goes to the later one
  CHECK(ids[2] == vocab.index.at("eh"));
}

TEST_CASE("frame_align output length and id range hold for random input") {
  Rng rng(77);
  const auto vocab =
      build_phoneme_vocab({{{0, 1, "ah"}, {1, 2, "eh"}, {2, 3, "uw"}}});
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<PhoneSegment> segs;
    double t = rng.uniform(0, 0.3);
    const char* labels[3] = {"ah", "eh", "uw"};
    for (int i = 0; i < 10; ++i) {
      const double dur = rng.uniform(0.01, 0.2);
      if (rng.uniform() < 0.7)
        segs.push_back({t, t + dur, labels[rng.integer(3)]});
      t += dur;
    }
    const int n = 1 + static_cast<int>(rng.integer(300));
    const auto ids = frame_align(segs, vocab, 0.005, n);
    CHECK(static_cast<int>(ids.size()) == n);
    for (int id : ids) {
      CHECK(id >= 0);
      CHECK(id < vocab.size());
    }
  }
}

TEST_CASE("container round trip is bit exact") {
  FeatureMatrix m = random_features(17, 30, 5, -4.0, 8.0);
  m.hop_s = 0.005;
  m.dim_labels = default_dim_labels();
  m.song_id = "song_x";
  m.singer_id = "S01";
  m.pad_frames = 3;
  sing::test::TempDir dir("container");
  write_container(m, dir.file("a.gsf"));
  const FeatureMatrix back = read_container(dir.file("a.gsf"));
  CHECK(back.t == m.t);
  CHECK(back.d == m.d);
  CHECK(back.hop_s == m.hop_s);
  CHECK(back.dim_labels == m.dim_labels);
  CHECK(back.song_id == m.song_id);
  CHECK(back.singer_id == m.singer_id);
  CHECK(back.pad_frames == m.pad_frames);
  CHECK(std::memcmp(back.values.data(), m.values.data(),
                    m.values.size() * sizeof(float)) == 0);
}

TEST_CASE("container payload size follows the header") {
  FeatureMatrix m = random_features(2, 3, 6);
  const auto bytes = encode_container(m);
  // magic + header length + header + 2*3 float32 payload
  const std::uint32_t hlen = bytes[4] | (bytes[5] << 8) | (bytes[6] << 16) |
                             (static_cast<std::uint32_t>(bytes[7]) << 24);
  CHECK(bytes.size() == 8 + hlen + 24);
}

TEST_CASE("container rejects corruption") {
  FeatureMatrix m = random_features(4, 5, 7);
  auto bytes = encode_container(m);

  auto bad_magic = bytes;
  bad_magic[0] = 'X';
  CHECK_THROWS_AS(decode_container(bad_magic), FormatError);

  auto truncated = bytes;
  truncated.resize(truncated.size() - 7);
  CHECK_THROWS_AS(decode_container(truncated), FormatError);

  auto padded = bytes;
  padded.push_back(0);
  CHECK_THROWS_AS(decode_container(padded), FormatError);

  auto short_header = bytes;
  short_header.resize(6);
  CHECK_THROWS_AS(decode_container(short_header), FormatError);
}

TEST_CASE("normalization maps to [-1,1] and inverts") {
  FeatureMatrix m(2, 2);
  m.at(0, 0) = 0.0f;
  m.at(1, 0) = 2.0f;
  m.at(0, 1) = 5.0f;  // constant dimension
  m.at(1, 1) = 5.0f;
  const NormStats stats = compute_norm_stats({&m});
  CHECK(stats.min[0] == 0.0);
  CHECK(stats.max[0] == 2.0);

  const FeatureMatrix n = normalize(m, stats);
  CHECK(n.at(0, 0) == -1.0f);
  CHECK(n.at(1, 0) == 1.0f);
  CHECK(n.at(0, 1) == 0.0f);
  CHECK(n.at(1, 1) == 0.0f);

  FeatureMatrix mid(1, 2);
  mid.at(0, 0) = 1.0f;
  mid.at(0, 1) = 5.0f;
  CHECK(normalize(mid, stats).at(0, 0) == 0.0f);

  const FeatureMatrix round = denormalize(n, stats);
  CHECK(max_abs_diff(round, m) < 1e-6);
  CHECK(round.at(0, 1) == 5.0f);  // constant dimension restored

  FeatureMatrix wrong(1, 3);
  CHECK_THROWS_AS(normalize(wrong, stats), ShapeError);
}

TEST_CASE("normalize/denormalize round trip on random matrices") {
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const FeatureMatrix m = random_features(40, 30, seed, -3.0, 6.0);
    const NormStats stats = compute_norm_stats({&m});
    const FeatureMatrix round = denormalize(normalize(m, stats), stats);
    CHECK(max_abs_diff(round, m) < 1e-6);
  }
}

TEST_CASE("make_blocks covers the signal and overlap_add reconstructs") {
  SUBCASE("single block, no padding") {
    const FeatureMatrix m = random_features(128, 4, 11);
    const BlockSequence seq = make_blocks(m, 128, 64);
    CHECK(seq.blocks.size() == 1);
    CHECK(seq.pad_frames == 0);
    CHECK(max_abs_diff(overlap_add(seq), m) < 1e-6);
  }
  SUBCASE("two blocks blend the middle") {
    const FeatureMatrix m = random_features(192, 4, 12);
    const BlockSequence seq = make_blocks(m, 128, 64);
    CHECK(seq.blocks.size() == 2);
    CHECK(seq.pad_frames == 0);
    CHECK(max_abs_diff(overlap_add(seq), m) < 1e-6);
  }
  SUBCASE("random lengths reconstruct within 1e-6, padding trimmed") {
    Rng rng(13);
    for (int trial = 0; trial < 20; ++trial) {
      const int t = 1 + static_cast<int>(rng.integer(400));
      const FeatureMatrix m = random_features(t, 3, 100 + trial);
      const BlockSequence seq = make_blocks(m, 128, 64);
      const FeatureMatrix back = overlap_add(seq);
      CHECK(back.t == t);
      CHECK(max_abs_diff(back, m) < 1e-6);
      // Every frame is covered: the last block reaches past the end.
      const int covered =
          (static_cast<int>(seq.blocks.size()) - 1) * 64 + 128;
      CHECK(covered >= t);
      CHECK(seq.pad_frames == covered - t);
    }
  }
  SUBCASE("hop equal to block length concatenates") {
    const FeatureMatrix m = random_features(96, 2, 14);
    const BlockSequence seq = make_blocks(m, 32, 32);
    CHECK(seq.blocks.size() == 3);
    CHECK(max_abs_diff(overlap_add(seq), m) < 1e-6);
  }
  SUBCASE("hop larger than block length is rejected") {
    const FeatureMatrix m = random_features(96, 2, 15);
    CHECK_THROWS_AS(make_blocks(m, 32, 33), ValidationError);
  }
}

TEST_CASE("synthetic dataset is deterministic and well separated") {
  SynthDataConfig cfg;
  cfg.seed = 7;
  cfg.n_singers = 2;
  cfg.n_phonemes = 5;
  cfg.n_songs = 10;
  cfg.frames_per_song = 512;
  sing::test::TempDir dir_a("synth_a");
  sing::test::TempDir dir_b("synth_b");
  const SynthDataStats stats_a = generate_synthetic_dataset(cfg, dir_a.str());
  const SynthDataStats stats_b = generate_synthetic_dataset(cfg, dir_b.str());

  CHECK(stats_a.mean_template_distance == stats_b.mean_template_distance);
  CHECK(stats_a.mean_template_distance > 5.0 * stats_a.noise_std);

  // Bit-identical output across runs with the same seed.
  namespace fs = std::filesystem;
  for (const auto& entry : fs::directory_iterator(dir_a.path())) {
    const auto rel = entry.path().filename();
    std::ifstream fa(entry.path(), std::ios::binary);
    std::ifstream fb(dir_b.path() / rel, std::ios::binary);
    REQUIRE(fb.good());
    const std::string ca((std::istreambuf_iterator<char>(fa)),
                         std::istreambuf_iterator<char>());
    const std::string cb((std::istreambuf_iterator<char>(fb)),
                         std::istreambuf_iterator<char>());
    CHECK(ca == cb);
  }

  const Dataset ds = load_dataset(dir_a.str());
  CHECK(ds.songs.size() == 10);
  for (const auto& song : ds.songs) {
    CHECK(song.features.t == 512);
    CHECK(song.features.d == kFeatureDim);
    CHECK(song.conditions.frames() == 512);
    for (float v : song.conditions.vuv) CHECK((v == 0.0f || v == 1.0f));
  }
  CHECK(ds.manifest.vocab.size() == 5);
  CHECK(ds.manifest.singers.size() == 2);
  CHECK(ds.split(false).size() == 8);
  CHECK(ds.split(true).size() == 2);
}

TEST_CASE("different seeds give different synthetic data") {
  SynthDataConfig cfg;
  cfg.n_songs = 2;
  cfg.frames_per_song = 64;
  sing::test::TempDir dir_a("seed_a");
  sing::test::TempDir dir_b("seed_b");
  cfg.seed = 1;
  generate_synthetic_dataset(cfg, dir_a.str());
  cfg.seed = 2;
  generate_synthetic_dataset(cfg, dir_b.str());
  const Dataset a = load_dataset(dir_a.str());
  const Dataset b = load_dataset(dir_b.str());
  CHECK(a.songs[0].features.values != b.songs[0].features.values);
}
