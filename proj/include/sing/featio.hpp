#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "sing/error.hpp"

namespace sing {

// ---------------------------------------------------------------------------
// phone annotations
// ---------------------------------------------------------------------------

struct PhoneSegment {
  double start = 0.0;  // seconds
  double end = 0.0;    // seconds
  std::string label;

  bool operator==(const PhoneSegment&) const = default;
};

inline constexpr const char* kSilenceLabel = "sil";

// Line format: `start end label`, whitespace separated, one segment per line.
// Blank lines are skipped. Segments must be sorted and non-overlapping.
std::vector<PhoneSegment> parse_phone_annotations(const std::string& text);
std::string format_phone_annotations(const std::vector<PhoneSegment>& segs);

struct PhonemeVocab {
  std::vector<std::string> labels;       // sorted, unique, contains "sil"
  std::map<std::string, int> index;      // label -> id
  int silence_id = -1;

  int size() const { return static_cast<int>(labels.size()); }
  int id_of(const std::string& label) const;
};

// Deterministic vocabulary over all segment lists; always includes the
// silence label. Empty input is an error.
PhonemeVocab build_phoneme_vocab(
    const std::vector<std::vector<PhoneSegment>>& all_segments);

// Frame t is assigned the phoneme whose segment contains the frame center
// (t + 0.5)*hop; segment intervals are half-open [start, end), so a center
// landing exactly on a boundary belongs to the later segment. Gaps and
// frames past the last segment map to silence.
std::vector<int> frame_align(const std::vector<PhoneSegment>& segments,
                             const PhonemeVocab& vocab, double hop_s,
                             int n_frames);

// ---------------------------------------------------------------------------
// singers
// ---------------------------------------------------------------------------

struct SingerInfo {
  std::string id;
  std::string gender;  // "M", "F", or "U" when unknown
};

struct SingerTable {
  std::vector<SingerInfo> singers;

  int size() const { return static_cast<int>(singers.size()); }
  int index_of(const std::string& id) const;  // -1 when absent
};

// ---------------------------------------------------------------------------
// feature matrices and the .gsf container
// ---------------------------------------------------------------------------

// Frame-wise features for one recording, frame-major. Values are held as
// float32 so a container round trip is bit-exact.
struct FeatureMatrix {
  int t = 0;
  int d = 0;
  std::vector<float> values;  // t*d, frame-major
  double hop_s = 0.005;
  std::vector<std::string> dim_labels;
  std::string song_id;
  std::string singer_id;
  int pad_frames = 0;

  FeatureMatrix() = default;
  FeatureMatrix(int t_, int d_)
      : t(t_), d(d_), values(static_cast<std::size_t>(t_) * d_, 0.0f) {}

  float& at(int frame, int dim) {
    return values[static_cast<std::size_t>(frame) * d + dim];
  }
  float at(int frame, int dim) const {
    return values[static_cast<std::size_t>(frame) * d + dim];
  }
  float* frame(int t_) { return values.data() + static_cast<std::size_t>(t_) * d; }
  const float* frame(int t_) const {
    return values.data() + static_cast<std::size_t>(t_) * d;
  }
};

// Default output feature layout: 25 mel-cepstra, 4 band aperiodicities, one
// voiced flag.
inline constexpr int kNumMcep = 25;
inline constexpr int kNumBap = 4;
inline constexpr int kFeatureDim = kNumMcep + kNumBap + 1;
std::vector<std::string> default_dim_labels();

// Container layout: magic "GSF1", then a little-endian u32 header length,
// then a UTF-8 JSON header, then t*d little-endian float32, frame-major.
void write_container(const FeatureMatrix& m, const std::string& path);
FeatureMatrix read_container(const std::string& path);

std::vector<std::uint8_t> encode_container(const FeatureMatrix& m);
FeatureMatrix decode_container(const std::vector<std::uint8_t>& bytes);

// ---------------------------------------------------------------------------
// normalization
// ---------------------------------------------------------------------------

// Per-dimension min/max over the training split. Normalization maps each
// dimension affinely onto [-1,1]; constant dimensions map to 0.
struct NormStats {
  std::vector<double> min;
  std::vector<double> max;

  int dims() const { return static_cast<int>(min.size()); }
};

NormStats compute_norm_stats(const std::vector<const FeatureMatrix*>& train);
FeatureMatrix normalize(const FeatureMatrix& m, const NormStats& stats);
FeatureMatrix denormalize(const FeatureMatrix& m, const NormStats& stats);

// ---------------------------------------------------------------------------
// block cutting and overlap-add
// ---------------------------------------------------------------------------

inline constexpr int kDefaultBlockLen = 128;
inline constexpr int kDefaultBlockHop = 64;

struct BlockSequence {
  std::vector<FeatureMatrix> blocks;  // each block_len x d
  int block_len = kDefaultBlockLen;
  int hop = kDefaultBlockHop;
  int pad_frames = 0;  // zero padding appended to the last block
  std::string song_id;
};

// Blocks start at multiples of hop and cover every source frame; the last
// block is zero-padded and the pad length recorded. Requires 0 < hop <=
// block_len.
BlockSequence make_blocks(const FeatureMatrix& m, int block_len, int hop);

// Merge with triangular cross-fade weights, normalized by the per-frame
// weight sum; at hop = block_len/2 the triangles already sum to one. The
// recorded padding is trimmed.
FeatureMatrix overlap_add(const BlockSequence& blocks);

// Number of blocks make_blocks produces for t frames.
int block_count(int t, int block_len, int hop);

}  // namespace sing
