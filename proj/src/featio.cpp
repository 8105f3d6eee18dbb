#include "sing/featio.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

#include <json.hpp>

namespace sing {

using nlohmann::json;

// ---------------------------------------------------------------------------
// phone annotations
// ---------------------------------------------------------------------------

std::vector<PhoneSegment> parse_phone_annotations(const std::string& text) {
  std::vector<PhoneSegment> segs;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::istringstream ls(line);
    std::string a, b, label, extra;
    if (!(ls >> a)) continue;  // blank line
    if (!(ls >> b >> label) || (ls >> extra)) {
      throw ParseError("line " + std::to_string(lineno) +
                       ": expected `start end label`");
    }
    PhoneSegment seg;
    std::size_t pos = 0;
    try {
      seg.start = std::stod(a, &pos);
      if (pos != a.size()) throw std::invalid_argument(a);
      seg.end = std::stod(b, &pos);
      if (pos != b.size()) throw std::invalid_argument(b);
    } catch (const std::exception&) {
      throw ParseError("line " + std::to_string(lineno) +
                       ": non-numeric time field");
    }
    seg.label = label;
    if (seg.start < 0)
      throw ValidationError("line " + std::to_string(lineno) +
                            ": negative start time");
    if (!(seg.start < seg.end))
      throw ValidationError("line " + std::to_string(lineno) +
                            ": start must be < end");
    segs.push_back(std::move(seg));
  }
  for (std::size_t i = 1; i < segs.size(); ++i) {
    if (segs[i].start < segs[i - 1].end)
      throw ValidationError("segments overlap or are out of order near t=" +
                            std::to_string(segs[i].start));
  }
  return segs;
}

std::string format_phone_annotations(const std::vector<PhoneSegment>& segs) {
  std::ostringstream os;
  for (const auto& s : segs) {
    char buf[128];
    std::snprintf(buf, sizeof(buf), "%.6f %.6f %s\n", s.start, s.end,
                  s.label.c_str());
    os << buf;
  }
  return os.str();
}

int PhonemeVocab::id_of(const std::string& label) const {
  auto it = index.find(label);
  if (it == index.end())
    throw ValidationError("unknown phoneme label: " + label);
  return it->second;
}

PhonemeVocab build_phoneme_vocab(
    const std::vector<std::vector<PhoneSegment>>& all_segments) {
  std::set<std::string> labels;
  bool any = false;
  for (const auto& segs : all_segments) {
    for (const auto& s : segs) {
      labels.insert(s.label);
      any = true;
    }
  }
  if (!any) throw ValidationError("build_phoneme_vocab: no segments");
  labels.insert(kSilenceLabel);
  PhonemeVocab vocab;
  vocab.labels.assign(labels.begin(), labels.end());
  for (int i = 0; i < static_cast<int>(vocab.labels.size()); ++i)
    vocab.index[vocab.labels[i]] = i;
  vocab.silence_id = vocab.index[kSilenceLabel];
  return vocab;
}

std::vector<int> frame_align(const std::vector<PhoneSegment>& segments,
                             const PhonemeVocab& vocab, double hop_s,
                             int n_frames) {
  if (hop_s <= 0) throw ValidationError("frame_align: hop must be positive");
  std::vector<int> ids(n_frames, vocab.silence_id);
  std::size_t cursor = 0;
  for (int t = 0; t < n_frames; ++t) {
    const double center = (t + 0.5) * hop_s;
    while (cursor < segments.size() && segments[cursor].end <= center)
      ++cursor;
    if (cursor < segments.size() && segments[cursor].start <= center)
      ids[t] = vocab.id_of(segments[cursor].label);
  }
  return ids;
}

int SingerTable::index_of(const std::string& id) const {
  for (std::size_t i = 0; i < singers.size(); ++i)
    if (singers[i].id == id) return static_cast<int>(i);
  return -1;
}

// ---------------------------------------------------------------------------
// .gsf container
// ---------------------------------------------------------------------------

namespace {

constexpr char kMagic[4] = {'G', 'S', 'F', '1'};

void put_u32le(std::vector<std::uint8_t>& out, std::uint32_t x) {
  out.push_back(static_cast<std::uint8_t>(x & 0xff));
  out.push_back(static_cast<std::uint8_t>((x >> 8) & 0xff));
  out.push_back(static_cast<std::uint8_t>((x >> 16) & 0xff));
  out.push_back(static_cast<std::uint8_t>((x >> 24) & 0xff));
}

std::uint32_t get_u32le(const std::uint8_t* p) {
  return static_cast<std::uint32_t>(p[0]) |
         (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) |
         (static_cast<std::uint32_t>(p[3]) << 24);
}

}  // namespace

std::vector<std::string> default_dim_labels() {
  std::vector<std::string> labels;
  for (int i = 0; i < kNumMcep; ++i)
    labels.push_back("mcep_" + std::to_string(i));
  for (int i = 0; i < kNumBap; ++i)
    labels.push_back("bap_" + std::to_string(i));
  labels.push_back("vuv");
  return labels;
}

std::vector<std::uint8_t> encode_container(const FeatureMatrix& m) {
  if (m.values.size() != static_cast<std::size_t>(m.t) * m.d)
    throw ShapeError("encode_container: value count does not match t*d");
  json header = {
      {"t", m.t},
      {"d", m.d},
      {"hop_s", m.hop_s},
      {"dim_labels", m.dim_labels},
      {"song_id", m.song_id},
      {"singer_id", m.singer_id},
      {"pad_frames", m.pad_frames},
  };
  const std::string hs = header.dump();
  std::vector<std::uint8_t> out;
  out.reserve(8 + hs.size() + m.values.size() * 4);
  out.insert(out.end(), kMagic, kMagic + 4);
  put_u32le(out, static_cast<std::uint32_t>(hs.size()));
  out.insert(out.end(), hs.begin(), hs.end());
  for (float f : m.values) put_u32le(out, std::bit_cast<std::uint32_t>(f));
  return out;
}

FeatureMatrix decode_container(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 8 || std::memcmp(bytes.data(), kMagic, 4) != 0)
    throw FormatError("container: bad magic");
  const std::uint32_t hlen = get_u32le(bytes.data() + 4);
  if (bytes.size() < 8 + static_cast<std::size_t>(hlen))
    throw FormatError("container: truncated header");
  json header;
  try {
    header = json::parse(bytes.begin() + 8, bytes.begin() + 8 + hlen);
  } catch (const json::exception& e) {
    throw FormatError(std::string("container: bad header: ") + e.what());
  }
  FeatureMatrix m;
  try {
    m.t = header.at("t").get<int>();
    m.d = header.at("d").get<int>();
    m.hop_s = header.at("hop_s").get<double>();
    m.dim_labels = header.at("dim_labels").get<std::vector<std::string>>();
    m.song_id = header.at("song_id").get<std::string>();
    m.singer_id = header.at("singer_id").get<std::string>();
    m.pad_frames = header.at("pad_frames").get<int>();
  } catch (const json::exception& e) {
    throw FormatError(std::string("container: missing header field: ") +
                      e.what());
  }
  if (m.t < 0 || m.d < 0) throw FormatError("container: negative dimensions");
  const std::size_t expect = static_cast<std::size_t>(m.t) * m.d * 4;
  if (bytes.size() - 8 - hlen != expect)
    throw FormatError("container: payload size mismatch (header says " +
                      std::to_string(expect) + " bytes, file has " +
                      std::to_string(bytes.size() - 8 - hlen) + ")");
  m.values.resize(static_cast<std::size_t>(m.t) * m.d);
  const std::uint8_t* p = bytes.data() + 8 + hlen;
  for (std::size_t i = 0; i < m.values.size(); ++i)
    m.values[i] = std::bit_cast<float>(get_u32le(p + i * 4));
  return m;
}

void write_container(const FeatureMatrix& m, const std::string& path) {
  const auto bytes = encode_container(m);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open for writing: " + path);
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("write failed: " + path);
}

FeatureMatrix read_container(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open: " + path);
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  return decode_container(bytes);
}

// ---------------------------------------------------------------------------
// normalization
// ---------------------------------------------------------------------------

NormStats compute_norm_stats(const std::vector<const FeatureMatrix*>& train) {
  if (train.empty() || train[0]->t == 0)
    throw ValidationError("compute_norm_stats: empty training set");
  const int d = train[0]->d;
  NormStats stats;
  stats.min.assign(d, std::numeric_limits<double>::infinity());
  stats.max.assign(d, -std::numeric_limits<double>::infinity());
  for (const FeatureMatrix* m : train) {
    if (m->d != d)
      throw ShapeError("compute_norm_stats: dimension count mismatch");
    for (int t = 0; t < m->t; ++t) {
      for (int k = 0; k < d; ++k) {
        const double x = m->at(t, k);
        stats.min[k] = std::min(stats.min[k], x);
        stats.max[k] = std::max(stats.max[k], x);
      }
    }
  }
  return stats;
}

FeatureMatrix normalize(const FeatureMatrix& m, const NormStats& stats) {
  if (m.d != stats.dims())
    throw ShapeError("normalize: dimension count mismatch");
  FeatureMatrix out = m;
  for (int k = 0; k < m.d; ++k) {
    const double range = stats.max[k] - stats.min[k];
    for (int t = 0; t < m.t; ++t) {
      out.at(t, k) =
          range > 0 ? static_cast<float>(
                          2.0 * (m.at(t, k) - stats.min[k]) / range - 1.0)
                    : 0.0f;
    }
  }
  return out;
}

FeatureMatrix denormalize(const FeatureMatrix& m, const NormStats& stats) {
  if (m.d != stats.dims())
    throw ShapeError("denormalize: dimension count mismatch");
  FeatureMatrix out = m;
  for (int k = 0; k < m.d; ++k) {
    const double range = stats.max[k] - stats.min[k];
    for (int t = 0; t < m.t; ++t) {
      out.at(t, k) = range > 0
                         ? static_cast<float>(
                               (m.at(t, k) + 1.0) * 0.5 * range + stats.min[k])
                         : static_cast<float>(stats.min[k]);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// block cutting and overlap-add
// ---------------------------------------------------------------------------

int block_count(int t, int block_len, int hop) {
  if (t <= block_len) return 1;
  return (t - block_len + hop - 1) / hop + 1;
}

BlockSequence make_blocks(const FeatureMatrix& m, int block_len, int hop) {
  if (hop <= 0 || block_len <= 0)
    throw ValidationError("make_blocks: block_len and hop must be positive");
  if (hop > block_len)
    throw ValidationError("make_blocks: hop must not exceed block_len");
  if (m.t < 1) throw ValidationError("make_blocks: empty matrix");
  BlockSequence seq;
  seq.block_len = block_len;
  seq.hop = hop;
  seq.song_id = m.song_id;
  const int n = block_count(m.t, block_len, hop);
  seq.pad_frames = (n - 1) * hop + block_len - m.t;
  for (int b = 0; b < n; ++b) {
    FeatureMatrix blk(block_len, m.d);
    blk.hop_s = m.hop_s;
    blk.dim_labels = m.dim_labels;
    blk.song_id = m.song_id;
    blk.singer_id = m.singer_id;
    const int start = b * hop;
    for (int t = 0; t < block_len; ++t) {
      if (start + t >= m.t) break;  // trailing frames stay zero
      for (int k = 0; k < m.d; ++k) blk.at(t, k) = m.at(start + t, k);
    }
    seq.blocks.push_back(std::move(blk));
  }
  return seq;
}

FeatureMatrix overlap_add(const BlockSequence& seq) {
  if (seq.blocks.empty()) throw ValidationError("overlap_add: no blocks");
  const int L = seq.block_len;
  const int hop = seq.hop;
  const int n = static_cast<int>(seq.blocks.size());
  const int d = seq.blocks[0].d;
  const int total = (n - 1) * hop + L - seq.pad_frames;
  if (total < 1) throw ValidationError("overlap_add: nothing left after pad");

  // Triangular weight, peak at the block center; pairs at 50% overlap sum
  // to one exactly.
  std::vector<double> w(L);
  const double half = L / 2.0;
  for (int i = 0; i < L; ++i) {
    const double x = i + 0.5;
    w[i] = (x <= half ? x : L - x) / half;
  }

  std::vector<double> acc(static_cast<std::size_t>(total) * d, 0.0);
  std::vector<double> wsum(total, 0.0);
  for (int b = 0; b < n; ++b) {
    const FeatureMatrix& blk = seq.blocks[b];
    if (blk.t != L || blk.d != d)
      throw ShapeError("overlap_add: inconsistent block shape");
    const int start = b * hop;
    const int lim = std::min(L, total - start);
    for (int t = 0; t < lim; ++t) {
      const int ft = start + t;
      wsum[ft] += w[t];
      for (int k = 0; k < d; ++k)
        acc[static_cast<std::size_t>(ft) * d + k] += w[t] * blk.at(t, k);
    }
  }

  FeatureMatrix out(total, d);
  out.hop_s = seq.blocks[0].hop_s;
  out.dim_labels = seq.blocks[0].dim_labels;
  out.song_id = seq.song_id;
  out.singer_id = seq.blocks[0].singer_id;
  for (int t = 0; t < total; ++t) {
    for (int k = 0; k < d; ++k) {
      out.at(t, k) = static_cast<float>(acc[static_cast<std::size_t>(t) * d + k] /
                                        wsum[t]);
    }
  }
  return out;
}

}  // namespace sing
