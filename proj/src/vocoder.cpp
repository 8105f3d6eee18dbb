#include "sing/vocoder.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <complex>
#include <cstring>
#include <fstream>

#include "sing/rng.hpp"

namespace sing {

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr double kTwoPi = 2.0 * kPi;

// Dynamic range (natural-log units) kept below the per-frame mel peak,
// about 43 dB.
constexpr double kLogFloorRange = 10.0;

// ---------------------------------------------------------------------------
// small in-place radix-2 FFT
// ---------------------------------------------------------------------------

void fft_inplace(std::vector<std::complex<double>>& a, bool inverse) {
  const std::size_t n = a.size();
  if ((n & (n - 1)) != 0) throw ShapeError("fft: size must be a power of two");
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const double ang = (inverse ? 1.0 : -1.0) * kTwoPi / len;
    const std::complex<double> wl(std::cos(ang), std::sin(ang));
    for (std::size_t i = 0; i < n; i += len) {
      std::complex<double> w(1.0);
      for (std::size_t j = 0; j < len / 2; ++j) {
        const auto u = a[i + j];
        const auto v = a[i + j + len / 2] * w;
        a[i + j] = u + v;
        a[i + j + len / 2] = u - v;
        w *= wl;
      }
    }
  }
  if (inverse) {
    for (auto& x : a) x /= static_cast<double>(n);
  }
}

// ---------------------------------------------------------------------------
// mel scale helpers
// ---------------------------------------------------------------------------

double hz_to_mel(double f) { return 2595.0 * std::log10(1.0 + f / 700.0); }
double mel_to_hz(double m) {
  return 700.0 * (std::pow(10.0, m / 2595.0) - 1.0);
}

struct MelBank {
  int bands = 0;
  int bins = 0;
  double bin_hz = 0;
  std::vector<double> center_hz;            // per band
  std::vector<std::vector<double>> weight;  // band x bin, triangular
  std::vector<double> width_bins;           // sum of weights per band

  MelBank(int bands_, int fft_size, double sample_rate) {
    bands = bands_;
    bins = fft_size / 2 + 1;
    bin_hz = sample_rate / fft_size;
    const double mel_lo = hz_to_mel(0.0);
    const double mel_hi = hz_to_mel(sample_rate / 2.0);
    std::vector<double> edges(bands + 2);
    for (int i = 0; i < bands + 2; ++i)
      edges[i] = mel_to_hz(mel_lo + (mel_hi - mel_lo) * i / (bands + 1));
    center_hz.assign(edges.begin() + 1, edges.end() - 1);
    weight.assign(bands, std::vector<double>(bins, 0.0));
    width_bins.assign(bands, 0.0);
    for (int m = 0; m < bands; ++m) {
      const double lo = edges[m], c = edges[m + 1], hi = edges[m + 2];
      for (int b = 0; b < bins; ++b) {
        const double f = b * bin_hz;
        if (f <= lo || f >= hi) continue;
        weight[m][b] = f <= c ? (f - lo) / (c - lo) : (hi - f) / (hi - c);
        width_bins[m] += weight[m][b];
      }
      width_bins[m] = std::max(width_bins[m], 0.5);
    }
  }

  // Bands whose triangles cover a given bin (at most two).
  std::vector<std::pair<int, double>> bands_at(int b) const {
    std::vector<std::pair<int, double>> out;
    for (int m = 0; m < bands; ++m)
      if (weight[m][b] > 0) out.emplace_back(m, weight[m][b]);
    return out;
  }

  // Piecewise-linear interpolation of per-band values at frequency f,
  // linear in the mel domain between band centers.
  double interp(const std::vector<double>& band_values, double f) const {
    if (f <= center_hz.front()) return band_values.front();
    if (f >= center_hz.back()) return band_values.back();
    const double m = hz_to_mel(f);
    const double m0 = hz_to_mel(center_hz.front());
    const double m1 = hz_to_mel(center_hz.back());
    const double pos = (m - m0) / (m1 - m0) * (bands - 1);
    const int i = std::min(bands - 2, static_cast<int>(pos));
    const double frac = pos - i;
    return band_values[i] * (1.0 - frac) + band_values[i + 1] * frac;
  }
};

// Orthonormal DCT-II (rows) over `bands` points.
struct Dct {
  int n_out, bands;
  std::vector<double> m;  // n_out x bands

  Dct(int n_out_, int bands_) : n_out(n_out_), bands(bands_) {
    m.resize(static_cast<std::size_t>(n_out) * bands);
    for (int i = 0; i < n_out; ++i) {
      const double norm =
          i == 0 ? std::sqrt(1.0 / bands) : std::sqrt(2.0 / bands);
      for (int j = 0; j < bands; ++j)
        m[static_cast<std::size_t>(i) * bands + j] =
            norm * std::cos(kPi * i * (j + 0.5) / bands);
    }
  }

  void forward(const std::vector<double>& in, float* out) const {
    for (int i = 0; i < n_out; ++i) {
      double acc = 0;
      for (int j = 0; j < bands; ++j)
        acc += m[static_cast<std::size_t>(i) * bands + j] * in[j];
      out[i] = static_cast<float>(acc);
    }
  }

  // Transpose applied to a truncated coefficient vector.
  std::vector<double> inverse(const float* coeffs, int n_coeffs) const {
    std::vector<double> out(bands, 0.0);
    for (int i = 0; i < n_coeffs && i < n_out; ++i) {
      const double c = coeffs[i];
      for (int j = 0; j < bands; ++j)
        out[j] += m[static_cast<std::size_t>(i) * bands + j] * c;
    }
    return out;
  }
};

// Four log-spaced aperiodicity band edges in Hz over [lo, nyquist].
std::vector<double> bap_band_edges(const AnalysisConfig& cfg) {
  const double lo = 100.0;
  const double hi = cfg.sample_rate / 2.0;
  std::vector<double> edges(cfg.n_bap + 1);
  for (int i = 0; i <= cfg.n_bap; ++i)
    edges[i] = lo * std::pow(hi / lo, static_cast<double>(i) / cfg.n_bap);
  return edges;
}

// ---------------------------------------------------------------------------
// f0 tracking
// ---------------------------------------------------------------------------

struct PitchResult {
  double f0 = 0.0;
  bool voiced = false;
};

// Normalized autocorrelation over a window of max_lag samples, lag range
// [fs/f0_max, fs/f0_min], parabolic peak interpolation, clarity threshold.
PitchResult estimate_pitch(const std::vector<double>& x, long center,
                           const AnalysisConfig& cfg) {
  PitchResult res;
  const double fs = cfg.sample_rate;
  const int max_lag = static_cast<int>(std::ceil(fs / cfg.f0_min));
  const int min_lag = std::max(2, static_cast<int>(fs / cfg.f0_max));
  const long span = 2L * max_lag;
  if (static_cast<long>(x.size()) < span) return res;
  long start = center - max_lag;
  start = std::clamp(start, 0L, static_cast<long>(x.size()) - span);
  const double* s = x.data() + start;
  const int w = max_lag;

  double e0 = 0.0;
  for (int t = 0; t < w; ++t) e0 += s[t] * s[t];
  if (e0 / w < 1e-8) return res;  // digital silence

  std::vector<double> ncc(max_lag + 1, 0.0);
  double elag = 0.0;
  for (int t = 0; t < w; ++t) elag += s[t + min_lag] * s[t + min_lag];
  for (int lag = min_lag; lag <= max_lag; ++lag) {
    double num = 0.0;
    for (int t = 0; t < w; ++t) num += s[t] * s[t + lag];
    const double den = std::sqrt(e0 * elag);
    ncc[lag] = den > 0 ? num / den : 0.0;
    if (lag < max_lag) {
      elag += s[w + lag] * s[w + lag] - s[lag] * s[lag];
    }
  }

  int best = min_lag;
  for (int lag = min_lag + 1; lag <= max_lag; ++lag)
    if (ncc[lag] > ncc[best]) best = lag;
  if (ncc[best] < cfg.voicing_threshold) return res;

  // A periodic signal peaks at every multiple of its period; prefer the
  // smallest sub-multiple lag whose local peak is nearly as strong.
  for (int m = best / min_lag; m >= 2; --m) {
    const int cand = static_cast<int>(std::lround(static_cast<double>(best) / m));
    if (cand < min_lag) continue;
    const int lo = std::max(min_lag, cand - 2);
    const int hi = std::min(max_lag, cand + 2);
    int local = lo;
    for (int lag = lo + 1; lag <= hi; ++lag)
      if (ncc[lag] > ncc[local]) local = lag;
    if (ncc[local] >= 0.90 * ncc[best]) {
      best = local;
      break;
    }
  }

  double lag = best;
  if (best > min_lag && best < max_lag) {
    const double a = ncc[best - 1], b = ncc[best], c = ncc[best + 1];
    const double den = a - 2 * b + c;
    if (std::abs(den) > 1e-12) {
      const double shift = 0.5 * (a - c) / den;
      if (std::abs(shift) < 1.0) lag += shift;
    }
  }
  res.voiced = true;
  res.f0 = fs / lag;
  return res;
}

}  // namespace

// ---------------------------------------------------------------------------
// config
// ---------------------------------------------------------------------------

int AnalysisConfig::hop_samples() const {
  return static_cast<int>(std::lround(frame_hop_s * sample_rate));
}

void AnalysisConfig::validate() const {
  if (sample_rate <= 0) throw ValidationError("analysis: bad sample rate");
  if (hop_samples() < 1) throw ValidationError("analysis: hop too small");
  if (window < hop_samples())
    throw ValidationError("analysis: window must cover at least one hop");
  if (fft_size < window || (fft_size & (fft_size - 1)) != 0)
    throw ValidationError("analysis: fft size must be a power of two >= window");
  if (n_mcep > mel_bands)
    throw ValidationError("analysis: n_mcep must not exceed mel bands");
  if (!(f0_min > 0 && f0_max > f0_min && f0_max < sample_rate / 2))
    throw ValidationError("analysis: bad f0 search range");
}

// ---------------------------------------------------------------------------
// analysis
// ---------------------------------------------------------------------------

AnalysisResult analyze(const Waveform& wave, const AnalysisConfig& cfg) {
  cfg.validate();
  const int hop = cfg.hop_samples();
  const long len = static_cast<long>(wave.samples.size());
  if (len < cfg.window)
    throw ValidationError("analyze: waveform shorter than one window");
  const int t_total = static_cast<int>((len - cfg.window) / hop) + 1;

  const MelBank mel(cfg.mel_bands, cfg.fft_size, cfg.sample_rate);
  const Dct dct(cfg.n_mcep, cfg.mel_bands);
  const auto edges = bap_band_edges(cfg);
  std::vector<double> hann(cfg.window);
  double wsum = 0.0;
  for (int n = 0; n < cfg.window; ++n) {
    hann[n] = 0.5 - 0.5 * std::cos(kTwoPi * n / cfg.window);
    wsum += hann[n];
  }
  const double amp_norm = 2.0 / wsum;  // sine of amplitude a -> peak |X| = a
  const int bins = cfg.fft_size / 2 + 1;
  const double bin_hz = cfg.sample_rate / cfg.fft_size;

  AnalysisResult res;
  res.features = FeatureMatrix(t_total, cfg.feature_dim());
  res.features.hop_s = cfg.frame_hop_s;
  res.features.dim_labels = default_dim_labels();
  res.f0.assign(t_total, 0.0);

  std::vector<std::complex<double>> buf(cfg.fft_size);
  std::vector<double> power(bins);
  std::vector<double> mel_energy(cfg.mel_bands);
  std::vector<double> log_mel(cfg.mel_bands);

  for (int t = 0; t < t_total; ++t) {
    const long off = static_cast<long>(t) * hop;
    for (int n = 0; n < cfg.fft_size; ++n) {
      buf[n] = n < cfg.window ? wave.samples[off + n] * hann[n] : 0.0;
    }
    fft_inplace(buf, false);
    for (int b = 0; b < bins; ++b) {
      const double a = std::abs(buf[b]) * amp_norm;
      power[b] = a * a;
    }

    for (int m = 0; m < cfg.mel_bands; ++m) {
      double acc = 0.0;
      const auto& wrow = mel.weight[m];
      for (int b = 0; b < bins; ++b) acc += wrow[b] * power[b];
      mel_energy[m] = acc;
      log_mel[m] = std::log(acc + 1e-10);
    }
    // Near-silent bands are clamped to a fixed dynamic range below the
    // frame peak; raw log floors would dominate cepstral distances.
    double peak = log_mel[0];
    for (double v : log_mel) peak = std::max(peak, v);
    for (double& v : log_mel) v = std::max(v, peak - kLogFloorRange);
    dct.forward(log_mel, res.features.frame(t));

    const PitchResult pitch =
        estimate_pitch(wave.samples, off + cfg.window / 2, cfg);
    res.f0[t] = pitch.voiced ? pitch.f0 : 0.0;
    res.features.at(t, cfg.n_mcep + cfg.n_bap) = pitch.voiced ? 1.0f : 0.0f;

    // Band aperiodicity: share of band power not captured by a comb around
    // the harmonics of f0. Unvoiced frames carry no harmonic evidence.
    for (int band = 0; band < cfg.n_bap; ++band) {
      double ap = 1.0;
      if (pitch.voiced) {
        const double half_width = 2.5 * bin_hz;
        double total = 0.0, harmonic = 0.0;
        for (int b = 0; b < bins; ++b) {
          const double f = b * bin_hz;
          if (f < edges[band] || f >= edges[band + 1]) continue;
          total += power[b];
          const double k = std::round(f / pitch.f0);
          if (k >= 1 && std::abs(f - k * pitch.f0) <= half_width)
            harmonic += power[b];
        }
        ap = total > 1e-12 ? 1.0 - harmonic / total : 1.0;
      }
      res.features.at(t, cfg.n_mcep + band) =
          static_cast<float>(std::clamp(ap, 1e-3, 1.0));
    }
  }
  return res;
}

// ---------------------------------------------------------------------------
// synthesis
// ---------------------------------------------------------------------------

Waveform synthesize(const FeatureMatrix& features,
                    const std::vector<double>& f0, const AnalysisConfig& cfg,
                    std::uint64_t noise_seed) {
  cfg.validate();
  if (features.d != cfg.feature_dim())
    throw ShapeError("synthesize: feature dimension mismatch");
  if (static_cast<int>(f0.size()) != features.t)
    throw ShapeError("synthesize: f0 contour length mismatch");
  const int t_total = features.t;
  const int hop = cfg.hop_samples();
  const long out_len = static_cast<long>(t_total - 1) * hop + cfg.window;
  const double nyq = cfg.sample_rate / 2.0;
  const int max_harmonics = static_cast<int>(nyq * 0.95 / cfg.f0_min);

  const MelBank mel(cfg.mel_bands, cfg.fft_size, cfg.sample_rate);
  const Dct dct(cfg.n_mcep, cfg.mel_bands);
  const auto edges = bap_band_edges(cfg);
  const double bin_hz = cfg.sample_rate / cfg.fft_size;
  const int bins = cfg.fft_size / 2 + 1;

  // Power response of the analysis window at a fractional bin offset,
  // tabulated out to kLobeSpan bins so harmonic leakage into neighboring
  // bands is part of the prediction below.
  constexpr double kLobeSpan = 12.0;
  constexpr double kLobeStep = 0.05;
  std::vector<double> lobe_pow(static_cast<int>(kLobeSpan / kLobeStep) + 2);
  {
    std::vector<double> hann(cfg.window);
    double wsum = 0.0;
    for (int n = 0; n < cfg.window; ++n) {
      hann[n] = 0.5 - 0.5 * std::cos(kTwoPi * n / cfg.window);
      wsum += hann[n];
    }
    for (std::size_t i = 0; i < lobe_pow.size(); ++i) {
      const double omega = kTwoPi * (i * kLobeStep) / cfg.fft_size;
      std::complex<double> acc = 0.0;
      for (int n = 0; n < cfg.window; ++n)
        acc += hann[n] * std::polar(1.0, -omega * n);
      // A sine of amplitude a splits across +-f, so the measured peak power
      // under the amp_norm convention is a^2 when |W(0)|/wsum = 1.
      const double a = std::abs(acc) / wsum;
      lobe_pow[i] = a * a;
    }
  }
  const auto lobe_at = [&](double offset_bins) {
    const double d = std::abs(offset_bins) / kLobeStep;
    const int i = static_cast<int>(d);
    if (i + 1 >= static_cast<int>(lobe_pow.size())) return 0.0;
    const double frac = d - i;
    return lobe_pow[i] * (1 - frac) + lobe_pow[i + 1] * frac;
  };

  std::vector<std::vector<std::pair<int, double>>> bin_bands(bins);
  for (int b = 0; b < bins; ++b) bin_bands[b] = mel.bands_at(b);

  // Noise is shaped as a mix of the mel triangles themselves; the response
  // of band m to one unit of band m' power budget is tridiagonal because
  // only neighboring triangles overlap.
  const int n_bands = cfg.mel_bands;
  std::vector<double> a_diag(n_bands, 0.0), a_lower(n_bands, 0.0),
      a_upper(n_bands, 0.0);
  for (int b = 1; b < bins - 1; ++b) {
    for (const auto& [m, w] : bin_bands[b]) {
      for (const auto& [m2, w2] : bin_bands[b]) {
        const double v = w * w2 / mel.width_bins[m2];
        if (m2 == m)
          a_diag[m] += v;
        else if (m2 == m - 1)
          a_lower[m] += v;
        else if (m2 == m + 1)
          a_upper[m] += v;
      }
    }
  }

  // Per-frame synthesis plan: harmonic amplitudes from the decoded envelope
  // and aperiodicity split, capped so no band overshoots its target; then
  // per-band noise budgets solving for the residual exactly. The target is
  // the envelope the truncated cepstra describe, so re-analysis reproduces
  // the stored coefficients.
  std::vector<std::vector<double>> band_energy(t_total);
  std::vector<std::vector<double>> harm_amp(
      t_total, std::vector<double>(max_harmonics + 1, 0.0));
  std::vector<std::vector<double>> noise_mag(
      t_total, std::vector<double>(bins, 0.0));
  std::vector<double> hpred(n_bands), rho(n_bands), resid(n_bands);
  std::vector<double> td(n_bands), tu(n_bands), tl(n_bands), tx(n_bands);
  for (int t = 0; t < t_total; ++t) {
    const auto log_mel = dct.inverse(features.frame(t), cfg.n_mcep);
    band_energy[t].resize(n_bands);
    for (int m = 0; m < n_bands; ++m) band_energy[t][m] = std::exp(log_mel[m]);

    const auto ap_at = [&](double f) {
      int band = 0;
      while (band + 1 < cfg.n_bap && f >= edges[band + 1]) ++band;
      return std::clamp(
          static_cast<double>(features.at(t, cfg.n_mcep + band)), 1e-3, 1.0);
    };

    const int k_max =
        f0[t] > 0
            ? std::min(max_harmonics, static_cast<int>(nyq * 0.95 / f0[t]))
            : 0;
    auto& amps = harm_amp[t];  // squared amplitudes until the end
    for (int k = 1; k <= k_max; ++k) {
      const double fk = k * f0[t];
      amps[k] =
          std::max(0.0, mel.interp(band_energy[t], fk) * (1.0 - ap_at(fk)));
    }

    // Predicted measurement, including the same relative floor clamp the
    // analysis applies; without it the fit inflates the overall gain trying
    // to reach the clamped floor bands.
    const auto predict_harmonics = [&]() {
      std::fill(hpred.begin(), hpred.end(), 0.0);
      for (int k = 1; k <= k_max; ++k) {
        if (amps[k] <= 0) continue;
        const double p = k * f0[t] / bin_hz;
        const int b0 = std::max(1, static_cast<int>(p - kLobeSpan) + 1);
        const int b1 = std::min(bins - 2, static_cast<int>(p + kLobeSpan));
        for (int b = b0; b <= b1; ++b) {
          const double lp = lobe_at(b - p);
          if (lp <= 0) continue;
          for (const auto& [m, w] : bin_bands[b]) hpred[m] += w * lp * amps[k];
        }
      }
      double peak = 0.0;
      for (double v : hpred) peak = std::max(peak, v);
      const double floor = peak * std::exp(-kLogFloorRange);
      for (double& v : hpred) v = std::max(v, floor);
    };

    // Fit the harmonic amplitudes to the per-band harmonic share
    // (1-ap)*target. The truncated cepstra describe a rippled envelope a
    // sparse harmonic comb cannot meet band by band, and the metric only
    // sees the retained coefficients, so the correction ratios are smoothed
    // through the same cepstral truncation before being applied.
    if (k_max > 0) {
      for (int pass = 0; pass < 6; ++pass) {
        predict_harmonics();
        for (int m = 0; m < n_bands; ++m) {
          const double want =
              band_energy[t][m] * (1.0 - ap_at(mel.center_hz[m]));
          rho[m] = std::clamp(
              std::log(std::max(want, 1e-30) / std::max(hpred[m], 1e-30)),
              -2.0, 2.0);
        }
        std::vector<float> rho_c(cfg.n_mcep);
        dct.forward(rho, rho_c.data());
        const auto rho_smooth = dct.inverse(rho_c.data(), cfg.n_mcep);
        for (int k = 1; k <= k_max; ++k)
          amps[k] *= std::exp(mel.interp(rho_smooth, k * f0[t]));
      }
    }
    predict_harmonics();

    // Mostly-periodic bands are owned by the harmonics outright; topping
    // them up with near-carrier noise would modulate audibly and smear the
    // re-analysis.
    for (int m = 0; m < n_bands; ++m) {
      const bool voiced_band = k_max > 0 && ap_at(mel.center_hz[m]) < 0.25;
      resid[m] =
          voiced_band ? 0.0 : std::max(band_energy[t][m] - hpred[m], 0.0);
    }

    // Thomas solve for the per-band noise budgets.
    td = a_diag;
    tu = a_upper;
    tl = a_lower;
    tx = resid;
    for (int m = 1; m < n_bands; ++m) {
      const double w = tl[m] / td[m - 1];
      td[m] -= w * tu[m - 1];
      tx[m] -= w * tx[m - 1];
    }
    std::vector<double> lambda(n_bands);
    lambda[n_bands - 1] = tx[n_bands - 1] / td[n_bands - 1];
    for (int m = n_bands - 2; m >= 0; --m)
      lambda[m] = (tx[m] - tu[m] * lambda[m + 1]) / td[m];
    for (double& l : lambda) l = std::max(l, 0.0);

    auto& nmag = noise_mag[t];
    for (int b = 1; b < bins - 1; ++b) {
      double p = 0.0;
      for (const auto& [m, w] : bin_bands[b])
        p += lambda[m] * w / mel.width_bins[m];
      nmag[b] = std::max(p, 0.0);  // squared, smoothed below
    }
  }

  // The fit re-runs per frame on jittering f0 estimates; raw per-frame
  // amplitudes would amplitude-modulate the oscillators at the frame rate
  // and splash sidebands across neighboring bands. A 1-2-1 smoothing kernel
  // in time removes the jitter.
  const auto smooth_time = [&](std::vector<std::vector<double>>& plan) {
    std::vector<std::vector<double>> orig = plan;
    for (int t = 0; t < t_total; ++t) {
      const int tp = std::max(0, t - 1);
      const int tn = std::min(t_total - 1, t + 1);
      for (std::size_t i = 0; i < plan[t].size(); ++i)
        plan[t][i] =
            0.25 * orig[tp][i] + 0.5 * orig[t][i] + 0.25 * orig[tn][i];
    }
  };
  smooth_time(harm_amp);
  smooth_time(noise_mag);
  for (int t = 0; t < t_total; ++t) {
    for (double& a : harm_amp[t]) a = std::sqrt(std::max(a, 0.0));
    for (double& m : noise_mag[t]) m = std::sqrt(std::max(m, 0.0));
  }

  Waveform out;
  out.sample_rate = cfg.sample_rate;
  out.samples.assign(out_len, 0.0);

  // Harmonic bank with a single running fundamental phase; fixed per-partial
  // offsets flatten the crest without affecting re-analysis.
  double phase = 0.0;
  const double golden = 0.61803398874989484820;
  for (long n = 0; n < out_len; ++n) {
    const double pos =
        std::clamp((n - cfg.window / 2.0) / hop, 0.0, t_total - 1.0);
    const int t0 = std::min(t_total - 1, static_cast<int>(pos));
    const int t1 = std::min(t_total - 1, t0 + 1);
    const double frac = pos - t0;
    const double f0_n =
        f0[t0] > 0 ? (f0[t1] > 0 ? f0[t0] * (1 - frac) + f0[t1] * frac
                                 : f0[t0])
                   : f0[t1];
    if (f0_n <= 0) continue;
    phase += kTwoPi * f0_n / cfg.sample_rate;
    if (phase > kTwoPi) phase -= kTwoPi;
    const int k_max =
        std::min(max_harmonics, static_cast<int>(nyq * 0.95 / f0_n));
    double acc = 0.0;
    for (int k = 1; k <= k_max; ++k) {
      const double a =
          harm_amp[t0][k] * (1 - frac) + harm_amp[t1][k] * frac;
      if (a <= 0) continue;
      const double offset = kTwoPi * std::fmod(golden * k, 1.0);
      acc += a * std::sin(k * phase + offset);
    }
    out.samples[n] += acc;
  }

  // Noise part: a stationary bank of per-bin sinusoids with fixed random
  // phases and slowly interpolated magnitudes. Unlike overlap-added noise
  // frames this has no frame-rate modulation, so narrow spectral structure
  // survives re-analysis. Adjacent bins leak into each other by the window
  // lobe; dividing by the summed lobe response keeps band energies on
  // target.
  Rng rng(noise_seed);
  std::vector<double> noise_phase(bins, 0.0);
  for (int b = 0; b < bins; ++b) noise_phase[b] = rng.uniform(0.0, kTwoPi);
  double comb_sum = 0.0;
  for (int d = -12; d <= 12; ++d) comb_sum += lobe_at(d);
  const double comb_gain = 1.0 / std::sqrt(comb_sum);
  for (long n = 0; n < out_len; ++n) {
    const double pos =
        std::clamp((n - cfg.window / 2.0) / hop, 0.0, t_total - 1.0);
    const int t0 = std::min(t_total - 1, static_cast<int>(pos));
    const int t1 = std::min(t_total - 1, t0 + 1);
    const double frac = pos - t0;
    const double omega0 = kTwoPi * bin_hz / cfg.sample_rate;
    double acc = 0.0;
    for (int b = 1; b < bins - 1; ++b) {
      const double m =
          noise_mag[t0][b] * (1 - frac) + noise_mag[t1][b] * frac;
      if (m <= 0) continue;
      acc += m * std::sin(omega0 * b * n + noise_phase[b]);
    }
    out.samples[n] += comb_gain * acc;
  }

  double peak = 0.0;
  for (double s : out.samples) peak = std::max(peak, std::abs(s));
  if (peak > 0.99) {
    const double g = 0.99 / peak;
    for (double& s : out.samples) s *= g;
  }
  return out;
}

// ---------------------------------------------------------------------------
// WAV I/O
// ---------------------------------------------------------------------------

namespace {

std::uint32_t rd_u32(const std::uint8_t* p) {
  return static_cast<std::uint32_t>(p[0]) | (p[1] << 8) | (p[2] << 16) |
         (static_cast<std::uint32_t>(p[3]) << 24);
}
std::uint16_t rd_u16(const std::uint8_t* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

void wr_u32(std::vector<std::uint8_t>& out, std::uint32_t x) {
  out.push_back(x & 0xff);
  out.push_back((x >> 8) & 0xff);
  out.push_back((x >> 16) & 0xff);
  out.push_back((x >> 24) & 0xff);
}
void wr_u16(std::vector<std::uint8_t>& out, std::uint16_t x) {
  out.push_back(x & 0xff);
  out.push_back((x >> 8) & 0xff);
}

}  // namespace

Waveform read_wav(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open: " + path);
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  if (bytes.size() < 44 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
      std::memcmp(bytes.data() + 8, "WAVE", 4) != 0)
    throw FormatError("wav: not a RIFF/WAVE file");

  Waveform wave;
  bool got_fmt = false, got_data = false;
  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const char* id = reinterpret_cast<const char*>(bytes.data() + pos);
    const std::uint32_t sz = rd_u32(bytes.data() + pos + 4);
    if (pos + 8 + sz > bytes.size())
      throw FormatError("wav: truncated chunk");
    if (std::memcmp(id, "fmt ", 4) == 0) {
      if (sz < 16) throw FormatError("wav: short fmt chunk");
      const std::uint16_t format = rd_u16(bytes.data() + pos + 8);
      const std::uint16_t channels = rd_u16(bytes.data() + pos + 10);
      const std::uint32_t rate = rd_u32(bytes.data() + pos + 12);
      const std::uint16_t bits = rd_u16(bytes.data() + pos + 22);
      if (format != 1) throw FormatError("wav: only PCM is supported");
      if (channels != 1) throw FormatError("wav: only mono is supported");
      if (bits != 16) throw FormatError("wav: only 16-bit is supported");
      wave.sample_rate = rate;
      got_fmt = true;
    } else if (std::memcmp(id, "data", 4) == 0) {
      if (!got_fmt) throw FormatError("wav: data before fmt");
      const std::size_t n = sz / 2;
      wave.samples.resize(n);
      for (std::size_t i = 0; i < n; ++i) {
        const std::int16_t s = static_cast<std::int16_t>(
            rd_u16(bytes.data() + pos + 8 + i * 2));
        wave.samples[i] = s / 32768.0;
      }
      got_data = true;
    }
    pos += 8 + sz + (sz & 1);
  }
  if (!got_fmt || !got_data) throw FormatError("wav: missing fmt or data");
  return wave;
}

void write_wav(const Waveform& wave, const std::string& path) {
  std::vector<std::uint8_t> out;
  const std::uint32_t data_size =
      static_cast<std::uint32_t>(wave.samples.size() * 2);
  out.insert(out.end(), {'R', 'I', 'F', 'F'});
  wr_u32(out, 36 + data_size);
  out.insert(out.end(), {'W', 'A', 'V', 'E'});
  out.insert(out.end(), {'f', 'm', 't', ' '});
  wr_u32(out, 16);
  wr_u16(out, 1);  // PCM
  wr_u16(out, 1);  // mono
  const std::uint32_t rate = static_cast<std::uint32_t>(wave.sample_rate);
  wr_u32(out, rate);
  wr_u32(out, rate * 2);
  wr_u16(out, 2);
  wr_u16(out, 16);
  out.insert(out.end(), {'d', 'a', 't', 'a'});
  wr_u32(out, data_size);
  for (double s : wave.samples) {
    const double c = std::clamp(s, -1.0, 1.0);
    const std::int16_t q = static_cast<std::int16_t>(std::lround(c * 32767.0));
    wr_u16(out, static_cast<std::uint16_t>(q));
  }
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw Error("cannot open for writing: " + path);
  f.write(reinterpret_cast<const char*>(out.data()),
          static_cast<std::streamsize>(out.size()));
  if (!f) throw Error("write failed: " + path);
}

}  // namespace sing
