#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "lorats/fft.hpp"
#include "lorats/signal.hpp"

namespace lorats {

enum class Detector { Env, Corr, Aic };

inline std::string to_string(Detector d) {
  switch (d) {
    case Detector::Env: return "ENV";
    case Detector::Corr: return "CORR";
    case Detector::Aic: return "AIC";
  }
  return "?";
}

inline Detector detector_from_string(const std::string& s) {
  if (s == "ENV" || s == "env") return Detector::Env;
  if (s == "CORR" || s == "corr") return Detector::Corr;
  if (s == "AIC" || s == "aic") return Detector::Aic;
  throw InvalidArgument("unknown detector '" + s + "'");
}

struct OnsetResult {
  std::size_t onset_sample = 0;
  std::int64_t onset_time_ns = 0;
  Detector detector = Detector::Aic;
  double score = 0.0;  // ENV: peak ratio, CORR: Pearson r, AIC: depth of the AIC minimum per sample
};

namespace detail {

inline OnsetResult make_onset(const IQTrace& trace, std::size_t n, Detector d, double score) {
  OnsetResult r;
  r.onset_sample = std::min(n, trace.size() - 1);
  r.onset_time_ns = trace.time_ns(r.onset_sample);
  r.detector = d;
  r.score = score;
  return r;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// ENV: envelope folding
// ---------------------------------------------------------------------------

/// Hilbert envelope summed over equal chunks; the onset is the start of the chunk with the
/// largest ratio to its predecessor (earliest on ties). The envelopes of I and Q are combined
/// in quadrature: an I-only envelope collapses wherever the chirp sweeps through 0 Hz.
inline OnsetResult detect_env(const IQTrace& trace, std::size_t chunk_len = 200) {
  require(chunk_len > 0, "chunk length must be positive");
  require(trace.size() >= 2 * chunk_len, "trace must hold at least two chunks");

  std::vector<double> rail(trace.size());
  for (std::size_t i = 0; i < trace.size(); ++i) rail[i] = trace.samples[i].real();
  const auto env_i = fft::analytic_signal(rail);
  for (std::size_t i = 0; i < trace.size(); ++i) rail[i] = trace.samples[i].imag();
  const auto env_q = fft::analytic_signal(rail);
  std::vector<double> env(trace.size());
  for (std::size_t i = 0; i < trace.size(); ++i) env[i] = std::sqrt(0.5 * (std::norm(env_i[i]) + std::norm(env_q[i])));

  const std::size_t nchunks = trace.size() / chunk_len;
  std::vector<double> sums(nchunks, 0.0);
  for (std::size_t c = 0; c < nchunks; ++c)
    for (std::size_t i = c * chunk_len; i < (c + 1) * chunk_len; ++i) sums[c] += env[i];

  const double top = *std::max_element(sums.begin(), sums.end());
  if (!(top > 0.0)) throw NoOnsetError("ENV: trace has no energy");
  const double eps = top * 1e-12;

  std::size_t best = 1;
  double best_ratio = -1.0;
  for (std::size_t c = 1; c < nchunks; ++c) {
    const double r = sums[c] / (sums[c - 1] + eps);
    if (r > best_ratio) {
      best_ratio = r;
      best = c;
    }
  }
  return detail::make_onset(trace, best * chunk_len, Detector::Env, best_ratio);
}

// ---------------------------------------------------------------------------
// CORR: spectrogram hill-peak template
// ---------------------------------------------------------------------------

struct CorrConfig {
  double freq_search_hz = 30e3;  // template is slid over +/- this frequency offset
  double band_margin_hz = 12e3;  // extra bandwidth kept around +/- W/2
  std::size_t nfft = 0;          // 0 selects 8 x window length
  double min_correlation = 0.5;
  // Template span relative to the frame start, in chirp times. It straddles the junction
  // between the last preamble up chirp and the SFD down chirps.
  double template_begin = 7.5;
  double template_end = 9.75;
};

namespace detail {

inline std::vector<std::vector<double>> magnitude(const Spectrogram& sg) {
  std::vector<std::vector<double>> m(sg.columns(), std::vector<double>(sg.bins()));
  for (std::size_t c = 0; c < sg.columns(); ++c)
    for (std::size_t b = 0; b < sg.bins(); ++b) m[c][b] = std::sqrt(sg.psd[c][b]);
  return m;
}

}  // namespace detail

/// Correlates the spectrogram magnitude against a template of the up-chirp/SFD junction
/// synthesized at zero bias. The template is slid in time and in whole frequency bins so a
/// biased frame, whose up and down ridges move in opposite time directions, still aligns.
inline OnsetResult detect_corr(const IQTrace& trace, const PhyParams& phy, CorrConfig cfg = {}) {
  phy.validate();
  require(cfg.template_end > cfg.template_begin, "template span must be positive");
  require(cfg.freq_search_hz >= 0.0 && cfg.band_margin_hz >= 0.0, "search ranges must be non-negative");
  const double fs = trace.sample_rate;
  const double tc = phy.chirp_time();

  SpectrogramConfig sc;
  sc.window_len = static_cast<std::size_t>(phy.chips());
  sc.nfft = cfg.nfft ? cfg.nfft : 8 * sc.window_len;
  const std::size_t hop = sc.window_len - sc.overlap;

  // Reference frame: preamble + SFD + one symbol so the template span is fully populated.
  const std::vector<int> one{0};
  const auto ref = gen_frame(phy, {}, {}, one, fs);
  const auto ref_sg = spectrogram(ref, phy, sc);
  const auto ref_mag = detail::magnitude(ref_sg);

  const auto t_begin = static_cast<std::size_t>(std::ceil(cfg.template_begin * tc * fs / static_cast<double>(hop)));
  const double t_end_sample = cfg.template_end * tc * fs;
  std::size_t t_cols = 0;
  while (static_cast<double>((t_begin + t_cols) * hop + sc.window_len) <= t_end_sample) ++t_cols;
  require(t_cols >= 2, "template span too short for the spectrogram hop");

  const double half_band = phy.bandwidth / 2.0 + cfg.band_margin_hz;
  const std::size_t b_lo = ref_sg.bin_of(-half_band);
  const std::size_t b_hi = ref_sg.bin_of(half_band) + 1;
  const double bin_hz = fs / static_cast<double>(sc.nfft);
  const int max_shift = static_cast<int>(std::floor(cfg.freq_search_hz / bin_hz));
  require(static_cast<int>(b_lo) - max_shift >= 0 && b_hi + static_cast<std::size_t>(max_shift) <= sc.nfft,
          "frequency search exceeds the sampled band");
  const std::size_t nb = b_hi - b_lo;

  // Zero-mean, unit-norm template.
  std::vector<double> tmpl;
  tmpl.reserve(t_cols * nb);
  for (std::size_t c = 0; c < t_cols; ++c)
    for (std::size_t b = b_lo; b < b_hi; ++b) tmpl.push_back(ref_mag[t_begin + c][b]);
  const double tmean = std::accumulate(tmpl.begin(), tmpl.end(), 0.0) / static_cast<double>(tmpl.size());
  double tnorm = 0.0;
  for (auto& v : tmpl) {
    v -= tmean;
    tnorm += v * v;
  }
  tnorm = std::sqrt(tnorm);
  for (auto& v : tmpl) v /= tnorm;

  if (trace.size() < t_cols * hop + sc.window_len) throw InvalidArgument("trace shorter than the CORR template");
  const auto sg = spectrogram(trace, phy, sc);
  const auto mag = detail::magnitude(sg);
  if (sg.columns() < t_cols) throw InvalidArgument("trace shorter than the CORR template");

  const std::size_t n_off = sg.columns() - t_cols + 1;
  const double n_el = static_cast<double>(t_cols * nb);
  std::vector<double> best_by_col(n_off, -2.0);
  double best = -2.0;
  std::size_t best_c = 0;
  for (std::size_t c0 = 0; c0 < n_off; ++c0) {
    for (int s = -max_shift; s <= max_shift; ++s) {
      const std::size_t lo = static_cast<std::size_t>(static_cast<int>(b_lo) + s);
      double sum = 0.0, sum2 = 0.0, dot = 0.0;
      std::size_t k = 0;
      for (std::size_t c = 0; c < t_cols; ++c) {
        const auto& row = mag[c0 + c];
        for (std::size_t b = 0; b < nb; ++b, ++k) {
          const double v = row[lo + b];
          sum += v;
          sum2 += v * v;
          dot += v * tmpl[k];
        }
      }
      const double var = sum2 - sum * sum / n_el;
      if (var <= 0.0) continue;
      const double r = dot / std::sqrt(var);  // template is zero-mean, so the patch mean drops out
      if (r > best_by_col[c0]) best_by_col[c0] = r;
    }
    if (best_by_col[c0] > best) {
      best = best_by_col[c0];
      best_c = c0;
    }
  }
  if (!(best >= cfg.min_correlation))
    throw NoOnsetError("CORR: maximum correlation " + std::to_string(std::max(best, 0.0)) + " below threshold");

  // Parabolic refinement across neighbouring columns.
  double frac = 0.0;
  if (best_c > 0 && best_c + 1 < n_off) {
    const double ym = best_by_col[best_c - 1], y0 = best_by_col[best_c], yp = best_by_col[best_c + 1];
    const double den = ym - 2.0 * y0 + yp;
    if (den < 0.0) frac = std::clamp(0.5 * (ym - yp) / den, -0.5, 0.5);
  }
  const double onset = (static_cast<double>(best_c) + frac - static_cast<double>(t_begin)) * static_cast<double>(hop);
  const auto n = static_cast<std::size_t>(std::max(0.0, std::round(onset)));
  return detail::make_onset(trace, n, Detector::Corr, best);
}

// ---------------------------------------------------------------------------
// AIC: two-segment autoregressive change point
// ---------------------------------------------------------------------------

struct AicConfig {
  int order = 2;                  // AR order; 0 reduces to a variance change point
  std::size_t min_segment = 256;  // shortest segment on either side of a split
};

namespace detail {

// Solve the small symmetric system A x = b by Gaussian elimination with partial pivoting.
// Returns false if A is singular.
inline bool solve_small(std::vector<double> a, std::vector<double> b, int n, std::vector<double>& x) {
  for (int col = 0; col < n; ++col) {
    int piv = col;
    for (int r = col + 1; r < n; ++r)
      if (std::abs(a[r * n + col]) > std::abs(a[piv * n + col])) piv = r;
    if (std::abs(a[piv * n + col]) < 1e-300) return false;
    if (piv != col) {
      for (int k = 0; k < n; ++k) std::swap(a[col * n + k], a[piv * n + k]);
      std::swap(b[col], b[piv]);
    }
    for (int r = col + 1; r < n; ++r) {
      const double f = a[r * n + col] / a[col * n + col];
      for (int k = col; k < n; ++k) a[r * n + k] -= f * a[col * n + k];
      b[r] -= f * b[col];
    }
  }
  x.assign(n, 0.0);
  for (int r = n - 1; r >= 0; --r) {
    double s = b[r];
    for (int k = r + 1; k < n; ++k) s -= a[r * n + k] * x[k];
    x[r] = s / a[r * n + r];
  }
  return true;
}

// Prefix sums of lagged products Re(x[m-i] conj(x[m-j])) for 0 <= i <= j <= p, indexed by m.
class LagSums {
 public:
  LagSums(const std::vector<Sample>& x, int p) : p_(p), n_(x.size()) {
    const int pairs = (p + 1) * (p + 2) / 2;
    sums_.assign(static_cast<std::size_t>(pairs), std::vector<double>(n_ + 1, 0.0));
    int idx = 0;
    for (int i = 0; i <= p; ++i)
      for (int j = i; j <= p; ++j, ++idx) {
        auto& s = sums_[static_cast<std::size_t>(idx)];
        for (std::size_t m = 0; m < n_; ++m) {
          double v = 0.0;
          if (m >= static_cast<std::size_t>(j)) v = (x[m - i] * std::conj(x[m - j])).real();
          s[m + 1] = s[m] + v;
        }
      }
  }

  // Sum over m in [lo, hi) of Re(x[m-i] conj(x[m-j])).
  [[nodiscard]] double range(int i, int j, std::size_t lo, std::size_t hi) const {
    if (i > j) std::swap(i, j);
    const int idx = i * (p_ + 1) - i * (i - 1) / 2 + (j - i);
    const auto& s = sums_[static_cast<std::size_t>(idx)];
    return s[hi] - s[lo];
  }

 private:
  int p_;
  std::size_t n_;
  std::vector<std::vector<double>> sums_;
};

// Least-squares residual power per sample of a real-coefficient AR(p) model predicting
// x[m] from x[m-1..m-p] for m in [lo, hi).
inline double ar_residual(const LagSums& ls, int p, std::size_t lo, std::size_t hi) {
  const double e0 = ls.range(0, 0, lo, hi);
  const auto cnt = static_cast<double>(hi - lo);
  if (p == 0) return e0 / cnt;
  std::vector<double> a(static_cast<std::size_t>(p * p)), b(static_cast<std::size_t>(p)), coef;
  for (int i = 1; i <= p; ++i) {
    b[i - 1] = ls.range(0, i, lo, hi);
    for (int j = 1; j <= p; ++j) a[(i - 1) * p + (j - 1)] = ls.range(i, j, lo, hi);
  }
  if (!solve_small(a, b, p, coef)) return e0 / cnt;
  double explained = 0.0;
  for (int i = 0; i < p; ++i) explained += coef[i] * b[i];
  return std::max(e0 - explained, 0.0) / cnt;
}

}  // namespace detail

struct AicCurve {
  std::vector<double> aic;  // entry i is the split at min_segment + i
  std::vector<bool> rising;  // residual power after the split exceeds the power before it
};

/// AIC over all admissible split points.
inline AicCurve aic_curve(const IQTrace& trace, const AicConfig& cfg = {}) {
  require(cfg.order >= 0 && cfg.order <= 32, "AR order must be in 0..32");
  require(cfg.min_segment > static_cast<std::size_t>(cfg.order) + 1, "min segment must exceed the AR order");
  require(trace.size() >= 2 * cfg.min_segment, "trace must hold two minimum segments");
  const int p = cfg.order;
  const std::size_t n = trace.size();
  const detail::LagSums ls(trace.samples, p);
  const double floor = std::max(mean_power(trace.samples, {0, n}), 1e-300) * 1e-12;
  const auto up = static_cast<std::size_t>(p);

  AicCurve out;
  out.aic.reserve(n - 2 * cfg.min_segment + 1);
  out.rising.reserve(n - 2 * cfg.min_segment + 1);
  for (std::size_t k = cfg.min_segment; k <= n - cfg.min_segment; ++k) {
    const double v1 = std::max(detail::ar_residual(ls, p, up, k), floor);
    const double v2 = std::max(detail::ar_residual(ls, p, k + up, n), floor);
    out.aic.push_back(static_cast<double>(k - up) * std::log(v1) + static_cast<double>(n - k - up) * std::log(v2));
    out.rising.push_back(v2 > v1);
  }
  return out;
}

/// Autoregressive AIC picker on the complex baseband samples. Every split point is scored
/// using prefix sums, so the search is exhaustive at single-sample resolution. Only splits
/// where the residual power rises are arrivals; the end of a frame is the mirror image.
inline OnsetResult detect_aic(const IQTrace& trace, const AicConfig& cfg = {}) {
  const auto curve = aic_curve(trace, cfg);
  const auto [mn, mx] = std::minmax_element(curve.aic.begin(), curve.aic.end());
  const double scale = std::max(std::abs(*mn), std::abs(*mx));
  if (!(*mx - *mn > 1e-9 * std::max(scale, 1.0))) throw NoOnsetError("AIC: flat criterion, no change point");
  std::size_t idx = curve.aic.size();
  for (std::size_t i = 0; i < curve.aic.size(); ++i)
    if (curve.rising[i] && (idx == curve.aic.size() || curve.aic[i] < curve.aic[idx])) idx = i;
  if (idx == curve.aic.size()) throw NoOnsetError("AIC: no rising change point");
  const double mean = std::accumulate(curve.aic.begin(), curve.aic.end(), 0.0) / static_cast<double>(curve.aic.size());
  const double depth = (mean - curve.aic[idx]) / static_cast<double>(trace.size());
  return detail::make_onset(trace, cfg.min_segment + idx, Detector::Aic, depth);
}

inline OnsetResult detect(const IQTrace& trace, const PhyParams& phy, Detector d) {
  switch (d) {
    case Detector::Env: return detect_env(trace);
    case Detector::Corr: return detect_corr(trace, phy);
    case Detector::Aic: return detect_aic(trace);
  }
  throw InvalidArgument("unknown detector");
}

// ---------------------------------------------------------------------------
// Round-trip evaluation
// ---------------------------------------------------------------------------

/// A measured round trip adds four i.i.d. per-event detection errors, so
/// RMSD(e) = RMSD(Delta) / 2.
inline double rmsd_roundtrip(std::span<const double> deltas) {
  require(deltas.size() >= 2, "need at least two round-trip samples");
  double acc = 0.0;
  for (double d : deltas) {
    require(std::isfinite(d), "round-trip samples must be finite");
    acc += d * d;
  }
  return 0.5 * std::sqrt(acc / static_cast<double>(deltas.size()));
}

}  // namespace lorats
