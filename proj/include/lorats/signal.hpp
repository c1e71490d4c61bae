#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include "lorats/fft.hpp"
#include "lorats/phy.hpp"

namespace lorats {

enum class ChirpKind { Up, Down };

/// One piece of a CSS waveform. `length` is in chirp times (0.25 for the SFD tail).
struct ChirpSegment {
  ChirpKind kind = ChirpKind::Up;
  int symbol = 0;
  double length = 1.0;
};

namespace detail {

// Phase accumulated tau seconds into a segment, excluding bias and initial phase.
// A symbol-k up chirp starts at -W/2 + k*W/2^S and wraps to -W/2 when it reaches +W/2.
inline double segment_phase(const ChirpSegment& seg, const PhyParams& phy, double tau) {
  const double w = phy.bandwidth;
  const double f0 = -w / 2.0 + seg.symbol * phy.bin_width();
  const double wrap_at = static_cast<double>(phy.chips() - seg.symbol) / w;
  double ph = kTwoPi * (f0 * tau + 0.5 * phy.chirp_rate() * tau * tau);
  if (tau >= wrap_at) ph -= kTwoPi * w * (tau - wrap_at);
  return seg.kind == ChirpKind::Up ? ph : -ph;
}

inline void check_rate(const PhyParams& phy, double sample_rate) {
  require(std::isfinite(sample_rate), "sample rate must be finite");
  require(sample_rate >= 2.0 * phy.bandwidth, "sample rate must be at least twice the bandwidth");
}

}  // namespace detail

/// Synthesize a sequence of chirp segments with continuous phase across boundaries.
/// Implements Theta(t) = sum of segment sweeps + 2*pi*delta*t + theta, I = (A/2)cos, Q = (A/2)sin.
inline IQTrace synthesize(std::span<const ChirpSegment> segments, const PhyParams& phy,
                          const TxParams& tx, const RxParams& rx, double sample_rate) {
  phy.validate();
  tx.validate();
  rx.validate();
  detail::check_rate(phy, sample_rate);
  for (const auto& s : segments) {
    require(s.symbol >= 0 && s.symbol < phy.chips(), "symbol out of range");
    require(s.length > 0.0 && s.length <= 1.0, "segment length must be in (0, 1] chirp times");
  }

  const double tc = phy.chirp_time();
  std::vector<double> start(segments.size() + 1, 0.0);
  std::vector<double> offset(segments.size() + 1, 0.0);
  for (std::size_t j = 0; j < segments.size(); ++j) {
    const double len = segments[j].length * tc;
    start[j + 1] = start[j] + len;
    offset[j + 1] = offset[j] + detail::segment_phase(segments[j], phy, len);
  }

  const double delta = effective_fb(tx, rx);
  const double theta = effective_phase(tx, rx);
  const double half_amp = tx.amplitude / 2.0;
  const double ramp_len = tx.ramp_fraction * tc;

  IQTrace out;
  out.sample_rate = sample_rate;
  out.center_freq = phy.center_freq;
  const auto n = static_cast<std::size_t>(std::llround(start.back() * sample_rate));
  out.samples.resize(n);
  std::size_t j = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) / sample_rate;
    while (j + 1 < segments.size() && t >= start[j + 1]) ++j;
    const double tau = t - start[j];
    const double ph = offset[j] + detail::segment_phase(segments[j], phy, tau) + kTwoPi * delta * t + theta;
    double amp = half_amp;
    if (ramp_len > 0.0 && t < ramp_len) amp *= t / ramp_len;
    out.samples[i] = std::polar(amp, ph);
  }
  return out;
}

/// One preamble up chirp, -W/2 + delta to +W/2 + delta.
inline IQTrace gen_up_chirp(const PhyParams& phy, const TxParams& tx, const RxParams& rx,
                            double sample_rate = kDefaultSampleRate) {
  const ChirpSegment seg{ChirpKind::Up, 0, 1.0};
  return synthesize(std::span(&seg, 1), phy, tx, rx, sample_rate);
}

/// One down chirp, +W/2 + delta to -W/2 + delta.
inline IQTrace gen_down_chirp(const PhyParams& phy, const TxParams& tx, const RxParams& rx,
                              double sample_rate = kDefaultSampleRate) {
  const ChirpSegment seg{ChirpKind::Down, 0, 1.0};
  return synthesize(std::span(&seg, 1), phy, tx, rx, sample_rate);
}

/// Segment layout of an uplink frame: 8 up chirps, 2.25 down chirps, payload symbol chirps.
inline std::vector<ChirpSegment> frame_layout(std::span<const int> payload) {
  std::vector<ChirpSegment> segs;
  segs.reserve(kPreambleChirps + 3 + payload.size());
  for (int i = 0; i < kPreambleChirps; ++i) segs.push_back({ChirpKind::Up, 0, 1.0});
  segs.push_back({ChirpKind::Down, 0, 1.0});
  segs.push_back({ChirpKind::Down, 0, 1.0});
  segs.push_back({ChirpKind::Down, 0, 0.25});
  for (int s : payload) segs.push_back({ChirpKind::Up, s, 1.0});
  return segs;
}

/// Frame duration in chirp times.
inline double frame_chirps(std::size_t n_payload) {
  return kPreambleChirps + kSfdChirps + static_cast<double>(n_payload);
}

inline IQTrace gen_frame(const PhyParams& phy, const TxParams& tx, const RxParams& rx,
                         std::span<const int> payload, double sample_rate = kDefaultSampleRate) {
  phy.validate();
  for (int s : payload)
    if (s < 0 || s >= phy.chips())
      throw InvalidArgument("payload symbol " + std::to_string(s) + " outside [0, 2^S)");
  const auto segs = frame_layout(payload);
  return synthesize(segs, phy, tx, rx, sample_rate);
}

/// Prepend `lead` zero samples and append `tail` zero samples; t0 moves back accordingly.
inline IQTrace pad(const IQTrace& in, std::size_t lead, std::size_t tail) {
  IQTrace out = in;
  out.samples.assign(lead, Sample{});
  out.samples.insert(out.samples.end(), in.samples.begin(), in.samples.end());
  out.samples.resize(out.samples.size() + tail);
  out.t0_ns = in.t0_ns - std::llround(static_cast<double>(lead) * 1e9 / in.sample_rate);
  return out;
}

/// Mean power over samples with non-zero magnitude; the whole trace if all are zero.
inline double active_power(const std::vector<Sample>& x) {
  double acc = 0.0;
  std::size_t cnt = 0;
  for (const auto& s : x) {
    const double p = std::norm(s);
    if (p > 0.0) {
      acc += p;
      ++cnt;
    }
  }
  return cnt ? acc / static_cast<double>(cnt) : 0.0;
}

/// Add white complex Gaussian noise so that active-signal power / noise power = target.
/// A target of +infinity returns the input unchanged.
inline IQTrace add_awgn(const IQTrace& trace, double target_snr_db, std::uint64_t seed) {
  require(!trace.empty(), "cannot add noise to an empty trace");
  require(!std::isnan(target_snr_db), "target SNR must not be NaN");
  if (std::isinf(target_snr_db) && target_snr_db > 0) return trace;
  const double ps = active_power(trace.samples);
  const double pn = std::isinf(target_snr_db) ? std::numeric_limits<double>::infinity()
                                              : ps / std::pow(10.0, target_snr_db / 10.0);
  const double sigma = std::sqrt(pn / 2.0);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  IQTrace out = trace;
  for (auto& s : out.samples) {
    const double re = gauss(rng);
    const double im = gauss(rng);
    s += Sample(sigma * re, sigma * im);
  }
  return out;
}

/// 10 log10((P_signal - P_noise) / P_noise); nullopt when the signal segment is at or below
/// the noise floor.
inline std::optional<double> measure_snr(const IQTrace& trace, SampleRange noise, SampleRange signal) {
  require(noise.size() > 0 && signal.size() > 0, "SNR segments must be non-empty");
  require(!noise.overlaps(signal), "noise and signal segments must be disjoint");
  const double pn = mean_power(trace.samples, noise);
  const double pt = mean_power(trace.samples, signal);
  if (!(pt > pn) || pn <= 0.0) return std::nullopt;
  return 10.0 * std::log10((pt - pn) / pn);
}

// ---------------------------------------------------------------------------
// Spectrogram
// ---------------------------------------------------------------------------

struct SpectrogramConfig {
  std::size_t window_len = 0;  // 0 selects 2^S
  std::size_t overlap = 16;
  std::size_t nfft = 0;  // 0 selects window_len; larger values zero-pad
  double kaiser_beta = 8.0;
};

/// Short-time FFT power spectral densities. Row c is the window starting at sample c*hop();
/// column b is frequency freq(b), ordered from -fs/2 upward.
struct Spectrogram {
  std::vector<std::vector<double>> psd;
  std::size_t window_len = 0;
  std::size_t overlap = 0;
  std::size_t nfft = 0;
  double sample_rate = 0.0;

  [[nodiscard]] std::size_t hop() const { return window_len - overlap; }
  [[nodiscard]] std::size_t columns() const { return psd.size(); }
  [[nodiscard]] std::size_t bins() const { return nfft; }
  [[nodiscard]] double freq(std::size_t bin) const {
    return (static_cast<double>(bin) - static_cast<double>(nfft / 2)) * sample_rate / static_cast<double>(nfft);
  }
  [[nodiscard]] std::size_t bin_of(double f) const {
    const double b = std::round(f * static_cast<double>(nfft) / sample_rate) + static_cast<double>(nfft / 2);
    return static_cast<std::size_t>(std::clamp(b, 0.0, static_cast<double>(nfft - 1)));
  }
  /// Sample index at the centre of column c.
  [[nodiscard]] double column_center(std::size_t c) const {
    return static_cast<double>(c * hop()) + static_cast<double>(window_len) / 2.0;
  }
  /// Bin of maximum power in column c.
  [[nodiscard]] std::size_t ridge(std::size_t c) const {
    const auto& row = psd.at(c);
    return static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
  }
};

inline std::vector<double> kaiser_window(std::size_t n, double beta) {
  std::vector<double> w(n, 1.0);
  if (n < 2) return w;
  const double denom = std::cyl_bessel_i(0.0, beta);
  for (std::size_t i = 0; i < n; ++i) {
    const double r = 2.0 * static_cast<double>(i) / static_cast<double>(n - 1) - 1.0;
    w[i] = std::cyl_bessel_i(0.0, beta * std::sqrt(std::max(0.0, 1.0 - r * r))) / denom;
  }
  return w;
}

inline Spectrogram spectrogram(const IQTrace& trace, const PhyParams& phy, SpectrogramConfig cfg = {}) {
  phy.validate();
  if (cfg.window_len == 0) cfg.window_len = static_cast<std::size_t>(phy.chips());
  if (cfg.nfft == 0) cfg.nfft = cfg.window_len;
  require(cfg.overlap < cfg.window_len, "overlap must be smaller than the window");
  require(cfg.nfft >= cfg.window_len, "nfft must be at least the window length");
  if (trace.size() < cfg.window_len) throw InvalidArgument("trace shorter than one spectrogram window");

  Spectrogram sg;
  sg.window_len = cfg.window_len;
  sg.overlap = cfg.overlap;
  sg.nfft = cfg.nfft;
  sg.sample_rate = trace.sample_rate;

  const auto win = kaiser_window(cfg.window_len, cfg.kaiser_beta);
  double wpow = 0.0;
  for (double v : win) wpow += v * v;
  const double scale = 1.0 / (trace.sample_rate * wpow);

  const std::size_t hop = sg.hop();
  const std::size_t ncol = (trace.size() - cfg.window_len) / hop + 1;
  fft::Plan plan(cfg.nfft, false);
  std::vector<Sample> frame(cfg.window_len);
  std::vector<Sample> spec;
  sg.psd.assign(ncol, std::vector<double>(cfg.nfft, 0.0));
  const std::size_t half = cfg.nfft / 2;
  for (std::size_t c = 0; c < ncol; ++c) {
    const std::size_t s0 = c * hop;
    for (std::size_t i = 0; i < cfg.window_len; ++i) frame[i] = trace.samples[s0 + i] * win[i];
    plan.execute(frame.data(), frame.size(), spec);
    auto& row = sg.psd[c];
    for (std::size_t b = 0; b < cfg.nfft; ++b) row[(b + half) % cfg.nfft] = std::norm(spec[b]) * scale;
  }
  return sg;
}

// ---------------------------------------------------------------------------
// Dechirping
// ---------------------------------------------------------------------------

/// Integrate-and-dump one chirp-time window down to 2^S chips, then multiply each chip by the
/// conjugate ideal (symbol 0, zero bias) reference of `kind` evaluated at the chip's mean
/// sample time. A tone at k*W/2^S lands on chip-domain frequency k. Chip m averages the
/// samples nearest to m/W; centring on the chip grid keeps the two halves of a wrapped
/// symbol chirp in phase.
inline std::vector<Sample> dechirp_chips(std::span<const Sample> window, const PhyParams& phy,
                                         double sample_rate, ChirpKind kind = ChirpKind::Up) {
  const int chips = phy.chips();
  const ChirpSegment ref{kind, 0, 1.0};
  std::vector<Sample> out(static_cast<std::size_t>(chips), Sample{});
  const double spc = sample_rate / phy.bandwidth;
  for (int m = 0; m < chips; ++m) {
    const auto lo = static_cast<std::size_t>(std::max(0.0, std::ceil((m - 0.5) * spc - 1e-9)));
    const auto hi = std::min(window.size(), static_cast<std::size_t>(std::ceil((m + 0.5) * spc - 1e-9)));
    if (lo >= hi) continue;
    Sample acc{};
    for (std::size_t n = lo; n < hi; ++n) acc += window[n];
    const double cnt = static_cast<double>(hi - lo);
    const double tau = 0.5 * static_cast<double>(lo + hi - 1) / sample_rate;
    out[static_cast<std::size_t>(m)] = acc / cnt * std::polar(1.0, -detail::segment_phase(ref, phy, tau));
  }
  return out;
}

/// |DFT|^2 of the dechirped chips; index k is the bin at k*W/2^S (k >= 2^(S-1) are negative).
inline std::vector<double> dechirp_spectrum(std::span<const Sample> window, const PhyParams& phy,
                                            double sample_rate, ChirpKind kind = ChirpKind::Up) {
  auto chips = dechirp_chips(window, phy, sample_rate, kind);
  auto spec = fft::forward(chips);
  std::vector<double> p(spec.size());
  for (std::size_t i = 0; i < spec.size(); ++i) p[i] = std::norm(spec[i]);
  return p;
}

/// Map an FFT bin index to a signed bin in [-2^(S-1), 2^(S-1)).
inline int signed_bin(std::size_t k, int chips) {
  const int ki = static_cast<int>(k);
  return ki >= chips / 2 ? ki - chips : ki;
}

}  // namespace lorats
