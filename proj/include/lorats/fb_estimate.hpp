#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "lorats/diffevo.hpp"
#include "lorats/signal.hpp"

namespace lorats {

enum class FbMethod { DechirpFft, Linreg, Lsq };

inline std::string to_string(FbMethod m) {
  switch (m) {
    case FbMethod::DechirpFft: return "DECHIRP_FFT";
    case FbMethod::Linreg: return "LINREG";
    case FbMethod::Lsq: return "LSQ";
  }
  return "?";
}

inline FbMethod fb_method_from_string(const std::string& s) {
  if (s == "fft" || s == "DECHIRP_FFT") return FbMethod::DechirpFft;
  if (s == "linreg" || s == "LINREG") return FbMethod::Linreg;
  if (s == "lsq" || s == "LSQ") return FbMethod::Lsq;
  throw InvalidArgument("unknown estimator '" + s + "'");
}

struct FbEstimate {
  double delta_hz = 0.0;
  FbMethod estimator = FbMethod::Lsq;
  double residual = 0.0;  // LSQ objective, LINREG residual sum of squares, FFT peak power
  double snr_db = std::numeric_limits<double>::quiet_NaN();  // filled in by callers that know it
  double theta = std::numeric_limits<double>::quiet_NaN();   // phase estimate where available
  bool low_confidence = false;  // FFT: runner-up bin within 1 dB of the peak
  bool unreliable = false;      // LINREG: phase unwrap rectified at least once per 4 samples
  bool boundary = false;        // LSQ: optimum on a delta bound
};

namespace detail {

inline void check_chirp_window(const IQTrace& chirp, const PhyParams& phy) {
  phy.validate();
  detail::check_rate(phy, chirp.sample_rate);
  const double expect = phy.chirp_time() * chirp.sample_rate;
  require(std::abs(static_cast<double>(chirp.size()) - expect) <= 1.0,
          "estimator input must be exactly one chirp time of samples");
}

// Known chirp phase pi W^2/2^S t^2 - pi W t at sample n.
inline double chirp_phase(const PhyParams& phy, double t) {
  return std::numbers::pi * phy.chirp_rate() * t * t - std::numbers::pi * phy.bandwidth * t;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// DECHIRP_FFT
// ---------------------------------------------------------------------------

/// Dechirp, integrate to 2^S chips, FFT; the peak bin gives delta on a W/2^S grid.
inline FbEstimate estimate_fb_fft(const IQTrace& chirp, const PhyParams& phy) {
  detail::check_chirp_window(chirp, phy);
  const auto p = dechirp_spectrum(chirp.samples, phy, chirp.sample_rate);
  std::size_t k1 = 0, k2 = 1;
  if (p[k2] > p[k1]) std::swap(k1, k2);
  for (std::size_t k = 2; k < p.size(); ++k) {
    if (p[k] > p[k1]) {
      k2 = k1;
      k1 = k;
    } else if (p[k] > p[k2]) {
      k2 = k;
    }
  }
  FbEstimate e;
  e.estimator = FbMethod::DechirpFft;
  e.delta_hz = signed_bin(k1, phy.chips()) * phy.bin_width();
  e.residual = p[k1];
  e.low_confidence = p[k1] <= 0.0 || 10.0 * std::log10(p[k1] / std::max(p[k2], 1e-300)) < 1.0;
  return e;
}

// ---------------------------------------------------------------------------
// LINREG
// ---------------------------------------------------------------------------

/// Unwrap atan2(Q, I), remove the known chirp quadratic and fit a line: slope / 2pi = delta,
/// intercept = theta.
inline FbEstimate estimate_fb_linreg(const IQTrace& chirp, const PhyParams& phy) {
  detail::check_chirp_window(chirp, phy);
  const std::size_t n = chirp.size();
  const double fs = chirp.sample_rate;

  long k = 0;
  std::size_t rectified = 0;
  double prev = 0.0;
  double st = 0, sy = 0, stt = 0, sty = 0, syy = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double raw = std::atan2(chirp.samples[i].imag(), chirp.samples[i].real());
    if (i > 0) {
      const double d = raw - prev;
      if (d > std::numbers::pi) {
        --k;
        ++rectified;
      } else if (d < -std::numbers::pi) {
        ++k;
        ++rectified;
      }
    }
    prev = raw;
    const double t = static_cast<double>(i) / fs;
    const double y = raw + kTwoPi * static_cast<double>(k) - detail::chirp_phase(phy, t);
    st += t;
    sy += y;
    stt += t * t;
    sty += t * y;
    syy += y * y;
  }
  const double nn = static_cast<double>(n);
  const double sxx = stt - st * st / nn;
  const double sxy = sty - st * sy / nn;
  const double slope = sxy / sxx;
  const double intercept = (sy - slope * st) / nn;

  if (!(std::abs(slope / kTwoPi) < phy.bandwidth / 2.0))
    throw DataError("LINREG estimate beyond half the bandwidth; phase unwrap failed");

  FbEstimate e;
  e.estimator = FbMethod::Linreg;
  e.delta_hz = slope / kTwoPi;
  e.theta = wrap_phase(intercept);
  e.residual = std::max(0.0, (syy - sy * sy / nn) - slope * sxy);
  e.unreliable = 4 * rectified >= n;
  return e;
}

// ---------------------------------------------------------------------------
// LSQ
// ---------------------------------------------------------------------------

struct LsqConfig {
  std::size_t population = 30;
  int max_generations = 200;
  std::pair<double, double> delta_bounds{-30e3, 30e3};
  std::pair<double, double> theta_bounds{0.0, kTwoPi};
  std::uint64_t seed = 0;
  // Linear I/Q envelope amplitude. Non-positive selects sqrt(mean power) of the chirp; the
  // minimiser over (delta, theta) does not depend on it.
  double amplitude = 0.0;
  double tol = 1e-8;
  // rand/1 keeps the population spread long enough to find the main lobe of |Y(delta)|,
  // whose sidelobes repeat every W/2^S; best/1 collapses onto a sidelobe on a few percent
  // of chirps at -18 dB.
  DeStrategy strategy = DeStrategy::Rand1Bin;
  bool polish = true;  // golden-section refinement of delta after the global search

  void validate() const {
    require(population >= 15, "LSQ population must be at least 15");
    require(max_generations >= 1, "LSQ needs at least one generation");
    require(std::isfinite(delta_bounds.first) && std::isfinite(delta_bounds.second) &&
                delta_bounds.first < delta_bounds.second,
            "delta bounds must be finite with lo < hi");
    require(std::isfinite(theta_bounds.first) && std::isfinite(theta_bounds.second) &&
                theta_bounds.first < theta_bounds.second,
            "theta bounds must be finite with lo < hi");
    require(std::isfinite(amplitude), "amplitude must be finite");
  }
};

/// Direct evaluation of sum (Q - A sin Theta)^2 + (I - A cos Theta)^2.
inline double lsq_objective(const IQTrace& chirp, const PhyParams& phy, double amplitude, double delta, double theta) {
  double acc = 0.0;
  for (std::size_t i = 0; i < chirp.size(); ++i) {
    const double t = static_cast<double>(i) / chirp.sample_rate;
    const double th = detail::chirp_phase(phy, t) + kTwoPi * delta * t + theta;
    const double di = chirp.samples[i].real() - amplitude * std::cos(th);
    const double dq = chirp.samples[i].imag() - amplitude * std::sin(th);
    acc += di * di + dq * dq;
  }
  return acc;
}

namespace detail {

// The objective expands to E + N A^2 - 2 A Re(exp(-j theta) Y(delta)) with
// Y(delta) = sum y_n exp(-j 2 pi delta t_n) and y the dechirped samples. Y is evaluated with
// a rotating phasor, renormalised every block to bound rounding drift.
class LsqObjective {
 public:
  LsqObjective(const IQTrace& chirp, const PhyParams& phy, double amplitude)
      : fs_(chirp.sample_rate), amp_(amplitude), y_(chirp.size()) {
    energy_ = 0.0;
    for (std::size_t i = 0; i < chirp.size(); ++i) {
      const double t = static_cast<double>(i) / fs_;
      y_[i] = chirp.samples[i] * std::polar(1.0, -detail::chirp_phase(phy, t));
      energy_ += std::norm(chirp.samples[i]);
    }
  }

  [[nodiscard]] Sample y_of(double delta) const {
    const Sample step = std::polar(1.0, -kTwoPi * delta / fs_);
    Sample rot(1.0, 0.0), acc{};
    constexpr std::size_t kBlock = 256;
    for (std::size_t i = 0; i < y_.size(); ++i) {
      if (i % kBlock == 0) rot = std::polar(1.0, -kTwoPi * delta * static_cast<double>(i) / fs_);
      acc += y_[i] * rot;
      rot *= step;
    }
    return acc;
  }

  [[nodiscard]] double operator()(double delta, double theta) const {
    const Sample y = y_of(delta);
    const double n = static_cast<double>(y_.size());
    return energy_ + n * amp_ * amp_ - 2.0 * amp_ * (std::polar(1.0, -theta) * y).real();
  }

 private:
  double fs_;
  double amp_;
  double energy_;
  std::vector<Sample> y_;
};

}  // namespace detail

/// Least-squares fit of the chirp model over (delta, theta) by seeded differential evolution.
inline FbEstimate estimate_fb_lsq(const IQTrace& chirp, const PhyParams& phy, const LsqConfig& cfg = {}) {
  detail::check_chirp_window(chirp, phy);
  cfg.validate();
  require(cfg.delta_bounds.first > -phy.bandwidth / 2.0 && cfg.delta_bounds.second < phy.bandwidth / 2.0,
          "delta bounds must lie inside +/- W/2");
  const double amp = cfg.amplitude > 0.0 ? cfg.amplitude : std::sqrt(mean_power(chirp.samples, {0, chirp.size()}));
  const detail::LsqObjective obj(chirp, phy, amp);

  const std::array<std::pair<double, double>, 2> bounds{cfg.delta_bounds, cfg.theta_bounds};
  DeConfig de;
  de.population = cfg.population;
  de.max_generations = cfg.max_generations;
  de.tol = cfg.tol;
  de.seed = cfg.seed;
  de.strategy = cfg.strategy;
  const auto r = differential_evolution([&](std::span<const double> x) { return obj(x[0], x[1]); }, bounds, de);

  double delta = r.x[0];
  double theta = r.x[1];
  if (cfg.polish) {
    // |Y(delta)| has a main lobe about 2 W/2^S wide around the optimum; search a quarter of it.
    const double half = 0.25 * phy.bin_width();
    double a = std::max(cfg.delta_bounds.first, delta - half);
    double b = std::min(cfg.delta_bounds.second, delta + half);
    const double g = (std::sqrt(5.0) - 1.0) / 2.0;
    double c = b - g * (b - a), d = a + g * (b - a);
    double fc = -std::abs(obj.y_of(c)), fd = -std::abs(obj.y_of(d));
    for (int it = 0; it < 60 && b - a > 1e-4; ++it) {
      if (fc < fd) {
        b = d;
        d = c;
        fd = fc;
        c = b - g * (b - a);
        fc = -std::abs(obj.y_of(c));
      } else {
        a = c;
        c = d;
        fc = fd;
        d = a + g * (b - a);
        fd = -std::abs(obj.y_of(d));
      }
    }
    const double cand = 0.5 * (a + b);
    const double cand_theta = std::clamp(wrap_phase(std::arg(obj.y_of(cand))), cfg.theta_bounds.first,
                                         std::nextafter(cfg.theta_bounds.second, cfg.theta_bounds.first));
    if (obj(cand, cand_theta) <= obj(delta, theta)) {
      delta = cand;
      theta = cand_theta;
    }
  }

  FbEstimate e;
  e.estimator = FbMethod::Lsq;
  e.delta_hz = delta;
  e.theta = theta;
  e.residual = obj(delta, theta);
  const double span = cfg.delta_bounds.second - cfg.delta_bounds.first;
  e.boundary = delta - cfg.delta_bounds.first < 1e-3 * span || cfg.delta_bounds.second - delta < 1e-3 * span;
  return e;
}

inline FbEstimate estimate_fb(const IQTrace& chirp, const PhyParams& phy, FbMethod m, const LsqConfig& cfg = {}) {
  switch (m) {
    case FbMethod::DechirpFft: return estimate_fb_fft(chirp, phy);
    case FbMethod::Linreg: return estimate_fb_linreg(chirp, phy);
    case FbMethod::Lsq: return estimate_fb_lsq(chirp, phy, cfg);
  }
  throw InvalidArgument("unknown estimator");
}

// ---------------------------------------------------------------------------
// Helpers
// ---------------------------------------------------------------------------

struct AmplitudeEstimate {
  double amplitude = 0.0;
  bool clamped = false;  // noise power was at or above the signal power
};

/// sqrt(P_signal - P_noise), the linear I/Q envelope amplitude.
inline AmplitudeEstimate estimate_amplitude(const IQTrace& trace, SampleRange signal, SampleRange noise) {
  require(signal.size() > 0 && noise.size() > 0, "amplitude ranges must be non-empty");
  require(!signal.overlaps(noise), "signal and noise ranges must be disjoint");
  const double d = mean_power(trace.samples, signal) - mean_power(trace.samples, noise);
  if (!(d > 0.0)) return {0.0, true};
  return {std::sqrt(d), false};
}

/// Doppler shift v/c * f, signed with the radial speed.
inline double doppler_fb(double speed_mps, double freq_hz) {
  require(std::isfinite(speed_mps) && std::isfinite(freq_hz), "speed and frequency must be finite");
  require(std::abs(speed_mps) < 0.01 * kSpeedOfLight, "speed must be far below c");
  return speed_mps / kSpeedOfLight * freq_hz;
}

/// Chirp `index` (0-based) of the preamble starting at `onset`: [onset + index*T, onset + (index+1)*T).
inline SampleRange preamble_chirp(std::size_t onset, const PhyParams& phy, double sample_rate, int index = 1) {
  require(index >= 0 && index < kPreambleChirps, "preamble chirp index out of range");
  const double tc = phy.chirp_time() * sample_rate;
  const auto b = onset + static_cast<std::size_t>(std::llround(index * tc));
  return {b, b + static_cast<std::size_t>(std::llround(tc))};
}

/// Copy a sample range out of a trace, keeping its wall clock.
inline IQTrace slice(const IQTrace& trace, SampleRange r) {
  if (r.end > trace.size() || r.size() == 0) throw InvalidArgument("slice range outside the trace");
  IQTrace out;
  out.sample_rate = trace.sample_rate;
  out.center_freq = trace.center_freq;
  out.t0_ns = trace.time_ns(r.begin);
  out.samples.assign(trace.samples.begin() + static_cast<std::ptrdiff_t>(r.begin),
                     trace.samples.begin() + static_cast<std::ptrdiff_t>(r.end));
  return out;
}

}  // namespace lorats
