#pragma once

#include <openssl/evp.h>
#include <openssl/hmac.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <deque>
#include <limits>
#include <map>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "lorats/error.hpp"

namespace lorats {

enum class Verdict { Accept, ReplaySuspected, Unprofiled, TempMismatch, DelaySuspected, GapRecovered };

inline std::string to_string(Verdict v) {
  switch (v) {
    case Verdict::Accept: return "Accept";
    case Verdict::ReplaySuspected: return "ReplaySuspected";
    case Verdict::Unprofiled: return "Unprofiled";
    case Verdict::TempMismatch: return "TempMismatch";
    case Verdict::DelaySuspected: return "DelaySuspected";
    case Verdict::GapRecovered: return "GapRecovered";
  }
  return "?";
}

inline bool is_alarm(Verdict v) {
  return v == Verdict::ReplaySuspected || v == Verdict::TempMismatch || v == Verdict::DelaySuspected;
}

// ---------------------------------------------------------------------------
// Device profiles
// ---------------------------------------------------------------------------

struct FbRecord {
  std::int64_t time_ns = 0;
  double delta_hz = 0.0;
};

/// Key of a per-(S, W) sub-history. A bandwidth change starts a fresh profile.
struct RadioKey {
  int spreading_factor = 7;
  double bandwidth = 125e3;
  auto operator<=>(const RadioKey&) const = default;
};

struct TempModel {
  double slope = 0.0;      // Hz per degree C
  double intercept = 0.0;  // Hz at 0 degrees C
  double rmse_c = 0.0;     // temperature RMSE of the inverse mapping on the training set
  std::size_t n = 0;

  [[nodiscard]] double temperature(double fb_hz) const { return (fb_hz - intercept) / slope; }
  [[nodiscard]] double fb(double temp_c) const { return slope * temp_c + intercept; }
};

using PihSeed = std::array<std::uint8_t, 32>;

struct PihConfig {
  PihSeed seed{};
  double min_interval_s = 1.0;
  double max_interval_s = 250.0;
  double deviation_tol_s = 0.010;
  std::uint64_t max_gap = 16;  // counter gaps beyond this need a resync

  void validate() const {
    require(min_interval_s >= 0.0 && max_interval_s > min_interval_s, "need 0 <= min interval < max interval");
    require(deviation_tol_s > 0.0, "deviation tolerance must be positive");
    require(max_gap >= 1, "max gap must be at least 1");
  }
};

struct PihState {
  bool started = false;
  std::uint64_t last_counter = 0;
  std::int64_t last_rx_time_ns = 0;
};

struct DeviceProfile {
  std::string device_id;
  std::map<RadioKey, std::deque<FbRecord>> fb_history;
  double fb_threshold = 500.0;   // Hz; 250 Hz suits TCXO devices
  std::size_t center_window = 20;  // median over the most recent accepted estimates
  std::size_t max_history = 1000;
  std::optional<TempModel> temp_model;
  std::optional<PihConfig> pih;
  PihState pih_state;

  void validate() const {
    require(fb_threshold > 0.0, "FB threshold must be positive");
    require(center_window >= 1, "center window must be at least 1");
    require(max_history >= center_window, "history must hold at least one center window");
  }

  /// Append an estimate without checking it (supervised enrolment).
  void enroll(const RadioKey& key, FbRecord rec) {
    auto& h = fb_history[key];
    require(h.empty() || rec.time_ns >= h.back().time_ns, "FB history must be time-ordered");
    h.push_back(rec);
    while (h.size() > max_history) h.pop_front();
  }

  /// Median of the last `center_window` accepted estimates; nullopt without history.
  [[nodiscard]] std::optional<double> fb_center(const RadioKey& key) const {
    const auto it = fb_history.find(key);
    if (it == fb_history.end() || it->second.empty()) return std::nullopt;
    const auto& h = it->second;
    const std::size_t n = std::min(center_window, h.size());
    std::vector<double> v;
    v.reserve(n);
    for (auto r = h.end() - static_cast<std::ptrdiff_t>(n); r != h.end(); ++r) v.push_back(r->delta_hz);
    std::sort(v.begin(), v.end());
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
  }
};

struct FrameObservation {
  std::string device_id;
  std::int64_t rx_time_ns = 0;
  double fb_hz = 0.0;
  RadioKey radio{};
  std::optional<double> temp_c;
  std::uint64_t frame_counter = 0;
};

/// Compare the estimate with the device's recent FB center. Accepted estimates extend the
/// history; suspected replays never do.
inline Verdict check_fb(DeviceProfile& p, const FrameObservation& obs) {
  p.validate();
  require(std::isfinite(obs.fb_hz), "FB estimate must be finite");
  const auto center = p.fb_center(obs.radio);
  if (!center) return Verdict::Unprofiled;
  if (std::abs(obs.fb_hz - *center) > p.fb_threshold) return Verdict::ReplaySuspected;
  p.enroll(obs.radio, {obs.rx_time_ns, obs.fb_hz});
  return Verdict::Accept;
}

// ---------------------------------------------------------------------------
// Temperature model
// ---------------------------------------------------------------------------

/// Ordinary least squares FB = slope T + intercept. Needs >= 30 pairs spanning >= 2 degrees C.
inline TempModel fit_temp_model(std::span<const std::pair<double, double>> pairs) {
  if (pairs.size() < 30) throw ModelError("temperature model needs at least 30 pairs");
  double tmin = pairs[0].first, tmax = pairs[0].first;
  double mt = 0.0, mf = 0.0;
  for (const auto& [t, f] : pairs) {
    require(std::isfinite(t) && std::isfinite(f), "temperature/FB pairs must be finite");
    tmin = std::min(tmin, t);
    tmax = std::max(tmax, t);
    mt += t;
    mf += f;
  }
  if (tmax - tmin < 2.0) throw ModelError("temperature spread below 2 degrees C");
  const double n = static_cast<double>(pairs.size());
  mt /= n;
  mf /= n;
  double stt = 0.0, stf = 0.0;
  for (const auto& [t, f] : pairs) {
    stt += (t - mt) * (t - mt);
    stf += (t - mt) * (f - mf);
  }
  TempModel m;
  m.slope = stf / stt;
  m.intercept = mf - m.slope * mt;
  m.n = pairs.size();
  if (std::abs(m.slope) < 1.0) throw ModelError("temperature model slope below 1 Hz/degC");
  double se = 0.0;
  for (const auto& [t, f] : pairs) se += (m.temperature(f) - t) * (m.temperature(f) - t);
  m.rmse_c = std::sqrt(se / n);
  return m;
}

/// Signed temperature discrepancy estimate - reading, degrees C.
inline double temp_discrepancy(const TempModel& m, double fb_hz, double reading_c) {
  if (std::abs(m.slope) < 1.0) throw ModelError("temperature model slope below 1 Hz/degC");
  return m.temperature(fb_hz) - reading_c;
}

inline Verdict check_temp_consistency(const DeviceProfile& p, const FrameObservation& obs, double temp_threshold_c) {
  require(temp_threshold_c > 0.0, "temperature threshold must be positive");
  if (!p.temp_model) throw ModelError("device '" + p.device_id + "' has no temperature model");
  require(obs.temp_c.has_value(), "observation carries no temperature reading");
  return std::abs(temp_discrepancy(*p.temp_model, obs.fb_hz, *obs.temp_c)) > temp_threshold_c ? Verdict::TempMismatch
                                                                                                : Verdict::Accept;
}

struct RocPoint {
  double threshold = 0.0;
  double fpr = 0.0;
  double tpr = 0.0;
};

/// Alarm iff score > threshold. Thresholds sweep every distinct score plus -inf, so the curve
/// runs from (1, 1) to (0, 0) in decreasing-FPR order.
inline std::vector<RocPoint> roc_curve(std::span<const double> negatives, std::span<const double> positives) {
  require(!negatives.empty() && !positives.empty(), "ROC needs both negative and positive scores");
  std::vector<double> th(negatives.begin(), negatives.end());
  th.insert(th.end(), positives.begin(), positives.end());
  th.push_back(-std::numeric_limits<double>::infinity());
  std::sort(th.begin(), th.end());
  th.erase(std::unique(th.begin(), th.end()), th.end());
  std::vector<double> neg(negatives.begin(), negatives.end()), pos(positives.begin(), positives.end());
  std::sort(neg.begin(), neg.end());
  std::sort(pos.begin(), pos.end());
  auto above = [](const std::vector<double>& v, double t) {
    return static_cast<double>(v.end() - std::upper_bound(v.begin(), v.end(), t)) / static_cast<double>(v.size());
  };
  std::vector<RocPoint> out;
  out.reserve(th.size());
  for (double t : th) out.push_back({t, above(neg, t), above(pos, t)});
  return out;
}

/// Best TPR among ROC points with FPR <= max_fpr.
inline RocPoint best_tpr_at_fpr(std::span<const RocPoint> roc, double max_fpr) {
  RocPoint best{std::numeric_limits<double>::infinity(), 0.0, 0.0};
  for (const auto& p : roc)
    if (p.fpr <= max_fpr && (p.tpr > best.tpr || (p.tpr == best.tpr && p.fpr < best.fpr))) best = p;
  return best;
}

// ---------------------------------------------------------------------------
// Synthetic device data
// ---------------------------------------------------------------------------

/// Linear FB(T) with Gaussian FB noise and a quantized sensor, shaped on an SX1276-class
/// device between 25 and 30 degrees C.
struct TempFbSynth {
  double slope = 800.0;       // Hz per degree C
  double fb_at_25c = -20e3;   // Hz
  double t_min = 25.0, t_max = 30.0;
  double fb_noise_hz = 80.0;  // per-frame FB spread at fixed temperature
  double sensor_step_c = 0.1;
};

inline std::vector<std::pair<double, double>> synth_temp_fb(std::size_t n, std::uint64_t seed, const TempFbSynth& s = {}) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> temp(s.t_min, s.t_max);
  std::normal_distribution<double> noise(0.0, s.fb_noise_hz);
  std::vector<std::pair<double, double>> out(n);
  for (auto& [t, f] : out) {
    const double truth = temp(rng);
    f = s.fb_at_25c + s.slope * (truth - 25.0) + noise(rng);
    t = s.sensor_step_c > 0 ? std::round(truth / s.sensor_step_c) * s.sensor_step_c : truth;
  }
  return out;
}

/// FB of one device over time: a slow random walk (temperature and ageing), white estimate
/// noise, and rare transients from adjacent-band interference.
struct FbJitterSynth {
  double base_hz = -20e3;
  double walk_hz_per_sqrt_hour = 60.0;
  double white_hz = 70.0;
  double transient_prob = 0.002;
  double transient_min_hz = 500.0, transient_max_hz = 1500.0;
};

/// FB values of frames sent every `interval_s`.
inline std::vector<double> synth_fb_series(std::size_t n, double interval_s, std::uint64_t seed, const FbJitterSynth& s = {}) {
  require(interval_s > 0.0, "frame interval must be positive");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 1.0);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double step = s.walk_hz_per_sqrt_hour * std::sqrt(interval_s / 3600.0);
  std::vector<double> out(n);
  double walk = 0.0;
  for (auto& v : out) {
    walk += step * g(rng);
    v = s.base_hz + walk + s.white_hz * g(rng);
    if (u(rng) < s.transient_prob) {
      const double mag = s.transient_min_hz + u(rng) * (s.transient_max_hz - s.transient_min_hz);
      v += u(rng) < 0.5 ? -mag : mag;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Pseudorandom interval hopping
// ---------------------------------------------------------------------------

/// Interval between frame `index` and frame `index + 1`, uniform over (min, max].
/// Stream: x = first 8 bytes (little endian) of HMAC-SHA256(seed, LE64(index));
/// u = (x >> 11) * 2^-53; interval = min + (max - min) * (1 - u).
inline double pih_next_interval(const PihSeed& seed, std::uint64_t index, double min_s, double max_s) {
  require(min_s >= 0.0 && max_s > min_s, "need 0 <= min interval < max interval");
  std::array<unsigned char, 8> msg{};
  for (int i = 0; i < 8; ++i) msg[static_cast<std::size_t>(i)] = static_cast<unsigned char>(index >> (8 * i));
  std::array<unsigned char, EVP_MAX_MD_SIZE> mac{};
  unsigned int len = 0;
  if (!HMAC(EVP_sha256(), seed.data(), static_cast<int>(seed.size()), msg.data(), msg.size(), mac.data(), &len) ||
      len < 8)
    throw Error("HMAC-SHA256 failed");
  std::uint64_t x = 0;
  for (int i = 7; i >= 0; --i) x = (x << 8) | mac[static_cast<std::size_t>(i)];
  const double u = static_cast<double>(x >> 11) * 0x1.0p-53;
  return min_s + (max_s - min_s) * (1.0 - u);
}

inline double pih_next_interval(const PihConfig& c, std::uint64_t index) {
  return pih_next_interval(c.seed, index, c.min_interval_s, c.max_interval_s);
}

/// Scheduled time from frame `from` to frame `to`, in nanoseconds.
inline std::int64_t pih_expected_ns(const PihConfig& c, std::uint64_t from, std::uint64_t to) {
  require(to >= from, "schedule span must be forward");
  double s = 0.0;
  for (std::uint64_t i = from; i < to; ++i) s += pih_next_interval(c, i);
  return std::llround(s * 1e9);
}

/// Largest whole-second interval whose drift error stays within the tolerance: floor(tol / r).
inline double pih_max_interval(double deviation_tol_s, double drift_ppm) {
  require(deviation_tol_s > 0.0 && drift_ppm > 0.0, "tolerance and drift rate must be positive");
  // Relative guard so that 10 ms / 40 ppm gives 250, not 249.
  return std::floor(deviation_tol_s / (drift_ppm * 1e-6) * (1.0 + 1e-12));
}

/// Check the measured inter-frame time against the schedule. Lost frames are covered by
/// summing the scheduled intervals across the counter gap. Only non-alarm verdicts advance
/// the stored state.
inline Verdict pih_verify(DeviceProfile& p, const FrameObservation& obs) {
  if (!p.pih) throw ModelError("device '" + p.device_id + "' has no interval hopping config");
  const auto& c = *p.pih;
  c.validate();
  auto& st = p.pih_state;
  if (!st.started) {
    st = {true, obs.frame_counter, obs.rx_time_ns};
    return Verdict::Accept;
  }
  if (obs.frame_counter <= st.last_counter) return Verdict::DelaySuspected;
  const std::uint64_t gap = obs.frame_counter - st.last_counter;
  if (gap > c.max_gap)
    throw ResyncRequired("counter gap " + std::to_string(gap) + " exceeds " + std::to_string(c.max_gap));
  const std::int64_t expected = pih_expected_ns(c, st.last_counter, obs.frame_counter);
  const std::int64_t measured = obs.rx_time_ns - st.last_rx_time_ns;
  const auto tol_ns = std::llround(c.deviation_tol_s * 1e9);
  if (std::llabs(measured - expected) > tol_ns) return Verdict::DelaySuspected;
  st.last_counter = obs.frame_counter;
  st.last_rx_time_ns = obs.rx_time_ns;
  return gap == 1 ? Verdict::Accept : Verdict::GapRecovered;
}

}  // namespace lorats
