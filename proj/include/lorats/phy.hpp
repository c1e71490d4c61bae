#pragma once

#include <cmath>
#include <complex>
#include <cstdint>
#include <limits>
#include <numbers>
#include <string>
#include <vector>

#include "lorats/error.hpp"

namespace lorats {

using Sample = std::complex<double>;

inline constexpr double kTwoPi = 2.0 * std::numbers::pi;
inline constexpr double kSpeedOfLight = 299'792'458.0;
inline constexpr double kDefaultSampleRate = 2.4e6;  // RTL-SDR convention
inline constexpr double kDefaultCenterFreq = 869.75e6;

// Preamble/SFD layout of an uplink frame, in chirp times.
inline constexpr int kPreambleChirps = 8;
inline constexpr double kSfdChirps = 2.25;

/// LoRa physical-layer configuration.
struct PhyParams {
  int spreading_factor = 7;
  double bandwidth = 125e3;  // Hz
  double center_freq = kDefaultCenterFreq;
  std::string coding_rate = "4/5";  // informational only

  [[nodiscard]] int chips() const { return 1 << spreading_factor; }
  /// 2^S / W, seconds.
  [[nodiscard]] double chirp_time() const { return chips() / bandwidth; }
  /// W^2 / 2^S, Hz per second.
  [[nodiscard]] double chirp_rate() const { return bandwidth * bandwidth / chips(); }
  /// W / 2^S, the dechirp-FFT bin width.
  [[nodiscard]] double bin_width() const { return bandwidth / chips(); }

  void validate() const {
    require(spreading_factor >= 6 && spreading_factor <= 12,
            "spreading factor must be in 6..12, got " + std::to_string(spreading_factor));
    require(bandwidth == 125e3 || bandwidth == 250e3 || bandwidth == 500e3,
            "bandwidth must be one of 125000, 250000, 500000 Hz");
    require(std::isfinite(center_freq), "center frequency must be finite");
  }
};

/// Transmitter-side impairments and amplitude.
struct TxParams {
  double fb = 0.0;         // delta_Tx, Hz
  double phase = 0.0;      // theta_Tx, radians in [0, 2pi)
  double amplitude = 2.0;  // A; the I/Q envelope is A/2
  // Fraction of the first chirp over which the amplitude ramps linearly from 0.
  // Zero disables the ramp.
  double ramp_fraction = 0.0;

  void validate() const {
    require(std::isfinite(fb), "tx frequency bias must be finite");
    require(phase >= 0.0 && phase < kTwoPi, "tx phase must be in [0, 2pi)");
    require(std::isfinite(amplitude) && amplitude > 0.0, "amplitude must be positive");
    require(ramp_fraction >= 0.0 && ramp_fraction <= 1.0, "ramp fraction must be in [0, 1]");
  }
};

/// Receiver local-oscillator impairments.
struct RxParams {
  double fb = 0.0;     // delta_Rx, Hz
  double phase = 0.0;  // theta_Rx, radians in [0, 2pi)
  double noise_floor_db = -std::numeric_limits<double>::infinity();

  void validate() const {
    require(std::isfinite(fb), "rx frequency bias must be finite");
    require(phase >= 0.0 && phase < kTwoPi, "rx phase must be in [0, 2pi)");
  }
};

/// Effective bias seen by this receiver: delta = delta_Tx - delta_Rx.
inline double effective_fb(const TxParams& tx, const RxParams& rx) { return tx.fb - rx.fb; }
/// Effective phase theta = theta_Tx - theta_Rx, not reduced mod 2pi.
inline double effective_phase(const TxParams& tx, const RxParams& rx) { return tx.phase - rx.phase; }

/// Wrap an angle into [0, 2pi).
inline double wrap_phase(double x) {
  double r = std::fmod(x, kTwoPi);
  if (r < 0) r += kTwoPi;
  if (r >= kTwoPi) r = 0.0;
  return r;
}

/// Uniformly sampled complex baseband signal.
struct IQTrace {
  std::vector<Sample> samples;
  double sample_rate = kDefaultSampleRate;
  std::int64_t t0_ns = 0;  // wall clock of samples[0]
  double center_freq = kDefaultCenterFreq;

  [[nodiscard]] std::size_t size() const { return samples.size(); }
  [[nodiscard]] bool empty() const { return samples.empty(); }
  [[nodiscard]] double duration() const { return static_cast<double>(samples.size()) / sample_rate; }
  /// Wall-clock time of sample n, rounded to the nearest nanosecond.
  [[nodiscard]] std::int64_t time_ns(std::size_t n) const {
    return t0_ns + std::llround(static_cast<double>(n) * 1e9 / sample_rate);
  }

  void validate() const {
    require(sample_rate > 0.0 && std::isfinite(sample_rate), "sample rate must be positive");
    for (const auto& s : samples)
      if (!std::isfinite(s.real()) || !std::isfinite(s.imag()))
        throw InvalidArgument("trace contains non-finite samples");
  }
};

/// Half-open index range [begin, end).
struct SampleRange {
  std::size_t begin = 0;
  std::size_t end = 0;

  [[nodiscard]] std::size_t size() const { return end > begin ? end - begin : 0; }
  [[nodiscard]] bool overlaps(const SampleRange& o) const { return begin < o.end && o.begin < end; }
};

inline std::size_t chirp_samples(const PhyParams& phy, double sample_rate) {
  return static_cast<std::size_t>(std::llround(sample_rate * phy.chirp_time()));
}

inline double mean_power(const std::vector<Sample>& x, SampleRange r) {
  require(r.end <= x.size() && r.size() > 0, "power range must be non-empty and inside the trace");
  double acc = 0.0;
  for (std::size_t i = r.begin; i < r.end; ++i) acc += std::norm(x[i]);
  return acc / static_cast<double>(r.size());
}

}  // namespace lorats
