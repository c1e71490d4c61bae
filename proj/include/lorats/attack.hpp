#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "lorats/parallel.hpp"
#include "lorats/signal.hpp"

namespace lorats {

enum class Outcome { CollisionReceived, Stealthy, BadFrame, BothReceived, VictimReceived };

inline std::string to_string(Outcome o) {
  switch (o) {
    case Outcome::CollisionReceived: return "CollisionReceived";
    case Outcome::Stealthy: return "Stealthy";
    case Outcome::BadFrame: return "BadFrame";
    case Outcome::BothReceived: return "BothReceived";
    case Outcome::VictimReceived: return "VictimReceived";
  }
  return "?";
}

// ---------------------------------------------------------------------------
// Timing windows (SX1276 measurements)
// ---------------------------------------------------------------------------

struct CollisionWindows {
  double w1 = 0.0, w2 = 0.0, w3 = 0.0;  // ms after the victim onset
};

struct WindowRow {
  int spreading_factor;
  int payload_bytes;
  CollisionWindows windows;
};

// Measured cells; S=7 with 30 bytes appears in both the payload sweep and the SF sweep.
inline const std::vector<WindowRow>& window_table() {
  static const std::vector<WindowRow> rows{
      {7, 10, {5, 28, 141}}, {7, 20, {5, 38, 156}}, {7, 30, {6, 41, 165}}, {7, 40, {6, 54, 178}},
      {7, 30, {6, 41, 165}}, {8, 30, {10, 82, 208}}, {9, 30, {22, 156, 274}},
  };
  return rows;
}

/// Windows for (S, payload bytes). With `interpolate`, S=7 payloads between measured rows
/// are linearly interpolated.
inline CollisionWindows lookup_windows(int spreading_factor, int payload_bytes, bool interpolate = false) {
  for (const auto& r : window_table())
    if (r.spreading_factor == spreading_factor && r.payload_bytes == payload_bytes) return r.windows;
  if (interpolate && spreading_factor == 7 && payload_bytes > 10 && payload_bytes < 40) {
    const auto& t = window_table();
    for (std::size_t i = 0; i + 1 < 4; ++i) {
      const auto& a = t[i];
      const auto& b = t[i + 1];
      if (payload_bytes > a.payload_bytes && payload_bytes < b.payload_bytes) {
        const double f = static_cast<double>(payload_bytes - a.payload_bytes) / (b.payload_bytes - a.payload_bytes);
        return {a.windows.w1 + f * (b.windows.w1 - a.windows.w1), a.windows.w2 + f * (b.windows.w2 - a.windows.w2),
                a.windows.w3 + f * (b.windows.w3 - a.windows.w3)};
      }
    }
  }
  throw InvalidArgument("no collision windows for S=" + std::to_string(spreading_factor) + ", payload " +
                        std::to_string(payload_bytes) + " bytes");
}

/// [0, w1] collision frame wins, (w1, w2] stealthy, (w2, w3] bad frame, beyond w3 both.
inline Outcome classify_by_timing(double lag_ms, const CollisionWindows& w) {
  require(std::isfinite(lag_ms) && lag_ms >= 0.0, "collision lag must be a non-negative finite time");
  require(0.0 < w.w1 && w.w1 < w.w2 && w.w2 < w.w3, "windows must satisfy 0 < w1 < w2 < w3");
  if (lag_ms <= w.w1) return Outcome::CollisionReceived;
  if (lag_ms <= w.w2) return Outcome::Stealthy;
  if (lag_ms <= w.w3) return Outcome::BadFrame;
  return Outcome::BothReceived;
}

// ---------------------------------------------------------------------------
// SCR / RTM outcome map
// ---------------------------------------------------------------------------

struct OutcomeThresholds {
  double stealth_lo_db = -6.0;   // lower edge of the stealthy SCR band at the gateway
  double stealth_hi_db = 6.0;    // upper edge
  double eavesdrop_min_db = 6.0;  // minimum SCR at the eavesdropper
  double rtm_stealthy = 0.4;     // collisions starting later hit the payload
  double payload_capture_db = 0.0;  // payload symbols survive a weaker collider
};

/// Outcome of a collision at the gateway as a function of RTM and SCR there.
inline Outcome classify_outcome(double rtm, double scr_db, const OutcomeThresholds& th = {}) {
  require(std::isfinite(rtm) && rtm >= 0.0, "RTM must be non-negative");
  require(!std::isnan(scr_db), "SCR must not be NaN");
  if (rtm >= 1.0) return Outcome::BothReceived;
  if (rtm < th.rtm_stealthy) {
    if (scr_db < th.stealth_lo_db) return Outcome::CollisionReceived;
    if (scr_db <= th.stealth_hi_db) return Outcome::Stealthy;
    return Outcome::VictimReceived;
  }
  return scr_db < th.payload_capture_db ? Outcome::BadFrame : Outcome::VictimReceived;
}

// ---------------------------------------------------------------------------
// Geometry and path loss
// ---------------------------------------------------------------------------

struct Position {
  double x = 0.0, y = 0.0, alt = 0.0;  // metres
};

inline double distance(const Position& a, const Position& b) {
  return std::sqrt((a.x - b.x) * (a.x - b.x) + (a.y - b.y) * (a.y - b.y) + (a.alt - b.alt) * (a.alt - b.alt));
}

/// Log-distance law L = L0 + 10 n log10(d / d0).
struct PathLossModel {
  double exponent = 2.75;
  double reference_loss_db = 120.0;
  double reference_distance_m = 1000.0;

  void validate() const {
    require(exponent > 0.0 && std::isfinite(exponent), "path-loss exponent must be positive");
    require(reference_loss_db >= 0.0 && std::isfinite(reference_loss_db), "reference loss must be non-negative");
    require(reference_distance_m > 0.0 && std::isfinite(reference_distance_m), "reference distance must be positive");
  }
  [[nodiscard]] double loss(double d) const {
    require(d > 0.0, "path loss needs distinct positions");
    return reference_loss_db + 10.0 * exponent * std::log10(d / reference_distance_m);
  }
};

inline double path_loss(const PathLossModel& m, const Position& from, const Position& to) {
  m.validate();
  return m.loss(distance(from, to));
}

struct CollisionScenario {
  Position gateway{0.0, 0.0, 25.0};
  Position collider{50.0, 0.0, 0.0};
  Position eavesdropper{400.0, 0.0, 0.0};
  Position victim{150.0, 0.0, 0.0};
  double p_victim_dbm = 14.0;
  double p_collider_dbm = 2.0;
  double rtm = 0.2;
  double replay_delay_s = 0.0;
  double replayer_fb_hz = 0.0;
  // Optional receiver sensitivity: a victim received below it at the eavesdropper cannot be
  // eavesdropped. Off by default (noise ignored).
  std::optional<double> eavesdropper_sensitivity_dbm;

  void validate() const {
    require(rtm >= 0.0 && rtm <= 1.0, "RTM must be in [0, 1]");
    require(replay_delay_s >= 0.0, "replay delay must be non-negative");
    require(!std::isnan(p_victim_dbm) && !std::isnan(p_collider_dbm), "powers must not be NaN");
  }
};

/// SCR = (P_v - L_v,r) - (P_c - L_c,r) at `receiver`.
inline double scr_at(const Position& receiver, const CollisionScenario& s, const PathLossModel& m) {
  return (s.p_victim_dbm - path_loss(m, s.victim, receiver)) - (s.p_collider_dbm - path_loss(m, s.collider, receiver));
}

/// Stealthy-collision condition at the gateway.
inline bool stealthy_at_gateway(const CollisionScenario& s, const PathLossModel& m, const OutcomeThresholds& th = {}) {
  const double scr = scr_at(s.gateway, s, m);
  return scr >= th.stealth_lo_db && scr <= th.stealth_hi_db;
}

/// Eavesdropping condition.
inline bool eavesdrop_ok(const CollisionScenario& s, const PathLossModel& m, const OutcomeThresholds& th = {}) {
  if (s.eavesdropper_sensitivity_dbm &&
      s.p_victim_dbm - path_loss(m, s.victim, s.eavesdropper) < *s.eavesdropper_sensitivity_dbm)
    return false;
  return scr_at(s.eavesdropper, s, m) >= th.eavesdrop_min_db;
}

struct GridSpec {
  double x_min = -1000.0, x_max = 1500.0;
  double y_min = -1000.0, y_max = 1000.0;
  double cell_m = 5.0;
  double victim_alt = 0.0;

  void validate() const {
    require(cell_m > 0.0 && cell_m <= 5.0, "grid resolution must be in (0, 5] m");
    require(x_max > x_min && y_max > y_min, "grid bounds must be non-empty");
  }
  [[nodiscard]] std::size_t nx() const { return static_cast<std::size_t>(std::floor((x_max - x_min) / cell_m + 1e-9)); }
  [[nodiscard]] std::size_t ny() const { return static_cast<std::size_t>(std::floor((y_max - y_min) / cell_m + 1e-9)); }
  [[nodiscard]] double x_center(std::size_t i) const { return x_min + (static_cast<double>(i) + 0.5) * cell_m; }
  [[nodiscard]] double y_center(std::size_t j) const { return y_min + (static_cast<double>(j) + 0.5) * cell_m; }
};

enum class CellClass : std::uint8_t { None = 0, RingOnly = 1, DiskOnly = 2, Core = 3 };

inline std::string to_string(CellClass c) {
  switch (c) {
    case CellClass::None: return "none";
    case CellClass::RingOnly: return "ring";
    case CellClass::DiskOnly: return "disk";
    case CellClass::Core: return "core";
  }
  return "?";
}

struct AreaMap {
  GridSpec grid;
  std::vector<CellClass> cells;  // row-major, index j * nx + i
  double core_area_m2 = 0.0;
  double ring_area_m2 = 0.0;  // all cells meeting the stealthy condition
  double disk_area_m2 = 0.0;  // all cells meeting the eavesdropping condition

  [[nodiscard]] CellClass at(std::size_t i, std::size_t j) const { return cells.at(j * grid.nx() + i); }
};

/// Sweep the victim over the grid; core cells satisfy both the stealthy and the eavesdropping
/// condition. Rows run in parallel; each cell is classified independently, so the map does not
/// depend on the thread count.
inline AreaMap vulnerable_area(const CollisionScenario& base, const PathLossModel& m, const GridSpec& grid,
                               const OutcomeThresholds& th = {}) {
  base.validate();
  m.validate();
  grid.validate();
  const std::size_t nx = grid.nx(), ny = grid.ny();
  require(nx > 0 && ny > 0, "grid has no cells");
  AreaMap out;
  out.grid = grid;
  out.cells.assign(nx * ny, CellClass::None);
  const double cell_area = grid.cell_m * grid.cell_m;
  parallel_for(ny, [&](std::size_t j) {
    CollisionScenario s = base;
    for (std::size_t i = 0; i < nx; ++i) {
      s.victim = {grid.x_center(i), grid.y_center(j), grid.victim_alt};
      bool ring = false, disk = false;
      if (distance(s.victim, s.gateway) > 0 && distance(s.victim, s.eavesdropper) > 0) {
        ring = stealthy_at_gateway(s, m, th);
        disk = eavesdrop_ok(s, m, th);
      }
      out.cells[j * nx + i] = ring && disk ? CellClass::Core : ring ? CellClass::RingOnly : disk ? CellClass::DiskOnly : CellClass::None;
    }
  });
  std::size_t n_core = 0, n_ring = 0, n_disk = 0;
  for (auto c : out.cells) {
    n_core += c == CellClass::Core;
    n_ring += c == CellClass::Core || c == CellClass::RingOnly;
    n_disk += c == CellClass::Core || c == CellClass::DiskOnly;
  }
  out.core_area_m2 = static_cast<double>(n_core) * cell_area;
  out.ring_area_m2 = static_cast<double>(n_ring) * cell_area;
  out.disk_area_m2 = static_cast<double>(n_disk) * cell_area;
  return out;
}

// ---------------------------------------------------------------------------
// Waveform-level collision and replay
// ---------------------------------------------------------------------------

/// Victim plus a collision frame scaled to `scr_db` (active-power ratio) and delayed by
/// round(rtm * victim length) samples. The output keeps the collision tail.
inline IQTrace synthesize_collision(const IQTrace& victim, const IQTrace& collision, double scr_db, double rtm) {
  require(victim.sample_rate == collision.sample_rate, "victim and collision sample rates differ");
  require(!victim.empty() && !collision.empty(), "victim and collision must be non-empty");
  require(std::isfinite(rtm) && rtm >= 0.0, "RTM must be non-negative");
  require(!std::isnan(scr_db), "SCR must not be NaN");
  if (std::isinf(scr_db) && scr_db > 0) return victim;
  const double pv = active_power(victim.samples);
  const double pc = active_power(collision.samples);
  require(pv > 0.0 && pc > 0.0, "victim and collision must carry energy");
  const double gain = std::isinf(scr_db) ? 0.0 : std::sqrt(pv / pc / std::pow(10.0, scr_db / 10.0));
  const auto offset = static_cast<std::size_t>(std::llround(rtm * static_cast<double>(victim.size())));

  IQTrace out = victim;
  out.samples.resize(std::max(victim.size(), offset + collision.size()), Sample{});
  for (std::size_t i = 0; i < collision.size(); ++i) out.samples[offset + i] += gain * collision.samples[i];
  return out;
}

/// Delayed re-transmission: t0 moves by tau and the replay chain adds its own frequency bias.
inline IQTrace replay(const IQTrace& victim, double tau_s, double replayer_fb_hz, double replayer_phase) {
  require(std::isfinite(tau_s) && tau_s >= 0.0, "replay delay must be non-negative");
  require(std::isfinite(replayer_fb_hz) && std::isfinite(replayer_phase), "replayer bias and phase must be finite");
  IQTrace out = victim;
  out.t0_ns = victim.t0_ns + std::llround(tau_s * 1e9);
  for (std::size_t n = 0; n < out.size(); ++n) {
    const double t = static_cast<double>(n) / victim.sample_rate;
    out.samples[n] *= std::polar(1.0, kTwoPi * replayer_fb_hz * t + replayer_phase);
  }
  return out;
}

/// Uniform replay phase in [0, 2pi) for a seed.
inline double random_replay_phase(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return static_cast<double>(rng() >> 11) * 0x1.0p-53 * kTwoPi;
}

// ---------------------------------------------------------------------------
// Dechirp receiver model
// ---------------------------------------------------------------------------

/// Receiver behaviour used to classify synthesized collisions. The receiver locks the first
/// preamble, can be captured by a later preamble that is stronger by `capture_db` before the
/// victim payload starts, silently drops the frame when a sync or header window is not
/// clean by `sync_sinr_db`, and reports a bad frame when a payload symbol decodes wrongly.
struct ReceiverModel {
  int header_symbols = 8;
  double capture_db = 6.0;
  double sync_sinr_db = 6.0;
  int first_sync_chirp = 5;  // preamble chirps from this index on must be clean
};

struct CollisionCase {
  PhyParams phy{};
  std::vector<int> victim_symbols;    // header + payload
  std::vector<int> collider_symbols;  // same length as the victim's
  double rtm = 0.0;
  double scr_db = 0.0;
  double snr_db = std::numeric_limits<double>::infinity();  // receiver noise relative to the victim
  double collider_fb_hz = 0.0;  // collider bias relative to the victim, to which the receiver is tuned
  double sample_rate = kDefaultSampleRate;
  std::uint64_t seed = 0;
};

struct SymbolWindow {
  SampleRange range;
  ChirpKind kind = ChirpKind::Up;
  int symbol = 0;
};

/// Chirp-aligned dechirp windows of a frame starting at `offset`: preamble, the two full SFD
/// down chirps, then data symbols.
inline std::vector<SymbolWindow> frame_windows(const PhyParams& phy, double fs, std::size_t offset,
                                               const std::vector<int>& symbols) {
  const double tc = phy.chirp_time() * fs;
  const auto len = static_cast<std::size_t>(std::llround(tc));
  std::vector<SymbolWindow> w;
  auto at = [&](double chirps) { return offset + static_cast<std::size_t>(std::llround(chirps * tc)); };
  for (int k = 0; k < kPreambleChirps; ++k) w.push_back({{at(k), at(k) + len}, ChirpKind::Up, 0});
  for (int k = 0; k < 2; ++k) w.push_back({{at(kPreambleChirps + k), at(kPreambleChirps + k) + len}, ChirpKind::Down, 0});
  for (std::size_t i = 0; i < symbols.size(); ++i) {
    const double c = kPreambleChirps + kSfdChirps + static_cast<double>(i);
    w.push_back({{at(c), at(c) + len}, ChirpKind::Up, symbols[i]});
  }
  return w;
}

struct WindowDecode {
  int symbol = 0;
  double sinr_db = 0.0;  // peak bin over all other bins
};

inline WindowDecode decode_window(const IQTrace& trace, const SymbolWindow& w, const PhyParams& phy) {
  require(w.range.end <= trace.size(), "decode window outside the trace");
  const std::span<const Sample> win(trace.samples.data() + w.range.begin, w.range.size());
  const auto p = dechirp_spectrum(win, phy, trace.sample_rate, w.kind);
  const auto k = static_cast<std::size_t>(std::max_element(p.begin(), p.end()) - p.begin());
  double rest = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i)
    if (i != k) rest += p[i];
  return {static_cast<int>(k), 10.0 * std::log10(p[k] / std::max(rest, 1e-300))};
}

/// Build both frames, superimpose them and run the receiver model.
inline Outcome simulate_collision(const CollisionCase& c, const ReceiverModel& rx = {}) {
  require(!c.victim_symbols.empty() && c.victim_symbols.size() == c.collider_symbols.size(),
          "victim and collider need equal, non-empty symbol sequences");
  require(rx.header_symbols >= 0 && static_cast<std::size_t>(rx.header_symbols) < c.victim_symbols.size(),
          "header must be shorter than the frame");
  const auto victim = gen_frame(c.phy, {}, {}, c.victim_symbols, c.sample_rate);
  TxParams ctx;
  ctx.fb = c.collider_fb_hz;
  const auto collider = gen_frame(c.phy, ctx, {}, c.collider_symbols, c.sample_rate);
  if (c.rtm >= 1.0) return Outcome::BothReceived;

  auto mixed = synthesize_collision(victim, collider, c.scr_db, c.rtm);
  if (std::isfinite(c.snr_db)) {
    // Noise calibrated on the victim alone.
    const double sigma = std::sqrt(active_power(victim.samples) / std::pow(10.0, c.snr_db / 10.0) / 2.0);
    std::mt19937_64 rng(c.seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    for (auto& s : mixed.samples) {
      const double re = gauss(rng);
      s += Sample(sigma * re, sigma * gauss(rng));
    }
  }

  const double fs = c.sample_rate;
  const double tc = c.phy.chirp_time();
  const double collider_start_s = c.rtm * static_cast<double>(victim.size()) / fs;
  const double payload_start_s = (kPreambleChirps + kSfdChirps + rx.header_symbols) * tc;

  // Capture by a stronger preamble before the victim payload begins.
  if (collider_start_s < payload_start_s && c.scr_db < -rx.capture_db) {
    // The receiver re-tunes to the collider's bias.
    for (std::size_t n = 0; n < mixed.size(); ++n)
      mixed.samples[n] *= std::polar(1.0, -kTwoPi * c.collider_fb_hz * static_cast<double>(n) / fs);
    const auto offset = static_cast<std::size_t>(std::llround(c.rtm * static_cast<double>(victim.size())));
    for (const auto& w : frame_windows(c.phy, fs, offset, c.collider_symbols))
      if (decode_window(mixed, w, c.phy).symbol != w.symbol) return Outcome::BadFrame;
    return Outcome::CollisionReceived;
  }

  const auto windows = frame_windows(c.phy, fs, 0, c.victim_symbols);
  const std::size_t first_payload = kPreambleChirps + 2 + static_cast<std::size_t>(rx.header_symbols);
  for (std::size_t i = static_cast<std::size_t>(rx.first_sync_chirp); i < first_payload; ++i) {
    const auto d = decode_window(mixed, windows[i], c.phy);
    if (d.symbol != windows[i].symbol || d.sinr_db < rx.sync_sinr_db) return Outcome::Stealthy;
  }
  for (std::size_t i = first_payload; i < windows.size(); ++i)
    if (decode_window(mixed, windows[i], c.phy).symbol != windows[i].symbol) return Outcome::BadFrame;
  return Outcome::VictimReceived;
}

/// Random symbols for a frame of `n` symbols.
inline std::vector<int> random_symbols(std::size_t n, const PhyParams& phy, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<int> s(n);
  for (auto& v : s) v = static_cast<int>(rng() % static_cast<std::uint64_t>(phy.chips()));
  return s;
}

struct CellResult {
  Outcome majority = Outcome::VictimReceived;
  std::array<int, 5> counts{};  // indexed by Outcome
};

/// Majority outcome over `trials` random frame pairs at one (RTM, SCR) point. Each trial
/// draws fresh symbols and a collider bias uniform in +/- `collider_fb_span_hz` relative
/// to the victim, as for two independent devices.
inline CellResult simulate_cell(double rtm, double scr_db, int trials, std::uint64_t seed, const PhyParams& phy = {},
                                std::size_t n_symbols = 37, double collider_fb_span_hz = 5000.0,
                                const ReceiverModel& rx = {}) {
  require(trials >= 1, "need at least one trial");
  CellResult r;
  std::mt19937_64 rng(seed);
  for (int t = 0; t < trials; ++t) {
    CollisionCase c;
    c.phy = phy;
    c.victim_symbols = random_symbols(n_symbols, phy, rng());
    c.collider_symbols = random_symbols(n_symbols, phy, rng());
    c.collider_fb_hz = collider_fb_span_hz * (2.0 * static_cast<double>(rng() >> 11) * 0x1.0p-53 - 1.0);
    c.rtm = rtm;
    c.scr_db = scr_db;
    ++r.counts[static_cast<std::size_t>(simulate_collision(c, rx))];
  }
  // Ties go to the lower enum value.
  r.majority = static_cast<Outcome>(std::max_element(r.counts.begin(), r.counts.end()) - r.counts.begin());
  return r;
}


}  // namespace lorats
