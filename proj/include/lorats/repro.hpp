#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <random>
#include <string>
#include <vector>

#include "lorats/attack.hpp"
#include "lorats/detect.hpp"
#include "lorats/fb_estimate.hpp"
#include "lorats/onset.hpp"
#include "lorats/parallel.hpp"

namespace lorats {

/// A CSV table. Cells are preformatted so the bytes are fixed by the values.
struct Dataset {
  std::string name;
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  [[nodiscard]] std::string csv() const {
    std::string out;
    auto line = [&](const std::vector<std::string>& cells) {
      for (std::size_t i = 0; i < cells.size(); ++i) {
        if (i) out += ',';
        out += cells[i];
      }
      out += '\n';
    };
    line(header);
    for (const auto& r : rows) line(r);
    return out;
  }
};

inline std::string fmt(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

inline std::string fmt(long long v) { return std::to_string(v); }

/// Per-trial seed from a base seed and up to two indices (splitmix64 finalizer).
inline std::uint64_t trial_seed(std::uint64_t base, std::uint64_t a, std::uint64_t b = 0) {
  std::uint64_t z = base * 0x9e3779b97f4a7c15ULL + a * 0xbf58476d1ce4e5b9ULL + b * 0x94d049bb133111ebULL + 1;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Linear-interpolated percentile (q in [0, 100]) of finite values; NaN when empty.
inline double percentile(std::vector<double> v, double q) {
  v.erase(std::remove_if(v.begin(), v.end(), [](double x) { return !std::isfinite(x); }), v.end());
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(v.begin(), v.end());
  const double pos = q / 100.0 * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

// ---------------------------------------------------------------------------
// Onset error vs SNR
// ---------------------------------------------------------------------------

struct OnsetTrial {
  IQTrace trace;
  std::size_t onset = 0;
};

/// A frame with random bias, phase and lead, in noise at `snr_db`.
inline OnsetTrial onset_trial(const PhyParams& phy, double snr_db, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  TxParams tx;
  tx.fb = std::uniform_real_distribution<double>(-20e3, 20e3)(rng);
  tx.phase = std::uniform_real_distribution<double>(0.0, kTwoPi)(rng);
  const auto lead = static_cast<std::size_t>(4000 + rng() % 4000);
  const auto payload = random_symbols(8, phy, rng());
  const auto frame = gen_frame(phy, tx, {}, payload);
  return {add_awgn(pad(frame, lead, 3000), snr_db, rng()), lead};
}

struct OnsetStats {
  double snr_db = 0.0;
  std::size_t n = 0, failures = 0;
  double bias_samples = 0.0;
  double rmsd_samples = 0.0;
  double rmsd_roundtrip_samples = 0.0;  // half the RMSD of four-event round trips
};

/// Onset errors in samples for `n` seeds at one SNR; NaN marks a failed detection.
inline std::vector<double> onset_errors(const PhyParams& phy, Detector d, double snr_db, std::size_t n,
                                        std::uint64_t seed) {
  std::vector<double> err(n);
  parallel_for(n, [&](std::size_t i) {
    const auto t = onset_trial(phy, snr_db, trial_seed(seed, static_cast<std::uint64_t>(std::llround(snr_db * 100) + 100000), i));
    try {
      const auto r = detect(t.trace, phy, d);
      err[i] = static_cast<double>(r.onset_sample) - static_cast<double>(t.onset);
    } catch (const NoOnsetError&) {
      err[i] = std::numeric_limits<double>::quiet_NaN();
    }
  });
  return err;
}

inline OnsetStats onset_stats(double snr_db, const std::vector<double>& err) {
  OnsetStats s;
  s.snr_db = snr_db;
  std::vector<double> ok;
  for (double e : err) {
    if (std::isfinite(e)) ok.push_back(e);
    else ++s.failures;
  }
  s.n = err.size();
  if (ok.empty()) {
    s.bias_samples = s.rmsd_samples = s.rmsd_roundtrip_samples = std::numeric_limits<double>::quiet_NaN();
    return s;
  }
  double sum = 0.0, sq = 0.0;
  for (double e : ok) sum += e, sq += e * e;
  s.bias_samples = sum / static_cast<double>(ok.size());
  s.rmsd_samples = std::sqrt(sq / static_cast<double>(ok.size()));
  // Round trip k combines events 4k..4k+3: two departures and two arrivals.
  std::vector<double> deltas;
  for (std::size_t k = 0; k + 3 < ok.size(); k += 4) deltas.push_back(ok[k] - ok[k + 1] + ok[k + 2] - ok[k + 3]);
  s.rmsd_roundtrip_samples = deltas.size() >= 2 ? rmsd_roundtrip(deltas) : std::numeric_limits<double>::quiet_NaN();
  return s;
}

inline Dataset repro_onset(const std::vector<double>& snrs, std::size_t n, std::uint64_t seed, Detector d = Detector::Aic,
                           const PhyParams& phy = {}) {
  Dataset ds{"fig12", {"detector", "snr_db", "n", "failures", "bias_samples", "rmsd_samples", "rmsd_us", "rmsd_roundtrip_us"}, {}};
  const double fs = kDefaultSampleRate;
  for (double snr : snrs) {
    const auto s = onset_stats(snr, onset_errors(phy, d, snr, n, seed));
    ds.rows.push_back({to_string(d), fmt(snr), fmt(static_cast<long long>(s.n)), fmt(static_cast<long long>(s.failures)),
                       fmt(s.bias_samples), fmt(s.rmsd_samples), fmt(s.rmsd_samples / fs * 1e6),
                       fmt(s.rmsd_roundtrip_samples / fs * 1e6)});
  }
  return ds;
}

// ---------------------------------------------------------------------------
// FB estimator error vs SNR
// ---------------------------------------------------------------------------

/// Estimate errors (Hz) on `n` single chirps with random bias and phase at one SNR. NaN marks
/// an estimator that refused the input.
inline std::vector<double> fb_errors(const PhyParams& phy, FbMethod m, double snr_db, std::size_t n, std::uint64_t seed) {
  std::vector<double> err(n);
  parallel_for(n, [&](std::size_t i) {
    std::mt19937_64 rng(trial_seed(seed, static_cast<std::uint64_t>(std::llround(snr_db * 100) + 100000), i));
    TxParams tx;
    tx.fb = std::uniform_real_distribution<double>(-20e3, 20e3)(rng);
    tx.phase = std::uniform_real_distribution<double>(0.0, kTwoPi)(rng);
    const auto chirp = add_awgn(gen_up_chirp(phy, tx, {}), snr_db, rng());
    LsqConfig cfg;
    cfg.seed = rng();
    try {
      err[i] = estimate_fb(chirp, phy, m, cfg).delta_hz - tx.fb;
    } catch (const DataError&) {
      err[i] = std::numeric_limits<double>::quiet_NaN();
    }
  });
  return err;
}

inline Dataset repro_fb(const std::vector<double>& snrs, std::size_t n, std::uint64_t seed,
                        const std::vector<FbMethod>& methods, const std::string& name, const PhyParams& phy = {}) {
  Dataset ds{name, {"method", "snr_db", "n", "failures", "p20_hz", "p50_hz", "p80_hz", "rms_hz"}, {}};
  for (auto m : methods) {
    for (double snr : snrs) {
      const auto e = fb_errors(phy, m, snr, n, seed);
      long long fails = 0;
      double sq = 0.0;
      std::size_t ok = 0;
      for (double x : e) {
        if (std::isfinite(x)) sq += x * x, ++ok;
        else ++fails;
      }
      ds.rows.push_back({to_string(m), fmt(snr), fmt(static_cast<long long>(n)), fmt(fails), fmt(percentile(e, 20)),
                         fmt(percentile(e, 50)), fmt(percentile(e, 80)),
                         fmt(ok ? std::sqrt(sq / static_cast<double>(ok)) : std::numeric_limits<double>::quiet_NaN())});
    }
  }
  return ds;
}

// ---------------------------------------------------------------------------
// Collision outcome map and vulnerable area
// ---------------------------------------------------------------------------

inline Dataset repro_outcome_map(const std::vector<double>& rtms, const std::vector<double>& scrs, int trials,
                                 std::uint64_t seed) {
  Dataset ds{"fig4", {"rtm", "scr_db", "outcome", "map_outcome", "collision", "stealthy", "bad", "both", "victim"}, {}};
  std::vector<CellResult> res(rtms.size() * scrs.size());
  parallel_for(res.size(), [&](std::size_t k) {
    const std::size_t i = k / scrs.size(), j = k % scrs.size();
    res[k] = simulate_cell(rtms[i], scrs[j], trials, trial_seed(seed, i, j));
  });
  for (std::size_t k = 0; k < res.size(); ++k) {
    const double rtm = rtms[k / scrs.size()], scr = scrs[k % scrs.size()];
    std::vector<std::string> row{fmt(rtm), fmt(scr), to_string(res[k].majority), to_string(classify_outcome(rtm, scr))};
    for (int c : res[k].counts) row.push_back(fmt(static_cast<long long>(c)));
    ds.rows.push_back(std::move(row));
  }
  return ds;
}

/// Core area vs gateway-eavesdropper distance for each collider power. The eavesdropper
/// moves along +x from the gateway.
inline Dataset repro_area(const std::vector<double>& collider_dbm, const std::vector<double>& d_ge, const GridSpec& grid,
                          const CollisionScenario& base = {}, const PathLossModel& model = {}) {
  Dataset ds{"fig5", {"p_collider_dbm", "d_ge_m", "core_area_m2", "ring_area_m2", "disk_area_m2"}, {}};
  for (double pc : collider_dbm) {
    for (double d : d_ge) {
      CollisionScenario s = base;
      s.p_collider_dbm = pc;
      s.eavesdropper = {base.gateway.x + d, base.gateway.y, 0.0};
      const auto a = vulnerable_area(s, model, grid);
      ds.rows.push_back({fmt(pc), fmt(d), fmt(a.core_area_m2), fmt(a.ring_area_m2), fmt(a.disk_area_m2)});
    }
  }
  return ds;
}

inline Dataset area_cells(const AreaMap& a) {
  Dataset ds{"area", {"x", "y", "class"}, {}};
  for (std::size_t j = 0; j < a.grid.ny(); ++j)
    for (std::size_t i = 0; i < a.grid.nx(); ++i)
      ds.rows.push_back({fmt(a.grid.x_center(i)), fmt(a.grid.y_center(j)), to_string(a.at(i, j))});
  return ds;
}

// ---------------------------------------------------------------------------
// FB variation CDF
// ---------------------------------------------------------------------------

/// CDF of the FB change between consecutive frames at each reporting interval.
inline Dataset repro_fb_variation(const std::vector<double>& minutes, std::size_t devices, std::size_t frames,
                                  std::uint64_t seed) {
  Dataset ds{"fig17", {"interval_min", "variation_hz", "cdf"}, {}};
  for (std::size_t mi = 0; mi < minutes.size(); ++mi) {
    std::vector<double> var;
    for (std::size_t d = 0; d < devices; ++d) {
      const auto fb = synth_fb_series(frames, minutes[mi] * 60.0, trial_seed(seed, mi, d));
      for (std::size_t i = 1; i < fb.size(); ++i) var.push_back(std::abs(fb[i] - fb[i - 1]));
    }
    std::sort(var.begin(), var.end());
    auto cdf = [&](double x) {
      return static_cast<double>(std::upper_bound(var.begin(), var.end(), x) - var.begin()) / static_cast<double>(var.size());
    };
    for (double x = 0.0; x <= 2000.0; x += 25.0) ds.rows.push_back({fmt(minutes[mi]), fmt(x), fmt(cdf(x))});
  }
  return ds;
}

}  // namespace lorats
