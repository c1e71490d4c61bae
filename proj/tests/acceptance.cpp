// Acceptance run: one PASS/FAIL line per criterion. Exit status is the number of failures.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "lorats/lorats.hpp"

using namespace lorats;

namespace {

struct Line {
  int id;
  bool pass;
  std::string text;
};

std::vector<Line> g_lines;

void report(int id, bool pass, const std::string& text) {
  std::printf("[%s] %2d  %s\n", pass ? "PASS" : "FAIL", id, text.c_str());
  std::fflush(stdout);
  g_lines.push_back({id, pass, text});
}

std::string f(double v, int prec = 1) {
  char b[64];
  std::snprintf(b, sizeof b, "%.*f", prec, v);
  return b;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

const PhyParams kPhy{};
constexpr std::uint64_t kSeed = 20240601;

// A failed estimate counts as an unbounded error.
std::pair<double, double> band(std::vector<double> err) {
  for (auto& e : err)
    if (!std::isfinite(e)) e = 1e12;
  return {percentile(err, 20), percentile(err, 80)};
}

bool within(std::pair<double, double> b, double lim) { return b.first >= -lim && b.second <= lim; }

// 1 ---------------------------------------------------------------------------
void c1() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto b = band(fb_errors(kPhy, FbMethod::Lsq, -18.0, 20, kSeed));
  const double s = seconds_since(t0);
  report(1, within(b, 120.0) && s <= 300.0,
         "LSQ at -18 dB, 20 chirps: 20/80 band [" + f(b.first) + ", " + f(b.second) + "] Hz (limit +/-120), " + f(s, 2) +
             " s (limit 300)");
}

// 2 ---------------------------------------------------------------------------
void c2() {
  const auto lin40 = band(fb_errors(kPhy, FbMethod::Linreg, 40.0, 20, kSeed));
  bool ok = within(lin40, 150.0);
  std::string txt = "LINREG 40 dB [" + f(lin40.first) + ", " + f(lin40.second) + "] Hz (need within +/-150);";
  for (double snr : {0.0, -6.0, -12.0, -18.0}) {
    const auto b = band(fb_errors(kPhy, FbMethod::Linreg, snr, 20, kSeed));
    const bool wide = b.first < -1000.0 || b.second > 1000.0;
    ok = ok && wide;
    txt += " LINREG " + f(snr, 0) + " dB " + (wide ? "exceeds" : "within") + " +/-1 kHz;";
  }
  double worst = 0.0;
  for (double snr : {0.0, -6.0, -12.0, -18.0}) {
    const auto b = band(fb_errors(kPhy, FbMethod::Lsq, snr, 20, kSeed));
    worst = std::max({worst, -b.first, b.second});
  }
  ok = ok && worst <= 120.0;
  report(2, ok, txt + " LSQ worst band edge over 0..-18 dB " + f(worst) + " Hz (limit 120)");
}

// 3 ---------------------------------------------------------------------------
void c3() {
  bool ok = std::abs(kPhy.bin_width() - 976.5625) < 1e-9;
  std::mt19937_64 rng(kSeed);
  int exact = 0;
  constexpr int kN = 200;
  for (int i = 0; i < kN; ++i) {
    TxParams tx;
    tx.fb = std::uniform_real_distribution<double>(-30e3, 30e3)(rng);
    tx.phase = std::uniform_real_distribution<double>(0.0, kTwoPi)(rng);
    const auto chirp = add_awgn(gen_up_chirp(kPhy, tx, {}), 10.0, rng());
    const double d = estimate_fb_fft(chirp, kPhy).delta_hz;
    const double k = d / kPhy.bin_width();
    exact += k == std::round(k);
  }
  ok = ok && exact == kN;
  report(3, ok, "DECHIRP_FFT bin width " + f(kPhy.bin_width(), 4) + " Hz; " + std::to_string(exact) + "/" +
                    std::to_string(kN) + " estimates are exact bin multiples");
}

// 4 ---------------------------------------------------------------------------
void c4() {
  constexpr std::size_t kN = 100;
  const auto low = onset_stats(-20.0, onset_errors(kPhy, Detector::Aic, -20.0, kN, kSeed));
  const auto high = onset_stats(20.0, onset_errors(kPhy, Detector::Aic, 20.0, kN, kSeed));
  const double rmsd_us = low.rmsd_samples / kDefaultSampleRate * 1e6;
  const bool a = low.failures == 0 && rmsd_us <= 5.0;
  const bool b = high.failures == 0 && std::abs(high.bias_samples) <= 4.0;
  report(4, a && b,
         "AIC over " + std::to_string(kN) + " seeds: RMSD at -20 dB " + f(rmsd_us, 2) + " us (limit 5, " +
             std::to_string(low.failures) + " failures); |bias| at 20 dB " + f(std::abs(high.bias_samples), 2) +
             " samples (limit 4)");
}

// 5 ---------------------------------------------------------------------------
void c5() {
  constexpr std::size_t kN = 10000;
  constexpr double kSigma = 3.0;  // us
  std::mt19937_64 rng(kSeed);
  std::normal_distribution<double> g(0.0, kSigma);
  std::vector<double> deltas(kN);
  for (auto& d : deltas) d = g(rng) - g(rng) + g(rng) - g(rng);
  const double est = rmsd_roundtrip(deltas);
  const double rel = std::abs(est - kSigma) / kSigma;
  report(5, rel <= 0.05, "round trip n=1e4, sigma " + f(kSigma, 2) + " us: half RMSD(Delta) " + f(est, 4) + " us, error " +
                             f(rel * 100, 2) + "% (limit 5%)");
}

// 6 ---------------------------------------------------------------------------
void c6() {
  // Table values typed from the measurement table, checked at each boundary and just past it.
  struct Row {
    int s, bytes;
    double w[3];
  };
  const Row rows[] = {{7, 10, {5, 28, 141}}, {7, 20, {5, 38, 156}}, {7, 30, {6, 41, 165}}, {7, 40, {6, 54, 178}},
                      {7, 30, {6, 41, 165}}, {8, 30, {10, 82, 208}}, {9, 30, {22, 156, 274}}};
  const Outcome at[3] = {Outcome::CollisionReceived, Outcome::Stealthy, Outcome::BadFrame};
  const Outcome after[3] = {Outcome::Stealthy, Outcome::BadFrame, Outcome::BothReceived};
  int cells = 0;
  for (const auto& r : rows) {
    const auto w = lookup_windows(r.s, r.bytes);
    const double got[3] = {w.w1, w.w2, w.w3};
    for (int k = 0; k < 3; ++k)
      cells += got[k] == r.w[k] && classify_by_timing(r.w[k], w) == at[k] && classify_by_timing(r.w[k] + 0.01, w) == after[k];
  }
  const bool table_ok = cells == 21;

  const double rtms[] = {0.1, 0.2, 0.3, 0.5, 0.6};
  const double scrs[] = {-12.0, -9.0, 0.0, 3.0, 12.0};
  int grid = 0;
  for (double rtm : rtms)
    for (double scr : scrs) grid += simulate_cell(rtm, scr, 9, kSeed).majority == classify_outcome(rtm, scr);
  const auto stealthy = simulate_cell(0.2, 0.0, 9, kSeed).majority;
  const auto victim = simulate_cell(0.5, 0.0, 9, kSeed).majority;
  const bool ok = table_ok && grid == 25 && stealthy == Outcome::Stealthy && victim == Outcome::VictimReceived;
  report(6, ok, "timing windows " + std::to_string(cells) + "/21 cells; waveform grid " + std::to_string(grid) +
                    "/25 match the outcome map; RTM 0.2/SCR 0 " + to_string(stealthy) + ", RTM 0.5/SCR 0 " +
                    to_string(victim));
}

// 7 ---------------------------------------------------------------------------
GridSpec area_grid(double cell) {
  GridSpec g;
  g.x_min = -600, g.x_max = 1200, g.y_min = -700, g.y_max = 700, g.cell_m = cell;
  return g;
}

void c7() {
  const PathLossModel m;
  // (a) core = ring and disk, checked against direct evaluation at every cell.
  const CollisionScenario s0;
  const auto g5 = area_grid(5);
  const auto map = vulnerable_area(s0, m, g5);
  bool a = map.core_area_m2 > 0.0;
  CollisionScenario probe = s0;
  for (std::size_t j = 0; j < g5.ny() && a; ++j)
    for (std::size_t i = 0; i < g5.nx(); ++i) {
      probe.victim = {g5.x_center(i), g5.y_center(j), g5.victim_alt};
      const bool ring = stealthy_at_gateway(probe, m), disk = eavesdrop_ok(probe, m);
      const auto c = map.at(i, j);
      if ((c == CellClass::Core) != (ring && disk)) {
        a = false;
        break;
      }
    }
  // (b), (c)
  bool b = true;
  double saturated[3];
  int k = 0;
  std::string sat_txt;
  for (double pc : {2.0, 5.0, 8.0}) {
    std::vector<double> areas;
    for (double d = 100; d <= 1200; d += 100) {
      CollisionScenario s;
      s.p_collider_dbm = pc;
      s.eavesdropper = {d, 0, 0};
      areas.push_back(vulnerable_area(s, m, g5).core_area_m2);
    }
    for (std::size_t i = 1; i < areas.size(); ++i) b = b && areas[i] >= areas[i - 1];
    b = b && areas.back() - areas[areas.size() - 2] < 0.01 * areas.back();
    saturated[k++] = areas.back();
    sat_txt += f(pc, 0) + " dBm " + f(areas.back(), 0) + " m2; ";
  }
  const bool c = saturated[0] > saturated[1] && saturated[0] > saturated[2];
  // (d)
  const double a5 = map.core_area_m2, a25 = vulnerable_area(s0, m, area_grid(2.5)).core_area_m2;
  const double rel = std::abs(a5 - a25) / a25;
  const bool d = rel < 0.02;
  report(7, a && b && c && d,
         std::string("area: (a) core=ring&disk ") + (a ? "yes" : "no") + "; (b) monotone+saturating " + (b ? "yes" : "no") +
             "; (c) saturated " + sat_txt + "(d) halving cell changes core by " + f(rel * 100, 2) + "% (limit 2%)");
}

// 8 ---------------------------------------------------------------------------
void c8() {
  constexpr double kDeviceFb = -21345.6;
  constexpr double kSnr = -18.0;
  const std::size_t lead = 4000;
  auto observe = [&](double replay_fb, bool replayed, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    TxParams tx;
    tx.fb = kDeviceFb;
    tx.phase = std::uniform_real_distribution<double>(0.0, kTwoPi)(rng);
    auto frame = pad(gen_frame(kPhy, tx, {}, random_symbols(8, kPhy, rng())), lead, 2000);
    if (replayed) frame = replay(frame, 0.15, replay_fb, random_replay_phase(rng()));
    const auto rx = add_awgn(frame, kSnr, rng());
    LsqConfig cfg;
    cfg.seed = rng();
    return estimate_fb_lsq(slice(rx, preamble_chirp(lead, kPhy, rx.sample_rate, 1)), kPhy, cfg).delta_hz;
  };
  DeviceProfile base;
  base.device_id = "victim";
  base.fb_threshold = 500.0;
  for (std::uint64_t i = 0; i < 20; ++i) base.enroll({}, {static_cast<std::int64_t>(i), observe(0.0, false, trial_seed(kSeed, 1, i))});
  auto alarms = [&](double replay_fb, std::uint64_t stream) {
    std::vector<int> hit(100, 0);
    parallel_for(hit.size(), [&](std::size_t i) {
      DeviceProfile p = base;
      FrameObservation o;
      o.device_id = p.device_id;
      o.rx_time_ns = 1000 + static_cast<std::int64_t>(i);
      o.fb_hz = observe(replay_fb, true, trial_seed(kSeed, stream, i));
      hit[i] = check_fb(p, o) == Verdict::ReplaySuspected;
    });
    int n = 0;
    for (int h : hit) n += h;
    return n;
  };
  const int a600 = alarms(-600.0, 2), a30 = alarms(-30.0, 3);
  report(8, a600 >= 99 && a30 <= 5,
         "replay at -18 dB, threshold 500 Hz: -600 Hz alarms " + std::to_string(a600) + "/100 (need >= 99); -30 Hz alarms " +
             std::to_string(a30) + "/100 (need <= 5)");
}

// 9 ---------------------------------------------------------------------------
void c9() {
  PihConfig cfg;
  for (std::size_t i = 0; i < cfg.seed.size(); ++i) cfg.seed[i] = static_cast<std::uint8_t>(0xA5 ^ i);
  cfg.min_interval_s = 1.0;
  cfg.max_interval_s = pih_max_interval(0.010, 40.0);
  cfg.deviation_tol_s = 0.010;

  struct Dev {
    PihConfig c;
    double ppm;
    std::int64_t t = 5'000'000'000'000;
    std::uint64_t n = 0;
    FrameObservation next(bool advance = true) {
      if (advance) {
        t += std::llround(pih_next_interval(c, n) * (1.0 + ppm * 1e-6) * 1e9);
        ++n;
      }
      FrameObservation o;
      o.rx_time_ns = t;
      o.frame_counter = n;
      return o;
    }
  };

  // Delay flagged on the first delayed frame.
  DeviceProfile p;
  p.pih = cfg;
  Dev d{cfg, 12.0};
  pih_verify(p, d.next(false));
  for (int i = 0; i < 5; ++i) pih_verify(p, d.next());
  auto o = d.next();
  o.rx_time_ns += 150'000'000;
  const bool delayed = pih_verify(p, o) == Verdict::DelaySuspected;

  // Honest devices across the drift range.
  int flagged = 0;
  for (double ppm : {-40.0, -20.0, 0.0, 20.0, 40.0}) {
    DeviceProfile h;
    h.pih = cfg;
    Dev hd{cfg, ppm};
    pih_verify(h, hd.next(false));
    for (int i = 0; i < 10000; ++i) flagged += is_alarm(pih_verify(h, hd.next()));
  }

  // One lost frame.
  DeviceProfile l;
  l.pih = cfg;
  Dev ld{cfg, 40.0};
  pih_verify(l, ld.next(false));
  pih_verify(l, ld.next());
  ld.next();
  const bool recovered = pih_verify(l, ld.next()) == Verdict::GapRecovered && pih_verify(l, ld.next()) == Verdict::Accept;
  report(9, delayed && flagged == 0 && recovered,
         std::string("interval hopping: 150 ms delay ") + (delayed ? "flagged" : "missed") + " on first delayed frame; " +
             std::to_string(flagged) + " alarms over 5 x 1e4 honest frames at |drift| <= 40 ppm; lost frame " +
             (recovered ? "recovered" : "not recovered"));
}

// 10 --------------------------------------------------------------------------
void c10() {
  const auto train = synth_temp_fb(2000, kSeed);
  const auto m = fit_temp_model(train);
  const auto test = synth_temp_fb(2000, kSeed + 1);
  std::vector<double> neg, pos;
  for (const auto& [t, fb] : test) {
    neg.push_back(std::abs(temp_discrepancy(m, fb, t)));
    pos.push_back(std::abs(temp_discrepancy(m, fb + 600.0, t)));
  }
  const auto best = best_tpr_at_fpr(roc_curve(neg, pos), 0.01);
  report(10, m.rmse_c < 0.5 && best.tpr == 1.0 && best.fpr <= 0.01,
         "temperature model RMSE " + f(m.rmse_c, 3) + " C (limit 0.5); 600 Hz replays: TPR " + f(best.tpr * 100, 1) +
             "% at FPR " + f(best.fpr * 100, 2) + "% (need 100% at <= 1%)");
}

// 11 --------------------------------------------------------------------------
void c11() {
  const long so = sync_overhead(40.0, 10.0);
  const double mw = max_waiting(40.0, 10.0);
  const double dop = doppler_fb(70.0 / 3.6, 869.75e6);
  report(11, so == 14 && std::abs(mw - 250.0) < 1e-6 && dop >= 50.0 && dop <= 60.0,
         "sync_overhead(40 ppm, 10 ms) = " + std::to_string(so) + " (want 14); max_waiting = " + f(mw, 3) +
             " s (want 250); doppler at 70 km/h = " + f(dop, 2) + " Hz (want 50..60)");
}

// 12 --------------------------------------------------------------------------
std::string all_repro(std::uint64_t seed) {
  std::string out;
  out += repro_outcome_map({0.0, 0.2, 0.5, 1.0}, {-9.0, 0.0, 9.0}, 3, seed).csv();
  GridSpec g = area_grid(5);
  out += repro_area({2, 5, 8}, {200, 600, 1000}, g).csv();
  out += repro_onset({10, -10}, 8, seed).csv();
  out += repro_fb({10, -18}, 6, seed, {FbMethod::Linreg}, "fig13a").csv();
  out += repro_fb({10, -18}, 6, seed, {FbMethod::Lsq}, "fig13b").csv();
  out += repro_fb_variation({10, 20, 30}, 4, 200, seed).csv();
  return out;
}

void c12() {
  setenv("LORATS_THREADS", "1", 1);
  const auto a = all_repro(kSeed);
  const auto b = all_repro(kSeed);
  setenv("LORATS_THREADS", "4", 1);
  const auto c = all_repro(kSeed);
  unsetenv("LORATS_THREADS");
  const auto d = all_repro(kSeed);
  const bool same = a == b && a == c && a == d;
  report(12, same, "repro datasets fig4/fig5/fig12/fig13a/fig13b/fig17: " + std::to_string(a.size()) + " bytes, " +
                       (same ? "identical" : "DIFFERENT") + " across repeated runs at 1, 4 and default threads");
}

}  // namespace

int main() {
  const std::vector<std::function<void()>> criteria{c1, c2, c3, c4, c5, c6, c7, c8, c9, c10, c11, c12};
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    try {
      criteria[i]();
    } catch (const std::exception& e) {
      report(static_cast<int>(i + 1), false, std::string("threw: ") + e.what());
    }
  }
  int failed = 0;
  for (const auto& l : g_lines) failed += !l.pass;
  std::printf("%d/%zu criteria passed\n", static_cast<int>(g_lines.size()) - failed, g_lines.size());
  return failed;
}
