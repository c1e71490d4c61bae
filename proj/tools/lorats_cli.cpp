// lorats: batch command line over the library. Data goes to stdout, logs to stderr.
//
// Exit codes: 0 success, 1 runtime failure, 2 usage or input-data error.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "lorats/lorats.hpp"

using namespace lorats;
namespace fs = std::filesystem;

namespace {

constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;

void log(const std::string& msg) { std::cerr << "lorats: " << msg << "\n"; }

json read_json_file(const fs::path& p) {
  std::ifstream f(p);
  if (!f) throw DataError("cannot open '" + p.string() + "'");
  try {
    return json::parse(f);
  } catch (const json::exception& e) {
    throw DataError("'" + p.string() + "' is not valid JSON: " + e.what());
  }
}

/// Expand directories into their .cf32 files, sorted by name.
std::vector<fs::path> expand_traces(const std::vector<std::string>& inputs) {
  std::vector<fs::path> out;
  for (const auto& in : inputs) {
    const fs::path p(in);
    if (fs::is_directory(p)) {
      std::vector<fs::path> found;
      for (const auto& e : fs::directory_iterator(p))
        if (e.is_regular_file() && e.path().extension() == ".cf32") found.push_back(e.path());
      std::sort(found.begin(), found.end());
      out.insert(out.end(), found.begin(), found.end());
    } else {
      out.push_back(p);
    }
  }
  return out;
}

std::vector<double> parse_list(const std::string& s) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      out.push_back(std::stod(item));
    } catch (const std::exception&) {
      throw InvalidArgument("bad number '" + item + "' in list '" + s + "'");
    }
  }
  if (out.empty()) throw InvalidArgument("empty list");
  return out;
}

// gen ------------------------------------------------------------------------

struct GenArgs {
  int sf = 7;
  double bw = 125e3;
  double fb = 0.0;
  double phase = 0.0;
  std::optional<double> snr;
  std::uint64_t seed = 1;
  double ramp = 0.0;
  std::size_t payload = 8;
  std::size_t lead = 5000;
  std::size_t tail = 3000;
  double fs = kDefaultSampleRate;
  double center = kDefaultCenterFreq;
  std::int64_t t0_ns = 0;
  bool chirp_only = false;
  std::string out;
};

int cmd_gen(const GenArgs& a) {
  PhyParams phy;
  phy.spreading_factor = a.sf;
  phy.bandwidth = a.bw;
  phy.center_freq = a.center;
  phy.validate();
  TxParams tx;
  tx.fb = a.fb;
  tx.phase = a.phase;
  tx.ramp_fraction = a.ramp;
  tx.validate();
  std::mt19937_64 rng(a.seed);
  const auto symbols = random_symbols(a.payload, phy, rng());
  IQTrace t = a.chirp_only ? gen_up_chirp(phy, tx, {}, a.fs) : pad(gen_frame(phy, tx, {}, symbols, a.fs), a.lead, a.tail);
  const std::size_t onset = a.chirp_only ? 0 : a.lead;
  if (a.snr) t = add_awgn(t, *a.snr, rng());
  t.center_freq = a.center;
  t.t0_ns = a.t0_ns;
  write_cf32(a.out, t);
  // Generator ground truth goes into the sidecar next to the required fields.
  const auto side_path = sidecar_path(a.out);
  auto side = read_json_file(side_path);
  side["generator"] = {{"spreading_factor", a.sf}, {"bandwidth_hz", a.bw},  {"fb_hz", a.fb},
                       {"phase", a.phase},        {"seed", a.seed},        {"snr_db", a.snr ? json(*a.snr) : json(nullptr)},
                       {"frame_onset_sample", onset}, {"chirp_only", a.chirp_only}, {"payload", symbols}};
  std::ofstream(side_path, std::ios::trunc) << side.dump(2) << "\n";
  std::cout << json{{"path", a.out}, {"samples", t.size()}, {"frame_onset_sample", onset}}.dump() << "\n";
  return 0;
}

// onset ------------------------------------------------------------------------

PhyParams phy_from(int sf, double bw) {
  PhyParams p;
  p.spreading_factor = sf;
  p.bandwidth = bw;
  p.validate();
  return p;
}

int cmd_onset(const std::vector<std::string>& inputs, const std::string& detector, int sf, double bw) {
  const auto phy = phy_from(sf, bw);
  const auto d = detector_from_string(detector);
  int rc = 0;
  for (const auto& path : expand_traces(inputs)) {
    const auto t = read_cf32(path);
    phy.validate();
    try {
      auto j = to_json(detect(t, phy, d));
      j["file"] = path.string();
      std::cout << j.dump() << "\n";
    } catch (const NoOnsetError& e) {
      log(path.string() + ": " + e.what());
      rc = kExitRuntime;
    }
  }
  return rc;
}

// estimate -----------------------------------------------------------------------

std::optional<std::size_t> sidecar_onset(const fs::path& trace) {
  const auto side = read_json_file(sidecar_path(trace));
  if (side.contains("generator") && side["generator"].contains("frame_onset_sample"))
    return side["generator"]["frame_onset_sample"].get<std::size_t>();
  return std::nullopt;
}

bool sidecar_chirp_only(const fs::path& trace) {
  const auto side = read_json_file(sidecar_path(trace));
  return side.contains("generator") && side["generator"].value("chirp_only", false);
}

int cmd_estimate(const std::vector<std::string>& inputs, const std::string& method, const std::string& onset_mode,
                 int chirp_index, int sf, double bw, std::uint64_t seed) {
  const auto phy = phy_from(sf, bw);
  const auto m = fb_method_from_string(method);
  int rc = 0;
  for (const auto& path : expand_traces(inputs)) {
    const auto t = read_cf32(path);
    IQTrace chirp;
    std::size_t onset = 0;
    std::string onset_source;
    if (sidecar_chirp_only(path)) {
      chirp = t;
      onset_source = "whole_trace";
    } else {
      std::optional<std::size_t> o;
      if (onset_mode == "auto" || onset_mode == "sidecar") {
        o = sidecar_onset(path);
        onset_source = "sidecar";
        if (!o && onset_mode == "sidecar") throw DataError("'" + path.string() + "' has no onset in its sidecar");
      }
      if (!o) {
        const auto d = detector_from_string(onset_mode == "auto" ? "aic" : onset_mode);
        try {
          o = detect(t, phy, d).onset_sample;
        } catch (const NoOnsetError& e) {
          log(path.string() + ": " + e.what());
          rc = kExitRuntime;
          continue;
        }
        onset_source = to_string(d);
      }
      onset = *o;
      const auto r = preamble_chirp(onset, phy, t.sample_rate, chirp_index);
      if (r.end > t.size()) throw DataError("'" + path.string() + "': preamble chirp runs past the end of the trace");
      chirp = slice(t, r);
    }
    LsqConfig cfg;
    cfg.seed = seed;
    try {
      auto j = to_json(estimate_fb(chirp, phy, m, cfg));
      j["file"] = path.string();
      j["onset_sample"] = onset;
      j["onset_source"] = onset_source;
      std::cout << j.dump() << "\n";
    } catch (const DataError& e) {
      log(path.string() + ": " + e.what());
      rc = kExitRuntime;
    }
  }
  return rc;
}

// attack ---------------------------------------------------------------------------

int cmd_attack(const std::string& scenario_path, const std::string& replay_in, const std::string& replay_out,
               std::uint64_t seed) {
  const auto cfg = attack_config_from_json(read_json_file(scenario_path));
  const auto& s = cfg.scenario;
  const double scr_gw = scr_at(s.gateway, s, cfg.path_loss);
  const double scr_ed = scr_at(s.eavesdropper, s, cfg.path_loss);
  json report{{"scenario", scenario_path},
              {"scr_gateway_db", scr_gw},
              {"scr_eavesdropper_db", scr_ed},
              {"stealthy_at_gateway", stealthy_at_gateway(s, cfg.path_loss, cfg.thresholds)},
              {"eavesdrop_ok", eavesdrop_ok(s, cfg.path_loss, cfg.thresholds)},
              {"map_outcome", to_string(classify_outcome(s.rtm, scr_gw, cfg.thresholds))}};
  if (cfg.collision_lag_ms) {
    const auto w = lookup_windows(cfg.spreading_factor, cfg.payload_bytes, cfg.interpolate_windows);
    report["windows_ms"] = {w.w1, w.w2, w.w3};
    report["collision_lag_ms"] = *cfg.collision_lag_ms;
    report["outcome"] = to_string(classify_by_timing(*cfg.collision_lag_ms, w));
  } else {
    report["outcome"] = report["map_outcome"];
  }
  if (!replay_in.empty()) {
    if (replay_out.empty()) throw InvalidArgument("--emit-replay needs --replay-out");
    const auto victim = read_cf32(replay_in);
    const double phase = random_replay_phase(seed);
    write_cf32(replay_out, replay(victim, s.replay_delay_s, s.replayer_fb_hz, phase));
    // Sample positions are unchanged, so the generator's ground truth still applies.
    const auto in_side = read_json_file(sidecar_path(replay_in));
    auto out_side = read_json_file(sidecar_path(replay_out));
    if (in_side.contains("generator")) out_side["generator"] = in_side["generator"];
    out_side["replay"] = {{"delay_s", s.replay_delay_s}, {"fb_hz", s.replayer_fb_hz}, {"phase", phase}};
    std::ofstream(sidecar_path(replay_out), std::ios::trunc) << out_side.dump(2) << "\n";
    report["replay"] = {{"file", replay_out}, {"delay_s", s.replay_delay_s}, {"fb_hz", s.replayer_fb_hz}, {"phase", phase}};
  }
  std::cout << report.dump() << "\n";
  return 0;
}

int cmd_area(const std::string& scenario_path) {
  const auto cfg = attack_config_from_json(read_json_file(scenario_path));
  const auto a = vulnerable_area(cfg.scenario, cfg.path_loss, cfg.grid, cfg.thresholds);
  log("core " + fmt(a.core_area_m2) + " m2, ring " + fmt(a.ring_area_m2) + " m2, disk " + fmt(a.disk_area_m2) + " m2");
  std::cout << area_cells(a).csv();
  return 0;
}

// detect ---------------------------------------------------------------------------

FrameObservation observation_from_json(const json& j) {
  FrameObservation o;
  try {
    o.device_id = j.at("device_id").get<std::string>();
    o.rx_time_ns = j.at("rx_time_ns").get<std::int64_t>();
    o.fb_hz = j.at("fb_hz").get<double>();
    o.radio.spreading_factor = j.value("sf", o.radio.spreading_factor);
    o.radio.bandwidth = j.value("bw", o.radio.bandwidth);
    if (j.contains("temp_c") && !j["temp_c"].is_null()) o.temp_c = j["temp_c"].get<double>();
    o.frame_counter = j.value("frame_counter", std::uint64_t{0});
  } catch (const json::exception& e) {
    throw DataError(std::string("bad observation: ") + e.what());
  }
  return o;
}

int cmd_detect(const std::string& store_path, const std::string& obs_path, const std::vector<std::string>& put,
               bool enroll, double temp_threshold) {
  ProfileStore store(store_path);
  for (const auto& p : put) store.put(profile_from_json(read_json_file(p)));
  if (obs_path.empty()) return 0;
  std::ifstream file;
  if (obs_path != "-") {
    file.open(obs_path);
    if (!file) throw DataError("cannot open '" + obs_path + "'");
  }
  std::istream& in = obs_path == "-" ? std::cin : file;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception&) {
      throw DataError(obs_path + ":" + std::to_string(n) + ": not JSON");
    }
    const auto o = observation_from_json(j);
    if (enroll) {
      store.enroll(o);
      continue;
    }
    const auto fb = store.check(o);
    std::cout << verdict_event(o.device_id, o.rx_time_ns, fb, "fb").dump() << "\n";
    if (fb == Verdict::Unprofiled) continue;
    auto p = store.get(o.device_id);
    if (p.temp_model && o.temp_c) {
      const auto v = check_temp_consistency(p, o, temp_threshold);
      std::cout << verdict_event(o.device_id, o.rx_time_ns, v, "temperature").dump() << "\n";
    }
    if (p.pih && j.contains("frame_counter")) {
      Verdict v;
      try {
        v = pih_verify(p, o);
      } catch (const ResyncRequired& e) {
        std::cout << verdict_event(o.device_id, o.rx_time_ns, Verdict::DelaySuspected, std::string("interval: ") + e.what()).dump()
                  << "\n";
        continue;
      }
      store.put(p);
      std::cout << verdict_event(o.device_id, o.rx_time_ns, v, "interval").dump() << "\n";
    }
  }
  return 0;
}

// stamp ----------------------------------------------------------------------------

int cmd_stamp(const std::string& trace_path, const std::string& records_path, const std::string& detector, int sf,
              double bw, std::uint64_t max_elapsed_ms) {
  const auto phy = phy_from(sf, bw);
  const auto t = read_cf32(trace_path);
  const auto onset = detect(t, phy, detector_from_string(detector));
  std::vector<DataRecord> recs;
  std::ifstream f(records_path);
  if (!f) throw DataError("cannot open '" + records_path + "'");
  std::string line;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    try {
      const auto j = json::parse(line);
      DataRecord r;
      r.device_id = j.at("device_id").get<std::string>();
      r.elapsed_ms = j.at("elapsed_ms").get<std::uint32_t>();
      recs.push_back(r);
    } catch (const json::exception& e) {
      throw DataError("bad record in '" + records_path + "': " + e.what());
    }
  }
  const auto res = stamp(onset, recs, max_elapsed_ms);
  for (const auto& r : res.rejected) log("rejected " + r.device_id + ": waited " + std::to_string(r.elapsed_ms) + " ms");
  std::cout << "device_id,timestamp_ns,elapsed_ms\n";
  for (const auto& s : res.stamped) std::cout << to_csv(s) << "\n";
  return 0;
}

// repro ----------------------------------------------------------------------------

struct ReproArgs {
  std::string tag;
  std::uint64_t seed = 1;
  std::size_t n = 0;  // 0 selects the per-figure default
  std::string out_dir;
  std::string snrs;
};

std::vector<Dataset> repro_datasets(const ReproArgs& a) {
  auto n_or = [&](std::size_t d) { return a.n ? a.n : d; };
  auto snrs_or = [&](std::vector<double> d) { return a.snrs.empty() ? d : parse_list(a.snrs); };
  const std::vector<double> fb_snrs{40, 30, 20, 10, 0, -6, -12, -18, -24};
  if (a.tag == "fig4") {
    std::vector<double> rtms, scrs;
    for (int i = 0; i <= 10; ++i) rtms.push_back(i / 10.0);
    for (int s = -15; s <= 15; s += 3) scrs.push_back(s);
    return {repro_outcome_map(rtms, scrs, static_cast<int>(n_or(9)), a.seed)};
  }
  if (a.tag == "fig5") {
    std::vector<double> d;
    for (int x = 0; x <= 1500; x += 50) d.push_back(x);
    return {repro_area({2, 5, 8}, d, GridSpec{})};
  }
  if (a.tag == "fig12") return {repro_onset(snrs_or({20, 10, 0, -5, -10, -15, -20}), n_or(100), a.seed)};
  if (a.tag == "fig13a") return {repro_fb(snrs_or(fb_snrs), n_or(20), a.seed, {FbMethod::Linreg}, "fig13a")};
  if (a.tag == "fig13b") return {repro_fb(snrs_or(fb_snrs), n_or(20), a.seed, {FbMethod::Lsq}, "fig13b")};
  if (a.tag == "fig13")
    return {repro_fb(snrs_or(fb_snrs), n_or(20), a.seed, {FbMethod::Linreg}, "fig13a"),
            repro_fb(snrs_or(fb_snrs), n_or(20), a.seed, {FbMethod::Lsq}, "fig13b")};
  if (a.tag == "fig17") return {repro_fb_variation({10, 20, 30}, 20, n_or(500), a.seed)};
  throw InvalidArgument("unknown figure '" + a.tag + "' (fig4, fig5, fig12, fig13, fig13a, fig13b, fig17)");
}

int cmd_repro(const ReproArgs& a) {
  for (const auto& ds : repro_datasets(a)) {
    if (a.out_dir.empty()) {
      std::cout << ds.csv();
      continue;
    }
    fs::create_directories(a.out_dir);
    const auto p = fs::path(a.out_dir) / (ds.name + ".csv");
    std::ofstream f(p, std::ios::binary | std::ios::trunc);
    if (!f) throw DataError("cannot write '" + p.string() + "'");
    f << ds.csv();
    log("wrote " + p.string());
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"LoRa frame timestamping toolkit: synthetic traces, frame-delay attacks and defenses"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "lorats 0.1.0");

  GenArgs g;
  auto* gen = app.add_subcommand("gen", "Generate a synthetic frame trace (.cf32 + sidecar)");
  gen->add_option("--sf", g.sf, "Spreading factor")->check(CLI::Range(6, 12));
  gen->add_option("--bw", g.bw, "Bandwidth in Hz")->check(CLI::IsMember({125000.0, 250000.0, 500000.0}));
  gen->add_option("--fb", g.fb, "Transmitter frequency bias in Hz");
  gen->add_option("--phase", g.phase, "Transmitter phase in radians");
  gen->add_option("--snr", g.snr, "Add white noise at this SNR (dB)");
  gen->add_option("--seed", g.seed, "RNG seed");
  gen->add_option("--ramp", g.ramp, "Amplitude ramp over this fraction of the first chirp")->check(CLI::Range(0.0, 1.0));
  gen->add_option("--payload", g.payload, "Number of random payload symbols");
  gen->add_option("--lead", g.lead, "Zero samples before the frame");
  gen->add_option("--tail", g.tail, "Zero samples after the frame");
  gen->add_option("--fs", g.fs, "Sample rate in Hz")->check(CLI::PositiveNumber);
  gen->add_option("--center", g.center, "Center frequency in Hz");
  gen->add_option("--t0-ns", g.t0_ns, "Wall clock of the first sample");
  gen->add_flag("--chirp", g.chirp_only, "Emit a single up chirp instead of a frame");
  gen->add_option("-o,--out", g.out, "Output .cf32 path")->required();

  std::vector<std::string> inputs;
  std::string detector = "aic", method = "lsq", onset_mode = "auto";
  int sf = 7, chirp_index = 1;
  double bw = 125e3;
  std::uint64_t seed = 1;

  auto* onset = app.add_subcommand("onset", "Detect frame onsets; one JSON line per trace");
  onset->add_option("traces", inputs, "Trace files or directories")->required();
  onset->add_option("--detector", detector, "env, corr or aic")->check(CLI::IsMember({"env", "corr", "aic"}));
  onset->add_option("--sf", sf)->check(CLI::Range(6, 12));
  onset->add_option("--bw", bw)->check(CLI::IsMember({125000.0, 250000.0, 500000.0}));

  auto* estimate = app.add_subcommand("estimate", "Estimate frequency bias; one JSON line per trace");
  estimate->add_option("traces", inputs, "Trace files or directories")->required();
  estimate->add_option("--method", method, "fft, linreg or lsq")->check(CLI::IsMember({"fft", "linreg", "lsq"}));
  estimate->add_option("--onset", onset_mode, "auto, sidecar, env, corr or aic")
      ->check(CLI::IsMember({"auto", "sidecar", "env", "corr", "aic"}));
  estimate->add_option("--chirp-index", chirp_index, "Preamble chirp to fit (0-based)")->check(CLI::Range(0, kPreambleChirps - 1));
  estimate->add_option("--sf", sf)->check(CLI::Range(6, 12));
  estimate->add_option("--bw", bw)->check(CLI::IsMember({125000.0, 250000.0, 500000.0}));
  estimate->add_option("--seed", seed, "Differential evolution seed");

  std::string scenario, replay_in, replay_out;
  auto* attack = app.add_subcommand("attack", "Frame-delay attack report for a scenario");
  attack->add_option("scenario", scenario, "Scenario JSON");
  attack->add_option("--emit-replay", replay_in, "Victim trace to replay with the scenario delay and bias");
  attack->add_option("--replay-out", replay_out, "Output path for the replayed trace");
  attack->add_option("--seed", seed, "Replay phase seed");
  std::string area_scenario;
  auto* area = attack->add_subcommand("area", "Vulnerable-area cell map as CSV");
  area->add_option("scenario", area_scenario, "Scenario JSON")->required();

  std::string store_path = "profiles.jsonl", obs_path;
  std::vector<std::string> put;
  bool enroll = false;
  double temp_threshold = 0.5;
  auto* det = app.add_subcommand("detect", "Check observations against device profiles");
  det->add_option("observations", obs_path, "JSON-lines observations, or - for stdin");
  det->add_option("--store", store_path, "Profile log");
  det->add_option("--put", put, "Profile JSON files to insert first");
  det->add_flag("--enroll", enroll, "Enroll the observations instead of checking them");
  det->add_option("--temp-threshold", temp_threshold, "Temperature mismatch threshold in degrees C")->check(CLI::PositiveNumber);

  std::string stamp_trace, records;
  std::uint64_t max_elapsed = 250000;
  auto* st = app.add_subcommand("stamp", "Timestamp device records from a frame's onset; CSV");
  st->add_option("trace", stamp_trace, "Frame trace")->required();
  st->add_option("records", records, "JSON-lines records with device_id and elapsed_ms")->required();
  st->add_option("--detector", detector)->check(CLI::IsMember({"env", "corr", "aic"}));
  st->add_option("--max-elapsed-ms", max_elapsed, "Reject records that waited longer");
  st->add_option("--sf", sf)->check(CLI::Range(6, 12));
  st->add_option("--bw", bw)->check(CLI::IsMember({125000.0, 250000.0, 500000.0}));

  ReproArgs r;
  auto* repro = app.add_subcommand("repro", "Regenerate a figure dataset as CSV");
  repro->add_option("figure", r.tag, "fig4, fig5, fig12, fig13, fig13a, fig13b or fig17")->required();
  repro->add_option("--seed", r.seed);
  repro->add_option("-n,--trials", r.n, "Trials per point (0 keeps the default)");
  repro->add_option("--snrs", r.snrs, "Comma-separated SNR list in dB");
  repro->add_option("-o,--out-dir", r.out_dir, "Write <name>.csv here instead of stdout");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitUsage;
  }

  try {
    if (*gen) return cmd_gen(g);
    if (*onset) return cmd_onset(inputs, detector, sf, bw);
    if (*estimate) return cmd_estimate(inputs, method, onset_mode, chirp_index, sf, bw, seed);
    if (*area) return cmd_area(area_scenario);
    if (*attack) {
      if (scenario.empty()) throw InvalidArgument("attack needs a scenario file");
      return cmd_attack(scenario, replay_in, replay_out, seed);
    }
    if (*det) return cmd_detect(store_path, obs_path, put, enroll, temp_threshold);
    if (*st) return cmd_stamp(stamp_trace, records, detector, sf, bw, max_elapsed);
    if (*repro) return cmd_repro(r);
  } catch (const InvalidArgument& e) {
    log(e.what());
    return kExitUsage;
  } catch (const DataError& e) {
    log(e.what());
    return kExitUsage;
  } catch (const std::exception& e) {
    log(e.what());
    return kExitRuntime;
  }
  return 0;
}
