#pragma once

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "lorats/attack.hpp"
#include "lorats/detect.hpp"
#include "lorats/fb_estimate.hpp"
#include "lorats/onset.hpp"

namespace lorats {

using json = nlohmann::json;

// ---------------------------------------------------------------------------
// .cf32 traces
// ---------------------------------------------------------------------------

/// Sidecar path for a trace: the same stem with a .json extension.
inline std::filesystem::path sidecar_path(const std::filesystem::path& cf32) {
  auto p = cf32;
  p.replace_extension(".json");
  return p;
}

namespace detail {

inline void put_f32le(std::string& out, float v) {
  static_assert(std::endian::native == std::endian::little || std::endian::native == std::endian::big);
  std::uint32_t u;
  std::memcpy(&u, &v, 4);
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((u >> (8 * i)) & 0xff));
}

inline float get_f32le(const unsigned char* p) {
  const std::uint32_t u = static_cast<std::uint32_t>(p[0]) | static_cast<std::uint32_t>(p[1]) << 8 |
                          static_cast<std::uint32_t>(p[2]) << 16 | static_cast<std::uint32_t>(p[3]) << 24;
  float v;
  std::memcpy(&v, &u, 4);
  return v;
}

}  // namespace detail

/// Interleaved little-endian float32 I/Q plus a JSON sidecar with rate, centre and t0.
inline void write_cf32(const std::filesystem::path& path, const IQTrace& trace) {
  trace.validate();
  std::string buf;
  buf.reserve(trace.size() * 8);
  for (const auto& s : trace.samples) {
    detail::put_f32le(buf, static_cast<float>(s.real()));
    detail::put_f32le(buf, static_cast<float>(s.imag()));
  }
  {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw DataError("cannot open '" + path.string() + "' for writing");
    f.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (!f) throw DataError("write failed for '" + path.string() + "'");
  }
  const json side{{"sample_rate_hz", trace.sample_rate}, {"center_freq_hz", trace.center_freq}, {"t0_ns", trace.t0_ns}};
  std::ofstream s(sidecar_path(path), std::ios::trunc);
  if (!s) throw DataError("cannot open sidecar for '" + path.string() + "'");
  s << side.dump(2) << "\n";
}

inline IQTrace read_cf32(const std::filesystem::path& path) {
  const auto side_path = sidecar_path(path);
  if (!std::filesystem::exists(side_path)) throw DataError("missing sidecar '" + side_path.string() + "'");
  IQTrace t;
  try {
    std::ifstream s(side_path);
    const auto side = json::parse(s);
    t.sample_rate = side.at("sample_rate_hz").get<double>();
    t.center_freq = side.at("center_freq_hz").get<double>();
    t.t0_ns = side.at("t0_ns").get<std::int64_t>();
  } catch (const json::exception& e) {
    throw DataError("bad sidecar '" + side_path.string() + "': " + e.what());
  }
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot open '" + path.string() + "'");
  const std::vector<unsigned char> raw((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  if (raw.size() % 8) throw DataError("'" + path.string() + "' is not a whole number of complex float32 samples");
  t.samples.resize(raw.size() / 8);
  for (std::size_t i = 0; i < t.samples.size(); ++i)
    t.samples[i] = {detail::get_f32le(&raw[8 * i]), detail::get_f32le(&raw[8 * i + 4])};
  try {
    t.validate();
  } catch (const InvalidArgument& e) {
    throw DataError("'" + path.string() + "': " + e.what());
  }
  return t;
}

// ---------------------------------------------------------------------------
// JSON records
// ---------------------------------------------------------------------------

inline json to_json(const OnsetResult& r) {
  return {{"detector", to_string(r.detector)},
          {"onset_sample", r.onset_sample},
          {"onset_time_ns", r.onset_time_ns},
          {"score", r.score}};
}

namespace detail {
inline json finite_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }
}  // namespace detail

inline json to_json(const FbEstimate& e) {
  return {{"delta_hz", e.delta_hz},
          {"estimator", to_string(e.estimator)},
          {"residual", detail::finite_or_null(e.residual)},
          {"snr_db", detail::finite_or_null(e.snr_db)},
          {"theta", detail::finite_or_null(e.theta)},
          {"low_confidence", e.low_confidence},
          {"unreliable", e.unreliable},
          {"boundary", e.boundary}};
}

inline json verdict_event(const std::string& device_id, std::int64_t rx_time_ns, Verdict v, const std::string& detail) {
  return {{"device_id", device_id}, {"rx_time_ns", rx_time_ns}, {"verdict", to_string(v)}, {"detail", detail}};
}

// Scenario files ------------------------------------------------------------

inline void to_json(json& j, const Position& p) { j = json::array({p.x, p.y, p.alt}); }
inline void from_json(const json& j, Position& p) {
  if (!j.is_array() || j.size() < 2 || j.size() > 3) throw DataError("position must be [x, y] or [x, y, alt]");
  p.x = j[0].get<double>();
  p.y = j[1].get<double>();
  p.alt = j.size() == 3 ? j[2].get<double>() : 0.0;
}

/// Everything the attack command needs.
struct AttackConfig {
  CollisionScenario scenario;
  PathLossModel path_loss;
  GridSpec grid;
  OutcomeThresholds thresholds;
  int spreading_factor = 7;
  int payload_bytes = 30;
  std::optional<double> collision_lag_ms;
  bool interpolate_windows = false;
};

inline AttackConfig attack_config_from_json(const json& j) {
  AttackConfig c;
  try {
    auto& s = c.scenario;
    if (j.contains("positions")) {
      const auto& p = j.at("positions");
      if (p.contains("gateway")) s.gateway = p.at("gateway").get<Position>();
      if (p.contains("collider")) s.collider = p.at("collider").get<Position>();
      if (p.contains("eavesdropper")) s.eavesdropper = p.at("eavesdropper").get<Position>();
      if (p.contains("victim")) s.victim = p.at("victim").get<Position>();
    }
    if (j.contains("powers_dbm")) {
      const auto& p = j.at("powers_dbm");
      s.p_victim_dbm = p.value("victim", s.p_victim_dbm);
      s.p_collider_dbm = p.value("collider", s.p_collider_dbm);
    }
    s.rtm = j.value("rtm", s.rtm);
    s.replay_delay_s = j.value("replay_delay_s", s.replay_delay_s);
    s.replayer_fb_hz = j.value("replayer_fb_hz", s.replayer_fb_hz);
    if (j.contains("eavesdropper_sensitivity_dbm")) s.eavesdropper_sensitivity_dbm = j.at("eavesdropper_sensitivity_dbm").get<double>();
    if (j.contains("path_loss")) {
      const auto& p = j.at("path_loss");
      if (p.value("model", std::string("LOG_DISTANCE")) != "LOG_DISTANCE") throw DataError("only LOG_DISTANCE path loss is supported");
      c.path_loss.exponent = p.value("exponent", c.path_loss.exponent);
      c.path_loss.reference_loss_db = p.value("reference_loss_db", c.path_loss.reference_loss_db);
      c.path_loss.reference_distance_m = p.value("reference_distance_m", c.path_loss.reference_distance_m);
    }
    if (j.contains("grid")) {
      const auto& g = j.at("grid");
      c.grid.x_min = g.value("x_min", c.grid.x_min);
      c.grid.x_max = g.value("x_max", c.grid.x_max);
      c.grid.y_min = g.value("y_min", c.grid.y_min);
      c.grid.y_max = g.value("y_max", c.grid.y_max);
      c.grid.cell_m = g.value("cell_m", c.grid.cell_m);
      c.grid.victim_alt = g.value("victim_alt", c.grid.victim_alt);
    }
    if (j.contains("thresholds_db")) {
      const auto& t = j.at("thresholds_db");
      c.thresholds.stealth_lo_db = t.value("stealth_lo", c.thresholds.stealth_lo_db);
      c.thresholds.stealth_hi_db = t.value("stealth_hi", c.thresholds.stealth_hi_db);
      c.thresholds.eavesdrop_min_db = t.value("eavesdrop_min", c.thresholds.eavesdrop_min_db);
    }
    c.spreading_factor = j.value("spreading_factor", c.spreading_factor);
    c.payload_bytes = j.value("payload_bytes", c.payload_bytes);
    if (j.contains("collision_lag_ms")) c.collision_lag_ms = j.at("collision_lag_ms").get<double>();
    c.interpolate_windows = j.value("interpolate_windows", false);
  } catch (const json::exception& e) {
    throw DataError(std::string("bad scenario: ") + e.what());
  }
  c.scenario.validate();
  c.path_loss.validate();
  return c;
}

// Device profiles -------------------------------------------------------------

inline std::string seed_to_hex(const PihSeed& s) {
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  for (auto b : s) {
    out.push_back(kHex[b >> 4]);
    out.push_back(kHex[b & 15]);
  }
  return out;
}

inline PihSeed seed_from_hex(const std::string& h) {
  if (h.size() != 64) throw DataError("PIH seed must be 64 hex digits");
  auto nib = [](char c) -> int {
    if (c >= '0' && c <= '9') return c - '0';
    if (c >= 'a' && c <= 'f') return c - 'a' + 10;
    if (c >= 'A' && c <= 'F') return c - 'A' + 10;
    throw DataError("PIH seed is not hex");
  };
  PihSeed s{};
  for (std::size_t i = 0; i < 32; ++i) s[i] = static_cast<std::uint8_t>(nib(h[2 * i]) << 4 | nib(h[2 * i + 1]));
  return s;
}

inline json to_json(const DeviceProfile& p) {
  json hist = json::array();
  for (const auto& [k, h] : p.fb_history) {
    json recs = json::array();
    for (const auto& r : h) recs.push_back({r.time_ns, r.delta_hz});
    hist.push_back({{"sf", k.spreading_factor}, {"bw", k.bandwidth}, {"records", recs}});
  }
  json j{{"device_id", p.device_id},
         {"fb_threshold", p.fb_threshold},
         {"center_window", p.center_window},
         {"max_history", p.max_history},
         {"fb_history", hist}};
  if (p.temp_model)
    j["temp_model"] = {{"slope", p.temp_model->slope},
                       {"intercept", p.temp_model->intercept},
                       {"rmse_c", p.temp_model->rmse_c},
                       {"n", p.temp_model->n}};
  if (p.pih) {
    j["pih"] = {{"seed", seed_to_hex(p.pih->seed)},
                {"min_interval_s", p.pih->min_interval_s},
                {"max_interval_s", p.pih->max_interval_s},
                {"deviation_tol_s", p.pih->deviation_tol_s},
                {"max_gap", p.pih->max_gap}};
    j["pih_state"] = {{"started", p.pih_state.started},
                      {"last_counter", p.pih_state.last_counter},
                      {"last_rx_time_ns", p.pih_state.last_rx_time_ns}};
  }
  return j;
}

inline DeviceProfile profile_from_json(const json& j) {
  DeviceProfile p;
  try {
    p.device_id = j.at("device_id").get<std::string>();
    p.fb_threshold = j.value("fb_threshold", p.fb_threshold);
    p.center_window = j.value("center_window", p.center_window);
    p.max_history = j.value("max_history", p.max_history);
    for (const auto& h : j.value("fb_history", json::array())) {
      const RadioKey k{h.at("sf").get<int>(), h.at("bw").get<double>()};
      auto& d = p.fb_history[k];
      for (const auto& r : h.at("records")) d.push_back({r.at(0).get<std::int64_t>(), r.at(1).get<double>()});
    }
    if (j.contains("temp_model")) {
      const auto& t = j.at("temp_model");
      p.temp_model = TempModel{t.at("slope").get<double>(), t.at("intercept").get<double>(), t.value("rmse_c", 0.0),
                               t.value("n", std::size_t{0})};
    }
    if (j.contains("pih")) {
      const auto& c = j.at("pih");
      PihConfig cfg;
      cfg.seed = seed_from_hex(c.at("seed").get<std::string>());
      cfg.min_interval_s = c.value("min_interval_s", cfg.min_interval_s);
      cfg.max_interval_s = c.value("max_interval_s", cfg.max_interval_s);
      cfg.deviation_tol_s = c.value("deviation_tol_s", cfg.deviation_tol_s);
      cfg.max_gap = c.value("max_gap", cfg.max_gap);
      p.pih = cfg;
      if (j.contains("pih_state")) {
        const auto& s = j.at("pih_state");
        p.pih_state = {s.value("started", false), s.value("last_counter", std::uint64_t{0}),
                       s.value("last_rx_time_ns", std::int64_t{0})};
      }
    }
  } catch (const json::exception& e) {
    throw DataError(std::string("bad device profile: ") + e.what());
  }
  p.validate();
  return p;
}

}  // namespace lorats
