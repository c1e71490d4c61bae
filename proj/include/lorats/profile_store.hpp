#pragma once

#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <shared_mutex>
#include <string>
#include <vector>

#include "lorats/io.hpp"

namespace lorats {

/// Device profiles persisted as an append-only JSON-lines log. Each line is
/// {"op":"put","profile":{...}} (full replacement) or {"op":"fb",...} (one accepted
/// estimate). compact() rewrites the log as one "put" per device.
///
/// Adding devices takes the store lock exclusively; operations on one device hold that
/// device's mutex, so distinct devices proceed concurrently.
class ProfileStore {
 public:
  ProfileStore() = default;
  explicit ProfileStore(std::filesystem::path log) : log_(std::move(log)) { load(); }

  /// Insert or replace a profile.
  void put(const DeviceProfile& p) {
    p.validate();
    std::unique_lock lk(map_mu_);
    auto& e = entries_[p.device_id];
    if (!e) e = std::make_unique<Entry>();
    std::lock_guard dl(e->mu);
    e->profile = p;
    append({{"op", "put"}, {"profile", to_json(p)}});
  }

  [[nodiscard]] bool contains(const std::string& id) const {
    std::shared_lock lk(map_mu_);
    return entries_.count(id) > 0;
  }

  [[nodiscard]] DeviceProfile get(const std::string& id) const {
    std::shared_lock lk(map_mu_);
    const auto it = entries_.find(id);
    if (it == entries_.end()) throw InvalidArgument("unknown device '" + id + "'");
    std::lock_guard dl(it->second->mu);
    return it->second->profile;
  }

  [[nodiscard]] std::vector<std::string> device_ids() const {
    std::shared_lock lk(map_mu_);
    std::vector<std::string> out;
    for (const auto& [k, v] : entries_) out.push_back(k);
    return out;
  }

  /// FB check against the stored profile; an accepted estimate is logged. Unknown devices
  /// are Unprofiled.
  Verdict check(const FrameObservation& obs) {
    std::shared_lock lk(map_mu_);
    const auto it = entries_.find(obs.device_id);
    if (it == entries_.end()) return Verdict::Unprofiled;
    std::lock_guard dl(it->second->mu);
    const auto v = check_fb(it->second->profile, obs);
    if (v == Verdict::Accept) append(fb_line(obs));
    return v;
  }

  /// Supervised enrolment of an estimate (creates the device if needed).
  void enroll(const FrameObservation& obs) {
    std::unique_lock lk(map_mu_);
    auto& e = entries_[obs.device_id];
    if (!e) {
      e = std::make_unique<Entry>();
      e->profile.device_id = obs.device_id;
      append({{"op", "put"}, {"profile", to_json(e->profile)}});
    }
    std::lock_guard dl(e->mu);
    e->profile.enroll(obs.radio, {obs.rx_time_ns, obs.fb_hz});
    append(fb_line(obs));
  }

  /// Rewrite the log with one snapshot per device.
  void compact() {
    std::unique_lock lk(map_mu_);
    if (log_.empty()) return;
    const auto tmp = std::filesystem::path(log_.string() + ".tmp");
    {
      std::ofstream f(tmp, std::ios::trunc);
      if (!f) throw DataError("cannot write '" + tmp.string() + "'");
      for (const auto& [id, e] : entries_) {
        std::lock_guard dl(e->mu);
        f << json{{"op", "put"}, {"profile", to_json(e->profile)}}.dump() << "\n";
      }
    }
    std::filesystem::rename(tmp, log_);
  }

 private:
  struct Entry {
    mutable std::mutex mu;
    DeviceProfile profile;
  };

  static json fb_line(const FrameObservation& obs) {
    return {{"op", "fb"},
            {"device_id", obs.device_id},
            {"sf", obs.radio.spreading_factor},
            {"bw", obs.radio.bandwidth},
            {"time_ns", obs.rx_time_ns},
            {"delta_hz", obs.fb_hz}};
  }

  void append(const json& line) {
    if (log_.empty()) return;
    std::lock_guard lk(log_mu_);
    std::ofstream f(log_, std::ios::app);
    if (!f) throw DataError("cannot append to '" + log_.string() + "'");
    f << line.dump() << "\n";
  }

  void load() {
    if (!std::filesystem::exists(log_)) return;
    std::ifstream f(log_);
    std::string line;
    std::size_t n = 0;
    while (std::getline(f, line)) {
      ++n;
      if (line.empty()) continue;
      json j;
      try {
        j = json::parse(line);
      } catch (const json::exception&) {
        throw DataError(log_.string() + ":" + std::to_string(n) + ": not JSON");
      }
      const auto op = j.value("op", std::string());
      if (op == "put") {
        auto p = profile_from_json(j.at("profile"));
        auto& e = entries_[p.device_id];
        if (!e) e = std::make_unique<Entry>();
        e->profile = std::move(p);
      } else if (op == "fb") {
        const auto id = j.at("device_id").get<std::string>();
        auto& e = entries_[id];
        if (!e) {
          e = std::make_unique<Entry>();
          e->profile.device_id = id;
        }
        e->profile.enroll({j.at("sf").get<int>(), j.at("bw").get<double>()},
                          {j.at("time_ns").get<std::int64_t>(), j.at("delta_hz").get<double>()});
      } else {
        throw DataError(log_.string() + ":" + std::to_string(n) + ": unknown op '" + op + "'");
      }
    }
  }

  std::filesystem::path log_;
  mutable std::shared_mutex map_mu_;
  std::mutex log_mu_;
  std::map<std::string, std::unique_ptr<Entry>> entries_;
};

}  // namespace lorats
