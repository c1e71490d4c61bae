#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "lorats/error.hpp"
#include "lorats/onset.hpp"

namespace lorats {

/// Device-side record: the device reports how long ago the data was acquired.
struct DataRecord {
  std::string device_id;
  std::uint32_t elapsed_ms = 0;  // 32-bit field in the frame
  std::vector<std::uint8_t> payload;
};

struct Timestamped {
  DataRecord record;
  std::int64_t timestamp_ns = 0;
};

struct StampResult {
  std::vector<Timestamped> stamped;
  std::vector<DataRecord> rejected;  // elapsed beyond the waiting bound
};

/// Longest waiting time whose drift stays within `drift_bound_ms`: bound / rate, seconds.
inline double max_waiting(double drift_ppm, double drift_bound_ms) {
  require(drift_ppm > 0.0 && std::isfinite(drift_ppm), "drift rate must be positive");
  require(drift_bound_ms >= 0.0 && std::isfinite(drift_bound_ms), "drift bound must be non-negative");
  return drift_bound_ms * 1e-3 / (drift_ppm * 1e-6);
}

/// Synchronization sessions per hour for a synchronized-clock design: floor(3600 / (a / r)).
inline long sync_overhead(double drift_ppm, double accuracy_ms) {
  require(drift_ppm >= 0.0 && std::isfinite(drift_ppm), "drift rate must be non-negative");
  require(accuracy_ms > 0.0 && std::isfinite(accuracy_ms), "accuracy target must be positive");
  if (drift_ppm == 0.0) return 0;
  const double period_s = accuracy_ms * 1e-3 / (drift_ppm * 1e-6);
  return static_cast<long>(std::floor(3600.0 / period_s * (1.0 + 1e-12)));
}

/// Timestamp = onset time - elapsed, in integer nanoseconds. Records waiting longer than
/// `max_elapsed_ms` are rejected.
inline StampResult stamp(const OnsetResult& onset, const std::vector<DataRecord>& records,
                         std::uint64_t max_elapsed_ms = 250'000) {
  StampResult out;
  for (const auto& r : records) {
    if (r.elapsed_ms > max_elapsed_ms) {
      out.rejected.push_back(r);
      continue;
    }
    out.stamped.push_back({r, onset.onset_time_ns - static_cast<std::int64_t>(r.elapsed_ms) * 1'000'000});
  }
  return out;
}

/// CSV line `device_id,timestamp_ns,elapsed_ms`.
inline std::string to_csv(const Timestamped& t) {
  return t.record.device_id + "," + std::to_string(t.timestamp_ns) + "," + std::to_string(t.record.elapsed_ms);
}

}  // namespace lorats
