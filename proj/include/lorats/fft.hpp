#pragma once

#include <fftw3.h>

#include <complex>
#include <cstring>
#include <mutex>
#include <vector>

#include "lorats/phy.hpp"

namespace lorats::fft {

namespace detail {
// The FFTW planner is not thread-safe; execution of distinct plans is.
inline std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}
}  // namespace detail

/// Owning 1-D complex FFT plan with its own aligned buffer.
class Plan {
 public:
  Plan(std::size_t n, bool inverse) : n_(n) {
    require(n > 0, "fft size must be positive");
    buf_ = fftw_alloc_complex(n);
    std::lock_guard lock(detail::planner_mutex());
    plan_ = fftw_plan_dft_1d(static_cast<int>(n), buf_, buf_, inverse ? FFTW_BACKWARD : FFTW_FORWARD,
                             FFTW_ESTIMATE);
  }
  Plan(const Plan&) = delete;
  Plan& operator=(const Plan&) = delete;
  ~Plan() {
    std::lock_guard lock(detail::planner_mutex());
    fftw_destroy_plan(plan_);
    fftw_free(buf_);
  }

  [[nodiscard]] std::size_t size() const { return n_; }

  /// Transform `in` (zero-padded or truncated to size()) into `out`.
  void execute(const Sample* in, std::size_t count, std::vector<Sample>& out) {
    const std::size_t m = std::min(count, n_);
    std::memcpy(static_cast<void*>(buf_), static_cast<const void*>(in), m * sizeof(Sample));
    if (m < n_) std::memset(buf_ + m, 0, (n_ - m) * sizeof(fftw_complex));
    fftw_execute(plan_);
    out.resize(n_);
    std::memcpy(static_cast<void*>(out.data()), static_cast<const void*>(buf_), n_ * sizeof(Sample));
  }

 private:
  std::size_t n_;
  fftw_complex* buf_ = nullptr;
  fftw_plan plan_ = nullptr;
};

inline std::vector<Sample> forward(const std::vector<Sample>& x) {
  Plan p(x.size(), false);
  std::vector<Sample> out;
  p.execute(x.data(), x.size(), out);
  return out;
}

/// Unnormalized inverse transform.
inline std::vector<Sample> inverse(const std::vector<Sample>& x) {
  Plan p(x.size(), true);
  std::vector<Sample> out;
  p.execute(x.data(), x.size(), out);
  return out;
}

/// Analytic signal of a real sequence (FFT method, as in scipy.signal.hilbert).
inline std::vector<Sample> analytic_signal(const std::vector<double>& x) {
  const std::size_t n = x.size();
  std::vector<Sample> buf(x.begin(), x.end());
  if (n == 0) return buf;
  auto spec = forward(buf);
  std::vector<double> h(n, 0.0);
  h[0] = 1.0;
  if (n % 2 == 0) {
    h[n / 2] = 1.0;
    for (std::size_t i = 1; i < n / 2; ++i) h[i] = 2.0;
  } else {
    for (std::size_t i = 1; i < (n + 1) / 2; ++i) h[i] = 2.0;
  }
  for (std::size_t i = 0; i < n; ++i) spec[i] *= h[i];
  auto out = inverse(spec);
  for (auto& v : out) v /= static_cast<double>(n);
  return out;
}

}  // namespace lorats::fft
