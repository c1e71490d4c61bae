#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <random>
#include <span>
#include <utility>
#include <vector>

#include "lorats/error.hpp"

namespace lorats {

enum class DeStrategy { Best1Bin, Rand1Bin };

/// Differential evolution hyper-parameters.
struct DeConfig {
  DeStrategy strategy = DeStrategy::Best1Bin;
  std::size_t population = 30;  // absolute population size
  int max_generations = 200;
  double tol = 1e-8;   // stop when std(energies) <= atol + tol * |mean(energies)|
  double atol = 0.0;
  double mutation_lo = 0.5;  // dither range for the differential weight
  double mutation_hi = 1.0;
  double recombination = 0.7;
  std::uint64_t seed = 0;
};

struct DeResult {
  std::vector<double> x;
  double fun = std::numeric_limits<double>::infinity();
  int generations = 0;
  std::size_t evaluations = 0;
  bool converged = false;
};

namespace detail {

// Uniform double in [0, 1) from the top 53 bits; portable across standard libraries.
inline double unit_uniform(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

inline std::size_t uniform_index(std::mt19937_64& rng, std::size_t n) {
  return static_cast<std::size_t>(unit_uniform(rng) * static_cast<double>(n));
}

}  // namespace detail

/// Minimise `f` over the box `bounds`. Evaluation order is fixed, so a given seed always
/// yields the same result.
template <class F>
DeResult differential_evolution(F&& f, std::span<const std::pair<double, double>> bounds, const DeConfig& cfg = {}) {
  const std::size_t dim = bounds.size();
  require(dim > 0, "differential evolution needs at least one parameter");
  require(cfg.population >= 5, "population must be at least 5");
  require(cfg.max_generations >= 1, "need at least one generation");
  require(cfg.recombination >= 0.0 && cfg.recombination <= 1.0, "recombination must be in [0, 1]");
  require(cfg.mutation_lo >= 0.0 && cfg.mutation_hi <= 2.0 && cfg.mutation_lo <= cfg.mutation_hi,
          "mutation range must lie in [0, 2]");
  for (const auto& [lo, hi] : bounds)
    require(std::isfinite(lo) && std::isfinite(hi) && lo < hi, "bounds must be finite with lo < hi");

  const std::size_t np = cfg.population;
  std::mt19937_64 rng(cfg.seed);
  auto scale = [&](std::size_t d, double u) { return bounds[d].first + u * (bounds[d].second - bounds[d].first); };

  // Latin hypercube initialisation in unit coordinates.
  std::vector<std::vector<double>> pop(np, std::vector<double>(dim));
  for (std::size_t d = 0; d < dim; ++d) {
    std::vector<std::size_t> perm(np);
    std::iota(perm.begin(), perm.end(), 0);
    for (std::size_t i = np - 1; i > 0; --i) std::swap(perm[i], perm[detail::uniform_index(rng, i + 1)]);
    for (std::size_t i = 0; i < np; ++i)
      pop[i][d] = (static_cast<double>(perm[i]) + detail::unit_uniform(rng)) / static_cast<double>(np);
  }

  DeResult res;
  std::vector<double> x(dim);
  auto eval = [&](const std::vector<double>& u) {
    for (std::size_t d = 0; d < dim; ++d) x[d] = scale(d, u[d]);
    ++res.evaluations;
    const double v = f(std::span<const double>(x));
    return std::isnan(v) ? std::numeric_limits<double>::infinity() : v;
  };

  std::vector<double> energy(np);
  for (std::size_t i = 0; i < np; ++i) energy[i] = eval(pop[i]);
  std::size_t best = static_cast<std::size_t>(std::min_element(energy.begin(), energy.end()) - energy.begin());

  std::vector<double> trial(dim);
  for (int g = 0; g < cfg.max_generations; ++g) {
    res.generations = g + 1;
    const double fw = cfg.mutation_lo + detail::unit_uniform(rng) * (cfg.mutation_hi - cfg.mutation_lo);
    for (std::size_t i = 0; i < np; ++i) {
      std::size_t r0 = best, r1, r2;
      if (cfg.strategy == DeStrategy::Rand1Bin) {
        do r0 = detail::uniform_index(rng, np); while (r0 == i);
      }
      do r1 = detail::uniform_index(rng, np); while (r1 == i || r1 == r0);
      do r2 = detail::uniform_index(rng, np); while (r2 == i || r2 == r1 || r2 == r0);
      const std::size_t forced = detail::uniform_index(rng, dim);
      for (std::size_t d = 0; d < dim; ++d) {
        const bool take = d == forced || detail::unit_uniform(rng) < cfg.recombination;
        trial[d] = take ? pop[r0][d] + fw * (pop[r1][d] - pop[r2][d]) : pop[i][d];
        if (trial[d] < 0.0 || trial[d] >= 1.0) trial[d] = detail::unit_uniform(rng);
      }
      const double e = eval(trial);
      if (e <= energy[i]) {
        pop[i] = trial;
        energy[i] = e;
        if (e <= energy[best]) best = i;
      }
    }
    double mean = 0.0;
    for (double e : energy) mean += e;
    mean /= static_cast<double>(np);
    double var = 0.0;
    for (double e : energy) var += (e - mean) * (e - mean);
    const double sd = std::sqrt(var / static_cast<double>(np));
    if (std::isfinite(mean) && sd <= cfg.atol + cfg.tol * std::abs(mean)) {
      res.converged = true;
      break;
    }
  }

  res.x.resize(dim);
  for (std::size_t d = 0; d < dim; ++d) res.x[d] = scale(d, pop[best][d]);
  res.fun = energy[best];
  return res;
}

}  // namespace lorats
