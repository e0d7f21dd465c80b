#pragma once

// Differential evolution, rand/1/bin with elitist selection. The RNG stream
// is split per (generation, individual), so population evaluation can run in
// parallel while producing bit-identical trajectories to a serial run.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <vector>

#include "ratemill/parallel.hpp"
#include "ratemill/rng.hpp"

namespace ratemill::de {

struct DeParams {
  int population = 0;  // 0: 15 * dim
  double weight = 0.8;
  double crossover = 0.9;
  int max_generations = 500;
  int stagnation_limit = 50;
  unsigned threads = 1;
};

struct DeResult {
  std::vector<double> best;
  double best_value = 0.0;
  int generations = 0;
};

// objective(x) must be pure; init_hint, when nonempty, seeds individual 0.
inline DeResult optimize(std::size_t dim, double lower, double upper,
                         const std::function<double(const std::vector<double>&)>& objective,
                         const DeParams& params, std::uint64_t seed,
                         const std::vector<double>& init_hint = {}) {
  if (dim == 0) throw std::invalid_argument("de: zero-dimensional problem");
  if (!(upper > lower)) throw std::invalid_argument("de: empty box");
  const int np = params.population > 0 ? params.population
                                       : std::max(15, 15 * static_cast<int>(dim));
  if (np < 4) throw std::invalid_argument("de: population must be at least 4");

  std::vector<std::vector<double>> pop(static_cast<std::size_t>(np),
                                       std::vector<double>(dim));
  std::vector<double> fitness(static_cast<std::size_t>(np));

  for (int i = 0; i < np; ++i) {
    Rng rng = Rng::substream(seed, "de-init", static_cast<std::uint64_t>(i));
    auto& x = pop[static_cast<std::size_t>(i)];
    if (i == 0 && init_hint.size() == dim) {
      x = init_hint;
      for (double& v : x) v = std::clamp(v, lower, upper);
    } else {
      for (double& v : x) v = rng.uniform(lower, upper);
    }
  }
  parallel_for(static_cast<std::size_t>(np), params.threads,
               [&](std::size_t b, std::size_t e) {
                 for (std::size_t i = b; i < e; ++i) fitness[i] = objective(pop[i]);
               });

  auto best_index = [&]() {
    std::size_t bi = 0;
    for (std::size_t i = 1; i < pop.size(); ++i)
      if (fitness[i] < fitness[bi]) bi = i;
    return bi;
  };

  double best_seen = fitness[best_index()];
  int stagnant = 0;
  int gen = 0;
  std::vector<std::vector<double>> trials(static_cast<std::size_t>(np),
                                          std::vector<double>(dim));
  std::vector<double> trial_fitness(static_cast<std::size_t>(np));

  for (gen = 0; gen < params.max_generations; ++gen) {
    // Build all trial vectors serially from per-individual substreams, then
    // evaluate in parallel.
    for (int i = 0; i < np; ++i) {
      Rng rng = Rng::substream(seed, "de-gen",
                               static_cast<std::uint64_t>(gen) * static_cast<std::uint64_t>(np) +
                                   static_cast<std::uint64_t>(i));
      int r1, r2, r3;
      do { r1 = static_cast<int>(rng.uniform_int(0, np - 1)); } while (r1 == i);
      do { r2 = static_cast<int>(rng.uniform_int(0, np - 1)); } while (r2 == i || r2 == r1);
      do {
        r3 = static_cast<int>(rng.uniform_int(0, np - 1));
      } while (r3 == i || r3 == r1 || r3 == r2);

      const auto& a = pop[static_cast<std::size_t>(r1)];
      const auto& b = pop[static_cast<std::size_t>(r2)];
      const auto& c = pop[static_cast<std::size_t>(r3)];
      const auto& target = pop[static_cast<std::size_t>(i)];
      auto& trial = trials[static_cast<std::size_t>(i)];
      const std::size_t j_rand = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(dim) - 1));
      for (std::size_t j = 0; j < dim; ++j) {
        if (j == j_rand || rng.uniform01() < params.crossover) {
          trial[j] = std::clamp(a[j] + params.weight * (b[j] - c[j]), lower, upper);
        } else {
          trial[j] = target[j];
        }
      }
    }
    parallel_for(static_cast<std::size_t>(np), params.threads,
                 [&](std::size_t b, std::size_t e) {
                   for (std::size_t i = b; i < e; ++i) trial_fitness[i] = objective(trials[i]);
                 });
    for (int i = 0; i < np; ++i) {
      if (trial_fitness[static_cast<std::size_t>(i)] <= fitness[static_cast<std::size_t>(i)]) {
        pop[static_cast<std::size_t>(i)].swap(trials[static_cast<std::size_t>(i)]);
        fitness[static_cast<std::size_t>(i)] = trial_fitness[static_cast<std::size_t>(i)];
      }
    }
    const double gen_best = fitness[best_index()];
    if (gen_best < best_seen - 1e-15) {
      best_seen = gen_best;
      stagnant = 0;
    } else {
      ++stagnant;
      if (stagnant >= params.stagnation_limit) {
        ++gen;
        break;
      }
    }
  }

  const std::size_t bi = best_index();
  return DeResult{pop[bi], fitness[bi], gen};
}

}  // namespace ratemill::de
