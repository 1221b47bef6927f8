#pragma once

// Small random instances shared by the unit and acceptance tests.

#include <cstdint>
#include <vector>

#include "rdbn/inference.hpp"
#include "rdbn/model.hpp"
#include "rdbn/network.hpp"
#include "rdbn/random.hpp"

namespace rdbn::testing {

inline DynamicNetwork random_network(std::int32_t n, std::int32_t steps,
                                     bool directed, double density,
                                     std::uint64_t seed) {
  RngStream rng(seed, stream_key(StreamFamily::test, 1000));
  std::vector<RawEdge> raw;
  for (std::int32_t t = 0; t < steps; ++t) {
    for (std::int32_t i = 0; i < n; ++i) {
      for (std::int32_t j = directed ? 0 : i + 1; j < n; ++j) {
        if (i != j && rng.uniform() < density) raw.push_back({t, i, j});
      }
    }
  }
  return make_network(n, steps, directed, raw);
}

inline Hyperparams small_hp(std::int32_t K, std::int32_t L, double m_shape = 3.0) {
  Hyperparams hp;
  hp.K = K;
  hp.L = L;
  hp.m_shape = m_shape;
  hp.iterations = 10;
  hp.burn_in = 5;
  return hp.resolved(0);
}

/// A valid state drawn by the sampler's own initialiser.
inline LatentState random_state(const TrainingView& view, std::int32_t K,
                                std::int32_t L, std::uint64_t seed,
                                SamplerOptions options = {}) {
  const Hyperparams hp = small_hp(K, L);
  GibbsSampler sampler(hp, seed, options);
  return sampler.initialise(view);
}

} // namespace rdbn::testing
