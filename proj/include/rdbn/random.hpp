#pragma once

#include <cstdint>
#include <limits>
#include <random>
#include <span>
#include <vector>

namespace rdbn {

/// Variable families used to key independent substreams. Values are part of
/// the reproducibility contract: changing them changes every trajectory.
enum class StreamFamily : std::uint64_t {
  holdout = 1,
  initialise = 2,
  simulate = 3,
  propagate = 4,
  coefficient = 5,
  membership = 6,
  latent_counts = 7,
  link_counts = 8,
  compatibility = 9,
  scale = 10,
  coefficient_rate = 11,
  geweke = 12,
  test = 99,
};

std::uint64_t splitmix64(std::uint64_t x);

/// Stable hash of (family, index, time, layer, iteration) used as a stream id.
std::uint64_t stream_key(StreamFamily family, std::uint64_t index,
                         std::uint64_t time = 0, std::uint64_t layer = 0,
                         std::uint64_t iteration = 0);

/// A single-owner random stream. Identical (seed, stream_id) pairs produce
/// identical draw sequences; distinct stream ids are decorrelated through
/// splitmix64 before seeding the engine.
class RngStream {
public:
  using result_type = std::uint64_t;

  RngStream(std::uint64_t seed, std::uint64_t stream_id);

  static constexpr result_type min() { return std::mt19937_64::min(); }
  static constexpr result_type max() { return std::mt19937_64::max(); }
  result_type operator()() { return engine_(); }

  /// Uniform draw on the open interval (0, 1).
  double uniform();

  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream_id() const { return stream_id_; }

private:
  std::uint64_t seed_;
  std::uint64_t stream_id_;
  std::mt19937_64 engine_;
};

// All Gamma draws use the shape/scale convention: E = shape * scale.
double sample_gamma(double shape, double scale, RngStream& rng);

/// log of a Gamma(shape, 1) draw; stays finite for very small shapes where
/// the draw itself would underflow to zero.
double sample_log_gamma(double shape, RngStream& rng);

/// Concentrations must be non-negative with a positive sum; zero entries
/// yield exact zeros in the output.
std::vector<double> sample_dirichlet(std::span<const double> concentration,
                                     RngStream& rng);
void sample_dirichlet(std::span<const double> concentration,
                      std::span<double> out, RngStream& rng);

double sample_beta(double a, double b, RngStream& rng);
/// log of a Beta(a, b) draw, computed from log-gamma draws.
double sample_log_beta(double a, double b, RngStream& rng);

/// probs must sum to 1 within 1e-9.
std::vector<std::int64_t> sample_multinomial(std::int64_t n,
                                             std::span<const double> probs,
                                             RngStream& rng);

/// Multinomial split of n over unnormalised non-negative weights with the
/// given (positive) total. Results are written to out, which must have the
/// same length as weights.
void sample_multinomial_weighted(std::int64_t n,
                                 std::span<const double> weights, double total,
                                 std::span<std::int64_t> out, RngStream& rng);

/// Chinese restaurant table count: sum over j < customers of
/// Bernoulli(concentration / (concentration + j)).
std::int64_t sample_crt(std::int64_t customers, double concentration,
                        RngStream& rng);

/// Poisson(rate) conditioned on being positive.
std::int64_t sample_ztp(double rate, RngStream& rng);

std::int64_t sample_poisson(double rate, RngStream& rng);

std::size_t sample_categorical(std::span<const double> weights,
                               RngStream& rng);

} // namespace rdbn
