#include "rdbn/random.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "rdbn/errors.hpp"

namespace rdbn {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t stream_key(StreamFamily family, std::uint64_t index,
                         std::uint64_t time, std::uint64_t layer,
                         std::uint64_t iteration) {
  std::uint64_t h = splitmix64(static_cast<std::uint64_t>(family));
  h = splitmix64(h ^ index);
  h = splitmix64(h ^ time);
  h = splitmix64(h ^ layer);
  return splitmix64(h ^ iteration);
}

RngStream::RngStream(std::uint64_t seed, std::uint64_t stream_id)
    : seed_(seed), stream_id_(stream_id),
      engine_(splitmix64(splitmix64(seed) ^ stream_id)) {}

double RngStream::uniform() {
  return (static_cast<double>(engine_() >> 11) + 0.5) * 0x1.0p-53;
}

double sample_gamma(double shape, double scale, RngStream& rng) {
  if (!(shape > 0.0) || !(scale > 0.0) || !std::isfinite(shape) ||
      !std::isfinite(scale)) {
    throw ParameterError("sample_gamma: shape and scale must be positive, got "
                         "shape=" + std::to_string(shape) +
                         " scale=" + std::to_string(scale));
  }
  if (shape >= 1.0) {
    std::gamma_distribution<double> dist(shape, 1.0);
    return dist(rng) * scale;
  }
  return std::exp(sample_log_gamma(shape, rng)) * scale;
}

double sample_log_gamma(double shape, RngStream& rng) {
  if (!(shape > 0.0) || !std::isfinite(shape)) {
    throw ParameterError("sample_log_gamma: shape must be positive, got " +
                         std::to_string(shape));
  }
  if (shape >= 1.0) {
    std::gamma_distribution<double> dist(shape, 1.0);
    return std::log(dist(rng));
  }
  // Gamma(a) = Gamma(a + 1) * U^(1/a)
  std::gamma_distribution<double> dist(shape + 1.0, 1.0);
  const double g = dist(rng);
  return std::log(g) + std::log(rng.uniform()) / shape;
}

void sample_dirichlet(std::span<const double> concentration,
                      std::span<double> out, RngStream& rng) {
  if (concentration.empty() || out.size() != concentration.size()) {
    throw ParameterError("sample_dirichlet: empty or mismatched concentration");
  }
  double total = 0.0;
  for (double c : concentration) {
    if (!(c >= 0.0) || !std::isfinite(c)) {
      throw ParameterError("sample_dirichlet: concentration entries must be "
                           "finite and non-negative");
    }
    total += c;
  }
  if (!(total > 0.0)) {
    throw NumericalError("sample_dirichlet: all-zero concentration");
  }
  double top = -std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < concentration.size(); ++k) {
    out[k] = concentration[k] > 0.0
                 ? sample_log_gamma(concentration[k], rng)
                 : -std::numeric_limits<double>::infinity();
    top = std::max(top, out[k]);
  }
  double sum = 0.0;
  for (double& v : out) {
    v = std::exp(v - top);
    sum += v;
  }
  for (double& v : out) v /= sum;
}

std::vector<double> sample_dirichlet(std::span<const double> concentration,
                                     RngStream& rng) {
  std::vector<double> out(concentration.size());
  sample_dirichlet(concentration, out, rng);
  return out;
}

double sample_log_beta(double a, double b, RngStream& rng) {
  if (!(a > 0.0) || !(b > 0.0)) {
    throw ParameterError("sample_beta: parameters must be positive, got a=" +
                         std::to_string(a) + " b=" + std::to_string(b));
  }
  const double la = sample_log_gamma(a, rng);
  const double lb = sample_log_gamma(b, rng);
  const double top = std::max(la, lb);
  return la - (top + std::log(std::exp(la - top) + std::exp(lb - top)));
}

double sample_beta(double a, double b, RngStream& rng) {
  return std::exp(sample_log_beta(a, b, rng));
}

void sample_multinomial_weighted(std::int64_t n,
                                 std::span<const double> weights, double total,
                                 std::span<std::int64_t> out, RngStream& rng) {
  if (n < 0) {
    throw ParameterError("sample_multinomial: negative trial count");
  }
  if (out.size() != weights.size()) {
    throw ParameterError("sample_multinomial: output size mismatch");
  }
  std::fill(out.begin(), out.end(), 0);
  if (n == 0) return;
  if (weights.empty() || !(total > 0.0)) {
    throw ParameterError("sample_multinomial: weights must have positive sum");
  }
  std::int64_t remaining = n;
  double mass_left = total;
  const std::size_t last = weights.size() - 1;
  for (std::size_t k = 0; k < last && remaining > 0; ++k) {
    if (weights[k] <= 0.0) continue;
    const double p = std::clamp(weights[k] / mass_left, 0.0, 1.0);
    if (p >= 1.0) {
      out[k] = remaining;
      remaining = 0;
      break;
    }
    std::binomial_distribution<std::int64_t> dist(remaining, p);
    out[k] = dist(rng);
    remaining -= out[k];
    mass_left -= weights[k];
  }
  if (remaining > 0) {
    // Rounding can exhaust mass_left early; the remaining trials go to the
    // last category with positive weight.
    std::size_t k = last;
    while (k > 0 && weights[k] <= 0.0) --k;
    out[k] += remaining;
  }
}

std::vector<std::int64_t> sample_multinomial(std::int64_t n,
                                             std::span<const double> probs,
                                             RngStream& rng) {
  if (n < 0) {
    throw ParameterError("sample_multinomial: negative trial count");
  }
  if (probs.empty()) {
    throw ParameterError("sample_multinomial: empty probability vector");
  }
  double total = 0.0;
  for (double p : probs) {
    if (!(p >= 0.0)) {
      throw ParameterError("sample_multinomial: negative probability");
    }
    total += p;
  }
  if (std::abs(total - 1.0) > 1e-9) {
    throw ParameterError("sample_multinomial: probabilities sum to " +
                         std::to_string(total));
  }
  std::vector<std::int64_t> out(probs.size(), 0);
  sample_multinomial_weighted(n, probs, total, out, rng);
  return out;
}

std::int64_t sample_crt(std::int64_t customers, double concentration,
                        RngStream& rng) {
  if (customers < 0) {
    throw ParameterError("sample_crt: negative customer count");
  }
  if (customers == 0) return 0;
  if (!(concentration > 0.0) || !std::isfinite(concentration)) {
    throw ParameterError("sample_crt: concentration must be positive, got " +
                         std::to_string(concentration));
  }
  std::int64_t tables = 1;
  for (std::int64_t j = 1; j < customers; ++j) {
    if (rng.uniform() * (concentration + static_cast<double>(j)) <
        concentration) {
      ++tables;
    }
  }
  return tables;
}

std::int64_t sample_poisson(double rate, RngStream& rng) {
  if (!(rate >= 0.0) || !std::isfinite(rate)) {
    throw ParameterError("sample_poisson: rate must be finite and "
                         "non-negative, got " + std::to_string(rate));
  }
  if (rate == 0.0) return 0;
  std::poisson_distribution<std::int64_t> dist(rate);
  return dist(rng);
}

std::int64_t sample_ztp(double rate, RngStream& rng) {
  if (!(rate > 0.0) || !std::isfinite(rate)) {
    throw ParameterError("sample_ztp: rate must be positive, got " +
                         std::to_string(rate));
  }
  if (rate >= 1.0) {
    std::poisson_distribution<std::int64_t> dist(rate);
    for (;;) {
      const std::int64_t k = dist(rng);
      if (k > 0) return k;
    }
  }
  // Inversion on the truncated pmf p(k) = e^-r r^k / (k! (1 - e^-r)).
  const double target = rng.uniform() * -std::expm1(-rate);
  double p = std::exp(-rate) * rate;
  double cumulative = p;
  std::int64_t k = 1;
  while (cumulative < target) {
    ++k;
    p *= rate / static_cast<double>(k);
    if (p == 0.0) break;
    cumulative += p;
  }
  return k;
}

std::size_t sample_categorical(std::span<const double> weights,
                               RngStream& rng) {
  double total = 0.0;
  for (double w : weights) {
    if (!(w >= 0.0)) {
      throw ParameterError("sample_categorical: negative weight");
    }
    total += w;
  }
  if (weights.empty() || !(total > 0.0) || !std::isfinite(total)) {
    throw ParameterError("sample_categorical: weights must have a positive, "
                         "finite sum");
  }
  const double target = rng.uniform() * total;
  double cumulative = 0.0;
  std::size_t last_positive = 0;
  for (std::size_t k = 0; k < weights.size(); ++k) {
    if (weights[k] <= 0.0) continue;
    cumulative += weights[k];
    last_positive = k;
    if (target < cumulative) return k;
  }
  return last_positive;
}

} // namespace rdbn
