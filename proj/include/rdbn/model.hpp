#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "rdbn/network.hpp"
#include "rdbn/random.hpp"

namespace rdbn {

/// Model hyperparameters. Per-layer vectors are indexed by the receiving
/// layer (0-based); empty vectors take their defaults in resolved().
struct Hyperparams {
  std::int32_t K = 10;
  std::int32_t L = 3;
  std::vector<double> alpha;  // default 0.1 per community
  std::vector<double> c_c;    // diagonal coefficient shape, default 1
  std::vector<double> c_u;    // off-diagonal coefficient shape, default 1
  double d_c = 1.0;           // coefficient rate (scale 1/d_c)
  double lambda1 = 1.0;       // compatibility prior shape
  double lambda0 = 1.0;       // compatibility prior rate
  std::optional<double> m_shape;  // prior shape of M, default N
  std::int32_t iterations = 3000;
  std::int32_t burn_in = 1500;
  std::uint64_t seed = 1;
  bool resample_dc = false;

  /// Copy with every defaulted field filled in for a network of n_nodes.
  Hyperparams resolved(std::int32_t n_nodes) const;
  /// Throws ParameterError on any violated invariant. Expects resolved().
  void validate() const;
};

/// Receiver-major sparse support of propagation coefficients. Row i lists
/// the source nodes i' with a coefficient i' -> i; the diagonal entry, when
/// present, is first.
struct SupportGraph {
  std::int32_t n_nodes = 0;
  std::vector<std::int64_t> offsets;
  std::vector<std::int32_t> sources;

  static SupportGraph empty(std::int32_t n_nodes);
  static SupportGraph diagonal(std::int32_t n_nodes);
  /// Diagonal plus every source of a positive link into each receiver.
  /// Undirected links contribute both directions.
  static SupportGraph from_links(std::int32_t n_nodes,
                                 std::span<const Dyad> links, bool directed);

  std::int64_t size() const { return static_cast<std::int64_t>(sources.size()); }
  std::int64_t row_begin(std::int32_t i) const { return offsets[i]; }
  std::int64_t row_end(std::int32_t i) const { return offsets[i + 1]; }
  std::span<const std::int32_t> row(std::int32_t i) const {
    return std::span<const std::int32_t>(sources).subspan(
        offsets[i], offsets[i + 1] - offsets[i]);
  }
  bool contains(std::int32_t source, std::int32_t receiver) const;
};

using SupportPtr = std::shared_ptr<const SupportGraph>;

/// Every model variable. Layers and times are 0-based. Coefficients are
/// stored by receiving (time, layer): beta at (t, l) feeds layer l from layer
/// l-1 at time t (empty for l = 0); gamma at (t, l) feeds time t from time
/// t-1 within layer l (empty for t = 0).
struct LatentState {
  std::int32_t N = 0;
  std::int32_t T = 0;
  std::int32_t K = 0;
  std::int32_t L = 0;
  bool directed = true;

  std::vector<SupportPtr> beta_support;   // [t]
  std::vector<SupportPtr> gamma_support;  // [t], empty graph at t = 0

  std::vector<double> pi;                    // (t, l, i, k)
  std::vector<std::vector<double>> beta;     // [t * L + l]
  std::vector<std::vector<double>> gamma;    // [t * L + l]
  std::vector<std::int64_t> X;               // (t, i, k)
  std::vector<std::vector<std::int64_t>> C;  // [t], K*K block per training link
  std::vector<double> lambda;                // K x K, row-major
  double M = 1.0;
  double d_c = 1.0;

  LatentState() = default;
  LatentState(std::int32_t n_nodes, std::int32_t n_steps, std::int32_t K,
              std::int32_t L, bool directed);

  /// Installs supports and sizes the coefficient arrays to match.
  void set_supports(std::vector<SupportPtr> beta_support,
                    std::vector<SupportPtr> gamma_support);

  std::size_t slot(std::int32_t t, std::int32_t l) const {
    return static_cast<std::size_t>(t) * L + l;
  }
  std::span<double> pi_at(std::int32_t t, std::int32_t l, std::int32_t i) {
    return std::span<double>(pi).subspan(
        ((static_cast<std::size_t>(t) * L + l) * N + i) * K, K);
  }
  std::span<const double> pi_at(std::int32_t t, std::int32_t l,
                                std::int32_t i) const {
    return std::span<const double>(pi).subspan(
        ((static_cast<std::size_t>(t) * L + l) * N + i) * K, K);
  }
  std::span<std::int64_t> x_at(std::int32_t t, std::int32_t i) {
    return std::span<std::int64_t>(X).subspan(
        (static_cast<std::size_t>(t) * N + i) * K, K);
  }
  std::span<const std::int64_t> x_at(std::int32_t t, std::int32_t i) const {
    return std::span<const std::int64_t>(X).subspan(
        (static_cast<std::size_t>(t) * N + i) * K, K);
  }
  double lambda_at(std::int32_t k1, std::int32_t k2) const {
    return lambda[static_cast<std::size_t>(k1) * K + k2];
  }

  /// Throws NumericalError naming the first violated invariant. When a view
  /// is given, C is checked against its positive links.
  void check_invariants(const TrainingView* view = nullptr) const;
};

/// Concentration contributed by lower-layer parents at the same time and
/// same-layer parents at the previous time.
std::vector<double> compute_psi(const LatentState& state, std::int32_t i,
                                std::int32_t t, std::int32_t l);
void compute_psi(const LatentState& state, std::int32_t i, std::int32_t t,
                 std::int32_t l, std::span<double> out);

/// Adds alpha at (t, l) = (0, 0) only. An identically zero result is replaced
/// by the symmetric vector 1/K; *fallback is set when that happens.
std::vector<double> dirichlet_concentration(std::span<const double> psi,
                                            std::span<const double> alpha,
                                            std::int32_t t, std::int32_t l,
                                            bool* fallback = nullptr);

double link_rate(const LatentState& state, std::int32_t i, std::int32_t j,
                 std::int32_t t);
double link_prob(double rate);

/// Draws coefficients on the installed supports and memberships for every
/// (layer, node) at time t, reading already-drawn memberships at t-1.
/// Returns the number of zero-concentration fallbacks.
std::int64_t draw_prior_step(LatentState& state, const Hyperparams& hp,
                             std::int32_t t, std::uint64_t seed,
                             StreamFamily family);

/// X at time t from Poisson(M) totals split multinomially over the top-layer
/// membership.
void draw_counts_step(LatentState& state, std::int32_t t, std::uint64_t seed,
                      StreamFamily family, std::uint64_t iteration = 0);

/// Draws C and R for every dyad at time t given X and Lambda. Links and C
/// blocks come out in likelihood orientation, sorted.
struct StepLinks {
  std::vector<Dyad> links;
  std::vector<std::int64_t> C;
};
StepLinks draw_links_step(const LatentState& state, std::int32_t t,
                          std::uint64_t seed, StreamFamily family,
                          std::uint64_t iteration = 0);

struct SimulationOptions {
  std::optional<std::vector<double>> lambda;  // fixed K x K compatibility
  std::optional<double> M;                    // fixed count scale
  /// Fixed supports per step. When empty, beta at t uses links at t-1
  /// (diagonal only at t = 0) and gamma at t uses links at t-1.
  std::vector<SupportPtr> beta_support;
  std::vector<SupportPtr> gamma_support;
};

struct Simulation {
  DynamicNetwork network;
  LatentState state;
};

Simulation forward_simulate(const Hyperparams& hp, std::int32_t n_nodes,
                            std::int32_t n_steps, bool directed,
                            const SimulationOptions& options,
                            std::uint64_t seed);

} // namespace rdbn
