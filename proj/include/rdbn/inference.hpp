#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

#include "rdbn/model.hpp"
#include "rdbn/network.hpp"
#include "rdbn/random.hpp"

namespace rdbn {

/// Latent counts produced by one upward-backward pass. Per-cell arrays are
/// indexed (t, l, i, k) like LatentState::pi. Z at (t, l) holds, for every
/// beta-support entry of (t, l), the K counts sent from the receiver to that
/// source at (t, l-1); A at (t, l) does the same for gamma-support entries
/// and sources at (t-1, l).
struct PropagationWorkspace {
  std::int32_t N = 0;
  std::int32_t T = 0;
  std::int32_t K = 0;
  std::int32_t L = 0;

  std::vector<double> psi;
  std::vector<std::int64_t> m;
  std::vector<std::int64_t> y;
  std::vector<double> log_q;  // (t, l, i); 0 where no split happened
  std::vector<std::vector<std::int64_t>> Z;  // [t * L + l]
  std::vector<std::vector<std::int64_t>> A;  // [t * L + l]

  PropagationWorkspace() = default;
  explicit PropagationWorkspace(const LatentState& state);

  std::size_t cell(std::int32_t t, std::int32_t l, std::int32_t i) const {
    return (static_cast<std::size_t>(t) * L + l) * N + i;
  }
  std::span<std::int64_t> m_at(std::int32_t t, std::int32_t l, std::int32_t i) {
    return std::span<std::int64_t>(m).subspan(cell(t, l, i) * K, K);
  }
  std::span<const std::int64_t> m_at(std::int32_t t, std::int32_t l,
                                     std::int32_t i) const {
    return std::span<const std::int64_t>(m).subspan(cell(t, l, i) * K, K);
  }
  std::span<const std::int64_t> y_at(std::int32_t t, std::int32_t l,
                                     std::int32_t i) const {
    return std::span<const std::int64_t>(y).subspan(cell(t, l, i) * K, K);
  }
  std::span<const double> psi_at(std::int32_t t, std::int32_t l,
                                 std::int32_t i) const {
    return std::span<const double>(psi).subspan(cell(t, l, i) * K, K);
  }
  double q(std::int32_t t, std::int32_t l, std::int32_t i) const;
};

struct Auxiliary {
  std::vector<std::int64_t> y;
  double q = 1.0;
  double log_q = 0.0;
};

/// y_k ~ CRT(m_k, psi_k), then q ~ Beta(sum psi, sum m); q = 1 when there
/// are no counts.
Auxiliary draw_auxiliary(std::span<const std::int64_t> m,
                         std::span<const double> psi, RngStream& rng);

struct CountSplit {
  std::vector<std::int64_t> to_lower;     // per beta-support entry of (t, l, i)
  std::vector<std::int64_t> to_previous;  // per gamma-support entry of (t, l, i)
};

/// Splits y counts of community k at (t, l, i) over its parents in
/// proportion to beta * pi(l-1) and gamma * pi(t-1). psi_k must equal the
/// weight total within 1e-9 (relative).
CountSplit distribute_counts(const LatentState& state, std::int32_t i,
                             std::int32_t k, std::int32_t t, std::int32_t l,
                             std::int64_t y, double psi_k, RngStream& rng,
                             bool temporal = true);

struct SamplerOptions {
  std::int32_t threads = 1;
  /// false drops every cross-time (gamma / A) code path.
  bool temporal = true;
  double rate_floor = 1e-12;
  /// Added to the beta posterior shape. Only for sampler-validation tests.
  double beta_shape_offset = 0.0;
};

struct SamplerCounters {
  std::int64_t rate_floor_hits = 0;
  std::int64_t concentration_fallbacks = 0;
  std::int64_t window_expansions = 0;
};

/// Unnormalised conditional of one latent count x:
///   Poisson(x; prior_rate) * x^links * exp(-x * exposure)
/// evaluated on [0, window]. Entries below the feasible minimum are zero.
std::vector<double> latent_count_pmf(double prior_rate, std::int64_t links,
                                     double exposure, std::int64_t window);

/// Gibbs sampler over a LatentState. Every draw uses a substream keyed by
/// (variable family, index, time, layer, iteration), so results do not depend
/// on the thread count.
class GibbsSampler {
public:
  GibbsSampler(const Hyperparams& hp, std::uint64_t seed,
               SamplerOptions options = {});

  const Hyperparams& hyperparams() const { return hp_; }
  const SamplerOptions& options() const { return options_; }
  std::uint64_t seed() const { return seed_; }
  const SamplerCounters& counters() const { return counters_; }

  /// Prior draw of every variable on the supports implied by the view, then
  /// C given X.
  LatentState initialise(const TrainingView& view);

  PropagationWorkspace upward_backward_pass(const LatentState& state,
                                            std::uint64_t iteration);
  void sample_pi(LatentState& state, const PropagationWorkspace& ws,
                 std::uint64_t iteration);
  void sample_beta_gamma(LatentState& state, const PropagationWorkspace& ws,
                         std::uint64_t iteration);
  /// Coefficients feeding each (t, l) cell followed by that cell's
  /// memberships, forward in time and upward through layers.
  void forward_downward_sweep(LatentState& state,
                              const PropagationWorkspace& ws,
                              std::uint64_t iteration);
  void sample_dc(LatentState& state, std::uint64_t iteration);
  void sample_X(LatentState& state, const TrainingView& view,
                std::uint64_t iteration);
  void sample_C(LatentState& state, const TrainingView& view,
                std::uint64_t iteration);
  void sample_lambda(LatentState& state, const TrainingView& view,
                     std::uint64_t iteration);
  void sample_M(LatentState& state, std::uint64_t iteration);

  void iterate(LatentState& state, const TrainingView& view,
               std::uint64_t iteration);

  /// Single-cell conditionals: pi of node i at (t, l), and the coefficients
  /// feeding that cell. Exposed for conjugacy checks on frozen parents.
  void sample_pi_cell(LatentState& state, const PropagationWorkspace& ws,
                      std::int32_t t, std::int32_t l, std::int32_t i,
                      std::uint64_t iteration, std::int64_t& fallbacks);
  void sample_coefficients_cell(LatentState& state,
                                const PropagationWorkspace& ws, std::int32_t t,
                                std::int32_t l, std::int32_t i,
                                std::uint64_t iteration);

private:
  Hyperparams hp_;
  std::uint64_t seed_;
  SamplerOptions options_;
  SamplerCounters counters_;
};

/// Sum over training dyads at t of X_i X_j^T (K x K, row-major): the Poisson
/// exposure of each compatibility cell.
std::vector<std::int64_t> dyad_exposure(const LatentState& state,
                                        const TrainingView& view,
                                        std::int32_t t);

double training_log_likelihood(const LatentState& state,
                               const TrainingView& view);
double heldout_log_likelihood(const LatentState& state,
                              const HoldoutMask& mask);

/// Mean over all beta (resp. gamma) entries; NaN when there are none.
double mean_beta(const LatentState& state);
double mean_gamma(const LatentState& state);

/// Running posterior mean of exp(-rate) for every held-out entry.
struct PosteriorAccumulator {
  std::vector<double> survival_sum;
  std::int64_t n_samples = 0;

  void add(const LatentState& state, const HoldoutMask& mask);
};

struct IterationRecord {
  std::int64_t iteration = 0;
  double seconds = 0.0;
  double train_loglik = 0.0;
  double M = 0.0;
  double mean_beta = 0.0;
  double mean_gamma = 0.0;
};

struct FitOptions {
  SamplerOptions sampler;
  /// Checkpoint directory; nothing is written when empty.
  std::filesystem::path checkpoint_dir;
  std::int32_t checkpoint_every = 0;
  bool resume = false;
  std::function<void(const IterationRecord&)> on_iteration;
};

struct FitResult {
  LatentState state;
  PosteriorAccumulator posterior;
  SamplerCounters counters;
  std::int64_t first_iteration = 1;
};

/// Runs hp.iterations Gibbs iterations (1-based), retaining the held-out
/// survival probabilities of every iteration after hp.burn_in.
FitResult fit(const TrainingView& view, const HoldoutMask& mask,
              const Hyperparams& hp, const FitOptions& options = {});

} // namespace rdbn
