#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "rdbn/inference.hpp"
#include "rdbn/model.hpp"

namespace rdbn {

struct GewekeConfig {
  std::int32_t n_rounds = 5000;
  std::int32_t n_nodes = 5;
  std::int32_t n_steps = 2;
  bool directed = true;
  double z_threshold = 4.0;
  /// Gibbs + re-simulation steps per round; each round is a fresh chain.
  std::int32_t chain_length = 10;
  /// Any of: pi0_layer0, mean_beta, mean_gamma, lambda00, M.
  std::vector<std::string> statistics = {"pi0_layer0", "mean_beta",
                                         "mean_gamma", "lambda00", "M"};
  SamplerOptions sampler;
};

struct GewekeStatistic {
  std::string name;
  double forward_mean = 0.0;
  double forward_se = 0.0;
  double chain_mean = 0.0;
  double chain_se = 0.0;
  double z = 0.0;
};

struct GewekeReport {
  std::vector<GewekeStatistic> statistics;
  double max_abs_z() const;
  bool passed(double threshold) const { return max_abs_z() < threshold; }
};

std::vector<std::string> geweke_statistic_names();

/// Marginal-conditional simulator against successive-conditional simulator
/// (one Gibbs iteration, then fresh links given X and Lambda). Each round
/// starts its own chain from a prior draw and contributes the mean statistic
/// over chain_length steps. Supports are held fixed: a ring plus the
/// diagonal at every step.
GewekeReport geweke_check(const Hyperparams& hp, const GewekeConfig& config,
                          std::uint64_t seed);

void save_geweke_report(const GewekeReport& report,
                        const std::filesystem::path& path);

/// Rows (node, t) for node in [node_begin, node_end), columns k0..k{K-1}.
void export_membership_heatmap(const LatentState& state, std::int32_t layer,
                               std::int32_t node_begin, std::int32_t node_end,
                               const std::filesystem::path& path);

struct HeatmapRow {
  std::int32_t node = 0;
  std::int32_t t = 0;
  std::vector<double> values;
};
std::vector<HeatmapRow> load_membership_heatmap(
    const std::filesystem::path& path);

struct PropagationSummaryRow {
  std::int32_t layer = 0;
  std::int32_t t = 0;
  double mean_beta = 0.0;   // NaN when unsupported
  double mean_gamma = 0.0;  // NaN when unsupported
  double ratio = 0.0;       // NaN unless both are present
};
std::vector<PropagationSummaryRow> propagation_summary(const LatentState& state);
/// Header `l,t,mean_beta,mean_gamma,ratio`; missing values written as NA.
void export_propagation_summary(const LatentState& state,
                                const std::filesystem::path& path);

} // namespace rdbn
