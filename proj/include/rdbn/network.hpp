#pragma once

#include <compare>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace rdbn {

/// Ordered node pair (sender i, receiver j).
struct Dyad {
  std::int32_t i = 0;
  std::int32_t j = 0;
  auto operator<=>(const Dyad&) const = default;
};

/// Timestamped binary relations over a fixed node set. Edge lists are sorted
/// and duplicate-free; undirected networks store both orientations.
struct DynamicNetwork {
  std::int32_t n_nodes = 0;
  std::int32_t n_steps = 0;
  bool directed = true;
  std::vector<std::vector<Dyad>> edges;

  bool has_edge(std::int32_t t, std::int32_t i, std::int32_t j) const;
  /// Number of positive links at step t (unordered pairs when undirected).
  std::int64_t link_count(std::int32_t t) const;
  /// Number of candidate dyads per step: N(N-1), or N(N-1)/2 if undirected.
  std::int64_t dyad_count() const;
  /// Likelihood orientation of a dyad: identity when directed, (min, max)
  /// otherwise.
  Dyad orient(std::int32_t i, std::int32_t j) const;
};

/// Builds a validated network from raw (t, i, j) triples. Duplicates are
/// dropped; undirected inputs are closed under reversal.
struct RawEdge {
  std::int32_t t = 0;
  std::int32_t i = 0;
  std::int32_t j = 0;
};
DynamicNetwork make_network(std::int32_t n_nodes, std::int32_t n_steps,
                            bool directed, std::span<const RawEdge> edges);

/// Edge-list format: first line `N T directed|undirected`, then `t i j` per
/// line, 0-based, single-space separated.
DynamicNetwork parse_edge_list(std::istream& in,
                               const std::string& source_name = "<stream>");
DynamicNetwork load_edge_list(const std::filesystem::path& path);
void write_edge_list(const DynamicNetwork& net, std::ostream& out);
void save_edge_list(const DynamicNetwork& net,
                    const std::filesystem::path& path);

struct HoldoutEntry {
  std::int32_t t = 0;
  Dyad dyad;
  int label = 0;
};

/// Dyad-time entries hidden from training. Entries are sorted by (t, i, j)
/// and use the likelihood orientation of the network.
struct HoldoutMask {
  std::vector<HoldoutEntry> entries;
  double fraction = 0.0;
};

/// Observed data as seen by the sampler: positive training links and held-out
/// dyads per step, both in likelihood orientation, plus per-node indexes of
/// held-out partners. Held-out dyads are neither links nor non-links.
class TrainingView {
public:
  TrainingView() = default;
  explicit TrainingView(const DynamicNetwork& net);
  TrainingView(const DynamicNetwork& net, const HoldoutMask& mask);
  /// Direct construction from oriented positive links, with no held-out data.
  TrainingView(std::int32_t n_nodes, std::int32_t n_steps, bool directed,
               std::vector<std::vector<Dyad>> links);

  std::int32_t n_nodes() const { return n_nodes_; }
  std::int32_t n_steps() const { return n_steps_; }
  bool directed() const { return directed_; }

  std::span<const Dyad> links(std::int32_t t) const { return links_[t]; }
  std::span<const Dyad> heldout(std::int32_t t) const { return heldout_[t]; }
  /// Partners j with (i, j) held out at t.
  std::span<const std::int32_t> heldout_out(std::int32_t t,
                                            std::int32_t i) const;
  /// Partners j with (j, i) held out at t.
  std::span<const std::int32_t> heldout_in(std::int32_t t,
                                           std::int32_t i) const;
  std::int64_t total_links() const;

private:
  void index_heldout();

  std::int32_t n_nodes_ = 0;
  std::int32_t n_steps_ = 0;
  bool directed_ = true;
  std::vector<std::vector<Dyad>> links_;
  std::vector<std::vector<Dyad>> heldout_;
  std::vector<std::vector<std::int64_t>> out_offsets_;
  std::vector<std::vector<std::int32_t>> out_partners_;
  std::vector<std::vector<std::int64_t>> in_offsets_;
  std::vector<std::vector<std::int32_t>> in_partners_;
};

struct HoldoutSplit {
  TrainingView training;
  HoldoutMask mask;
};

/// Samples round(fraction * dyad_count()) dyads uniformly per step, links and
/// non-links alike.
HoldoutSplit split_holdout(const DynamicNetwork& net, double fraction,
                           std::uint64_t seed);

void save_mask(const HoldoutMask& mask, const std::filesystem::path& path);
HoldoutMask load_mask(const std::filesystem::path& path, double fraction = 0.0);

struct DatasetStats {
  std::int32_t n_nodes = 0;
  std::int32_t n_steps = 0;
  std::int64_t n_links = 0;
  /// 100 * N_E / (candidate dyads * T).
  double sparsity_percent = 0.0;
  /// 100 * N_E / (N^2 T), counting self-pairs in the denominator.
  double sparsity_percent_square = 0.0;
};

DatasetStats dataset_stats(const DynamicNetwork& net);

} // namespace rdbn
