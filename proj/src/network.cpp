#include "rdbn/network.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <numeric>
#include <ostream>
#include <ranges>
#include <sstream>

#include "rdbn/errors.hpp"
#include "rdbn/random.hpp"

namespace rdbn {

namespace {

void sort_unique(std::vector<Dyad>& v) {
  std::sort(v.begin(), v.end());
  v.erase(std::unique(v.begin(), v.end()), v.end());
}

std::vector<std::string_view> split_on(std::string_view line, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (;;) {
    const std::size_t pos = line.find(sep, start);
    if (pos == std::string_view::npos) {
      out.push_back(line.substr(start));
      return out;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
}

bool parse_int(std::string_view token, std::int64_t& value) {
  if (token.empty()) return false;
  const auto* end = token.data() + token.size();
  auto [ptr, ec] = std::from_chars(token.data(), end, value);
  return ec == std::errc() && ptr == end;
}

std::string_view strip_cr(std::string_view line) {
  if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
  return line;
}

// Per-node CSR of partners.
void build_csr(std::int32_t n, std::span<const Dyad> pairs, bool by_sender,
               std::vector<std::int64_t>& offsets,
               std::vector<std::int32_t>& partners) {
  offsets.assign(static_cast<std::size_t>(n) + 1, 0);
  for (const Dyad& d : pairs) ++offsets[(by_sender ? d.i : d.j) + 1];
  std::partial_sum(offsets.begin(), offsets.end(), offsets.begin());
  partners.assign(pairs.size(), 0);
  std::vector<std::int64_t> cursor(offsets.begin(), offsets.end() - 1);
  for (const Dyad& d : pairs) {
    const std::int32_t owner = by_sender ? d.i : d.j;
    partners[cursor[owner]++] = by_sender ? d.j : d.i;
  }
}

} // namespace

bool DynamicNetwork::has_edge(std::int32_t t, std::int32_t i,
                              std::int32_t j) const {
  const auto& e = edges[t];
  return std::binary_search(e.begin(), e.end(), Dyad{i, j});
}

std::int64_t DynamicNetwork::link_count(std::int32_t t) const {
  const auto n = static_cast<std::int64_t>(edges[t].size());
  return directed ? n : n / 2;
}

std::int64_t DynamicNetwork::dyad_count() const {
  const std::int64_t n = n_nodes;
  return directed ? n * (n - 1) : n * (n - 1) / 2;
}

Dyad DynamicNetwork::orient(std::int32_t i, std::int32_t j) const {
  if (directed || i < j) return {i, j};
  return {j, i};
}

DynamicNetwork make_network(std::int32_t n_nodes, std::int32_t n_steps,
                            bool directed, std::span<const RawEdge> edges) {
  if (n_nodes < 1 || n_steps < 1) {
    throw DataError("network must have at least one node and one time step");
  }
  DynamicNetwork net;
  net.n_nodes = n_nodes;
  net.n_steps = n_steps;
  net.directed = directed;
  net.edges.assign(n_steps, {});
  for (const RawEdge& e : edges) {
    if (e.t < 0 || e.t >= n_steps || e.i < 0 || e.i >= n_nodes || e.j < 0 ||
        e.j >= n_nodes) {
      throw DataError("edge (" + std::to_string(e.t) + ", " +
                      std::to_string(e.i) + ", " + std::to_string(e.j) +
                      ") out of bounds");
    }
    if (e.i == e.j) {
      throw DataError("self-link at node " + std::to_string(e.i));
    }
    net.edges[e.t].push_back({e.i, e.j});
    if (!directed) net.edges[e.t].push_back({e.j, e.i});
  }
  for (auto& step : net.edges) sort_unique(step);
  return net;
}

DynamicNetwork parse_edge_list(std::istream& in,
                               const std::string& source_name) {
  std::string line;
  std::int64_t line_no = 0;
  auto fail = [&](const std::string& what) -> DataError {
    return DataError(source_name + ":" + std::to_string(line_no) + ": " + what);
  };

  std::int64_t n = 0;
  std::int64_t steps = 0;
  bool directed = true;
  bool have_header = false;
  std::vector<RawEdge> raw;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string_view view = strip_cr(line);
    if (view.empty()) continue;
    const auto tokens = split_on(view, ' ');
    if (!have_header) {
      if (tokens.size() != 3 || !parse_int(tokens[0], n) ||
          !parse_int(tokens[1], steps)) {
        throw fail("expected header `N T directed|undirected`");
      }
      if (tokens[2] == "directed") {
        directed = true;
      } else if (tokens[2] == "undirected") {
        directed = false;
      } else {
        throw fail("direction must be `directed` or `undirected`");
      }
      if (n < 1 || steps < 1 || n > INT32_MAX || steps > INT32_MAX) {
        throw fail("N and T must be positive");
      }
      have_header = true;
      continue;
    }
    std::int64_t t = 0;
    std::int64_t i = 0;
    std::int64_t j = 0;
    if (tokens.size() != 3 || !parse_int(tokens[0], t) ||
        !parse_int(tokens[1], i) || !parse_int(tokens[2], j)) {
      throw fail("expected `t i j`");
    }
    if (t < 0 || t >= steps) {
      throw fail("time step " + std::to_string(t) + " outside [0," +
                 std::to_string(steps) + ")");
    }
    if (i < 0 || i >= n || j < 0 || j >= n) {
      throw fail("node index outside [0," + std::to_string(n) + ")");
    }
    if (i == j) throw fail("self-link " + std::to_string(i));
    raw.push_back({static_cast<std::int32_t>(t), static_cast<std::int32_t>(i),
                   static_cast<std::int32_t>(j)});
  }
  if (!have_header) {
    line_no = 0;
    throw fail("missing header");
  }
  return make_network(static_cast<std::int32_t>(n),
                      static_cast<std::int32_t>(steps), directed, raw);
}

DynamicNetwork load_edge_list(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open edge list " + path.string());
  return parse_edge_list(in, path.string());
}

void write_edge_list(const DynamicNetwork& net, std::ostream& out) {
  out << net.n_nodes << ' ' << net.n_steps << ' '
      << (net.directed ? "directed" : "undirected") << '\n';
  for (std::int32_t t = 0; t < net.n_steps; ++t) {
    for (const Dyad& d : net.edges[t]) {
      if (!net.directed && d.i > d.j) continue;
      out << t << ' ' << d.i << ' ' << d.j << '\n';
    }
  }
}

void save_edge_list(const DynamicNetwork& net,
                    const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write edge list " + path.string());
  write_edge_list(net, out);
  if (!out) throw DataError("write failed for " + path.string());
}

TrainingView::TrainingView(const DynamicNetwork& net)
    : TrainingView(net, HoldoutMask{}) {}

TrainingView::TrainingView(const DynamicNetwork& net, const HoldoutMask& mask)
    : n_nodes_(net.n_nodes), n_steps_(net.n_steps), directed_(net.directed) {
  heldout_.assign(n_steps_, {});
  for (const HoldoutEntry& e : mask.entries) {
    if (e.t < 0 || e.t >= n_steps_ || e.dyad.i < 0 || e.dyad.j < 0 ||
        e.dyad.i >= n_nodes_ || e.dyad.j >= n_nodes_ || e.dyad.i == e.dyad.j) {
      throw DataError("holdout entry outside the network");
    }
    heldout_[e.t].push_back(net.orient(e.dyad.i, e.dyad.j));
  }
  for (auto& h : heldout_) {
    const std::size_t before = h.size();
    sort_unique(h);
    if (h.size() != before) throw DataError("duplicate holdout entry");
  }
  links_.assign(n_steps_, {});
  for (std::int32_t t = 0; t < n_steps_; ++t) {
    for (const Dyad& d : net.edges[t]) {
      if (!directed_ && d.i > d.j) continue;
      if (std::binary_search(heldout_[t].begin(), heldout_[t].end(), d)) {
        continue;
      }
      links_[t].push_back(d);
    }
  }
  index_heldout();
}

TrainingView::TrainingView(std::int32_t n_nodes, std::int32_t n_steps,
                           bool directed, std::vector<std::vector<Dyad>> links)
    : n_nodes_(n_nodes), n_steps_(n_steps), directed_(directed),
      links_(std::move(links)) {
  if (static_cast<std::int32_t>(links_.size()) != n_steps_) {
    throw DataError("TrainingView: one link list per step required");
  }
  for (auto& step : links_) {
    for (const Dyad& d : step) {
      if (d.i < 0 || d.j < 0 || d.i >= n_nodes_ || d.j >= n_nodes_ ||
          d.i == d.j || (!directed_ && d.i > d.j)) {
        throw DataError("TrainingView: invalid oriented link");
      }
    }
    sort_unique(step);
  }
  heldout_.assign(n_steps_, {});
  index_heldout();
}

void TrainingView::index_heldout() {
  out_offsets_.resize(n_steps_);
  out_partners_.resize(n_steps_);
  in_offsets_.resize(n_steps_);
  in_partners_.resize(n_steps_);
  for (std::int32_t t = 0; t < n_steps_; ++t) {
    build_csr(n_nodes_, heldout_[t], true, out_offsets_[t], out_partners_[t]);
    build_csr(n_nodes_, heldout_[t], false, in_offsets_[t], in_partners_[t]);
  }
}

std::span<const std::int32_t> TrainingView::heldout_out(std::int32_t t,
                                                        std::int32_t i) const {
  const auto& off = out_offsets_[t];
  return std::span<const std::int32_t>(out_partners_[t])
      .subspan(off[i], off[i + 1] - off[i]);
}

std::span<const std::int32_t> TrainingView::heldout_in(std::int32_t t,
                                                       std::int32_t i) const {
  const auto& off = in_offsets_[t];
  return std::span<const std::int32_t>(in_partners_[t])
      .subspan(off[i], off[i + 1] - off[i]);
}

std::int64_t TrainingView::total_links() const {
  std::int64_t total = 0;
  for (const auto& step : links_) total += static_cast<std::int64_t>(step.size());
  return total;
}

HoldoutSplit split_holdout(const DynamicNetwork& net, double fraction,
                           std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction < 1.0)) {
    throw ParameterError("holdout fraction must lie in (0, 1)");
  }
  const std::int64_t n = net.n_nodes;
  const std::int64_t candidates = net.dyad_count();
  const auto per_step = static_cast<std::int64_t>(
      std::llround(fraction * static_cast<double>(candidates)));

  // Row offsets of the upper triangle, for decoding undirected dyad indices.
  std::vector<std::int64_t> row_start(static_cast<std::size_t>(n) + 1, 0);
  for (std::int64_t i = 0; i < n; ++i) row_start[i + 1] = row_start[i] + (n - 1 - i);

  auto decode = [&](std::int64_t index) -> Dyad {
    if (net.directed) {
      const std::int64_t i = index / (n - 1);
      const std::int64_t r = index % (n - 1);
      return {static_cast<std::int32_t>(i),
              static_cast<std::int32_t>(r < i ? r : r + 1)};
    }
    const auto it = std::upper_bound(row_start.begin(), row_start.end(), index);
    const std::int64_t i = (it - row_start.begin()) - 1;
    return {static_cast<std::int32_t>(i),
            static_cast<std::int32_t>(i + 1 + (index - row_start[i]))};
  };

  HoldoutMask mask;
  mask.fraction = fraction;
  std::vector<std::int64_t> chosen;
  for (std::int32_t t = 0; t < net.n_steps; ++t) {
    RngStream rng(seed, stream_key(StreamFamily::holdout, 0, t));
    chosen.clear();
    // Selection sampling: keeps index with probability needed / remaining.
    std::int64_t needed = per_step;
    for (std::int64_t index = 0; index < candidates && needed > 0; ++index) {
      if (rng.uniform() * static_cast<double>(candidates - index) <
          static_cast<double>(needed)) {
        chosen.push_back(index);
        --needed;
      }
    }
    for (std::int64_t index : chosen) {
      const Dyad d = decode(index);
      mask.entries.push_back({t, d, net.has_edge(t, d.i, d.j) ? 1 : 0});
    }
  }
  std::sort(mask.entries.begin(), mask.entries.end(),
            [](const HoldoutEntry& a, const HoldoutEntry& b) {
              return std::tie(a.t, a.dyad) < std::tie(b.t, b.dyad);
            });
  return {TrainingView(net, mask), std::move(mask)};
}

void save_mask(const HoldoutMask& mask, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write mask " + path.string());
  out << "t,i,j,label\n";
  for (const HoldoutEntry& e : mask.entries) {
    out << e.t << ',' << e.dyad.i << ',' << e.dyad.j << ',' << e.label << '\n';
  }
  if (!out) throw DataError("write failed for " + path.string());
}

HoldoutMask load_mask(const std::filesystem::path& path, double fraction) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open mask " + path.string());
  HoldoutMask mask;
  mask.fraction = fraction;
  std::string line;
  std::int64_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string_view view = strip_cr(line);
    if (line_no == 1) {
      if (view != "t,i,j,label") {
        throw DataError(path.string() + ":1: expected header t,i,j,label");
      }
      continue;
    }
    if (view.empty()) continue;
    const auto tokens = split_on(view, ',');
    std::int64_t v[4];
    if (tokens.size() != 4 || !parse_int(tokens[0], v[0]) ||
        !parse_int(tokens[1], v[1]) || !parse_int(tokens[2], v[2]) ||
        !parse_int(tokens[3], v[3]) || (v[3] != 0 && v[3] != 1)) {
      throw DataError(path.string() + ":" + std::to_string(line_no) +
                      ": expected t,i,j,label");
    }
    mask.entries.push_back({static_cast<std::int32_t>(v[0]),
                            {static_cast<std::int32_t>(v[1]),
                             static_cast<std::int32_t>(v[2])},
                            static_cast<int>(v[3])});
  }
  return mask;
}

DatasetStats dataset_stats(const DynamicNetwork& net) {
  DatasetStats s;
  s.n_nodes = net.n_nodes;
  s.n_steps = net.n_steps;
  for (std::int32_t t = 0; t < net.n_steps; ++t) s.n_links += net.link_count(t);
  const double steps = net.n_steps;
  const double candidates = static_cast<double>(net.dyad_count()) * steps;
  const double n = net.n_nodes;
  s.sparsity_percent =
      candidates > 0 ? 100.0 * static_cast<double>(s.n_links) / candidates : 0.0;
  s.sparsity_percent_square =
      100.0 * static_cast<double>(s.n_links) / (n * n * steps);
  return s;
}

} // namespace rdbn
