#include "rdbn/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>

#include "rdbn/errors.hpp"
#include "rdbn/text.hpp"

namespace rdbn {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

double statistic(const std::string& name, const LatentState& s) {
  if (name == "pi0_layer0") {
    double sum = 0.0;
    for (std::int32_t t = 0; t < s.T; ++t) {
      for (std::int32_t i = 0; i < s.N; ++i) sum += s.pi_at(t, 0, i)[0];
    }
    return sum / (static_cast<double>(s.T) * s.N);
  }
  if (name == "mean_beta") return mean_beta(s);
  if (name == "mean_gamma") return mean_gamma(s);
  if (name == "lambda00") return s.lambda[0];
  if (name == "M") return s.M;
  throw ParameterError("unknown Geweke statistic '" + name + "'");
}

struct Moments {
  double mean = 0.0;
  double var = 0.0;
};

Moments moments(const std::vector<double>& v) {
  Moments m;
  const auto n = static_cast<double>(v.size());
  m.mean = std::accumulate(v.begin(), v.end(), 0.0) / n;
  double ss = 0.0;
  for (double x : v) ss += (x - m.mean) * (x - m.mean);
  m.var = v.size() > 1 ? ss / (n - 1.0) : 0.0;
  return m;
}

SimulationOptions ring_supports(std::int32_t N, std::int32_t T, bool directed) {
  std::vector<Dyad> ring;
  for (std::int32_t i = 0; i < N; ++i) {
    const std::int32_t j = (i + 1) % N;
    ring.push_back(directed ? Dyad{i, j} : Dyad{std::min(i, j), std::max(i, j)});
  }
  std::sort(ring.begin(), ring.end());
  ring.erase(std::unique(ring.begin(), ring.end()), ring.end());
  auto g = std::make_shared<SupportGraph>(
      SupportGraph::from_links(N, ring, directed));
  auto empty = std::make_shared<SupportGraph>(SupportGraph::empty(N));
  SimulationOptions opts;
  for (std::int32_t t = 0; t < T; ++t) {
    opts.beta_support.push_back(g);
    opts.gamma_support.push_back(t > 0 ? g : empty);
  }
  return opts;
}

} // namespace

double GewekeReport::max_abs_z() const {
  double z = 0.0;
  for (const auto& s : statistics) z = std::max(z, std::abs(s.z));
  return z;
}

std::vector<std::string> geweke_statistic_names() {
  return {"pi0_layer0", "mean_beta", "mean_gamma", "lambda00", "M"};
}

GewekeReport geweke_check(const Hyperparams& hp_in, const GewekeConfig& config,
                          std::uint64_t seed) {
  GewekeReport report;
  if (config.statistics.empty()) return report;
  if (config.n_rounds < 2 || config.chain_length < 1) {
    throw ParameterError("Geweke check needs at least 2 rounds of 1 step");
  }
  if (config.n_nodes < 2 || config.n_nodes > 10 || config.n_steps < 1 ||
      config.n_steps > 3) {
    throw ParameterError("Geweke check needs 2 <= N <= 10 and 1 <= T <= 3");
  }
  const std::int32_t N = config.n_nodes;
  const std::int32_t T = config.n_steps;
  const Hyperparams hp = hp_in.resolved(N);
  hp.validate();
  for (const auto& name : config.statistics) {
    const auto known = geweke_statistic_names();
    if (std::find(known.begin(), known.end(), name) == known.end()) {
      throw ParameterError("unknown Geweke statistic '" + name + "'");
    }
  }
  const SimulationOptions opts = ring_supports(N, T, config.directed);
  const std::size_t n_stats = config.statistics.size();
  std::vector<std::vector<double>> forward(n_stats), chain(n_stats);

  for (std::int32_t r = 0; r < config.n_rounds; ++r) {
    const std::uint64_t s =
        splitmix64(seed ^ stream_key(StreamFamily::geweke, r, 0, 0, 1));
    const Simulation sim = forward_simulate(hp, N, T, config.directed, opts, s);
    for (std::size_t k = 0; k < n_stats; ++k) {
      forward[k].push_back(statistic(config.statistics[k], sim.state));
    }
  }

  // Each round is an independent successive-conditional chain started from
  // its own prior draw. Every step then has the prior as its marginal no
  // matter how slowly the kernel mixes, so round averages are iid.
  std::vector<double> acc(n_stats);
  for (std::int32_t r = 0; r < config.n_rounds; ++r) {
    const std::uint64_t s =
        splitmix64(seed ^ stream_key(StreamFamily::geweke, r, 0, 0, 2));
    Simulation start = forward_simulate(hp, N, T, config.directed, opts, s);
    LatentState state = std::move(start.state);
    TrainingView view(start.network);
    GibbsSampler sampler(hp, s, config.sampler);
    std::fill(acc.begin(), acc.end(), 0.0);
    for (std::int32_t step = 1; step <= config.chain_length; ++step) {
      sampler.iterate(state, view, static_cast<std::uint64_t>(step));
      std::vector<std::vector<Dyad>> links(T);
      for (std::int32_t t = 0; t < T; ++t) {
        StepLinks drawn = draw_links_step(state, t, s, StreamFamily::geweke,
                                          static_cast<std::uint64_t>(step));
        links[t] = std::move(drawn.links);
        state.C[t] = std::move(drawn.C);
      }
      view = TrainingView(N, T, config.directed, std::move(links));
      for (std::size_t k = 0; k < n_stats; ++k) {
        acc[k] += statistic(config.statistics[k], state);
      }
    }
    for (std::size_t k = 0; k < n_stats; ++k) {
      chain[k].push_back(acc[k] / config.chain_length);
    }
  }

  for (std::size_t k = 0; k < n_stats; ++k) {
    GewekeStatistic g;
    g.name = config.statistics[k];
    const Moments f = moments(forward[k]);
    g.forward_mean = f.mean;
    g.forward_se = std::sqrt(f.var / static_cast<double>(forward[k].size()));
    const Moments c = moments(chain[k]);
    g.chain_mean = c.mean;
    g.chain_se = std::sqrt(c.var / static_cast<double>(chain[k].size()));
    const double se = std::hypot(g.forward_se, g.chain_se);
    g.z = se > 0.0 ? (g.forward_mean - g.chain_mean) / se : 0.0;
    report.statistics.push_back(g);
  }
  return report;
}

void save_geweke_report(const GewekeReport& report,
                        const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << "statistic,forward_mean,forward_se,chain_mean,chain_se,z\n";
  for (const auto& s : report.statistics) {
    out << s.name << ',' << format_real(s.forward_mean) << ','
        << format_real(s.forward_se) << ',' << format_real(s.chain_mean) << ','
        << format_real(s.chain_se) << ',' << format_real(s.z) << '\n';
  }
}

void export_membership_heatmap(const LatentState& state, std::int32_t layer,
                               std::int32_t node_begin, std::int32_t node_end,
                               const std::filesystem::path& path) {
  if (layer < 0 || layer >= state.L || node_begin < 0 ||
      node_end > state.N || node_begin > node_end) {
    throw ParameterError("heatmap: layer or node range out of bounds");
  }
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << "node,t";
  for (std::int32_t k = 0; k < state.K; ++k) out << ",k" << k;
  out << '\n';
  for (std::int32_t i = node_begin; i < node_end; ++i) {
    for (std::int32_t t = 0; t < state.T; ++t) {
      out << i << ',' << t;
      for (double v : state.pi_at(t, layer, i)) out << ',' << format_real(v);
      out << '\n';
    }
  }
  if (!out) throw DataError("write failed: " + path.string());
}

std::vector<HeatmapRow> load_membership_heatmap(
    const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw DataError(path.string() + ": empty file");
  const std::size_t width = split_fields(trim(line), ',').size();
  if (width < 3) throw DataError(path.string() + ":1: bad header");
  std::vector<HeatmapRow> rows;
  std::int64_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    const auto f = split_fields(trim(line), ',');
    std::int64_t node = 0, t = 0;
    bool ok = f.size() == width && parse_int64(f[0], node) && parse_int64(f[1], t);
    HeatmapRow row{static_cast<std::int32_t>(node), static_cast<std::int32_t>(t), {}};
    for (std::size_t k = 2; ok && k < f.size(); ++k) {
      double v = 0.0;
      ok = parse_real(f[k], v);
      row.values.push_back(v);
    }
    if (!ok) {
      throw DataError(path.string() + ":" + std::to_string(lineno) +
                      ": malformed heatmap row");
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

std::vector<PropagationSummaryRow> propagation_summary(const LatentState& state) {
  auto mean = [](const std::vector<double>& v) {
    if (v.empty()) return kNaN;
    return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  };
  std::vector<PropagationSummaryRow> rows;
  for (std::int32_t l = 0; l < state.L; ++l) {
    for (std::int32_t t = 0; t < state.T; ++t) {
      PropagationSummaryRow r;
      r.layer = l;
      r.t = t;
      r.mean_beta = mean(state.beta[state.slot(t, l)]);
      r.mean_gamma = mean(state.gamma[state.slot(t, l)]);
      r.ratio = r.mean_beta / r.mean_gamma;  // NaN if either is missing
      rows.push_back(r);
    }
  }
  return rows;
}

void export_propagation_summary(const LatentState& state,
                                const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << "l,t,mean_beta,mean_gamma,ratio\n";
  for (const auto& r : propagation_summary(state)) {
    out << r.layer << ',' << r.t << ',' << format_real(r.mean_beta) << ','
        << format_real(r.mean_gamma) << ',' << format_real(r.ratio) << '\n';
  }
  if (!out) throw DataError("write failed: " + path.string());
}

} // namespace rdbn
